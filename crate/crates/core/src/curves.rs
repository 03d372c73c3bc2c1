//! Target curve construction: the five canonical shapes offered to users and
//! curves extracted from real music.

use crate::critic::{token_ic, CriticModel};
use crate::iic::{grid_len, iic_from_events, localized_events, Curve, CurveError, KernelConfig};
use crate::midi::NoteList;
use crate::tokenizer::{tokenize, TokenSeq, TokenizeError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("shape levels must satisfy low <= high (got {low} > {high})")]
    BadLevels { low: f64, high: f64 },
    #[error("shape duration must be positive, got {duration}")]
    BadDuration { duration: f64 },
    #[error("step fraction must lie in (0, 1), got {fraction}")]
    BadStepFraction { fraction: f64 },
    #[error("extraction window [{t1}, {t2}] is empty or reversed")]
    EmptyWindow { t1: f64, t2: f64 },
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// The five canonical target shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Constant,
    RampUp,
    RampDown,
    StepUp,
    StepDown,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Constant,
        ShapeKind::RampUp,
        ShapeKind::RampDown,
        ShapeKind::StepUp,
        ShapeKind::StepDown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Constant => "constant",
            ShapeKind::RampUp => "ramp-up",
            ShapeKind::RampDown => "ramp-down",
            ShapeKind::StepUp => "step-up",
            ShapeKind::StepDown => "step-down",
        }
    }

    pub fn parse(s: &str) -> Option<ShapeKind> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        ShapeKind::ALL.into_iter().find(|k| k.name() == norm)
    }
}

impl std::fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of a canonical target shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Lower level in nats/second.
    pub low: f64,
    /// Upper level in nats/second.
    pub high: f64,
    /// Total duration in seconds.
    pub duration: f64,
    /// Step position as a fraction of the duration (steps only).
    pub step_fraction: f64,
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, low: f64, high: f64, duration: f64) -> Result<Self, TargetError> {
        let spec = ShapeSpec {
            kind,
            low,
            high,
            duration,
            step_fraction: 0.5,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_step_fraction(mut self, fraction: f64) -> Result<Self, TargetError> {
        self.step_fraction = fraction;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), TargetError> {
        if !(self.low <= self.high) {
            return Err(TargetError::BadLevels {
                low: self.low,
                high: self.high,
            });
        }
        if !(self.duration > 0.0) {
            return Err(TargetError::BadDuration {
                duration: self.duration,
            });
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(TargetError::BadStepFraction {
                fraction: self.step_fraction,
            });
        }
        Ok(())
    }

    /// Shape value at time `t`. Steps are right-continuous: the value at the
    /// step time is already the post-step level.
    pub fn value_at(&self, t: f64) -> f64 {
        let frac = (t / self.duration).clamp(0.0, 1.0);
        match self.kind {
            ShapeKind::Constant => 0.5 * (self.low + self.high),
            ShapeKind::RampUp => self.low + (self.high - self.low) * frac,
            ShapeKind::RampDown => self.high - (self.high - self.low) * frac,
            ShapeKind::StepUp => {
                if frac < self.step_fraction {
                    self.low
                } else {
                    self.high
                }
            }
            ShapeKind::StepDown => {
                if frac < self.step_fraction {
                    self.high
                } else {
                    self.low
                }
            }
        }
    }
}

/// Samples a shape onto a grid covering `[0, duration]` inclusive.
pub fn make_shape(spec: &ShapeSpec, dt: f64) -> Curve {
    assert!(dt > 0.0, "grid step must be positive");
    let len = grid_len(spec.duration, dt);
    let values = (0..len).map(|i| spec.value_at(i as f64 * dt)).collect();
    Curve::new(0.0, dt, values)
}

/// IIC of a real snippet, for use as a generation target.
///
/// The whole piece is tokenized and scored so each token's IC conditions on
/// its full preceding context; the curve covers `[t_start, t_end]` and is
/// shifted so its grid starts at zero. Events before the window still feed
/// the kernel tail. Window times are on the encoding clock, which places
/// the piece's first note at zero.
pub fn extract_curve(
    notes: &NoteList,
    model: &dyn CriticModel,
    cfg: &KernelConfig,
    t_start: f64,
    t_end: f64,
) -> Result<Curve, TargetError> {
    if !(t_end > t_start) {
        return Err(TargetError::EmptyWindow {
            t1: t_start,
            t2: t_end,
        });
    }
    let seq = tokenize(notes)?;
    let ics = token_ic(model, &seq);
    let mut events = localized_events(&seq, &ics);
    for ev in events.iter_mut() {
        ev.time -= t_start;
    }
    let len = grid_len(t_end - t_start, cfg.dt);
    Ok(iic_from_events(&events, cfg, 0.0, len))
}

/// Suggested low/high target levels from a corpus: the 25th and 75th
/// percentiles of pooled IIC grid values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Levels {
    pub low: f64,
    pub high: f64,
    /// False when fewer than 100 grid points backed the percentiles.
    pub reliable: bool,
}

/// Pools IIC grid values of every corpus piece and reads off percentiles.
pub fn default_levels(
    corpus: &[TokenSeq],
    model: &dyn CriticModel,
    cfg: &KernelConfig,
) -> Result<Levels, TargetError> {
    let mut pooled = Vec::new();
    for seq in corpus {
        if seq.is_empty() {
            continue;
        }
        let ics = token_ic(model, seq);
        let events = localized_events(seq, &ics);
        let span = seq.timeshift_span() + cfg.window_len / 2.0;
        let curve = iic_from_events(&events, cfg, 0.0, grid_len(span, cfg.dt));
        pooled.extend_from_slice(curve.values());
    }
    if pooled.is_empty() {
        return Err(TargetError::Curve(CurveError::EmptyCorpus));
    }
    let reliable = pooled.len() >= 100;
    pooled.sort_by(f64::total_cmp);
    Ok(Levels {
        low: percentile_sorted(&pooled, 0.25),
        high: percentile_sorted(&pooled, 0.75),
        reliable,
    })
}

/// Linear-interpolation percentile of an ascending slice, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
}
