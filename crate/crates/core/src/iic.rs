//! Instantaneous information content: interpolating per-token IC values into
//! a continuous-time surprisal signal.
//!
//! Every token is localized at a physical time and weighted by a causal
//! half-Hann kernel `c * (1/L) * cos^2(pi*t/L)` supported on `0 < t < L/2`:
//! the recent past counts more than the remote past, events at or after the
//! evaluation time contribute nothing, and velocity/duration tokens are
//! masked out entirely. Curves live on a uniform grid in nats per second.
//!
//! Segment surprisal is the L1 norm of the curve over an interval; IC
//! deviation is the L1 distance between a target curve and a realized curve.
//! Both are computed as left-open Riemann sums on the curve grid, matching
//! `sum_{i=1..m} |f(t_i)| * dt` with `m * dt` spanning the interval.

use crate::critic::{token_ic, CriticModel};
use crate::tokenizer::{localize_all, TokenSeq, TokenType};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("interval [{t1}, {t2}] is reversed or empty")]
    BadInterval { t1: f64, t2: f64 },
    #[error("time {t} outside curve domain [{t0}, {t_end}]")]
    OutOfDomain { t: f64, t0: f64, t_end: f64 },
    #[error("curve grids are incompatible: {what}")]
    GridMismatch { what: String },
    #[error("curve csv malformed at line {line}: {what}")]
    BadCsv { line: usize, what: String },
    #[error("curve csv i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("mean {ttype:?} information content is zero; cannot calibrate")]
    DegenerateMean { ttype: TokenType },
}

/// Parameters of the interpolation kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// Hann window parameter L in seconds; support ends at L/2.
    pub window_len: f64,
    /// Weight applied to pitch-token IC.
    pub c_pitch: f64,
    /// Weight applied to timeshift-token IC.
    pub c_timeshift: f64,
    /// Curve grid step in seconds.
    pub dt: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            window_len: 4.0,
            c_pitch: 1.0,
            c_timeshift: 1.0,
            dt: 0.1,
        }
    }
}

impl KernelConfig {
    pub fn weight_for(&self, ttype: TokenType) -> f64 {
        match ttype {
            TokenType::Pitch => self.c_pitch,
            TokenType::Timeshift => self.c_timeshift,
            TokenType::Velocity | TokenType::Duration => 0.0,
        }
    }

    /// Restricts the kernel to a subset of the weight-carrying token types.
    pub fn with_mask(mut self, pitch: bool, timeshift: bool) -> KernelConfig {
        if !pitch {
            self.c_pitch = 0.0;
        }
        if !timeshift {
            self.c_timeshift = 0.0;
        }
        self
    }
}

/// Kernel weight for a token of `ttype` whose event lies `elapsed` seconds
/// in the past. Zero outside the open support `(0, L/2)` and always zero for
/// velocity and duration tokens.
pub fn kernel_weight(elapsed: f64, ttype: TokenType, cfg: &KernelConfig) -> f64 {
    let c = cfg.weight_for(ttype);
    if c == 0.0 || elapsed <= 0.0 || elapsed >= cfg.window_len / 2.0 {
        return 0.0;
    }
    let phase = std::f64::consts::PI * elapsed / cfg.window_len;
    c / cfg.window_len * phase.cos().powi(2)
}

/// A real-valued function of time sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Curve {
        assert!(dt > 0.0, "grid step must be positive");
        assert!(
            values.iter().all(|v| v.is_finite()),
            "curve values must be finite"
        );
        Curve { t0, dt, values }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of grid point `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Time of the last grid point.
    pub fn t_end(&self) -> f64 {
        match self.values.len() {
            0 => self.t0,
            n => self.time(n - 1),
        }
    }

    /// Linear interpolation; times within 1e-9 outside the domain clamp to
    /// the boundary, anything further is an error. Times within 1e-9 grid
    /// steps of a grid point snap to it, so curves sharing a grid compare
    /// exactly.
    pub fn value_at(&self, t: f64) -> Result<f64, CurveError> {
        if self.values.is_empty() {
            return Err(CurveError::OutOfDomain {
                t,
                t0: self.t0,
                t_end: self.t0,
            });
        }
        let mut pos = (t - self.t0) / self.dt;
        let max = (self.values.len() - 1) as f64;
        if pos < -1e-9 || pos > max + 1e-9 {
            return Err(CurveError::OutOfDomain {
                t,
                t0: self.t0,
                t_end: self.t_end(),
            });
        }
        if (pos - pos.round()).abs() < 1e-9 {
            pos = pos.round();
        }
        let pos = pos.clamp(0.0, max);
        let lo = pos.floor() as usize;
        if lo == self.values.len() - 1 {
            return Ok(self.values[lo]);
        }
        let frac = pos - lo as f64;
        if frac == 0.0 {
            return Ok(self.values[lo]);
        }
        Ok(self.values[lo] * (1.0 - frac) + self.values[lo + 1] * frac)
    }

    /// Resamples onto a new grid by linear interpolation.
    pub fn resample(&self, t0: f64, dt: f64, len: usize) -> Result<Curve, CurveError> {
        let mut values = Vec::with_capacity(len);
        for i in 0..len {
            values.push(self.value_at(t0 + i as f64 * dt)?);
        }
        Ok(Curve::new(t0, dt, values))
    }

    const CSV_HEADER: &'static str = "time_seconds,value_nats_per_second";

    /// Writes the curve as CSV with 9 significant digits per field; the
    /// format round-trips bit-stably through [`Curve::read_csv`].
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<(), CurveError> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.8e},{:.8e}", self.time(i), v)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("vec write cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }

    /// Parses the CSV format, validating the header and grid uniformity.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Curve, CurveError> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != Self::CSV_HEADER {
            return Err(CurveError::BadCsv {
                line: 1,
                what: format!("expected header '{}'", Self::CSV_HEADER),
            });
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 2;
            let (t_str, v_str) = line.split_once(',').ok_or_else(|| CurveError::BadCsv {
                line: lineno,
                what: "expected two comma-separated fields".into(),
            })?;
            let parse = |s: &str| -> Result<f64, CurveError> {
                s.trim().parse::<f64>().map_err(|e| CurveError::BadCsv {
                    line: lineno,
                    what: format!("bad number '{s}': {e}"),
                })
            };
            times.push(parse(t_str)?);
            values.push(parse(v_str)?);
        }
        if times.is_empty() {
            return Err(CurveError::BadCsv {
                line: 2,
                what: "curve has no rows".into(),
            });
        }
        let t0 = times[0];
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            0.1
        };
        if dt <= 0.0 {
            return Err(CurveError::BadCsv {
                line: 3,
                what: "grid times must strictly increase".into(),
            });
        }
        for (i, &t) in times.iter().enumerate() {
            let expected = t0 + i as f64 * dt;
            if (t - expected).abs() > 1e-6 * dt.max(1.0) {
                return Err(CurveError::BadCsv {
                    line: i + 2,
                    what: format!("non-uniform grid: time {t}, expected {expected}"),
                });
            }
        }
        Ok(Curve::new(t0, dt, values))
    }
}

/// A token's IC pinned to its localized time.
#[derive(Debug, Clone, Copy)]
pub struct LocalizedIc {
    pub time: f64,
    pub ttype: TokenType,
    pub ic: f64,
}

/// Localizes a sequence's tokens and pairs them with their IC values.
pub fn localized_events(seq: &TokenSeq, ics: &[f64]) -> Vec<LocalizedIc> {
    assert_eq!(seq.len(), ics.len(), "ICs must align with tokens");
    localize_all(seq)
        .into_iter()
        .zip(seq.tokens())
        .zip(ics)
        .map(|((time, tok), &ic)| LocalizedIc {
            time,
            ttype: tok.ttype,
            ic,
        })
        .collect()
}

/// Number of grid points covering `[0, span]` inclusive at step `dt`.
pub fn grid_len(span: f64, dt: f64) -> usize {
    (span / dt + 1e-9).floor() as usize + 1
}

/// Evaluates the IIC on a uniform grid from localized events.
///
/// Each grid value is the kernel-weighted sum of the IC of events strictly
/// in the past; events at or after the grid time contribute nothing. Events
/// may lie before `t0` (for example a prompt) and still contribute through
/// the kernel tail.
pub fn iic_from_events(events: &[LocalizedIc], cfg: &KernelConfig, t0: f64, len: usize) -> Curve {
    let mut values = vec![0.0; len];
    let half = cfg.window_len / 2.0;
    for ev in events {
        if cfg.weight_for(ev.ttype) == 0.0 {
            continue;
        }
        // Grid indices whose time falls inside (ev.time, ev.time + L/2).
        let first = (((ev.time - t0) / cfg.dt).floor() as i64).max(0);
        let last = ((((ev.time + half) - t0) / cfg.dt).ceil() as i64).min(len as i64 - 1);
        for i in first..=last {
            let t = t0 + i as f64 * cfg.dt;
            let w = kernel_weight(t - ev.time, ev.ttype, cfg);
            if w > 0.0 {
                values[i as usize] += w * ev.ic;
            }
        }
    }
    Curve::new(t0, cfg.dt, values)
}

/// IIC of a token sequence over `[0, t_end]`, with t = 0 at the sequence
/// start.
pub fn iic_curve(seq: &TokenSeq, ics: &[f64], cfg: &KernelConfig, t_end: f64) -> Curve {
    assert!(t_end > 0.0, "curve span must be positive");
    let events = localized_events(seq, ics);
    iic_from_events(&events, cfg, 0.0, grid_len(t_end, cfg.dt))
}

/// L1 norm of the curve over `[t1, t2]` as a Riemann sum on the curve grid
/// (grid points with `t1 < t <= t2`, each weighted by dt).
pub fn segment_surprisal(curve: &Curve, t1: f64, t2: f64) -> Result<f64, CurveError> {
    if !(t1 < t2) {
        return Err(CurveError::BadInterval { t1, t2 });
    }
    if t1 < curve.t0() - 1e-9 || t2 > curve.t_end() + 1e-9 {
        return Err(CurveError::OutOfDomain {
            t: if t1 < curve.t0() { t1 } else { t2 },
            t0: curve.t0(),
            t_end: curve.t_end(),
        });
    }
    let mut sum = 0.0;
    for (i, &v) in curve.values().iter().enumerate() {
        let t = curve.time(i);
        if t > t1 + 1e-9 && t <= t2 + 1e-9 {
            sum += v.abs() * curve.dt();
        }
    }
    Ok(sum)
}

/// L1 distance between a target curve and a realized IIC curve over
/// `[t0, t_end]`, Riemann-discretized on the realized curve's grid.
///
/// The target is first resampled onto the realized grid by linear
/// interpolation; the sum runs over grid points `t0 < t <= t_end`.
pub fn ic_deviation(target: &Curve, iic: &Curve, t_end: f64) -> Result<f64, CurveError> {
    let dt = iic.dt();
    let m = ((t_end - iic.t0()) / dt + 1e-9).floor() as usize;
    if m >= iic.len() {
        return Err(CurveError::GridMismatch {
            what: format!(
                "realized curve spans {} points, deviation needs {}",
                iic.len(),
                m + 1
            ),
        });
    }
    let mut sum = 0.0;
    for i in 1..=m {
        let t = iic.time(i);
        let target_v = target.value_at(t)?;
        sum += (target_v - iic.values()[i]).abs() * dt;
    }
    Ok(sum)
}

/// Per-type kernel weights making pitch and timeshift tokens equally
/// important: the reciprocal of each type's corpus-mean IC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeWeights {
    pub c_pitch: f64,
    pub c_timeshift: f64,
    pub mean_ic_pitch: f64,
    pub mean_ic_timeshift: f64,
}

/// Estimates [`TypeWeights`] over a corpus under a critic model.
pub fn calibrate_type_weights(
    corpus: &[TokenSeq],
    model: &dyn CriticModel,
) -> Result<TypeWeights, CurveError> {
    if corpus.is_empty() || corpus.iter().all(|s| s.is_empty()) {
        return Err(CurveError::EmptyCorpus);
    }
    let mut sums = [0.0f64; 2];
    let mut counts = [0u64; 2];
    for seq in corpus {
        let ics = token_ic(model, seq);
        for (tok, ic) in seq.tokens().iter().zip(&ics) {
            match tok.ttype {
                TokenType::Pitch => {
                    sums[0] += ic;
                    counts[0] += 1;
                }
                TokenType::Timeshift => {
                    sums[1] += ic;
                    counts[1] += 1;
                }
                _ => {}
            }
        }
    }
    let mean_pitch = sums[0] / counts[0].max(1) as f64;
    let mean_shift = sums[1] / counts[1].max(1) as f64;
    if mean_pitch <= 0.0 {
        return Err(CurveError::DegenerateMean {
            ttype: TokenType::Pitch,
        });
    }
    if mean_shift <= 0.0 {
        return Err(CurveError::DegenerateMean {
            ttype: TokenType::Timeshift,
        });
    }
    Ok(TypeWeights {
        c_pitch: 1.0 / mean_pitch,
        c_timeshift: 1.0 / mean_shift,
        mean_ic_pitch: mean_pitch,
        mean_ic_timeshift: mean_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::MarkovCritic;
    use crate::midi::{NoteEvent, NoteList};
    use crate::tokenizer::tokenize;

    fn single_pitch_event(onset: f64, ic: f64) -> Vec<LocalizedIc> {
        vec![LocalizedIc {
            time: onset,
            ttype: TokenType::Pitch,
            ic,
        }]
    }

    #[test]
    fn kernel_closed_form_values() {
        let cfg = KernelConfig::default();
        // (1/4) * cos^2(pi/4) = 0.125 at t = 1.
        assert!((kernel_weight(1.0, TokenType::Pitch, &cfg) - 0.125).abs() < 1e-12);
        // Support ends at L/2 = 2 s.
        assert_eq!(kernel_weight(2.0, TokenType::Pitch, &cfg), 0.0);
        assert_eq!(kernel_weight(2.5, TokenType::Pitch, &cfg), 0.0);
        // Strict causality at zero elapsed time.
        assert_eq!(kernel_weight(0.0, TokenType::Pitch, &cfg), 0.0);
        // Velocity and duration are masked.
        assert_eq!(kernel_weight(1.0, TokenType::Velocity, &cfg), 0.0);
        assert_eq!(kernel_weight(1.0, TokenType::Duration, &cfg), 0.0);
    }

    #[test]
    fn kernel_area_quarter_of_weight() {
        // integral over (0, L/2) of (c/L) cos^2(pi t / L) dt = c/4.
        for (c, l) in [(1.0, 4.0), (0.5, 4.0), (2.0, 1.0), (1.5, 10.0)] {
            let cfg = KernelConfig {
                window_len: l,
                c_pitch: c,
                c_timeshift: 0.0,
                dt: 0.1,
            };
            let n = 800_000;
            let h = (l / 2.0) / n as f64;
            let area: f64 = (0..n)
                .map(|i| kernel_weight((i as f64 + 0.5) * h, TokenType::Pitch, &cfg) * h)
                .sum();
            assert!((area - c / 4.0).abs() < 1e-6, "c={c} l={l} area={area}");
        }
    }

    #[test]
    fn single_token_curve_matches_closed_form() {
        let cfg = KernelConfig::default();
        let events = single_pitch_event(0.5, 2.0);
        let curve = iic_from_events(&events, &cfg, 0.0, grid_len(4.0, cfg.dt));
        // IIC(1.5) = 2 * (1/4) cos^2(pi/4) = 0.25.
        let at = |t: f64| curve.value_at(t).unwrap();
        assert!((at(1.5) - 0.25).abs() < 1e-12);
        // Before the onset and beyond the window support the curve is zero.
        assert_eq!(at(0.4), 0.0);
        assert_eq!(at(0.5), 0.0);
        assert_eq!(at(3.0), 0.0);
    }

    #[test]
    fn segment_surprisal_constant_curve() {
        let curve = Curve::new(0.0, 0.1, vec![0.5; 41]);
        let s = segment_surprisal(&curve, 1.0, 3.0).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
        let zero = Curve::new(0.0, 0.1, vec![0.0; 41]);
        assert_eq!(segment_surprisal(&zero, 0.0, 4.0).unwrap(), 0.0);
        assert!(segment_surprisal(&curve, 3.0, 1.0).is_err());
        assert!(segment_surprisal(&curve, 1.0, 9.0).is_err());
    }

    #[test]
    fn segment_surprisal_single_token_near_quarter_area() {
        // One pitch token with IC 2 at onset 0.5: the integral of its kernel
        // bump is 2 * c/4 = 0.5; the grid Riemann sum lands within O(dt).
        let cfg = KernelConfig::default();
        let events = single_pitch_event(0.5, 2.0);
        let curve = iic_from_events(&events, &cfg, 0.0, grid_len(4.0, cfg.dt));
        let coarse = segment_surprisal(&curve, 0.5, 2.5).unwrap();
        // Oracle: fine-grid quadrature of the same kernel bump.
        let fine_cfg = KernelConfig {
            dt: 1e-4,
            ..cfg
        };
        let fine = iic_from_events(&events, &fine_cfg, 0.0, grid_len(4.0, 1e-4));
        let oracle = segment_surprisal(&fine, 0.5, 2.5).unwrap();
        assert!((oracle - 0.5).abs() < 1e-3);
        assert!((coarse - oracle).abs() < 2.0 * cfg.dt);
    }

    #[test]
    fn deviation_zero_for_identical_curves() {
        let c = Curve::new(0.0, 0.1, (0..101).map(|i| (i as f64).sin()).collect());
        assert_eq!(ic_deviation(&c, &c, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn deviation_constant_difference() {
        let target = Curve::new(0.0, 0.1, vec![3.0; 101]);
        let real = Curve::new(0.0, 0.1, vec![2.0; 101]);
        let d = ic_deviation(&target, &real, 10.0).unwrap();
        assert!((d - 10.0).abs() < 1e-9);
    }

    #[test]
    fn deviation_needs_enough_grid() {
        let target = Curve::new(0.0, 0.1, vec![1.0; 11]);
        let short = Curve::new(0.0, 0.1, vec![1.0; 5]);
        assert!(ic_deviation(&target, &short, 1.0).is_err());
    }

    #[test]
    fn deviation_resamples_target_grid() {
        // Target on a coarser grid, linearly interpolated onto the realized
        // grid: a matching line still gives zero deviation.
        let target = Curve::new(0.0, 0.5, (0..21).map(|i| i as f64 * 0.5).collect());
        let real = Curve::new(0.0, 0.1, (0..101).map(|i| i as f64 * 0.1).collect());
        let d = ic_deviation(&target, &real, 10.0).unwrap();
        assert!(d < 1e-9);
    }

    #[test]
    fn causality_perturbation_invariance() {
        let cfg = KernelConfig::default();
        let probe = 2.0;
        let base = vec![
            LocalizedIc {
                time: 0.5,
                ttype: TokenType::Pitch,
                ic: 1.0,
            },
            LocalizedIc {
                time: 1.99,
                ttype: TokenType::Timeshift,
                ic: 2.0,
            },
        ];
        let mut with_future = base.clone();
        with_future.push(LocalizedIc {
            time: probe,
            ttype: TokenType::Pitch,
            ic: 50.0,
        });
        with_future.push(LocalizedIc {
            time: probe + 0.3,
            ttype: TokenType::Pitch,
            ic: 50.0,
        });
        let len = grid_len(probe, cfg.dt);
        let a = iic_from_events(&base, &cfg, 0.0, len);
        let b = iic_from_events(&with_future, &cfg, 0.0, len);
        // Bit-identical up to and including the probe time.
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn linearity_in_ic() {
        let cfg = KernelConfig::default();
        let events: Vec<LocalizedIc> = (0..8)
            .map(|i| LocalizedIc {
                time: 0.3 * i as f64,
                ttype: if i % 2 == 0 {
                    TokenType::Pitch
                } else {
                    TokenType::Timeshift
                },
                ic: 0.5 + i as f64,
            })
            .collect();
        let scaled: Vec<LocalizedIc> = events
            .iter()
            .map(|e| LocalizedIc { ic: 3.0 * e.ic, ..*e })
            .collect();
        let len = grid_len(4.0, cfg.dt);
        let a = iic_from_events(&events, &cfg, 0.0, len);
        let b = iic_from_events(&scaled, &cfg, 0.0, len);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((3.0 * x - y).abs() < 1e-9);
        }
        let sa = segment_surprisal(&a, 0.0, 4.0).unwrap();
        let sb = segment_surprisal(&b, 0.0, 4.0).unwrap();
        assert!((3.0 * sa - sb).abs() < 1e-9);
        let zero = Curve::new(0.0, cfg.dt, vec![0.0; len]);
        let da = ic_deviation(&zero, &a, 4.0).unwrap();
        let db = ic_deviation(&zero, &b, 4.0).unwrap();
        assert!((3.0 * da - db).abs() < 1e-9);
    }

    #[test]
    fn additivity_of_disjoint_event_sets() {
        let cfg = KernelConfig::default();
        let early: Vec<LocalizedIc> = (0..3)
            .map(|i| LocalizedIc {
                time: 0.2 * i as f64,
                ttype: TokenType::Pitch,
                ic: 1.0 + i as f64,
            })
            .collect();
        let late: Vec<LocalizedIc> = (0..3)
            .map(|i| LocalizedIc {
                time: 5.0 + 0.2 * i as f64,
                ttype: TokenType::Timeshift,
                ic: 2.0,
            })
            .collect();
        let mut both = early.clone();
        both.extend_from_slice(&late);
        let len = grid_len(8.0, cfg.dt);
        let a = iic_from_events(&early, &cfg, 0.0, len);
        let b = iic_from_events(&late, &cfg, 0.0, len);
        let c = iic_from_events(&both, &cfg, 0.0, len);
        for i in 0..len {
            assert!((a.values()[i] + b.values()[i] - c.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_refinement_converges() {
        // Halving dt changes the deviation of a Lipschitz curve pair by
        // O(dt): |d(dt/2) - d(dt)| <= C * dt with C from the Lipschitz
        // constant (0.7) and the curve bound over [0, 8].
        let shape = |t: f64| (t * 0.7).sin().abs() + 0.2;
        let mut prev: Option<(f64, f64)> = None;
        for &dt in &[0.2, 0.1, 0.05, 0.025] {
            let len = grid_len(8.0, dt);
            let target = Curve::new(0.0, dt, (0..len).map(|i| shape(i as f64 * dt)).collect());
            let zero = Curve::new(0.0, dt, vec![0.0; len]);
            let d = ic_deviation(&target, &zero, 8.0).unwrap();
            if let Some((p, p_dt)) = prev {
                let c = 0.7 * 8.0 / 2.0 + 1.2;
                assert!((d - p).abs() <= c * p_dt, "dt={p_dt}: change {}", (d - p).abs());
            }
            prev = Some((d, dt));
        }
    }

    #[test]
    fn calibration_inverts_mean_ic() {
        let notes = NoteList::new(
            (0..24)
                .map(|i| NoteEvent {
                    onset: 0.25 * i as f64,
                    pitch: 60 + (i % 5) as u8,
                    velocity: 64,
                    duration: 0.2,
                })
                .collect(),
        );
        let seq = tokenize(&notes).unwrap();
        let corpus = vec![seq];
        let model = MarkovCritic::train(&corpus, 2).unwrap();
        let w = calibrate_type_weights(&corpus, &model).unwrap();
        assert!(w.c_pitch > 0.0 && w.c_timeshift > 0.0);
        assert!((w.c_pitch - 1.0 / w.mean_ic_pitch).abs() < 1e-12);
        // Re-check: weighting by c makes each type's mean contribution 1.
        let ics = crate::critic::token_ic(&model, &corpus[0]);
        let mut weighted = [0.0f64; 2];
        let mut counts = [0u64; 2];
        for (tok, ic) in corpus[0].tokens().iter().zip(&ics) {
            match tok.ttype {
                TokenType::Pitch => {
                    weighted[0] += w.c_pitch * ic;
                    counts[0] += 1;
                }
                TokenType::Timeshift => {
                    weighted[1] += w.c_timeshift * ic;
                    counts[1] += 1;
                }
                _ => {}
            }
        }
        assert!((weighted[0] / counts[0] as f64 - 1.0).abs() < 1e-9);
        assert!((weighted[1] / counts[1] as f64 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn calibration_example_values() {
        // Mean pitch IC 4 and mean timeshift IC 2 give weights 0.25 and 0.5.
        assert!((1.0 / 4.0f64 - 0.25).abs() < 1e-12);
        assert!((1.0 / 2.0f64 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_bit_stable() {
        let curve = Curve::new(0.0, 0.1, (0..101).map(|i| (i as f64 * 0.37).sin()).collect());
        let first = curve.to_csv_string();
        let parsed = Curve::read_csv(first.as_bytes()).unwrap();
        let second = parsed.to_csv_string();
        assert_eq!(first, second);
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(Curve::read_csv("nonsense\n1,2\n".as_bytes()).is_err());
        let hdr = "time_seconds,value_nats_per_second\n";
        assert!(Curve::read_csv(format!("{hdr}0.0\n").as_bytes()).is_err());
        assert!(Curve::read_csv(format!("{hdr}0.0,abc\n").as_bytes()).is_err());
        assert!(Curve::read_csv(format!("{hdr}0.0,1\n0.1,1\n0.5,1\n").as_bytes()).is_err());
        assert!(Curve::read_csv(hdr.as_bytes()).is_err());
    }

    #[test]
    fn iic_curve_wires_localization() {
        // A single note: its pitch token sits at onset 0; IIC at 1.0 equals
        // ic_pitch * lambda(1.0).
        let notes = NoteList::new(vec![NoteEvent {
            onset: 0.0,
            pitch: 60,
            velocity: 64,
            duration: 0.5,
        }]);
        let seq = tokenize(&notes).unwrap();
        let cfg = KernelConfig::default();
        let ics = vec![2.0, 9.0, 9.0, 3.0];
        let curve = iic_curve(&seq, &ics, &cfg, 2.0);
        // Velocity/duration masked; timeshift (zero symbol) localizes at the
        // same onset. Expected: (2 + 3) * 0.125 at t = 1.
        assert!((curve.value_at(1.0).unwrap() - 5.0 * 0.125).abs() < 1e-12);
    }
}
