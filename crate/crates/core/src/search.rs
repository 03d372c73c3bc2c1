//! IC-conditioned beam search with dynamic-temperature sampling.
//!
//! The search keeps a single retained hypothesis. Each iteration spawns `k`
//! candidate continuations in parallel, every candidate extending the
//! hypothesis by whole 4-token note groups sampled from the generator until
//! the newly added duration exceeds the step size `t'`. The candidate whose
//! IIC curve (measured by the critic, never temperature-scaled) deviates
//! least from the target over `[0, i*t']` survives. Generation stops once
//! the accumulated duration reaches the requested total.
//!
//! When an entropy constant is configured, the generator distribution is
//! rescaled before each draw to the entropy `min(target(i*t') / C_H, H_max)`
//! via temperature bisection, making rare tokens reachable exactly when the
//! target curve calls for high surprisal.
//!
//! Candidate RNG streams derive from `(seed, iteration, candidate index)`
//! only, so results are independent of thread scheduling and candidate sets
//! are nested across fan-out widths.

use crate::critic::{
    fingerprint_bytes, match_entropy, target_entropy, CriticModel, ENTROPY_TOLERANCE,
};
use crate::iic::{grid_len, ic_deviation, iic_from_events, Curve, CurveError, KernelConfig, LocalizedIc};
use crate::midi::{NoteEvent, NoteList};
use crate::tokenizer::{
    detokenize, localize_all, timeshift_grid, tokenize, Token, TokenSeq, TokenType, TokenizeError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search parameters invalid: {what}")]
    BadParams { what: String },
    #[error("target curve ends at {target_end}s but generation needs {needed}s")]
    TargetTooShort { target_end: f64, needed: f64 },
    #[error("generator emitted a {found:?} token at cycle position expecting {expected:?}")]
    MalformedGeneration { expected: TokenType, found: TokenType },
    #[error("all {fanout} candidates hit the token cap in iteration {iteration}")]
    AllCandidatesTruncated { iteration: usize, fanout: usize },
    #[error("search stalled after {iterations} iterations at {duration:.3}s generated")]
    Stalled { iterations: usize, duration: f64 },
    #[error("cannot select from an empty candidate set")]
    NoCandidates,
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
}

/// Beam search knobs. Defaults are the strongest known configuration
/// (`t' = 0.3 s`, `k = 128`, `C_H = 50`); desk-scale runs usually lower `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchParams {
    /// Step size t' in seconds: each iteration extends past this duration.
    pub step_seconds: f64,
    /// Number of candidate continuations per iteration (the fan-out k).
    pub fanout: usize,
    /// Entropy constant C_H; `None` disables temperature control.
    pub entropy_constant: Option<f64>,
    /// Total duration T to generate, in seconds.
    pub total_seconds: f64,
    /// Token cap per candidate per iteration, guarding zero-IOI loops.
    pub max_tokens_per_step: usize,
    /// Base RNG seed; candidate streams derive from it deterministically.
    pub seed: u64,
    /// Use the type-valid codebook size for H_max instead of the full
    /// vocabulary.
    pub h_max_typed: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            step_seconds: 0.3,
            fanout: 128,
            entropy_constant: Some(50.0),
            total_seconds: 10.0,
            max_tokens_per_step: 64,
            seed: 0,
            h_max_typed: false,
        }
    }
}

impl SearchParams {
    fn validate(&self) -> Result<(), SearchError> {
        if !(self.step_seconds > 0.0) {
            return Err(SearchError::BadParams {
                what: format!("step_seconds must be positive, got {}", self.step_seconds),
            });
        }
        if self.fanout == 0 {
            return Err(SearchError::BadParams {
                what: "fanout must be at least 1".into(),
            });
        }
        if !(self.total_seconds > 0.0) {
            return Err(SearchError::BadParams {
                what: format!("total_seconds must be positive, got {}", self.total_seconds),
            });
        }
        if self.max_tokens_per_step < 4 {
            return Err(SearchError::BadParams {
                what: "max_tokens_per_step must cover at least one note group".into(),
            });
        }
        if let Some(ch) = self.entropy_constant {
            if !(ch > 0.0) {
                return Err(SearchError::BadParams {
                    what: format!("entropy constant must be positive, got {ch}"),
                });
            }
        }
        Ok(())
    }
}

/// One search hypothesis: the prompt plus generated continuation, with
/// cached critic ICs, localized event times (generation-local clock), and
/// the deviation at the last evaluated horizon.
#[derive(Debug, Clone)]
pub struct BeamState {
    /// Prompt and generated tokens as flat vocabulary ids.
    ids: Vec<u16>,
    prompt_len: usize,
    /// IC under the critic, aligned with `ids`; may lag behind `ids` until
    /// [`select_best`] fills it.
    critic_ics: Vec<f64>,
    /// Localized times on the generation-local clock (prompt tokens are at
    /// or before zero), aligned with `ids`.
    event_times: Vec<f64>,
    /// Sum of generated timeshift values.
    generated_duration: f64,
    /// IC deviation at the last horizon this state was evaluated on.
    deviation: f64,
    /// Set when the last expansion hit the token cap before covering t'.
    truncated: bool,
}

impl BeamState {
    /// Starting hypothesis: the prompt with an empty continuation. The
    /// generation clock starts at the end of the prompt, so prompt events
    /// carry non-positive times and still feed the kernel tail.
    pub fn initial(prompt: &TokenSeq) -> BeamState {
        let prompt_span = prompt.timeshift_span();
        let event_times = localize_all(prompt)
            .into_iter()
            .map(|t| t - prompt_span)
            .collect();
        BeamState {
            ids: prompt.ids(),
            prompt_len: prompt.len(),
            critic_ics: Vec::new(),
            event_times,
            generated_duration: 0.0,
            deviation: 0.0,
            truncated: false,
        }
    }

    /// Builds a hypothesis from an explicit continuation (used by tests and
    /// enumeration oracles). ICs are computed lazily by [`select_best`].
    pub fn with_continuation(prompt: &TokenSeq, generated: &TokenSeq) -> BeamState {
        let mut state = BeamState::initial(prompt);
        let ts_grid = timeshift_grid();
        for group in generated.tokens().chunks_exact(4) {
            let onset = state.generated_duration;
            let shift = ts_grid.value(group[3].value as usize);
            for (slot, tok) in group.iter().enumerate() {
                state.ids.push(tok.id());
                state.event_times.push(if slot == 3 { onset + shift } else { onset });
            }
            state.generated_duration += shift;
        }
        state
    }

    pub fn generated_duration(&self) -> f64 {
        self.generated_duration
    }

    pub fn deviation(&self) -> f64 {
        self.deviation
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn generated_note_count(&self) -> usize {
        (self.ids.len() - self.prompt_len) / 4
    }

    /// The generated continuation as a token sequence.
    pub fn generated_seq(&self) -> Result<TokenSeq, TokenizeError> {
        let tokens = self.ids[self.prompt_len..]
            .iter()
            .map(|&id| Token::from_id(id))
            .collect::<Result<Vec<_>, _>>()?;
        TokenSeq::new(tokens)
    }

    /// Fills critic ICs for any tokens not yet scored.
    fn ensure_ics(&mut self, critic: &dyn CriticModel) {
        while self.critic_ics.len() < self.ids.len() {
            let i = self.critic_ics.len();
            let dist = critic.next_dist(&self.ids[..i]);
            self.critic_ics.push(-dist.probs()[self.ids[i] as usize].ln());
        }
    }

    /// IIC of the hypothesis over `[0, t_end]` on the generation-local
    /// clock. Requires ICs to be present for all tokens.
    pub fn iic_curve(&self, cfg: &KernelConfig, t_end: f64) -> Curve {
        assert_eq!(
            self.critic_ics.len(),
            self.ids.len(),
            "ICs must be computed before building the IIC curve"
        );
        let events: Vec<LocalizedIc> = self
            .ids
            .iter()
            .zip(&self.event_times)
            .zip(&self.critic_ics)
            .map(|((&id, &time), &ic)| LocalizedIc {
                time,
                ttype: Token::from_id(id).expect("ids validated on entry").ttype,
                ic,
            })
            .collect();
        iic_from_events(&events, cfg, 0.0, grid_len(t_end, cfg.dt))
    }
}

/// Expands one hypothesis into `params.fanout` candidates.
///
/// `iter` is the 1-based beam iteration and seeds the candidate RNG
/// streams. The entropy target is taken from the target curve at the time
/// where this iteration's continuations halt: the duration already covered
/// plus one step.
pub fn expand_step(
    state: &BeamState,
    params: &SearchParams,
    generator: &dyn CriticModel,
    critic: &dyn CriticModel,
    target: &Curve,
    iter: usize,
) -> Result<Vec<BeamState>, SearchError> {
    params.validate()?;
    let entropy_goal = match params.entropy_constant {
        Some(ch) => {
            let probe = step_horizon(state, params).min(target.t_end());
            let ic_star = target.value_at(probe)?;
            Some((ic_star, ch))
        }
        None => None,
    };
    // Expansion appends ICs as it samples, so the shared base must already
    // be fully scored or the columns would misalign.
    let mut base = state.clone();
    base.ensure_ics(critic);
    let base = &base;
    (0..params.fanout)
        .into_par_iter()
        .map(|candidate_idx| {
            expand_one(base, params, generator, critic, entropy_goal, iter, candidate_idx)
        })
        .collect()
}

/// Samples one candidate continuation on its own RNG stream.
fn expand_one(
    state: &BeamState,
    params: &SearchParams,
    generator: &dyn CriticModel,
    critic: &dyn CriticModel,
    entropy_goal: Option<(f64, f64)>,
    iter: usize,
    candidate_idx: usize,
) -> Result<BeamState, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(((iter as u64) << 32) | candidate_idx as u64);

    debug_assert_eq!(state.ids.len(), state.critic_ics.len());
    let ts_grid = timeshift_grid();
    let mut cand = state.clone();
    cand.truncated = false;
    let mut step_duration = 0.0;
    let mut step_tokens = 0usize;

    loop {
        let onset = cand.generated_duration;
        let mut shift = 0.0;
        for slot in 0..4 {
            let expected = TokenType::at_position(cand.ids.len());
            let dist = generator.next_dist(&cand.ids);
            let dist = match entropy_goal {
                Some((ic_star, ch)) => {
                    let h_max = if params.h_max_typed {
                        (expected.cardinality() as f64).ln()
                    } else {
                        (generator.vocab_size() as f64).ln()
                    };
                    let h_target = target_entropy(ic_star, ch, h_max).max(0.0);
                    let fit = match_entropy(&dist, h_target, ENTROPY_TOLERANCE);
                    dist.with_temperature(fit.temperature)
                        .expect("fitted temperature is in range")
                }
                None => dist,
            };
            let id = dist.sample(&mut rng) as u16;
            let token = Token::from_id(id)?;
            if token.ttype != expected {
                return Err(SearchError::MalformedGeneration {
                    expected,
                    found: token.ttype,
                });
            }
            // Candidate IC for selection always comes from the critic,
            // without temperature.
            let c_dist = critic.next_dist(&cand.ids);
            let ic = -c_dist.probs()[id as usize].ln();
            if slot == 3 {
                shift = ts_grid.value(token.value as usize);
            }
            cand.ids.push(id);
            cand.critic_ics.push(ic);
            cand.event_times.push(if slot == 3 { onset + shift } else { onset });
        }
        cand.generated_duration += shift;
        step_duration += shift;
        step_tokens += 4;
        if step_duration > params.step_seconds {
            break;
        }
        if step_tokens + 4 > params.max_tokens_per_step {
            cand.truncated = true;
            break;
        }
    }
    Ok(cand)
}

/// The deviation horizon for the upcoming iteration: the duration every
/// candidate will have covered once expanded (one step past the retained
/// hypothesis), capped at the total. Steps overshoot by fractions of a
/// note, so this tracks the true generation frontier where a fixed
/// `iteration * t'` would slowly fall behind it and out of the kernel's
/// reach.
pub fn step_horizon(state: &BeamState, params: &SearchParams) -> f64 {
    (state.generated_duration + params.step_seconds).min(params.total_seconds)
}

/// Keeps the candidate with the lowest IC deviation against the target over
/// `[0, horizon]`, measured by the critic. Ties go to the lowest candidate
/// index.
pub fn select_best(
    candidates: Vec<BeamState>,
    target: &Curve,
    critic: &dyn CriticModel,
    cfg: &KernelConfig,
    horizon: f64,
) -> Result<BeamState, SearchError> {
    if candidates.is_empty() {
        return Err(SearchError::NoCandidates);
    }
    let mut best: Option<(f64, BeamState)> = None;
    for mut cand in candidates {
        cand.ensure_ics(critic);
        let curve = cand.iic_curve(cfg, horizon);
        let dev = ic_deviation(target, &curve, horizon)?;
        cand.deviation = dev;
        match &best {
            Some((best_dev, _)) if dev >= *best_dev => {}
            _ => best = Some((dev, cand)),
        }
    }
    Ok(best.expect("candidate set non-empty").1)
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct GenerationResult {
    /// Generated notes on the generation-local clock (onsets below T).
    pub notes: NoteList,
    /// Realized IIC over `[0, T]` measured by the critic.
    pub realized: Curve,
    /// Final IC deviation over `[0, T]`.
    pub deviation: f64,
    /// Total timeshift span of the generated tokens: at least T, plus at
    /// most one step's overshoot.
    pub generated_duration: f64,
    /// Beam iterations used.
    pub iterations: usize,
    /// Key/value run manifest; reproduces the run bit-exactly together with
    /// the model file, prompt, and target.
    pub manifest: String,
}

/// Runs the full beam search until the generated duration reaches
/// `params.total_seconds`.
pub fn generate(
    prompt: &NoteList,
    target: &Curve,
    generator: &dyn CriticModel,
    critic: &dyn CriticModel,
    cfg: &KernelConfig,
    params: &SearchParams,
) -> Result<GenerationResult, SearchError> {
    params.validate()?;
    if target.t_end() + 1e-9 < params.total_seconds {
        return Err(SearchError::TargetTooShort {
            target_end: target.t_end(),
            needed: params.total_seconds,
        });
    }
    if target.t0() > 1e-9 {
        return Err(SearchError::BadParams {
            what: format!("target curve must start at 0, starts at {}", target.t0()),
        });
    }

    let prompt_seq = tokenize(prompt)?;
    let mut state = BeamState::initial(&prompt_seq);
    state.ensure_ics(critic);

    // Permissive upper bound; a healthy run needs about T / t' iterations.
    let max_iterations =
        ((params.total_seconds / params.step_seconds).ceil() as usize + 16) * 4;
    let mut iterations = 0;
    while state.generated_duration + 1e-9 < params.total_seconds {
        iterations += 1;
        if iterations > max_iterations {
            return Err(SearchError::Stalled {
                iterations,
                duration: state.generated_duration,
            });
        }
        let horizon = step_horizon(&state, params);
        let candidates = expand_step(&state, params, generator, critic, target, iterations)?;
        if candidates.iter().all(|c| c.truncated) {
            return Err(SearchError::AllCandidatesTruncated {
                iteration: iterations,
                fanout: params.fanout,
            });
        }
        state = select_best(candidates, target, critic, cfg, horizon)?;
    }

    let generated = state.generated_seq()?;
    let all_notes = detokenize(&generated);
    let kept: Vec<NoteEvent> = all_notes
        .notes()
        .iter()
        .filter(|n| n.onset < params.total_seconds)
        .copied()
        .collect();
    let notes = NoteList::new(kept);

    let realized = state.iic_curve(cfg, params.total_seconds);
    let deviation = ic_deviation(target, &realized, params.total_seconds)?;

    let manifest = render_manifest(ManifestInputs {
        params,
        cfg,
        generator,
        critic,
        prompt_seq: &prompt_seq,
        target,
        iterations,
        generated_notes: notes.len(),
        generated_duration: state.generated_duration,
        deviation,
    });

    Ok(GenerationResult {
        notes,
        realized,
        deviation,
        generated_duration: state.generated_duration,
        iterations,
        manifest,
    })
}

struct ManifestInputs<'a> {
    params: &'a SearchParams,
    cfg: &'a KernelConfig,
    generator: &'a dyn CriticModel,
    critic: &'a dyn CriticModel,
    prompt_seq: &'a TokenSeq,
    target: &'a Curve,
    iterations: usize,
    generated_notes: usize,
    generated_duration: f64,
    deviation: f64,
}

fn render_manifest(inputs: ManifestInputs<'_>) -> String {
    let ManifestInputs {
        params,
        cfg,
        generator,
        critic,
        prompt_seq,
        target,
        iterations,
        generated_notes,
        generated_duration,
        deviation,
    } = inputs;
    let prompt_bytes: Vec<u8> = prompt_seq
        .ids()
        .iter()
        .flat_map(|id| id.to_le_bytes())
        .collect();
    let target_csv = target.to_csv_string();
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("manifest_version", "1".into());
    kv("seed", params.seed.to_string());
    kv("step_seconds", params.step_seconds.to_string());
    kv("fanout", params.fanout.to_string());
    kv(
        "entropy_constant",
        params
            .entropy_constant
            .map_or("none".into(), |c| c.to_string()),
    );
    kv("total_seconds", params.total_seconds.to_string());
    kv("max_tokens_per_step", params.max_tokens_per_step.to_string());
    kv("h_max_typed", params.h_max_typed.to_string());
    kv("dt", cfg.dt.to_string());
    kv("window_len", cfg.window_len.to_string());
    kv("c_pitch", cfg.c_pitch.to_string());
    kv("c_timeshift", cfg.c_timeshift.to_string());
    kv("generator_model", generator.fingerprint());
    kv("critic_model", critic.fingerprint());
    kv("prompt_tokens", prompt_seq.len().to_string());
    kv("prompt_fingerprint", fingerprint_bytes(&prompt_bytes));
    kv("target_points", target.len().to_string());
    kv("target_fingerprint", fingerprint_bytes(target_csv.as_bytes()));
    kv("iterations", iterations.to_string());
    kv("generated_notes", generated_notes.to_string());
    kv("generated_duration", format!("{generated_duration:.9}"));
    kv("final_deviation", format!("{deviation:.9}"));
    out
}
