//! Autoregressive critic models and distribution utilities.
//!
//! A critic maps a token prefix to a probability distribution over the next
//! token; the negative log probability of the actual token is its
//! information content (IC), in nats. The default implementation is a
//! variable-order Markov model with Witten-Bell interpolation that backs off
//! recursively to the uniform distribution, so every token keeps strictly
//! positive probability and IC stays finite.
//!
//! The same module carries the entropy machinery used for dynamic
//! temperature control: Shannon entropy, temperature application on
//! log-probabilities, and a bisection that fits a temperature to a target
//! entropy.

use crate::tokenizer::{TokenSeq, TokenType, VOCAB_SIZE};
use rand::Rng;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

/// Lower bound of the temperature search range.
pub const TEMPERATURE_MIN: f64 = 1e-3;
/// Upper bound of the temperature search range.
pub const TEMPERATURE_MAX: f64 = 1e3;
/// Default bisection tolerance in nats.
pub const ENTROPY_TOLERANCE: f64 = 1e-3;

const BISECTION_MAX_ITERS: usize = 60;

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("distribution must be non-empty")]
    EmptyDistribution,
    #[error("distribution entries must be finite and non-negative")]
    InvalidProbability,
    #[error("distribution sums to {sum}, expected 1 within 1e-9")]
    NotNormalized { sum: f64 },
    #[error("temperature must be positive, got {value}")]
    BadTemperature { value: f64 },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("max_order must be at least 1")]
    BadOrder,
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { id: u16, vocab: usize },
    #[error("model file corrupt: {what}")]
    BadModelFile { what: String },
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A probability distribution over a token vocabulary.
///
/// Entries are non-negative and sum to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Distribution, CriticError> {
        if probs.is_empty() {
            return Err(CriticError::EmptyDistribution);
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(CriticError::InvalidProbability);
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CriticError::NotNormalized { sum });
        }
        Ok(Distribution { probs })
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Distribution, CriticError> {
        if weights.is_empty() {
            return Err(CriticError::EmptyDistribution);
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(CriticError::InvalidProbability);
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(CriticError::InvalidProbability);
        }
        Ok(Distribution {
            probs: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn uniform(n: usize) -> Distribution {
        assert!(n > 0, "uniform distribution needs at least one entry");
        Distribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats. Zero-probability entries contribute zero.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Index of the largest probability (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Number of entries with nonzero probability.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Rescales with temperature `r`: each probability becomes proportional
    /// to `exp(ln p / r)`. `r = 1` is the identity; the argmax is preserved
    /// for every positive `r`, and zero entries stay zero.
    pub fn with_temperature(&self, r: f64) -> Result<Distribution, CriticError> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(CriticError::BadTemperature { value: r });
        }
        // Shift by the max log-probability before exponentiating so extreme
        // temperatures do not overflow.
        let max_ln = self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = self
            .probs
            .iter()
            .map(|&p| {
                if p > 0.0 {
                    ((p.ln() - max_ln) / r).exp()
                } else {
                    0.0
                }
            })
            .collect();
        Distribution::from_weights(weights)
    }

    /// Draws an index by inverse transform sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding may leave acc slightly below 1; fall back to the last
        // nonzero entry.
        self.probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.probs.len() - 1)
    }
}

/// The per-step entropy imposed on the generator: the target curve value
/// scaled down by `c_h` and clamped at `h_max`.
pub fn target_entropy(ic_star: f64, c_h: f64, h_max: f64) -> f64 {
    assert!(c_h > 0.0, "entropy constant must be positive");
    (ic_star / c_h).min(h_max)
}

/// Outcome of [`match_entropy`].
#[derive(Debug, Clone, Copy)]
pub struct TemperatureFit {
    /// Fitted temperature, clamped into the search range.
    pub temperature: f64,
    /// Entropy of the distribution at that temperature.
    pub entropy: f64,
    /// False when the target lies outside the entropy range achievable over
    /// the temperature bracket (e.g. a one-hot distribution and a positive
    /// target, or a target above the support's log-cardinality).
    pub reached: bool,
}

/// Finds a temperature whose rescaled entropy matches `h_target` within
/// `tol`, by bisection over `[TEMPERATURE_MIN, TEMPERATURE_MAX]`.
///
/// Entropy is monotone non-decreasing in the temperature, which the
/// bisection exploits. Targets above the achievable ceiling report
/// `reached = false` and return the upper bound.
pub fn match_entropy(d: &Distribution, h_target: f64, tol: f64) -> TemperatureFit {
    assert!(h_target >= 0.0, "target entropy must be non-negative");
    assert!(tol > 0.0, "tolerance must be positive");

    let h_at = |r: f64| d.with_temperature(r).expect("r in bracket").entropy();

    let h_hi = h_at(TEMPERATURE_MAX);
    if h_target > h_hi {
        return TemperatureFit {
            temperature: TEMPERATURE_MAX,
            entropy: h_hi,
            reached: false,
        };
    }
    let h_lo = h_at(TEMPERATURE_MIN);
    if h_target < h_lo {
        return TemperatureFit {
            temperature: TEMPERATURE_MIN,
            entropy: h_lo,
            reached: false,
        };
    }
    // The untouched distribution may already match.
    let h_unit = d.entropy();
    if (h_unit - h_target).abs() <= tol {
        return TemperatureFit {
            temperature: 1.0,
            entropy: h_unit,
            reached: true,
        };
    }

    let (mut lo, mut hi) = (TEMPERATURE_MIN, TEMPERATURE_MAX);
    let mut mid = 1.0;
    let mut h_mid = h_unit;
    for _ in 0..BISECTION_MAX_ITERS {
        if (h_mid - h_target).abs() <= tol {
            break;
        }
        if h_mid < h_target {
            lo = mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        h_mid = h_at(mid);
    }
    TemperatureFit {
        temperature: mid,
        entropy: h_mid,
        reached: (h_mid - h_target).abs() <= tol,
    }
}

/// Descriptive metadata a critic reports about itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInfo {
    pub kind: String,
    pub vocab_size: usize,
    pub max_order: Option<usize>,
    pub trained_tokens: u64,
}

/// An autoregressive next-token distribution provider.
///
/// `next_dist` must be deterministic in the prefix, and its output must obey
/// the [`Distribution`] invariants. Implementations are immutable once
/// built, so one model can serve any number of concurrent evaluators.
pub trait CriticModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Distribution of the next token given a prefix of flat vocabulary ids.
    fn next_dist(&self, prefix: &[u16]) -> Distribution;

    fn info(&self) -> ModelInfo;

    /// Stable identity of the model parameters, for run manifests.
    fn fingerprint(&self) -> String {
        "unfingerprinted".to_string()
    }
}

/// Per-token information content of a sequence under a model, in nats.
pub fn token_ic(model: &dyn CriticModel, seq: &TokenSeq) -> Vec<f64> {
    token_ic_ids(model, &seq.ids())
}

/// [`token_ic`] over raw vocabulary ids.
pub fn token_ic_ids(model: &dyn CriticModel, ids: &[u16]) -> Vec<f64> {
    let mut out = Vec::with_capacity(ids.len());
    for i in 0..ids.len() {
        let dist = model.next_dist(&ids[..i]);
        out.push(-dist.probs()[ids[i] as usize].ln());
    }
    out
}

/// Count statistics for one context: total observations and the per-token
/// continuation counts.
#[derive(Debug, Clone, Default, PartialEq)]
struct ContextStats {
    total: u64,
    counts: BTreeMap<u16, u32>,
}

/// Witten-Bell smoothed variable-order Markov model.
///
/// Probabilities interpolate maximum-likelihood estimates of order `n` with
/// the order `n-1` distribution, weighted by the number of distinct
/// continuations seen after the context; order 0 interpolates with the
/// uniform distribution. Contexts at the start of a sequence are padded with
/// a sentinel so that training and querying agree.
///
/// When `type_mask` is set (structured music vocabulary only) the output is
/// restricted and renormalized to the token type dictated by the position in
/// the 4-token cycle.
pub struct MarkovCritic {
    vocab_size: usize,
    max_order: usize,
    type_mask: bool,
    /// tables[k] holds contexts of length k.
    tables: Vec<BTreeMap<Box<[u16]>, ContextStats>>,
    trained_tokens: u64,
    /// Calibrated IIC kernel weights, when computed by the training CLI.
    pub c_pitch: Option<f64>,
    pub c_timeshift: Option<f64>,
    /// Corpus IIC percentiles stored at training time (25th, 75th).
    pub level_low: Option<f64>,
    pub level_high: Option<f64>,
    fingerprint: String,
}

impl MarkovCritic {
    fn sentinel(&self) -> u16 {
        self.vocab_size as u16
    }

    /// Trains on raw id sequences over an arbitrary vocabulary.
    pub fn train_ids(
        corpus: &[Vec<u16>],
        vocab_size: usize,
        max_order: usize,
    ) -> Result<MarkovCritic, CriticError> {
        if corpus.is_empty() || corpus.iter().all(|s| s.is_empty()) {
            return Err(CriticError::EmptyCorpus);
        }
        if max_order < 1 {
            return Err(CriticError::BadOrder);
        }
        let mut model = MarkovCritic {
            vocab_size,
            max_order,
            type_mask: false,
            tables: vec![BTreeMap::new(); max_order + 1],
            trained_tokens: 0,
            c_pitch: None,
            c_timeshift: None,
            level_low: None,
            level_high: None,
            fingerprint: String::new(),
        };
        let sentinel = model.sentinel();
        for seq in corpus {
            let mut padded = vec![sentinel; max_order];
            padded.extend_from_slice(seq);
            for pos in max_order..padded.len() {
                let target = padded[pos];
                if target as usize >= vocab_size {
                    return Err(CriticError::TokenOutOfVocab {
                        id: target,
                        vocab: vocab_size,
                    });
                }
                model.trained_tokens += 1;
                for order in 0..=max_order {
                    let ctx: Box<[u16]> = padded[pos - order..pos].into();
                    let stats = model.tables[order].entry(ctx).or_default();
                    stats.total += 1;
                    *stats.counts.entry(target).or_insert(0) += 1;
                }
            }
        }
        model.fingerprint = model.compute_fingerprint();
        Ok(model)
    }

    /// Trains on structured token sequences with type masking enabled.
    pub fn train(corpus: &[TokenSeq], max_order: usize) -> Result<MarkovCritic, CriticError> {
        let ids: Vec<Vec<u16>> = corpus.iter().map(|s| s.ids()).collect();
        let mut model = Self::train_ids(&ids, VOCAB_SIZE, max_order)?;
        model.type_mask = true;
        model.fingerprint = model.compute_fingerprint();
        Ok(model)
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn type_mask(&self) -> bool {
        self.type_mask
    }

    /// Enables or disables restriction of the output to the cycle's token
    /// type. Only meaningful on the structured vocabulary.
    pub fn set_type_mask(&mut self, on: bool) {
        self.type_mask = on;
        self.fingerprint = self.compute_fingerprint();
    }

    /// Stores kernel calibration and default target levels alongside the
    /// counts so downstream commands reuse them.
    pub fn set_calibration(
        &mut self,
        c_pitch: f64,
        c_timeshift: f64,
        level_low: f64,
        level_high: f64,
    ) {
        self.c_pitch = Some(c_pitch);
        self.c_timeshift = Some(c_timeshift);
        self.level_low = Some(level_low);
        self.level_high = Some(level_high);
        self.fingerprint = self.compute_fingerprint();
    }

    /// Witten-Bell interpolated distribution before any masking.
    fn smoothed_dist(&self, prefix: &[u16]) -> Vec<f64> {
        let sentinel = self.sentinel();
        // Uniform base case.
        let mut probs = vec![1.0 / self.vocab_size as f64; self.vocab_size];
        for order in 0..=self.max_order {
            let ctx: Vec<u16> = if prefix.len() >= order {
                prefix[prefix.len() - order..].to_vec()
            } else {
                let mut c = vec![sentinel; order - prefix.len()];
                c.extend_from_slice(prefix);
                c
            };
            let Some(stats) = self.tables[order].get(ctx.as_slice()) else {
                // Unseen context: keep the lower-order distribution.
                continue;
            };
            let distinct = stats.counts.len() as f64;
            let denom = stats.total as f64 + distinct;
            for p in probs.iter_mut() {
                *p *= distinct / denom;
            }
            for (&tok, &count) in &stats.counts {
                probs[tok as usize] += f64::from(count) / denom;
            }
        }
        probs
    }

    fn masked_dist(&self, prefix: &[u16]) -> Vec<f64> {
        let mut probs = self.smoothed_dist(prefix);
        if self.type_mask && self.vocab_size == VOCAB_SIZE {
            let ttype = TokenType::at_position(prefix.len());
            let base = ttype.id_base() as usize;
            let card = ttype.cardinality();
            let mut mass = 0.0;
            for (i, p) in probs.iter_mut().enumerate() {
                if i < base || i >= base + card {
                    *p = 0.0;
                } else {
                    mass += *p;
                }
            }
            for p in probs.iter_mut() {
                *p /= mass;
            }
        }
        probs
    }

    fn compute_fingerprint(&self) -> String {
        let mut hasher = Fnv1a::new();
        self.write_into(&mut hasher).expect("hashing cannot fail");
        format!("fnv1a:{:016x}", hasher.hash)
    }

    const MAGIC: &'static [u8; 8] = b"IICMKV\0\0";
    const VERSION: u32 = 1;

    /// Serializes the model in the versioned binary format.
    ///
    /// The encoding is canonical (contexts in sorted order), so identical
    /// training inputs produce byte-identical files.
    pub fn write_into<W: Write>(&self, w: &mut W) -> Result<(), CriticError> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(self.vocab_size as u32).to_le_bytes())?;
        w.write_all(&(self.max_order as u32).to_le_bytes())?;
        w.write_all(&[u8::from(self.type_mask)])?;
        for opt in [
            self.c_pitch,
            self.c_timeshift,
            self.level_low,
            self.level_high,
        ] {
            match opt {
                Some(v) => {
                    w.write_all(&[1])?;
                    w.write_all(&v.to_le_bytes())?;
                }
                None => w.write_all(&[0])?,
            }
        }
        w.write_all(&self.trained_tokens.to_le_bytes())?;
        for table in &self.tables {
            w.write_all(&(table.len() as u64).to_le_bytes())?;
            for (ctx, stats) in table {
                for id in ctx.iter() {
                    w.write_all(&id.to_le_bytes())?;
                }
                w.write_all(&(stats.counts.len() as u32).to_le_bytes())?;
                for (&tok, &count) in &stats.counts {
                    w.write_all(&tok.to_le_bytes())?;
                    w.write_all(&count.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_into(&mut out).expect("vec write cannot fail");
        out
    }

    /// Loads a model, validating the magic string and version.
    pub fn read_from<R: Read>(r: &mut R) -> Result<MarkovCritic, CriticError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(CriticError::BadModelFile {
                what: "magic string mismatch".into(),
            });
        }
        let version = read_u32(r)?;
        if version != Self::VERSION {
            return Err(CriticError::BadModelFile {
                what: format!("unsupported version {version}"),
            });
        }
        let vocab_size = read_u32(r)? as usize;
        let max_order = read_u32(r)? as usize;
        if vocab_size == 0 || max_order == 0 {
            return Err(CriticError::BadModelFile {
                what: "zero vocab size or order".into(),
            });
        }
        let type_mask = read_u8(r)? != 0;
        let mut opts = [None; 4];
        for slot in opts.iter_mut() {
            if read_u8(r)? != 0 {
                *slot = Some(read_f64(r)?);
            }
        }
        let trained_tokens = read_u64(r)?;
        let mut tables = Vec::with_capacity(max_order + 1);
        for order in 0..=max_order {
            let n_contexts = read_u64(r)?;
            let mut table = BTreeMap::new();
            for _ in 0..n_contexts {
                let mut ctx = vec![0u16; order];
                for slot in ctx.iter_mut() {
                    *slot = read_u16(r)?;
                }
                let n_entries = read_u32(r)?;
                let mut counts = BTreeMap::new();
                let mut total = 0u64;
                for _ in 0..n_entries {
                    let tok = read_u16(r)?;
                    let count = read_u32(r)?;
                    total += u64::from(count);
                    counts.insert(tok, count);
                }
                table.insert(ctx.into_boxed_slice(), ContextStats { total, counts });
            }
            tables.push(table);
        }
        let mut model = MarkovCritic {
            vocab_size,
            max_order,
            type_mask,
            tables,
            trained_tokens,
            c_pitch: opts[0],
            c_timeshift: opts[1],
            level_low: opts[2],
            level_high: opts[3],
            fingerprint: String::new(),
        };
        model.fingerprint = model.compute_fingerprint();
        Ok(model)
    }
}

impl CriticModel for MarkovCritic {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_dist(&self, prefix: &[u16]) -> Distribution {
        Distribution::from_weights(self.masked_dist(prefix))
            .expect("smoothed distribution is valid")
    }

    fn info(&self) -> ModelInfo {
        ModelInfo {
            kind: "witten-bell-markov".to_string(),
            vocab_size: self.vocab_size,
            max_order: Some(self.max_order),
            trained_tokens: self.trained_tokens,
        }
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

/// FNV-1a fingerprint of arbitrary bytes, in the same format as model
/// fingerprints. A manifest identity, not a security primitive.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let mut hasher = Fnv1a::new();
    hasher.write_all(bytes).expect("hashing cannot fail");
    format!("fnv1a:{:016x}", hasher.hash)
}

/// 64-bit FNV-1a over the serialized model; cheap and dependency-free, used
/// only as a manifest identity, not for security.
struct Fnv1a {
    hash: u64,
}

impl Fnv1a {
    fn new() -> Self {
        Fnv1a {
            hash: 0xcbf2_9ce4_8422_2325,
        }
    }
}

impl Write for Fnv1a {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        for &b in buf {
            self.hash ^= u64::from(b);
            self.hash = self.hash.wrapping_mul(0x100_0000_01b3);
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8, CriticError> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, CriticError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CriticError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CriticError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, CriticError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reference to a generic model usable as both generator and critic.
pub type SharedModel = std::sync::Arc<dyn CriticModel>;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const A: u16 = 0;
    const B: u16 = 1;

    #[test]
    fn witten_bell_matches_hand_recursion() {
        // Corpus "A A A" over {A, B}, order 1.
        let model = MarkovCritic::train_ids(&[vec![A, A, A]], 2, 1).unwrap();
        // Unigram: (3 + 1 * 0.5) / (3 + 1) = 0.875.
        // Bigram after A: (2 + 1 * 0.875) / (2 + 1) = 0.9583...
        let d = model.next_dist(&[A]);
        let expected = (2.0 + 0.875) / 3.0;
        assert!((d.probs()[A as usize] - expected).abs() < 1e-12);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unseen_context_backs_off_positive() {
        let model = MarkovCritic::train_ids(&[vec![A, A, A]], 2, 1).unwrap();
        let d = model.next_dist(&[B]);
        // Context B never observed: falls back to the smoothed unigram.
        assert!((d.probs()[A as usize] - 0.875).abs() < 1e-12);
        assert!(d.probs().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn alternating_corpus_prefers_alternation() {
        let model = MarkovCritic::train_ids(&[vec![A, B, A, B]], 2, 1).unwrap();
        assert_eq!(model.next_dist(&[A]).argmax(), B as usize);
    }

    #[test]
    fn token_ic_from_trained_example() {
        let model = MarkovCritic::train_ids(&[vec![A, A, A]], 2, 1).unwrap();
        let ics = token_ic_ids(&model, &[A, A]);
        assert_eq!(ics.len(), 2);
        let p2: f64 = (2.0 + 0.875) / 3.0;
        assert!((ics[1] - (-p2.ln())).abs() < 1e-12);
        assert!(ics.iter().all(|ic| ic.is_finite()));
    }

    #[test]
    fn ic_definition_examples() {
        assert!(((1.0f64 / 8.0).ln().abs() - 8.0f64.ln()).abs() < 1e-12);
        // A certain token carries no information.
        let d = Distribution::new(vec![1.0]).unwrap();
        assert_eq!(d.entropy(), 0.0);
    }

    #[test]
    fn entropy_examples() {
        assert!((Distribution::uniform(4).entropy() - 4.0f64.ln()).abs() < 1e-12);
        let d = Distribution::new(vec![0.9, 0.1]).unwrap();
        let expected = -(0.9f64 * 0.9f64.ln() + 0.1f64 * 0.1f64.ln());
        assert!((d.entropy() - expected).abs() < 1e-12);
        assert!((d.entropy() - 0.3251).abs() < 1e-4);
        let onehot = Distribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(onehot.entropy(), 0.0);
    }

    #[test]
    fn temperature_identity_and_square() {
        let d = Distribution::new(vec![0.9, 0.1]).unwrap();
        let same = d.with_temperature(1.0).unwrap();
        for (a, b) in d.probs().iter().zip(same.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
        // r = 0.5 squares and renormalizes: 0.81 / 0.82.
        let sharp = d.with_temperature(0.5).unwrap();
        assert!((sharp.probs()[0] - 0.81 / 0.82).abs() < 1e-12);
        assert!((sharp.probs()[1] - 0.01 / 0.82).abs() < 1e-12);
        // r -> infinity approaches uniform.
        let flat = d.with_temperature(TEMPERATURE_MAX).unwrap();
        assert!((flat.probs()[0] - 0.5).abs() < 1e-3);
        assert!(d.with_temperature(0.0).is_err());
        assert!(d.with_temperature(-1.0).is_err());
    }

    #[test]
    fn temperature_preserves_argmax() {
        let d = Distribution::new(vec![0.2, 0.5, 0.3]).unwrap();
        for r in [0.01, 0.1, 0.9, 1.0, 3.0, 100.0] {
            assert_eq!(d.with_temperature(r).unwrap().argmax(), 1);
        }
    }

    #[test]
    fn target_entropy_formula() {
        assert!((target_entropy(5.0, 50.0, 6.0) - 0.1).abs() < 1e-12);
        assert!((target_entropy(1000.0, 10.0, 6.0) - 6.0).abs() < 1e-12);
        assert_eq!(target_entropy(0.0, 50.0, 6.0), 0.0);
    }

    #[test]
    fn match_entropy_uniform_returns_identity() {
        let d = Distribution::uniform(8);
        let fit = match_entropy(&d, 8.0f64.ln(), ENTROPY_TOLERANCE);
        assert!(fit.reached);
        assert_eq!(fit.temperature, 1.0);
    }

    #[test]
    fn match_entropy_bisection_hits_target() {
        let d = Distribution::new(vec![0.9, 0.1]).unwrap();
        let fit = match_entropy(&d, 0.5, ENTROPY_TOLERANCE);
        assert!(fit.reached);
        let check = d.with_temperature(fit.temperature).unwrap().entropy();
        assert!((check - 0.5).abs() <= ENTROPY_TOLERANCE);
        // Oracle: a fine grid scan over r agrees on the achieved entropy.
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..20000 {
            let r = TEMPERATURE_MIN * (TEMPERATURE_MAX / TEMPERATURE_MIN).powf(i as f64 / 19999.0);
            let h = d.with_temperature(r).unwrap().entropy();
            let err = (h - 0.5).abs();
            if err < best.0 {
                best = (err, r);
            }
        }
        assert!((fit.temperature - best.1).abs() / best.1 < 0.05);
    }

    #[test]
    fn match_entropy_flags_unreachable_supremum() {
        // ln 2 is the supremum for a two-point distribution; 0.6932 exceeds it.
        let d = Distribution::new(vec![0.9, 0.1]).unwrap();
        let fit = match_entropy(&d, 0.6932, ENTROPY_TOLERANCE);
        assert!(!fit.reached);
        assert_eq!(fit.temperature, TEMPERATURE_MAX);
    }

    #[test]
    fn match_entropy_one_hot_cannot_create_support() {
        let d = Distribution::new(vec![1.0, 0.0, 0.0]).unwrap();
        let fit = match_entropy(&d, 0.5, ENTROPY_TOLERANCE);
        assert!(!fit.reached);
        assert_eq!(fit.temperature, TEMPERATURE_MAX);
    }

    #[test]
    fn entropy_monotone_in_temperature() {
        let d = Distribution::new(vec![0.7, 0.2, 0.09, 0.01]).unwrap();
        let mut prev = -1.0;
        for i in 0..100 {
            let r = TEMPERATURE_MIN * (TEMPERATURE_MAX / TEMPERATURE_MIN).powf(i as f64 / 99.0);
            let h = d.with_temperature(r).unwrap().entropy();
            assert!(h >= prev - 1e-12);
            prev = h;
        }
    }

    #[test]
    fn expected_ic_equals_entropy() {
        let d = Distribution::new(vec![0.5, 0.25, 0.125, 0.125]).unwrap();
        let expected_ic: f64 = d.probs().iter().map(|&p| p * -p.ln()).sum();
        assert!((expected_ic - d.entropy()).abs() < 1e-12);
    }

    #[test]
    fn trained_model_beats_shuffled_data() {
        // Mean IC on structured data is lower than on the same tokens in a
        // scrambled order.
        let seq: Vec<u16> = (0..240).map(|i| (i % 4) as u16).collect();
        let model = MarkovCritic::train_ids(std::slice::from_ref(&seq), 4, 2).unwrap();
        let ic_train: f64 =
            token_ic_ids(&model, &seq).iter().sum::<f64>() / seq.len() as f64;
        let mut shuffled = seq.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        let ic_shuf: f64 =
            token_ic_ids(&model, &shuffled).iter().sum::<f64>() / shuffled.len() as f64;
        assert!(ic_train <= ic_shuf);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(MarkovCritic::train_ids(&[], 2, 1).is_err());
        assert!(MarkovCritic::train_ids(&[vec![]], 2, 1).is_err());
        assert!(MarkovCritic::train_ids(&[vec![A]], 2, 0).is_err());
    }

    #[test]
    fn persistence_round_trip_is_byte_identical() {
        let model = MarkovCritic::train_ids(&[vec![A, B, A, A, B]], 2, 2).unwrap();
        let bytes = model.to_bytes();
        let reloaded = MarkovCritic::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(reloaded.to_bytes(), bytes);
        assert_eq!(reloaded.fingerprint(), model.fingerprint());
        let d1 = model.next_dist(&[A]);
        let d2 = reloaded.next_dist(&[A]);
        assert_eq!(d1.probs(), d2.probs());
    }

    #[test]
    fn persistence_rejects_bad_magic() {
        let model = MarkovCritic::train_ids(&[vec![A, B]], 2, 1).unwrap();
        let mut bytes = model.to_bytes();
        bytes[0] ^= 0xff;
        assert!(MarkovCritic::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let d = Distribution::new(vec![0.3, 0.3, 0.4]).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        let s1: Vec<usize> = (0..32).map(|_| d.sample(&mut r1)).collect();
        let s2: Vec<usize> = (0..32).map(|_| d.sample(&mut r2)).collect();
        assert_eq!(s1, s2);
    }

    #[test]
    fn type_mask_restricts_to_cycle_type() {
        use crate::midi::{NoteEvent, NoteList};
        use crate::tokenizer::tokenize;
        let notes = NoteList::new(vec![
            NoteEvent {
                onset: 0.0,
                pitch: 60,
                velocity: 64,
                duration: 0.5,
            },
            NoteEvent {
                onset: 0.5,
                pitch: 64,
                velocity: 64,
                duration: 0.5,
            },
        ]);
        let seq = tokenize(&notes).unwrap();
        let model = MarkovCritic::train(std::slice::from_ref(&seq), 2).unwrap();
        assert!(model.type_mask());
        // Empty prefix: only pitch tokens may have mass.
        let d = model.next_dist(&[]);
        let pitch_mass: f64 = d.probs()[..crate::tokenizer::PITCH_CARD].iter().sum();
        assert!((pitch_mass - 1.0).abs() < 1e-9);
        // After one token, only velocity tokens may have mass.
        let d = model.next_dist(&seq.ids()[..1]);
        let base = TokenType::Velocity.id_base() as usize;
        let vel_mass: f64 =
            d.probs()[base..base + TokenType::Velocity.cardinality()].iter().sum();
        assert!((vel_mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn next_dist_sums_to_one_with_positive_entries() {
        let model = MarkovCritic::train_ids(&[vec![A, B, A]], 2, 3).unwrap();
        for prefix in [&[][..], &[A][..], &[A, B][..], &[B, B, B][..]] {
            let d = model.next_dist(prefix);
            assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(d.probs().iter().all(|&p| p > 0.0));
        }
    }
}
