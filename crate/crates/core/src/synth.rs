//! Deterministic synthetic corpora for tests, demos, and experiments.
//!
//! Pieces are built from short scale-walk patterns repeated with occasional
//! variation: dense enough (5-10 notes per second) that IIC curves carry
//! structure, and repetitive enough that a variable-order Markov model
//! learns them well. Everything is seeded, so corpora are reproducible
//! byte-for-byte.

use crate::midi::{NoteEvent, NoteList};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const DURATION_CHOICES: [f64; 3] = [0.1, 0.2, 0.4];
const VELOCITY_CHOICES: [u8; 3] = [64, 72, 80];

/// Knobs controlling how predictable a pattern corpus is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternParams {
    /// Inter-onset intervals a pattern position may pick from.
    pub ioi_choices: [f64; 3],
    /// Per-repeat probability of substituting a pitch.
    pub pitch_variation: f64,
    /// Per-repeat probability of substituting a timing.
    pub ioi_variation: f64,
    /// Probability of doubling a note with a chord tone.
    pub chord_probability: f64,
}

impl Default for PatternParams {
    /// A diverse profile: trained models keep real sampling entropy, so
    /// beam candidates genuinely differ.
    fn default() -> Self {
        PatternParams {
            ioi_choices: [0.1, 0.15, 0.2],
            pitch_variation: 0.15,
            ioi_variation: 0.12,
            chord_probability: 0.08,
        }
    }
}

impl PatternParams {
    /// A dense, highly regular profile: trained models become confident,
    /// which is the regime where dynamic temperature control has leverage.
    pub fn dense_predictable() -> Self {
        PatternParams {
            ioi_choices: [0.08, 0.1, 0.12],
            pitch_variation: 0.04,
            ioi_variation: 0.03,
            chord_probability: 0.05,
        }
    }
}

/// One pattern-based piece: a short figure repeated with note- and
/// timing-level variation per [`PatternParams`].
pub fn pattern_piece_with(seed: u64, repeats: usize, params: &PatternParams) -> NoteList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root: u8 = 48 + rng.random_range(0..12);
    let pattern_len = rng.random_range(8..=16);

    // A random walk over two octaves of the scale, with per-note timing.
    let mut degree: i32 = rng.random_range(0..14);
    let mut pattern: Vec<(u8, u8, f64, f64)> = Vec::with_capacity(pattern_len);
    for _ in 0..pattern_len {
        degree = (degree + rng.random_range(-2..=2)).clamp(0, 13);
        let pitch = root + 12 * (degree / 7) as u8 + MAJOR_SCALE[(degree % 7) as usize];
        let velocity = VELOCITY_CHOICES[rng.random_range(0..VELOCITY_CHOICES.len())];
        let duration = DURATION_CHOICES[rng.random_range(0..DURATION_CHOICES.len())];
        let ioi = params.ioi_choices[rng.random_range(0..params.ioi_choices.len())];
        pattern.push((pitch, velocity, duration, ioi));
    }

    let scale_pitch = |rng: &mut ChaCha8Rng| {
        let d = rng.random_range(0..14u8);
        root + 12 * (d / 7) + MAJOR_SCALE[(d % 7) as usize]
    };

    let mut notes = Vec::with_capacity(pattern_len * repeats);
    let mut onset = 0.0;
    for _ in 0..repeats {
        for &(pitch, velocity, duration, ioi) in &pattern {
            let pitch = if rng.random_bool(params.pitch_variation) {
                scale_pitch(&mut rng)
            } else {
                pitch
            };
            notes.push(NoteEvent {
                onset,
                pitch: pitch.clamp(21, 108),
                velocity,
                duration,
            });
            if rng.random_bool(params.chord_probability) {
                // Chord tone a third or fourth above, simultaneous.
                let extra = pitch + if rng.random_bool(0.5) { 4 } else { 5 };
                notes.push(NoteEvent {
                    onset,
                    pitch: extra.clamp(21, 108),
                    velocity,
                    duration,
                });
            }
            let ioi = if rng.random_bool(params.ioi_variation) {
                params.ioi_choices[rng.random_range(0..params.ioi_choices.len())]
            } else {
                ioi
            };
            onset += ioi;
        }
    }
    NoteList::new(notes)
}

/// [`pattern_piece_with`] under the default diverse profile.
pub fn pattern_piece(seed: u64, repeats: usize) -> NoteList {
    pattern_piece_with(seed, repeats, &PatternParams::default())
}

/// A small deterministic corpus of pattern pieces.
pub fn pattern_corpus(seed: u64, pieces: usize, repeats: usize) -> Vec<NoteList> {
    pattern_corpus_with(seed, pieces, repeats, &PatternParams::default())
}

/// [`pattern_corpus`] with explicit profile knobs.
pub fn pattern_corpus_with(
    seed: u64,
    pieces: usize,
    repeats: usize,
    params: &PatternParams,
) -> Vec<NoteList> {
    (0..pieces)
        .map(|i| {
            pattern_piece_with(seed.wrapping_add(i as u64).wrapping_mul(0x9e37), repeats, params)
        })
        .collect()
}

/// A piece alternating one-second sparse and dense segments; used as a
/// positive control for the density/surprisal correlation.
pub fn sparse_dense_piece(seed: u64, segments: usize) -> NoteList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root: u8 = 55 + rng.random_range(0..6);
    let mut notes = Vec::new();
    for seg in 0..segments {
        let seg_start = seg as f64;
        let count = if seg % 2 == 0 {
            rng.random_range(1..=2)
        } else {
            rng.random_range(8..=12)
        };
        for i in 0..count {
            let degree = rng.random_range(0..14u8);
            let pitch = root + 12 * (degree / 7) + MAJOR_SCALE[(degree % 7) as usize];
            notes.push(NoteEvent {
                onset: seg_start + f64::from(i) / f64::from(count),
                pitch: pitch.clamp(21, 108),
                velocity: 70,
                duration: 0.15,
            });
        }
    }
    NoteList::new(notes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pieces_are_deterministic() {
        let a = pattern_piece(3, 5);
        let b = pattern_piece(3, 5);
        assert_eq!(a, b);
        let c = pattern_piece(4, 5);
        assert_ne!(a, c);
    }

    #[test]
    fn pattern_piece_is_dense_and_in_range() {
        let piece = pattern_piece(1, 10);
        assert!(!piece.is_empty());
        let span = piece.last_onset();
        let density = piece.len() as f64 / span.max(1.0);
        assert!(density >= 4.0, "density {density}");
        assert!(piece
            .notes()
            .iter()
            .all(|n| (21..=108).contains(&n.pitch)));
    }

    #[test]
    fn sparse_dense_alternates_density() {
        let piece = sparse_dense_piece(9, 10);
        let count_in = |lo: f64, hi: f64| {
            piece
                .notes()
                .iter()
                .filter(|n| n.onset >= lo && n.onset < hi)
                .count()
        };
        for seg in 0..5 {
            let sparse = count_in(2.0 * seg as f64, 2.0 * seg as f64 + 1.0);
            let dense = count_in(2.0 * seg as f64 + 1.0, 2.0 * seg as f64 + 2.0);
            assert!(sparse <= 2 && dense >= 8);
        }
    }
}
