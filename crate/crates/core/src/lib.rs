//! Surprisal-controlled symbolic music generation.
//!
//! The library turns MIDI into a structured token stream, scores tokens with
//! an autoregressive critic model, interpolates per-token information content
//! into a continuous-time curve (the instantaneous information content, IIC),
//! and steers a beam search so that the IIC of generated material tracks a
//! user-supplied target curve. A companion analysis layer relates the IIC to
//! harmonic tension, note density, and rhythmic entropy.
//!
//! Module map:
//! - [`midi`]: Standard MIDI File reading/writing and the `NoteList` model.
//! - [`tokenizer`]: the 4-token-per-note structured encoding, quantization
//!   grids, and temporal localization of tokens.
//! - [`critic`]: the `CriticModel` trait, a Witten-Bell smoothed variable-order
//!   Markov implementation, entropy, and temperature fitting.
//! - [`iic`]: the half-Hann interpolation kernel, IIC curves, segment
//!   surprisal, and IC deviation.
//! - [`curves`]: canonical target shapes and curve extraction from real music.
//! - [`search`]: the IC-conditioned beam search with dynamic temperature.
//! - [`analysis`]: tonal tension, note density, IOI entropy, and
//!   growing-prefix correlation series.
//! - [`synth`]: deterministic synthetic corpus generation for tests and demos.

// Validation guards use `!(x > 0.0)` so NaN inputs fail them too; the
// suggested `x <= 0.0` form would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod critic;
pub mod curves;
pub mod iic;
pub mod midi;
pub mod search;
pub mod synth;
pub mod tokenizer;

pub use critic::{CriticModel, Distribution, MarkovCritic};
pub use curves::{ShapeKind, ShapeSpec};
pub use iic::{Curve, KernelConfig};
pub use midi::{NoteEvent, NoteList};
pub use search::{SearchParams, generate};
pub use tokenizer::{Token, TokenSeq, TokenType};
