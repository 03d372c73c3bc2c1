//! Structured MIDI encoding: each note becomes four tokens in a fixed cycle
//! `Pitch, Velocity, Duration, Timeshift`.
//!
//! Pitch indexes the 88 piano keys (MIDI pitch minus 21), velocity keeps its
//! 128 raw values, and the two time fields are quantized onto a shared grid
//! of bin centers in seconds. The timeshift grid carries an extra leading
//! zero symbol so that notes less than 0.02 s apart are encoded as
//! simultaneous. `Timeshift` holds the inter-onset interval to the *next*
//! note; the final note of a sequence uses the zero symbol.
//!
//! The module also provides the temporal localization `localize`, mapping a
//! token index to the physical time at which its information is perceived:
//! a pitch at its own onset, a timeshift at the onset of the following note.

use crate::midi::{NoteEvent, NoteList};
use std::sync::OnceLock;
use thiserror::Error;

/// Number of pitch values (88 piano keys).
pub const PITCH_CARD: usize = 88;
/// Number of velocity values.
pub const VELOCITY_CARD: usize = 128;
/// Number of duration bins.
pub const DURATION_CARD: usize = 104;
/// Number of timeshift bins (durations plus the zero symbol).
pub const TIMESHIFT_CARD: usize = 105;
/// Full vocabulary size across the four types.
pub const VOCAB_SIZE: usize = PITCH_CARD + VELOCITY_CARD + DURATION_CARD + TIMESHIFT_CARD;

/// MIDI pitch of codebook index 0.
pub const PITCH_BASE: u8 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenType {
    Pitch,
    Velocity,
    Duration,
    Timeshift,
}

impl TokenType {
    /// The token type at a given position of the 4-token cycle.
    pub fn at_position(index: usize) -> TokenType {
        match index % 4 {
            0 => TokenType::Pitch,
            1 => TokenType::Velocity,
            2 => TokenType::Duration,
            _ => TokenType::Timeshift,
        }
    }

    /// Codebook size for this type.
    pub fn cardinality(self) -> usize {
        match self {
            TokenType::Pitch => PITCH_CARD,
            TokenType::Velocity => VELOCITY_CARD,
            TokenType::Duration => DURATION_CARD,
            TokenType::Timeshift => TIMESHIFT_CARD,
        }
    }

    /// Offset of this type's block in the flat vocabulary.
    pub fn id_base(self) -> u16 {
        match self {
            TokenType::Pitch => 0,
            TokenType::Velocity => PITCH_CARD as u16,
            TokenType::Duration => (PITCH_CARD + VELOCITY_CARD) as u16,
            TokenType::Timeshift => (PITCH_CARD + VELOCITY_CARD + DURATION_CARD) as u16,
        }
    }
}

/// One token of the structured encoding: a type tag plus an index into that
/// type's codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub ttype: TokenType,
    pub value: u16,
}

impl Token {
    pub fn new(ttype: TokenType, value: u16) -> Result<Token, TokenizeError> {
        if (value as usize) < ttype.cardinality() {
            Ok(Token { ttype, value })
        } else {
            Err(TokenizeError::ValueOutOfRange {
                ttype,
                value,
            })
        }
    }

    /// Flat vocabulary id in `[0, VOCAB_SIZE)`.
    pub fn id(self) -> u16 {
        self.ttype.id_base() + self.value
    }

    /// Inverse of [`Token::id`].
    pub fn from_id(id: u16) -> Result<Token, TokenizeError> {
        let id_usize = id as usize;
        let ttype = if id_usize < PITCH_CARD {
            TokenType::Pitch
        } else if id_usize < PITCH_CARD + VELOCITY_CARD {
            TokenType::Velocity
        } else if id_usize < PITCH_CARD + VELOCITY_CARD + DURATION_CARD {
            TokenType::Duration
        } else if id_usize < VOCAB_SIZE {
            TokenType::Timeshift
        } else {
            return Err(TokenizeError::BadTokenId { id });
        };
        Ok(Token {
            ttype,
            value: id - ttype.id_base(),
        })
    }
}

/// The type block that a flat vocabulary id belongs to.
pub fn type_of_id(id: u16) -> Result<TokenType, TokenizeError> {
    Token::from_id(id).map(|t| t.ttype)
}

#[derive(Debug, Error)]
pub enum TokenizeError {
    #[error("negative value {value} cannot be quantized")]
    NegativeValue { value: f64 },
    #[error("{ttype:?} token value {value} out of codebook range")]
    ValueOutOfRange { ttype: TokenType, value: u16 },
    #[error("token id {id} outside vocabulary")]
    BadTokenId { id: u16 },
    #[error("token at index {index} has type {found:?}, expected {expected:?}")]
    BrokenCycle {
        index: usize,
        found: TokenType,
        expected: TokenType,
    },
    #[error("sequence length {len} is not a whole number of 4-token groups")]
    PartialGroup { len: usize },
    #[error("token index {index} out of range for sequence of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("note pitch {pitch} outside the 88-key range")]
    PitchOutOfRange { pitch: u8 },
}

/// An ordered list of bin centers in seconds.
#[derive(Debug, Clone)]
pub struct QuantGrid {
    centers: Vec<f64>,
}

impl QuantGrid {
    fn new(centers: Vec<f64>) -> Self {
        debug_assert!(centers.windows(2).all(|w| w[0] < w[1]));
        QuantGrid { centers }
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Bin center for an index.
    pub fn value(&self, index: usize) -> f64 {
        self.centers[index]
    }

    /// Index of the nearest bin center. Midpoints round to the larger bin
    /// (with a 1e-12 tolerance so decimal midpoints like 0.03 behave as
    /// ties despite float representation); values beyond the last center
    /// clamp to it.
    pub fn quantize(&self, value: f64) -> Result<usize, TokenizeError> {
        if value < 0.0 || value.is_nan() {
            return Err(TokenizeError::NegativeValue { value });
        }
        let n = self.centers.len();
        let hi = self.centers.partition_point(|&c| c < value);
        if hi == 0 {
            return Ok(0);
        }
        if hi == n {
            return Ok(n - 1);
        }
        let lo = hi - 1;
        let below = value - self.centers[lo];
        let above = self.centers[hi] - value;
        if below < above - 1e-12 {
            Ok(lo)
        } else {
            Ok(hi)
        }
    }
}

/// The shared time grid: 0.02 s steps up to 1 s, 0.1 s steps up to 5 s, then
/// whole seconds up to 19 s. 104 values.
fn base_time_centers() -> Vec<f64> {
    let mut centers = Vec::with_capacity(DURATION_CARD);
    for i in 1..=50 {
        centers.push(f64::from(i) * 0.02);
    }
    for i in 1..=40 {
        centers.push(1.0 + f64::from(i) * 0.1);
    }
    for i in 6..=19 {
        centers.push(f64::from(i));
    }
    centers
}

/// Duration grid (104 bins).
pub fn duration_grid() -> &'static QuantGrid {
    static GRID: OnceLock<QuantGrid> = OnceLock::new();
    GRID.get_or_init(|| QuantGrid::new(base_time_centers()))
}

/// Timeshift grid: the duration grid with a zero symbol prepended (105 bins).
pub fn timeshift_grid() -> &'static QuantGrid {
    static GRID: OnceLock<QuantGrid> = OnceLock::new();
    GRID.get_or_init(|| {
        let mut centers = vec![0.0];
        centers.extend(base_time_centers());
        QuantGrid::new(centers)
    })
}

/// A well-formed token sequence: whole 4-token groups in cycle order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<Token>,
}

impl TokenSeq {
    /// Wraps tokens, checking the group structure and type cycle.
    pub fn new(tokens: Vec<Token>) -> Result<TokenSeq, TokenizeError> {
        if !tokens.len().is_multiple_of(4) {
            return Err(TokenizeError::PartialGroup { len: tokens.len() });
        }
        for (i, tok) in tokens.iter().enumerate() {
            let expected = TokenType::at_position(i);
            if tok.ttype != expected {
                return Err(TokenizeError::BrokenCycle {
                    index: i,
                    found: tok.ttype,
                    expected,
                });
            }
        }
        Ok(TokenSeq { tokens })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn note_count(&self) -> usize {
        self.tokens.len() / 4
    }

    /// Flat vocabulary ids for the whole sequence.
    pub fn ids(&self) -> Vec<u16> {
        self.tokens.iter().map(|t| t.id()).collect()
    }

    /// Appends one whole note group.
    pub fn push_group(&mut self, group: [Token; 4]) -> Result<(), TokenizeError> {
        for (slot, tok) in group.iter().enumerate() {
            let expected = TokenType::at_position(slot);
            if tok.ttype != expected {
                return Err(TokenizeError::BrokenCycle {
                    index: self.tokens.len() + slot,
                    found: tok.ttype,
                    expected,
                });
            }
        }
        self.tokens.extend_from_slice(&group);
        Ok(())
    }

    /// Concatenation of two sequences (both stay whole-group aligned).
    pub fn concat(&self, other: &TokenSeq) -> TokenSeq {
        let mut tokens = self.tokens.clone();
        tokens.extend_from_slice(&other.tokens);
        TokenSeq { tokens }
    }

    /// Sum of all timeshift values in seconds: the onset one past the last
    /// note, and the duration covered by the encoded material.
    pub fn timeshift_span(&self) -> f64 {
        let grid = timeshift_grid();
        self.tokens
            .iter()
            .filter(|t| t.ttype == TokenType::Timeshift)
            .map(|t| grid.value(t.value as usize))
            .sum()
    }
}

/// Serializes notes into the 4-token structured encoding.
///
/// The `Timeshift` of each note encodes the interval to the next note's
/// onset; the last note uses the zero symbol.
pub fn tokenize(notes: &NoteList) -> Result<TokenSeq, TokenizeError> {
    let dur_grid = duration_grid();
    let ts_grid = timeshift_grid();
    let slice = notes.notes();
    let mut tokens = Vec::with_capacity(slice.len() * 4);
    for (i, n) in slice.iter().enumerate() {
        if !(PITCH_BASE..=PITCH_BASE + PITCH_CARD as u8 - 1).contains(&n.pitch) {
            return Err(TokenizeError::PitchOutOfRange { pitch: n.pitch });
        }
        let shift = match slice.get(i + 1) {
            Some(next) => ts_grid.quantize(next.onset - n.onset)?,
            None => 0,
        };
        tokens.push(Token {
            ttype: TokenType::Pitch,
            value: u16::from(n.pitch - PITCH_BASE),
        });
        tokens.push(Token {
            ttype: TokenType::Velocity,
            value: u16::from(n.velocity),
        });
        tokens.push(Token {
            ttype: TokenType::Duration,
            value: dur_grid.quantize(n.duration)? as u16,
        });
        tokens.push(Token {
            ttype: TokenType::Timeshift,
            value: shift as u16,
        });
    }
    Ok(TokenSeq { tokens })
}

/// Reconstructs notes from tokens, accumulating timeshifts into onsets.
pub fn detokenize(seq: &TokenSeq) -> NoteList {
    let dur_grid = duration_grid();
    let ts_grid = timeshift_grid();
    let mut notes = Vec::with_capacity(seq.note_count());
    let mut onset = 0.0;
    for group in seq.tokens.chunks_exact(4) {
        notes.push(NoteEvent {
            onset,
            pitch: group[0].value as u8 + PITCH_BASE,
            velocity: group[1].value as u8,
            duration: dur_grid.value(group[2].value as usize),
        });
        onset += ts_grid.value(group[3].value as usize);
    }
    NoteList::new(notes)
}

/// Onset time of each note in the sequence (cumulative timeshifts).
fn note_onsets(seq: &TokenSeq) -> Vec<f64> {
    let ts_grid = timeshift_grid();
    let mut onsets = Vec::with_capacity(seq.note_count());
    let mut onset = 0.0;
    for group in seq.tokens.chunks_exact(4) {
        onsets.push(onset);
        onset += ts_grid.value(group[3].value as usize);
    }
    onsets
}

/// Temporal localization of token `index`: the time at which the token's
/// information is perceived.
///
/// Pitch, velocity, and duration localize at their note's onset; a timeshift
/// localizes at the onset of the following note, since an inter-onset
/// interval is only heard once the next note arrives.
pub fn localize(seq: &TokenSeq, index: usize) -> Result<f64, TokenizeError> {
    if index >= seq.len() {
        return Err(TokenizeError::IndexOutOfRange {
            index,
            len: seq.len(),
        });
    }
    Ok(localize_all(seq)[index])
}

/// [`localize`] evaluated for every token at once.
pub fn localize_all(seq: &TokenSeq) -> Vec<f64> {
    let ts_grid = timeshift_grid();
    let onsets = note_onsets(seq);
    let mut times = Vec::with_capacity(seq.len());
    for (i, tok) in seq.tokens.iter().enumerate() {
        let note = i / 4;
        let t = match tok.ttype {
            TokenType::Timeshift => onsets[note] + ts_grid.value(tok.value as usize),
            _ => onsets[note],
        };
        times.push(t);
    }
    times
}
