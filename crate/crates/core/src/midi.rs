//! Standard MIDI File I/O and the in-memory note model.
//!
//! Notes live in absolute seconds internally; SMF is only a container. The
//! reader accepts format 0 and 1, honors the tempo map (set-tempo meta
//! events), merges all tracks/channels into a single piano stream, and
//! filters to the 88-key range. The writer emits format 0 at a fixed
//! resolution of 480 ticks per quarter with a single tempo, so a round trip
//! reproduces onsets and durations to within one tick.

use thiserror::Error;

/// Lowest MIDI pitch kept after filtering (A0 on the piano).
pub const PITCH_MIN: u8 = 21;
/// Highest MIDI pitch kept after filtering (C8 on the piano).
pub const PITCH_MAX: u8 = 108;

/// Output resolution for [`save_midi`], in ticks per quarter note.
pub const SAVE_TICKS_PER_QUARTER: u32 = 480;
/// Default tempo for [`save_midi`], in microseconds per quarter note.
pub const DEFAULT_TEMPO_US: u32 = 500_000;

/// A performed note with physical timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    /// Onset time in seconds, non-negative.
    pub onset: f64,
    /// MIDI note number; in [21, 108] after loading.
    pub pitch: u8,
    /// MIDI velocity, 0..=127.
    pub velocity: u8,
    /// Sounding length in seconds, strictly positive.
    pub duration: f64,
}

/// Notes sorted by `(onset, pitch)`.
///
/// Simultaneous onsets are ordered by ascending pitch so that tokenization
/// and tests are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoteList {
    notes: Vec<NoteEvent>,
}

impl NoteList {
    /// Builds a list, sorting into the canonical `(onset, pitch)` order.
    pub fn new(mut notes: Vec<NoteEvent>) -> Self {
        notes.sort_by(|a, b| {
            a.onset
                .total_cmp(&b.onset)
                .then_with(|| a.pitch.cmp(&b.pitch))
        });
        NoteList { notes }
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Onset of the last note, or 0 for an empty list.
    pub fn last_onset(&self) -> f64 {
        self.notes.last().map_or(0.0, |n| n.onset)
    }

    /// Largest `onset + duration`, or 0 for an empty list.
    pub fn end_time(&self) -> f64 {
        self.notes
            .iter()
            .map(|n| n.onset + n.duration)
            .fold(0.0, f64::max)
    }
}

impl<'a> IntoIterator for &'a NoteList {
    type Item = &'a NoteEvent;
    type IntoIter = std::slice::Iter<'a, NoteEvent>;
    fn into_iter(self) -> Self::IntoIter {
        self.notes.iter()
    }
}

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("not a standard MIDI file: bad header chunk at byte {offset}")]
    BadHeader { offset: usize },
    #[error("unsupported SMF format {format} (only 0 and 1 are handled)")]
    UnsupportedFormat { format: u16 },
    #[error("malformed track chunk at byte {offset}: {what}")]
    BadChunk { offset: usize, what: &'static str },
    #[error("truncated or malformed event at byte {offset}: {what}")]
    BadEvent { offset: usize, what: &'static str },
}

/// Result of [`load_midi`]: the notes plus bookkeeping about repairs made
/// while reading.
#[derive(Debug, Clone)]
pub struct LoadedMidi {
    pub notes: NoteList,
    /// Notes outside the 21..=108 pitch range, dropped.
    pub dropped_out_of_range: usize,
    /// Note-ons without a matching note-off, closed at track end.
    pub dangling_note_ons: usize,
    /// Paired notes that collapsed to zero length, dropped.
    pub dropped_zero_length: usize,
}

impl LoadedMidi {
    /// True when the file needed any repair while loading.
    pub fn has_warnings(&self) -> bool {
        self.dangling_note_ons > 0 || self.dropped_zero_length > 0
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, MidiError> {
        if self.pos >= self.data.len() {
            return Err(MidiError::BadEvent {
                offset: self.pos,
                what,
            });
        }
        let b = self.data[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn bytes(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], MidiError> {
        if self.remaining() < n {
            return Err(MidiError::BadEvent {
                offset: self.pos,
                what,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, MidiError> {
        let b = self.bytes(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, MidiError> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most 4 bytes per the SMF spec.
    fn vlq(&mut self) -> Result<u32, MidiError> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8("variable-length quantity")?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::BadEvent {
            offset: self.pos,
            what: "variable-length quantity longer than 4 bytes",
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Timing {
    /// Ticks per quarter note; seconds depend on the tempo map.
    Metrical(u16),
    /// SMPTE: frames per second times ticks per frame gives a fixed tick rate.
    Smpte { ticks_per_second: f64 },
}

#[derive(Debug, Clone, Copy)]
struct RawNoteEvent {
    tick: u64,
    pitch: u8,
    velocity: u8,
    on: bool,
}

/// Converts ticks to seconds under a sorted list of `(tick, us_per_quarter)`
/// tempo changes.
struct TempoMap {
    // (start_tick, start_seconds, us_per_quarter)
    segments: Vec<(u64, f64, f64)>,
    ticks_per_quarter: f64,
}

impl TempoMap {
    fn new(mut changes: Vec<(u64, u32)>, ticks_per_quarter: u16) -> Self {
        changes.sort_by_key(|&(tick, _)| tick);
        let mut segments: Vec<(u64, f64, f64)> = Vec::with_capacity(changes.len() + 1);
        segments.push((0, 0.0, f64::from(DEFAULT_TEMPO_US)));
        for (tick, tempo) in changes {
            let (seg_tick, seg_time, seg_tempo) = *segments.last().unwrap();
            let time = seg_time
                + (tick - seg_tick) as f64 * seg_tempo / (1e6 * f64::from(ticks_per_quarter));
            if tick == seg_tick {
                // A change at the same tick replaces the segment (last wins).
                *segments.last_mut().unwrap() = (tick, seg_time, f64::from(tempo));
            } else {
                segments.push((tick, time, f64::from(tempo)));
            }
        }
        TempoMap {
            segments,
            ticks_per_quarter: f64::from(ticks_per_quarter),
        }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let idx = match self
            .segments
            .binary_search_by_key(&tick, |&(t, _, _)| t)
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let (seg_tick, seg_time, tempo) = self.segments[idx];
        seg_time + (tick - seg_tick) as f64 * tempo / (1e6 * self.ticks_per_quarter)
    }
}

/// Parses an SMF format 0 or 1 file into a [`NoteList`] in absolute seconds.
///
/// All tracks and channels are merged; note-on/note-off pairs are resolved
/// per pitch (a re-struck pitch closes the still-sounding note at the new
/// onset). Notes outside the piano range are dropped and counted; dangling
/// note-ons are closed at the end of their track and flagged.
pub fn load_midi(bytes: &[u8]) -> Result<LoadedMidi, MidiError> {
    let mut cur = Cursor::new(bytes);

    if cur.remaining() < 8 || cur.bytes(4, "header tag")? != b"MThd" {
        return Err(MidiError::BadHeader { offset: 0 });
    }
    let header_len = cur.u32("header length")?;
    if header_len < 6 {
        return Err(MidiError::BadHeader { offset: 4 });
    }
    let format = cur.u16("header format")?;
    if format > 1 {
        return Err(MidiError::UnsupportedFormat { format });
    }
    let ntracks = cur.u16("header track count")?;
    let division = cur.u16("header division")?;
    // Skip any extra header bytes declared by the length field.
    cur.bytes(header_len as usize - 6, "header padding")?;

    let timing = if division & 0x8000 == 0 {
        if division == 0 {
            return Err(MidiError::BadHeader { offset: 12 });
        }
        Timing::Metrical(division)
    } else {
        let fps = f64::from(-(i8::from_ne_bytes([(division >> 8) as u8])));
        let ticks_per_frame = f64::from(division & 0xff);
        Timing::Smpte {
            ticks_per_second: fps * ticks_per_frame,
        }
    };

    let mut raw_notes: Vec<RawNoteEvent> = Vec::new();
    let mut tempo_changes: Vec<(u64, u32)> = Vec::new();
    let mut track_ends: Vec<u64> = Vec::new();
    let mut dangling = 0usize;

    for _ in 0..ntracks {
        // Per the SMF spec, unknown chunk types are skipped.
        loop {
            let chunk_off = cur.pos;
            let tag = cur.bytes(4, "track chunk tag")?;
            let len = cur.u32("track chunk length")? as usize;
            if cur.remaining() < len {
                return Err(MidiError::BadChunk {
                    offset: chunk_off,
                    what: "chunk length exceeds file size",
                });
            }
            if tag == b"MTrk" {
                let track_start = cur.pos;
                let track_first_event = raw_notes.len();
                let end_tick =
                    parse_track(&mut cur, track_start + len, &mut raw_notes, &mut tempo_changes)?;
                // Close dangling note-ons at the end of this track.
                let mut open: Vec<(u8, usize)> = Vec::new();
                for (i, ev) in raw_notes[track_first_event..].iter().enumerate() {
                    let idx = track_first_event + i;
                    if ev.on {
                        open.push((ev.pitch, idx));
                    } else {
                        open.retain(|&(p, _)| p != ev.pitch);
                    }
                }
                for (pitch, idx) in open {
                    dangling += 1;
                    let off_tick = end_tick.max(raw_notes[idx].tick + 1);
                    raw_notes.push(RawNoteEvent {
                        tick: off_tick,
                        pitch,
                        velocity: 0,
                        on: false,
                    });
                }
                track_ends.push(end_tick);
                break;
            }
            cur.bytes(len, "unknown chunk body")?;
        }
    }

    let to_seconds: Box<dyn Fn(u64) -> f64> = match timing {
        Timing::Metrical(tpq) => {
            let map = TempoMap::new(tempo_changes, tpq);
            Box::new(move |tick| map.seconds(tick))
        }
        Timing::Smpte { ticks_per_second } => {
            Box::new(move |tick| tick as f64 / ticks_per_second)
        }
    };

    // Pair note-ons and note-offs per pitch across the merged stream.
    raw_notes.sort_by_key(|ev| (ev.tick, ev.on, ev.pitch));
    let mut open: Vec<(u8, u64, u8)> = Vec::new(); // (pitch, on_tick, velocity)
    let mut paired: Vec<(u64, u64, u8, u8)> = Vec::new(); // (on, off, pitch, vel)
    let mut dropped_zero = 0usize;
    for ev in &raw_notes {
        if ev.on {
            if let Some(i) = open.iter().position(|&(p, _, _)| p == ev.pitch) {
                // Overlapping same-pitch note: close the earlier one here.
                let (p, on_tick, vel) = open.remove(i);
                if ev.tick > on_tick {
                    paired.push((on_tick, ev.tick, p, vel));
                } else {
                    dropped_zero += 1;
                }
            }
            open.push((ev.pitch, ev.tick, ev.velocity));
        } else if let Some(i) = open.iter().position(|&(p, _, _)| p == ev.pitch) {
            let (p, on_tick, vel) = open.remove(i);
            if ev.tick > on_tick {
                paired.push((on_tick, ev.tick, p, vel));
            } else {
                dropped_zero += 1;
            }
        }
        // A stray note-off with no open note is ignored.
    }

    let mut dropped_range = 0usize;
    let mut notes = Vec::with_capacity(paired.len());
    for (on_tick, off_tick, pitch, velocity) in paired {
        if !(PITCH_MIN..=PITCH_MAX).contains(&pitch) {
            dropped_range += 1;
            continue;
        }
        let onset = to_seconds(on_tick);
        let duration = to_seconds(off_tick) - onset;
        notes.push(NoteEvent {
            onset,
            pitch,
            velocity,
            duration,
        });
    }

    Ok(LoadedMidi {
        notes: NoteList::new(notes),
        dropped_out_of_range: dropped_range,
        dangling_note_ons: dangling,
        dropped_zero_length: dropped_zero,
    })
}

/// Parses one MTrk body, returning the tick of its end-of-track point.
fn parse_track(
    cur: &mut Cursor<'_>,
    end_pos: usize,
    notes: &mut Vec<RawNoteEvent>,
    tempos: &mut Vec<(u64, u32)>,
) -> Result<u64, MidiError> {
    let mut tick: u64 = 0;
    let mut running_status: Option<u8> = None;
    while cur.pos < end_pos {
        tick += u64::from(cur.vlq()?);
        let status_off = cur.pos;
        let first = cur.u8("event status")?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            // Data byte: reuse the running status.
            cur.pos -= 1;
            running_status.ok_or(MidiError::BadEvent {
                offset: status_off,
                what: "data byte without running status",
            })?
        };
        match status {
            0xff => {
                running_status = None;
                let meta_type = cur.u8("meta type")?;
                let len = cur.vlq()? as usize;
                let data = cur.bytes(len, "meta payload")?;
                match meta_type {
                    0x51 => {
                        if len != 3 {
                            return Err(MidiError::BadEvent {
                                offset: status_off,
                                what: "set-tempo payload must be 3 bytes",
                            });
                        }
                        let tempo = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        tempos.push((tick, tempo.max(1)));
                    }
                    0x2f => {
                        cur.pos = end_pos;
                        return Ok(tick);
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running_status = None;
                let len = cur.vlq()? as usize;
                cur.bytes(len, "sysex payload")?;
            }
            0xf1..=0xf6 | 0xf8..=0xfe => {
                return Err(MidiError::BadEvent {
                    offset: status_off,
                    what: "system message not valid in SMF track",
                });
            }
            _ => {
                running_status = Some(status);
                let kind = status & 0xf0;
                match kind {
                    0x80 | 0x90 => {
                        let pitch = cur.u8("note number")?;
                        let velocity = cur.u8("note velocity")?;
                        if pitch > 127 || velocity > 127 {
                            return Err(MidiError::BadEvent {
                                offset: status_off,
                                what: "note data byte out of range",
                            });
                        }
                        let on = kind == 0x90 && velocity > 0;
                        notes.push(RawNoteEvent {
                            tick,
                            pitch,
                            velocity,
                            on,
                        });
                    }
                    0xa0 | 0xb0 | 0xe0 => {
                        cur.bytes(2, "channel message data")?;
                    }
                    0xc0 | 0xd0 => {
                        cur.bytes(1, "channel message data")?;
                    }
                    _ => unreachable!("status byte always has high bit set"),
                }
            }
        }
    }
    Ok(tick)
}

/// Serializes notes as a format 0 SMF at 480 ticks per quarter.
///
/// `tempo_us_per_quarter` sets the single tempo event written at tick 0.
/// Zero velocities are written as 1 so the note-on is not misread as an off.
pub fn save_midi(notes: &NoteList, tempo_us_per_quarter: u32) -> Vec<u8> {
    let tempo = tempo_us_per_quarter.max(1);
    let seconds_per_tick = f64::from(tempo) / (1e6 * f64::from(SAVE_TICKS_PER_QUARTER));

    // (tick, is_on, pitch, velocity); offs sort before ons at the same tick
    // so back-to-back same-pitch notes survive the round trip.
    let mut events: Vec<(u64, bool, u8, u8)> = Vec::with_capacity(notes.len() * 2);
    for n in notes {
        let on_tick = (n.onset / seconds_per_tick).round() as u64;
        let off_tick = (((n.onset + n.duration) / seconds_per_tick).round() as u64)
            .max(on_tick + 1);
        events.push((on_tick, true, n.pitch, n.velocity.clamp(1, 127)));
        events.push((off_tick, false, n.pitch, 0));
    }
    events.sort_by_key(|&(tick, on, pitch, _)| (tick, on, pitch));

    let mut track: Vec<u8> = Vec::new();
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x51, 0x03]);
    track.extend_from_slice(&tempo.to_be_bytes()[1..]);

    let mut last_tick = 0u64;
    for (tick, on, pitch, velocity) in events {
        write_vlq(&mut track, (tick - last_tick) as u32);
        last_tick = tick;
        let status = if on { 0x90 } else { 0x80 };
        track.extend_from_slice(&[status, pitch, velocity]);
    }
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(SAVE_TICKS_PER_QUARTER as u16).to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

fn write_vlq(out: &mut Vec<u8>, value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    let mut v = value;
    loop {
        buf[n] = (v & 0x7f) as u8;
        v >>= 7;
        n += 1;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let mut b = buf[i];
        if i > 0 {
            b |= 0x80;
        }
        out.push(b);
    }
}
