//! Complexity metrics and their correlation with segment surprisal.
//!
//! Harmonic tension is the cloud diameter: the largest pairwise distance
//! between a segment's pitch classes embedded on the circle-of-fifths helix.
//! Rhythmic complexity is the normalized entropy of a segment's inter-onset
//! interval histogram, and density is simply notes per segment. Each metric
//! is paired with the segment surprisal of the same time span, and Pearson
//! correlations are tracked as the per-piece prefix of segments grows.

use crate::iic::{segment_surprisal, Curve, CurveError};
use crate::midi::NoteList;
use crate::tokenizer::timeshift_grid;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least one inter-onset interval")]
    NoIois,
    #[error("measure annotation invalid: {what}")]
    BadAnnotation { what: String },
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Helix embedding parameters for pitch classes along the line of fifths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralConfig {
    /// Radius of the circle-of-fifths cross-section.
    pub radius: f64,
    /// Vertical rise per fifth.
    pub rise: f64,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        SpiralConfig {
            radius: 1.0,
            rise: (2.0 / 15.0_f64).sqrt(),
        }
    }
}

/// Position of fifths-index `k` on the helix:
/// `(r sin(k pi/2), r cos(k pi/2), k h)`.
pub fn spiral_point(k: i32, cfg: &SpiralConfig) -> [f64; 3] {
    let angle = f64::from(k) * std::f64::consts::FRAC_PI_2;
    [
        cfg.radius * angle.sin(),
        cfg.radius * angle.cos(),
        f64::from(k) * cfg.rise,
    ]
}

fn spiral_distance(k1: i32, k2: i32, cfg: &SpiralConfig) -> f64 {
    let a = spiral_point(k1, cfg);
    let b = spiral_point(k2, cfg);
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Fifths indices of the distinct pitch classes among `pitches`, unwrapped
/// so the set occupies the tightest contiguous arc on the circle of fifths.
///
/// Raw indices come from `(7 * pc) mod 12` (C = 0, sharps preferred). MIDI
/// carries no spelling, so the arc with the largest circular gap behind it
/// is chosen as the common frame; on ties the gap ending at the smallest
/// index wins.
fn fifths_indices(pitches: &[u8]) -> Vec<i32> {
    let mut present = [false; 12];
    for &p in pitches {
        present[(usize::from(p)) % 12] = true;
    }
    let mut ks: Vec<i32> = (0..12)
        .filter(|&pc| present[pc as usize])
        .map(|pc| (7 * pc) % 12)
        .collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.len() < 2 {
        return ks;
    }
    // Largest circular gap between consecutive indices; the arc starts just
    // after it.
    let n = ks.len();
    let mut best_gap = ks[0] + 12 - ks[n - 1];
    let mut start = 0usize; // arc begins at ks[start]
    for i in 0..n - 1 {
        let gap = ks[i + 1] - ks[i];
        if gap > best_gap {
            best_gap = gap;
            start = i + 1;
        }
    }
    (0..n)
        .map(|i| {
            let k = ks[(start + i) % n];
            if (start + i) >= n {
                k + 12
            } else {
                k
            }
        })
        .collect()
}

/// Tonal tension of a pitch collection: the maximum pairwise distance
/// between its distinct pitch classes on the helix. Zero for at most one
/// pitch class.
pub fn cloud_diameter(pitches: &[u8], cfg: &SpiralConfig) -> f64 {
    let ks = fifths_indices(pitches);
    let mut max = 0.0f64;
    for i in 0..ks.len() {
        for j in i + 1..ks.len() {
            max = max.max(spiral_distance(ks[i], ks[j], cfg));
        }
    }
    max
}

/// Number of notes with onset in `[center - width/2, center + width/2)`.
pub fn note_density(notes: &NoteList, center: f64, width: f64) -> usize {
    assert!(width > 0.0, "window width must be positive");
    let lo = center - width / 2.0;
    let hi = center + width / 2.0;
    notes
        .notes()
        .iter()
        .filter(|n| n.onset >= lo && n.onset < hi)
        .count()
}

/// Normalized Shannon entropy of a histogram over quantized IOI values:
/// entropy over distinct values divided by ln(K), zero when K = 1.
pub fn ioi_entropy(iois: &[usize]) -> Result<f64, AnalysisError> {
    if iois.is_empty() {
        return Err(AnalysisError::NoIois);
    }
    let mut counts = std::collections::BTreeMap::new();
    for &v in iois {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    let k = counts.len();
    if k == 1 {
        return Ok(0.0);
    }
    let n = iois.len() as f64;
    let h: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    Ok(h / (k as f64).ln())
}

/// One scored segment: a time span, a complexity metric value, and the
/// segment surprisal over the span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRecord {
    pub t1: f64,
    pub t2: f64,
    pub metric: f64,
    pub surprisal: f64,
}

/// Which complexity metric to attach to onset-centered segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentMetric {
    Tension,
    Density,
}

/// Builds one-second (or `width`-second) segments centered on every note
/// onset, each carrying the chosen metric and the segment surprisal of the
/// IIC curve. Segment bounds clamp to the curve domain.
pub fn onset_segments(
    notes: &NoteList,
    iic: &Curve,
    width: f64,
    metric: SegmentMetric,
    spiral: &SpiralConfig,
) -> Result<Vec<SegmentRecord>, AnalysisError> {
    assert!(width > 0.0, "segment width must be positive");
    let mut records = Vec::with_capacity(notes.len());
    for n in notes {
        let t1 = (n.onset - width / 2.0).max(iic.t0());
        let t2 = (n.onset + width / 2.0).min(iic.t_end());
        if !(t2 > t1) {
            continue;
        }
        let value = match metric {
            SegmentMetric::Density => note_density(notes, n.onset, width) as f64,
            SegmentMetric::Tension => {
                let pitches: Vec<u8> = notes
                    .notes()
                    .iter()
                    .filter(|m| m.onset >= n.onset - width / 2.0 && m.onset < n.onset + width / 2.0)
                    .map(|m| m.pitch)
                    .collect();
                cloud_diameter(&pitches, spiral)
            }
        };
        records.push(SegmentRecord {
            t1,
            t2,
            metric: value,
            surprisal: segment_surprisal(iic, t1, t2)?,
        });
    }
    Ok(records)
}

/// Measure boundaries given as note indices into the piece's [`NoteList`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureSpan {
    pub measure_index: usize,
    pub first_note: usize,
    pub last_note: usize,
}

/// Splits a piece into measure segments and scores each with the IOI
/// histogram entropy plus the measure's length-normalized segment surprisal.
///
/// Interior boundaries sit at the mean of the last onset of one measure and
/// the first onset of the next; the outer edges are the first onset and the
/// end of the last note.
pub fn measure_segments(
    notes: &NoteList,
    measures: &[MeasureSpan],
    iic: &Curve,
) -> Result<Vec<SegmentRecord>, AnalysisError> {
    if measures.is_empty() {
        return Ok(Vec::new());
    }
    let slice = notes.notes();
    for (i, m) in measures.iter().enumerate() {
        if m.first_note > m.last_note || m.last_note >= slice.len() {
            return Err(AnalysisError::BadAnnotation {
                what: format!(
                    "measure {} spans notes {}..={} in a piece of {}",
                    m.measure_index,
                    m.first_note,
                    m.last_note,
                    slice.len()
                ),
            });
        }
        if i > 0 && m.first_note < measures[i - 1].last_note {
            return Err(AnalysisError::BadAnnotation {
                what: format!("measure {} overlaps its predecessor", m.measure_index),
            });
        }
    }

    let ts_grid = timeshift_grid();
    let mut records = Vec::with_capacity(measures.len());
    for (i, m) in measures.iter().enumerate() {
        let t1 = if i == 0 {
            slice[m.first_note].onset
        } else {
            let prev = measures[i - 1];
            0.5 * (slice[prev.last_note].onset + slice[m.first_note].onset)
        };
        let t2 = if i + 1 < measures.len() {
            let next = measures[i + 1];
            0.5 * (slice[m.last_note].onset + slice[next.first_note].onset)
        } else {
            let last = slice[m.last_note];
            last.onset + last.duration
        };
        if !(t2 > t1) {
            return Err(AnalysisError::BadAnnotation {
                what: format!("measure {} collapses to zero length", m.measure_index),
            });
        }
        // Quantized IOIs within the measure.
        let mut iois = Vec::new();
        for w in slice[m.first_note..=m.last_note].windows(2) {
            let ioi = w[1].onset - w[0].onset;
            iois.push(ts_grid.quantize(ioi).unwrap_or(0));
        }
        let metric = if iois.is_empty() {
            0.0
        } else {
            ioi_entropy(&iois)?
        };
        let lo = t1.max(iic.t0());
        let hi = t2.min(iic.t_end());
        let surprisal = if hi > lo {
            segment_surprisal(iic, lo, hi)? / (t2 - t1)
        } else {
            0.0
        };
        records.push(SegmentRecord {
            t1,
            t2,
            metric,
            surprisal,
        });
    }
    Ok(records)
}

/// Pearson correlation at one prefix length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationPoint {
    /// Prefix length n: the first n segments of every piece are pooled.
    pub n: usize,
    /// Pearson r, or None when undefined (fewer than 3 points or zero
    /// variance).
    pub r: Option<f64>,
    /// Two-sided p-value from the t approximation, where r is defined.
    pub p_value: Option<f64>,
    /// Number of pooled points.
    pub points: usize,
}

/// Pearson correlation with a two-sided p-value; `None` for degenerate
/// input.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len().min(ys.len());
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean_x = xs[..n].iter().sum::<f64>() / nf;
    let mean_y = ys[..n].iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mean_x;
        let dy = ys[i] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p = if (1.0 - r * r) <= f64::EPSILON {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Some((r, p))
}

/// Growing-prefix correlation series: for each n, pools the first
/// `min(n, len)` `(metric, surprisal)` pairs of every piece and reports
/// Pearson r.
pub fn correlation_series(
    pieces: &[Vec<(f64, f64)>],
    n_max: usize,
) -> Vec<CorrelationPoint> {
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for piece in pieces {
            for &(metric, surprisal) in piece.iter().take(n) {
                xs.push(metric);
                ys.push(surprisal);
            }
        }
        let fit = pearson(&xs, &ys);
        out.push(CorrelationPoint {
            n,
            r: fit.map(|(r, _)| r),
            p_value: fit.map(|(_, p)| p),
            points: xs.len(),
        });
    }
    out
}

/// Per-piece variant: Pearson r is computed within each piece's prefix and
/// the defined coefficients are averaged. No pooled p-value is meaningful
/// here, so the points column carries the number of contributing pieces.
pub fn correlation_series_per_piece(
    pieces: &[Vec<(f64, f64)>],
    n_max: usize,
) -> Vec<CorrelationPoint> {
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut rs = Vec::new();
        for piece in pieces {
            let xs: Vec<f64> = piece.iter().take(n).map(|p| p.0).collect();
            let ys: Vec<f64> = piece.iter().take(n).map(|p| p.1).collect();
            if let Some((r, _)) = pearson(&xs, &ys) {
                rs.push(r);
            }
        }
        out.push(CorrelationPoint {
            n,
            r: (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64),
            p_value: None,
            points: rs.len(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::NoteEvent;

    fn cfg() -> SpiralConfig {
        SpiralConfig::default()
    }

    // Pitch classes: C=0, E=4, G=7, F=5, B=11.
    const C: u8 = 60;
    const E: u8 = 64;
    const G: u8 = 67;
    const F: u8 = 65;

    #[test]
    fn single_pitch_class_has_zero_diameter() {
        assert_eq!(cloud_diameter(&[C], &cfg()), 0.0);
        assert_eq!(cloud_diameter(&[], &cfg()), 0.0);
        // Octaves and duplicates collapse.
        assert_eq!(cloud_diameter(&[C, C + 12, C + 24], &cfg()), 0.0);
    }

    #[test]
    fn fifth_and_triad_match_hand_values() {
        // C-G: one fifth apart, sqrt(2 + 2/15).
        let d = cloud_diameter(&[C, G], &cfg());
        assert!((d - (2.0f64 + 2.0 / 15.0).sqrt()).abs() < 1e-12);
        assert!((d - 1.4606).abs() < 1e-4);
        // C-E-G: the C-E span of 4 fifths has planar distance 0; the G-E
        // span of 3 dominates at sqrt(2 + 9 * 2/15) = sqrt(3.2).
        let d = cloud_diameter(&[C, E, G], &cfg());
        assert!((d - 3.2f64.sqrt()).abs() < 1e-12);
        assert!((d - 1.7889).abs() < 1e-4);
    }

    #[test]
    fn fifths_unwrap_spans_the_seam() {
        // F (raw index 11) and C (0) are one fifth apart musically; the
        // unwrap must give distance 1, not 11.
        let d = cloud_diameter(&[F, C], &cfg());
        assert!((d - (2.0f64 + 2.0 / 15.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn diameter_invariant_under_fifths_transposition() {
        // Transposing by a fifth (7 semitones) shifts every index by one.
        for set in [&[C, E, G][..], &[C, F][..], &[C, E, G, 70][..]] {
            let base = cloud_diameter(set, &cfg());
            let moved: Vec<u8> = set.iter().map(|&p| p + 7).collect();
            let shifted = cloud_diameter(&moved, &cfg());
            assert!((base - shifted).abs() < 1e-9, "set {set:?}");
        }
    }

    #[test]
    fn density_half_open_window() {
        let notes = NoteList::new(vec![
            NoteEvent { onset: 0.0, pitch: 60, velocity: 64, duration: 0.1 },
            NoteEvent { onset: 0.4, pitch: 62, velocity: 64, duration: 0.1 },
            NoteEvent { onset: 0.9, pitch: 64, velocity: 64, duration: 0.1 },
            NoteEvent { onset: 1.0, pitch: 66, velocity: 64, duration: 0.1 },
        ]);
        // Window [0, 1): the note exactly at the right edge is excluded.
        assert_eq!(note_density(&notes, 0.5, 1.0), 3);
        assert_eq!(note_density(&notes, 10.0, 1.0), 0);
    }

    #[test]
    fn ioi_entropy_values() {
        assert_eq!(ioi_entropy(&[3, 3, 3]).unwrap(), 0.0);
        assert!((ioi_entropy(&[1, 2, 3, 4]).unwrap() - 1.0).abs() < 1e-12);
        // Counts (3, 1): binary entropy of 0.75 normalized by ln 2.
        let h = ioi_entropy(&[5, 5, 5, 9]).unwrap();
        let expect = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln()) / 2.0f64.ln();
        assert!((h - expect).abs() < 1e-12);
        assert!((h - 0.8113).abs() < 1e-4);
        assert!(ioi_entropy(&[]).is_err());
    }

    #[test]
    fn ioi_entropy_bounds() {
        for iois in [&[1, 1, 2, 3][..], &[9, 9, 9, 1][..], &[1, 2][..]] {
            let h = ioi_entropy(iois).unwrap();
            assert!((0.0..=1.0 + 1e-12).contains(&h));
        }
    }

    #[test]
    fn perfect_correlations() {
        let piece: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, i as f64)).collect();
        let series = correlation_series(std::slice::from_ref(&piece), 10);
        for point in series.iter().skip(2) {
            assert!((point.r.unwrap() - 1.0).abs() < 1e-12);
            assert!(point.p_value.unwrap() < 1e-6);
        }
        let anti: Vec<(f64, f64)> = piece.iter().map(|&(x, y)| (x, -y)).collect();
        let series = correlation_series(&[anti], 10);
        assert!((series[9].r.unwrap() + 1.0).abs() < 1e-12);
        // n = 1 pools a single point per piece: undefined here.
        assert!(series[0].r.is_none());
    }

    #[test]
    fn zero_variance_is_undefined() {
        let flat: Vec<(f64, f64)> = (0..10).map(|i| (1.0, i as f64)).collect();
        let series = correlation_series(&[flat], 5);
        assert!(series.iter().all(|p| p.r.is_none()));
    }

    #[test]
    fn per_piece_series_averages_coefficients() {
        let up: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64)).collect();
        let down: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, -(i as f64))).collect();
        let series = correlation_series_per_piece(&[up, down], 8);
        // Opposite perfect correlations cancel in the per-piece mean.
        let last = &series[7];
        assert!(last.r.unwrap().abs() < 1e-12);
        assert_eq!(last.points, 2);
        assert!(last.p_value.is_none());
    }

    #[test]
    fn correlation_in_unit_interval() {
        let a: Vec<(f64, f64)> = (0..30)
            .map(|i| ((i % 7) as f64, ((i * 3) % 5) as f64))
            .collect();
        for point in correlation_series(&[a], 30) {
            if let Some(r) = point.r {
                assert!((-1.0..=1.0).contains(&r));
                let p = point.p_value.unwrap();
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    fn uniform_piece(n: usize, ioi: f64) -> NoteList {
        NoteList::new(
            (0..n)
                .map(|i| NoteEvent {
                    onset: i as f64 * ioi,
                    pitch: 60,
                    velocity: 64,
                    duration: 0.2,
                })
                .collect(),
        )
    }

    #[test]
    fn measure_boundaries_use_mean_onsets() {
        // Last note of measure 1 at 1.9, first of measure 2 at 2.1: the
        // boundary falls at 2.0.
        let notes = NoteList::new(vec![
            NoteEvent { onset: 0.0, pitch: 60, velocity: 64, duration: 0.2 },
            NoteEvent { onset: 1.9, pitch: 62, velocity: 64, duration: 0.2 },
            NoteEvent { onset: 2.1, pitch: 64, velocity: 64, duration: 0.2 },
            NoteEvent { onset: 3.0, pitch: 66, velocity: 64, duration: 0.5 },
        ]);
        let iic = Curve::new(0.0, 0.1, vec![1.0; 40]);
        let measures = [
            MeasureSpan { measure_index: 0, first_note: 0, last_note: 1 },
            MeasureSpan { measure_index: 1, first_note: 2, last_note: 3 },
        ];
        let recs = measure_segments(&notes, &measures, &iic).unwrap();
        assert_eq!(recs.len(), 2);
        assert!((recs[0].t2 - 2.0).abs() < 1e-12);
        assert!((recs[1].t1 - 2.0).abs() < 1e-12);
        assert!((recs[1].t2 - 3.5).abs() < 1e-12);
    }

    #[test]
    fn single_measure_piece() {
        let notes = uniform_piece(4, 0.5);
        let iic = Curve::new(0.0, 0.1, vec![2.0; 31]);
        let measures = [MeasureSpan { measure_index: 0, first_note: 0, last_note: 3 }];
        let recs = measure_segments(&notes, &measures, &iic).unwrap();
        assert_eq!(recs.len(), 1);
        // Uniform IOIs: zero entropy. Constant IIC of 2: normalized
        // surprisal near 2.
        assert_eq!(recs[0].metric, 0.0);
        assert!((recs[0].surprisal - 2.0).abs() < 0.2);
    }

    #[test]
    fn uniform_measures_have_equal_normalized_surprisal() {
        // Identical measures under a constant curve: near-equal records.
        let notes = uniform_piece(20, 0.25);
        let iic = Curve::new(0.0, 0.1, vec![1.5; 60]);
        let measures: Vec<MeasureSpan> = (0..5)
            .map(|i| MeasureSpan {
                measure_index: i,
                first_note: 4 * i,
                last_note: 4 * i + 3,
            })
            .collect();
        let recs = measure_segments(&notes, &measures, &iic).unwrap();
        let first = recs[1].surprisal;
        for r in &recs[1..4] {
            assert!((r.surprisal - first).abs() < 0.15, "{recs:?}");
        }
    }

    #[test]
    fn bad_annotations_rejected() {
        let notes = uniform_piece(4, 0.5);
        let iic = Curve::new(0.0, 0.1, vec![1.0; 31]);
        let out_of_range = [MeasureSpan { measure_index: 0, first_note: 0, last_note: 9 }];
        assert!(measure_segments(&notes, &out_of_range, &iic).is_err());
        let non_monotone = [
            MeasureSpan { measure_index: 0, first_note: 2, last_note: 3 },
            MeasureSpan { measure_index: 1, first_note: 0, last_note: 1 },
        ];
        assert!(measure_segments(&notes, &non_monotone, &iic).is_err());
    }

    #[test]
    fn onset_segment_records_have_metrics() {
        let notes = uniform_piece(8, 0.5);
        let iic = Curve::new(0.0, 0.1, vec![1.0; 60]);
        let recs = onset_segments(&notes, &iic, 1.0, SegmentMetric::Density, &cfg()).unwrap();
        assert_eq!(recs.len(), 8);
        // Interior windows of one second at IOI 0.5 hold 2 notes.
        assert!(recs[3].metric >= 2.0);
        let recs = onset_segments(&notes, &iic, 1.0, SegmentMetric::Tension, &cfg()).unwrap();
        // A single repeated pitch has zero tension everywhere.
        assert!(recs.iter().all(|r| r.metric == 0.0));
    }
}
