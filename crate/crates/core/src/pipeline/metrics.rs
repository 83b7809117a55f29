//! Scoring decoded tracks against simulator ground truth.
//!
//! A track scores for the beacon nearest to it when it was created, if that
//! beacon is within twice its radius. A beacon's evaluated interval runs from
//! the first bit appended by any of its tracks to the last one, so time lost
//! between tracks counts against it. Only truth bits emitted while the beacon
//! was visible count.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::events::{BeaconTruth, GroundTruth};
use crate::protocol::FRAME_BITS;

/// A run of identical bits appended to a track buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitRun {
    pub start_us: f64,
    pub bit: bool,
    pub count: usize,
}

/// What scoring needs to know about one track.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackEvidence {
    pub runs: Vec<BitRun>,
    /// Start time (first bit center) of each decoded frame, with its payload.
    pub frames: Vec<(f64, u8)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconScore {
    pub beacon: String,
    pub payload: u32,
    pub tracks: Vec<u64>,
    pub emitted_frames: usize,
    pub correct_frames: usize,
    pub truth_bits: usize,
    pub correct_bits: usize,
    pub mar: Option<f64>,
    pub bar: Option<f64>,
}

/// `100 * correct / emitted`, absent when nothing was emitted.
pub fn mar(correct_frames: usize, emitted_frames: usize) -> Option<f64> {
    (emitted_frames > 0)
        .then(|| 100.0 * correct_frames.min(emitted_frames) as f64 / emitted_frames as f64)
}

/// `100 * matching / truth bits`, absent when the interval is empty.
pub fn bar(correct_bits: usize, truth_bits: usize) -> Option<f64> {
    (truth_bits > 0).then(|| 100.0 * correct_bits.min(truth_bits) as f64 / truth_bits as f64)
}

/// Beacon a track created at `pos`, `t_us` belongs to.
pub fn match_beacon(truth: &GroundTruth, pos: (f64, f64), t_us: f64) -> Option<String> {
    truth
        .beacons
        .iter()
        .filter_map(|(id, b)| {
            let (bx, by) = b.position_at(t_us)?;
            let d = (bx - pos.0).hypot(by - pos.1);
            (d <= 2.0 * b.radius).then_some((d, id))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, id)| id.clone())
}

/// Bit centers of every appended bit, with their values.
fn appended_bits(runs: &[BitRun], bit_period_us: f64) -> impl Iterator<Item = (f64, bool)> + '_ {
    runs.iter().flat_map(move |r| {
        (0..r.count).map(move |k| (r.start_us + (k as f64 + 0.5) * bit_period_us, r.bit))
    })
}

/// Scores the tracks matched to one beacon. `bit_period_us` is the period
/// the decoder assumed.
pub fn score_beacon(
    id: &str,
    beacon: &BeaconTruth,
    tracks: &[(u64, &TrackEvidence)],
    bit_period_us: f64,
) -> BeaconScore {
    let n = beacon.bit_count();
    let mut correct = vec![false; n];
    let mut first: Option<usize> = None;
    let mut last: Option<usize> = None;
    for (_, ev) in tracks {
        for (t, bit) in appended_bits(&ev.runs, bit_period_us) {
            let Some(i) = beacon.bit_index_at(t) else {
                continue;
            };
            first = Some(first.map_or(i, |f| f.min(i)));
            last = Some(last.map_or(i, |l| l.max(i)));
            if beacon.bit(i) == Some(bit) {
                correct[i] = true;
            }
        }
    }
    let mut in_span = vec![false; n];
    if let (Some(a), Some(b)) = (first, last) {
        for flag in &mut in_span[a..=b] {
            *flag = true;
        }
    }
    let counted: Vec<bool> = (0..n)
        .map(|i| in_span[i] && beacon.visible_at(beacon.bit_center_us(i)))
        .collect();
    let truth_bits = counted.iter().filter(|&&c| c).count();
    let correct_bits = (0..n).filter(|&i| counted[i] && correct[i]).count();
    let emitted_frames = truth_bits / FRAME_BITS;

    let mut frames = BTreeSet::new();
    for (_, ev) in tracks {
        for &(t, payload) in &ev.frames {
            if payload as u32 != beacon.payload {
                continue;
            }
            if let Some(i) = beacon.bit_index_at(t) {
                if in_span[i] {
                    frames.insert(i / FRAME_BITS);
                }
            }
        }
    }
    let correct_frames = frames.len().min(emitted_frames);
    BeaconScore {
        beacon: id.to_string(),
        payload: beacon.payload,
        tracks: tracks.iter().map(|(id, _)| *id).collect(),
        emitted_frames,
        correct_frames,
        truth_bits,
        correct_bits,
        mar: mar(correct_frames, emitted_frames),
        bar: bar(correct_bits, truth_bits),
    }
}
