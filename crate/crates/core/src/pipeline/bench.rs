//! Wall-clock throughput of the decode path and of a full run.

use std::time::Instant;

use serde::Serialize;

use super::{run, BinVoter, PipelineConfig};
use crate::error::Result;
use crate::events::EventStream;
use crate::protocol::{frame_scan, BitBuffer};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub events: usize,
    pub decode_secs: f64,
    pub pipeline_secs: f64,
    pub decoded_frames: usize,
}

impl BenchReport {
    pub fn decode_rate(&self) -> f64 {
        rate(self.events, self.decode_secs)
    }

    pub fn pipeline_rate(&self) -> f64 {
        rate(self.events, self.pipeline_secs)
    }
}

fn rate(n: usize, secs: f64) -> f64 {
    if secs > 0.0 {
        n as f64 / secs
    } else {
        f64::INFINITY
    }
}

/// Decodes the whole stream as a single region, scanning for frames once per
/// tracking period. Returns the number of frames found.
pub fn decode_all(stream: &EventStream, cfg: &PipelineConfig) -> Result<usize> {
    let mut voter = BinVoter::new(cfg.f_beacon, &cfg.decode);
    let mut buffer = BitBuffer::new();
    let mut transitions = Vec::new();
    let mut frames = 0;
    let period = cfg.period_us();
    let mut next_scan = stream.events.first().map_or(0.0, |e| e.t_us as f64) + period;
    for e in &stream.events {
        voter.feed(e, &mut transitions);
        for tr in transitions.drain(..) {
            buffer.push_transition(tr, cfg.f_beacon)?;
        }
        if e.t_us as f64 >= next_scan {
            frames += frame_scan(&mut buffer).len();
            next_scan += period;
        }
    }
    voter.flush(&mut transitions);
    for tr in transitions.drain(..) {
        buffer.push_transition(tr, cfg.f_beacon)?;
    }
    frames += frame_scan(&mut buffer).len();
    Ok(frames)
}

/// Times [`decode_all`] and a full [`run`] over the same stream.
pub fn bench(stream: &EventStream, cfg: &PipelineConfig) -> Result<BenchReport> {
    cfg.validate()?;
    stream.validate()?;
    let start = Instant::now();
    let decoded_frames = decode_all(stream, cfg)?;
    let decode_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    run(stream, None, cfg)?;
    let pipeline_secs = start.elapsed().as_secs_f64();
    Ok(BenchReport {
        events: stream.len(),
        decode_secs,
        pipeline_secs,
        decoded_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{BeaconSpec, NoiseSpec, Scene, SensorConfig};

    #[test]
    fn single_region_decode_finds_frames() {
        let scene = Scene {
            sensor: SensorConfig::ideal(64, 64),
            duration_s: 0.2,
            beacons: vec![BeaconSpec::fixed(42, 1000.0, 3.0, 30.0, 30.0)],
            noise: NoiseSpec::default(),
        };
        let (stream, _) = scene.simulate(3).unwrap();
        let cfg = PipelineConfig::default();
        let frames = decode_all(&stream, &cfg).unwrap();
        // 200 ms of an 11 ms frame, minus the seeding edge and the tail
        assert!((15..=18).contains(&frames), "{frames}");
        let b = bench(&stream, &cfg).unwrap();
        assert_eq!(b.events, stream.len());
        assert!(b.decode_rate() > 0.0);
    }
}
