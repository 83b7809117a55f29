//! Dual-rate runtime: a per-track decode path that follows the beacon rate
//! and a tracking tick (cluster, flow, track) at the tracking rate, both
//! driven by stream time.

mod bench;
mod config;
mod decode;
pub mod metrics;

use std::collections::BTreeMap;
use std::sync::mpsc::sync_channel;
use std::thread;

use serde::{Deserialize, Serialize};

pub use bench::{bench, decode_all, BenchReport};
pub use config::{DecodeParams, PipelineConfig, RunMode};
pub use decode::BinVoter;
use metrics::{match_beacon, score_beacon, BeaconScore, BitRun, TrackEvidence};

use crate::cluster::{accumulate_window, detect_targets, Target};
use crate::error::Result;
use crate::events::{Event, EventStream, GroundTruth};
use crate::flow::{binarize, read_flow_at, DelayKernelBank, FlowField, FlowLayer};
use crate::protocol::{frame_scan, BitBuffer, RunOutcome, Transition};
use crate::tracker::{TrackStatus, Tracker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRecord {
    pub t_us: u64,
    pub status: TrackStatus,
    pub confidence: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    /// Tick at which the frame was scanned.
    pub t_us: u64,
    pub payload: u8,
    /// Center of the frame's first bit.
    pub bit_time_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackLog {
    pub id: u64,
    pub created_us: u64,
    pub ended_us: Option<u64>,
    pub beacon: Option<String>,
    pub final_status: TrackStatus,
    pub ever_valid: bool,
    pub payload: Option<u8>,
    pub appended_bits: usize,
    pub resets: usize,
    pub status_changes: Vec<StatusRecord>,
    /// `[t_us, x, y]` after every tick.
    pub positions: Vec<[f64; 3]>,
    pub decodes: Vec<DecodeRecord>,
    #[serde(skip)]
    pub runs: Vec<BitRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub events: usize,
    pub duration_us: u64,
    pub ticks: usize,
    /// Events per second of stream time.
    pub event_rate: f64,
    pub mar: Option<f64>,
    pub bar: Option<f64>,
    /// Tracks that reached Valid at any point.
    pub valid_tracks: usize,
    /// `(track id, payload)` of tracks Valid at the end.
    pub identifications: Vec<(u64, u8)>,
    pub beacons: Vec<BeaconScore>,
    pub tracks: Vec<TrackLog>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `metric,value` rows; absent metrics are left empty.
    pub fn metrics_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let mut s = String::from("metric,value\n");
        s += &format!("mar,{}\n", opt(self.mar));
        s += &format!("bar,{}\n", opt(self.bar));
        s += &format!("valid_tracks,{}\n", self.valid_tracks);
        s += &format!("tracks,{}\n", self.tracks.len());
        s += &format!("events,{}\n", self.events);
        s += &format!("event_rate,{:.1}\n", self.event_rate);
        for b in &self.beacons {
            s += &format!("mar_beacon_{},{}\n", b.beacon, opt(b.mar));
            s += &format!("bar_beacon_{},{}\n", b.beacon, opt(b.bar));
        }
        s
    }
}

/// Per-track state owned by the decode path.
struct DecodeState {
    voter: BinVoter,
    /// Center time of every bit currently in the track buffer.
    bit_times: Vec<f64>,
}

fn apply_transitions(
    transitions: &[Transition],
    f_beacon: f64,
    buffer: &mut BitBuffer,
    state: &mut DecodeState,
    log: &mut TrackLog,
) -> Result<()> {
    let period = 1e6 / f_beacon;
    for &tr in transitions {
        match buffer.push_transition(tr, f_beacon)? {
            RunOutcome::Appended {
                bit,
                count,
                start_us,
            } => {
                log.runs.push(BitRun {
                    start_us,
                    bit,
                    count,
                });
                log.appended_bits += count;
                state
                    .bit_times
                    .extend((0..count).map(|k| start_us + (k as f64 + 0.5) * period));
            }
            RunOutcome::Reset => {
                log.resets += 1;
                state.bit_times.clear();
            }
            RunOutcome::Seeded | RunOutcome::Jitter => {}
        }
    }
    Ok(())
}

/// Tick schedule in stream time.
struct Schedule {
    origin: u64,
    period: f64,
    ticks: usize,
}

impl Schedule {
    fn new(events: &[Event], period: f64) -> Self {
        match (events.first(), events.last()) {
            (Some(first), Some(last)) => {
                let origin = ((first.t_us as f64 / period).floor() * period) as u64;
                let ticks = ((last.t_us - origin + 1) as f64 / period).ceil() as usize;
                Schedule {
                    origin,
                    period,
                    ticks,
                }
            }
            _ => Schedule {
                origin: 0,
                period,
                ticks: 0,
            },
        }
    }

    /// End of tick `k` (1-based); tick 0 is the origin.
    fn time(&self, k: usize) -> u64 {
        self.origin + (k as f64 * self.period).round() as u64
    }
}

fn cluster_tick(events: &[Event], cfg: &PipelineConfig, sched: &Schedule, k: usize) -> Vec<Target> {
    let t = sched.time(k);
    let start = t.saturating_sub(cfg.cluster.window_us).max(sched.origin);
    detect_targets(accumulate_window(events, start, t - start), &cfg.cluster, t)
}

fn flow_tick(layer: &mut FlowLayer, events: &[Event], sched: &Schedule, k: usize) {
    let (a, b) = (sched.time(k - 1), sched.time(k));
    let steps = layer.params().steps_per_period as u64;
    for i in 0..steps {
        let s0 = a + (b - a) * i / steps;
        let s1 = a + (b - a) * (i + 1) / steps;
        layer.step(&binarize(accumulate_window(events, s0, s1 - s0)));
    }
}

/// Runs the whole pipeline over a stream.
pub fn run(
    stream: &EventStream,
    truth: Option<&GroundTruth>,
    cfg: &PipelineConfig,
) -> Result<RunReport> {
    cfg.validate()?;
    stream.validate()?;
    let events = &stream.events;
    let sched = Schedule::new(events, cfg.period_us());
    let layer = FlowLayer::new(cfg.flow.clone(), stream.width, stream.height)?;
    let bank = layer.bank().clone();
    let mut core = Core::new(cfg, &bank)?;

    match cfg.mode {
        RunMode::Deterministic => {
            let mut layer = layer;
            for k in 1..=sched.ticks {
                let targets = cluster_tick(events, cfg, &sched, k);
                flow_tick(&mut layer, events, &sched, k);
                core.tick(events, &sched, k, &targets, layer.field())?;
            }
        }
        RunMode::Concurrent => {
            let sched = &sched;
            thread::scope(|scope| -> Result<()> {
                let (target_tx, target_rx) = sync_channel::<Vec<Target>>(8);
                let (flow_tx, flow_rx) = sync_channel::<FlowField>(8);
                scope.spawn(move || {
                    for k in 1..=sched.ticks {
                        if target_tx.send(cluster_tick(events, cfg, sched, k)).is_err() {
                            break;
                        }
                    }
                });
                scope.spawn(move || {
                    let mut layer = layer;
                    for k in 1..=sched.ticks {
                        flow_tick(&mut layer, events, sched, k);
                        if flow_tx.send(layer.field().clone()).is_err() {
                            break;
                        }
                    }
                });
                for k in 1..=sched.ticks {
                    let targets = target_rx.recv().expect("cluster stage ended early");
                    let field = flow_rx.recv().expect("flow stage ended early");
                    core.tick(events, sched, k, &targets, &field)?;
                }
                Ok(())
            })?;
        }
    }
    core.finish(events, &sched, truth)
}

/// Decode path plus tracker, consuming one tick at a time.
struct Core<'a> {
    cfg: &'a PipelineConfig,
    bank: &'a DelayKernelBank,
    tracker: Tracker,
    decoders: BTreeMap<u64, DecodeState>,
    logs: BTreeMap<u64, TrackLog>,
    /// Index of the first event not yet seen by the decode path.
    cursor: usize,
    transitions: Vec<Transition>,
}

impl<'a> Core<'a> {
    fn new(cfg: &'a PipelineConfig, bank: &'a DelayKernelBank) -> Result<Self> {
        Ok(Core {
            cfg,
            bank,
            tracker: Tracker::new(cfg.tracker.clone())?,
            decoders: BTreeMap::new(),
            logs: BTreeMap::new(),
            cursor: 0,
            transitions: Vec::new(),
        })
    }

    /// Feeds the events of `[t_prev, t_end)` to the regions of the live
    /// tracks, extrapolated from their state at `t_prev`.
    fn decode_window(
        &mut self,
        events: &[Event],
        t_prev: u64,
        t_end: u64,
        period: f64,
    ) -> Result<()> {
        let end = self.cursor + events[self.cursor..].partition_point(|e| e.t_us < t_end);
        let window = &events[self.cursor..end];
        self.cursor = end;
        let roi = self.cfg.decode.roi_px;
        // track positions are window barycenters, half a window behind
        let lag = (self.cfg.cluster.window_us as f64).min(period) / 2.0;
        let f_beacon = self.cfg.f_beacon;
        let tracks: Vec<_> = self
            .tracker
            .tracks()
            .iter()
            .map(|t| (t.id, t.position(), t.velocity()))
            .collect();
        for (id, pos, vel) in tracks {
            let Some(state) = self.decoders.get_mut(&id) else {
                continue;
            };
            self.transitions.clear();
            for e in window {
                let dt = (e.t_us as f64 - t_prev as f64 + lag) / period;
                let (cx, cy) = (pos.0 + vel.0 * dt, pos.1 + vel.1 * dt);
                if (e.x as f64 - cx).abs() <= roi && (e.y as f64 - cy).abs() <= roi {
                    state.voter.feed(e, &mut self.transitions);
                }
            }
            state.voter.advance(t_end as f64, &mut self.transitions);
            let track = self.tracker.track_mut(id).expect("decoder without track");
            let log = self.logs.get_mut(&id).expect("decoder without log");
            apply_transitions(&self.transitions, f_beacon, &mut track.buffer, state, log)?;
        }
        Ok(())
    }

    fn tick(
        &mut self,
        events: &[Event],
        sched: &Schedule,
        k: usize,
        targets: &[Target],
        field: &FlowField,
    ) -> Result<()> {
        let (t_prev, t) = (sched.time(k - 1), sched.time(k));
        self.decode_window(events, t_prev, t, sched.period)?;

        let query = self.cfg.tracker.flow_query();
        let bank = self.bank;
        let steps = self.cfg.flow.steps_per_period;
        let out = self.tracker.tick(
            targets,
            |pos| read_flow_at(field, bank, pos, &query, steps),
            t,
        )?;

        for (id, frame) in &out.decodes {
            let state = &self.decoders[id];
            let log = self.logs.get_mut(id).expect("log for decoded track");
            log.decodes.push(DecodeRecord {
                t_us: t,
                payload: frame.payload,
                bit_time_us: state.bit_times.get(frame.bit_index).copied(),
            });
        }
        for c in &out.status_changes {
            let log = self.logs.get_mut(&c.track_id).expect("log for track");
            log.status_changes.push(StatusRecord {
                t_us: t,
                status: c.status,
                confidence: c.confidence,
            });
            log.final_status = c.status;
            log.ever_valid |= c.status == TrackStatus::Valid;
        }
        for id in &out.forgotten {
            self.decoders.remove(id);
            if let Some(log) = self.logs.get_mut(id) {
                log.ended_us = Some(t);
            }
        }
        for id in &out.spawned {
            self.decoders.insert(
                *id,
                DecodeState {
                    voter: BinVoter::new(self.cfg.f_beacon, &self.cfg.decode),
                    bit_times: Vec::new(),
                },
            );
            self.logs.insert(
                *id,
                TrackLog {
                    id: *id,
                    created_us: t,
                    ended_us: None,
                    beacon: None,
                    final_status: TrackStatus::New,
                    ever_valid: false,
                    payload: None,
                    appended_bits: 0,
                    resets: 0,
                    status_changes: Vec::new(),
                    positions: Vec::new(),
                    decodes: Vec::new(),
                    runs: Vec::new(),
                },
            );
        }
        for track in self.tracker.tracks() {
            let log = self.logs.get_mut(&track.id).expect("log for live track");
            let (x, y) = track.position();
            log.positions.push([t as f64, x, y]);
            log.payload = track.payload;
        }
        Ok(())
    }

    /// Drains the decode path and scores the run.
    fn finish(
        mut self,
        events: &[Event],
        sched: &Schedule,
        truth: Option<&GroundTruth>,
    ) -> Result<RunReport> {
        let end = sched.time(sched.ticks);
        self.decode_window(events, end, end, sched.period)?;
        let f_beacon = self.cfg.f_beacon;
        let ids: Vec<u64> = self.decoders.keys().copied().collect();
        for id in ids {
            let state = self.decoders.get_mut(&id).expect("decoder");
            let mut out = Vec::new();
            state.voter.flush(&mut out);
            let track = self.tracker.track_mut(id).expect("track");
            let log = self.logs.get_mut(&id).expect("log");
            apply_transitions(&out, f_beacon, &mut track.buffer, state, log)?;
            for frame in frame_scan(&mut track.buffer) {
                log.decodes.push(DecodeRecord {
                    t_us: end,
                    payload: frame.payload,
                    bit_time_us: state.bit_times.get(frame.bit_index).copied(),
                });
            }
        }

        let identifications: Vec<(u64, u8)> = self
            .tracker
            .tracks()
            .iter()
            .filter(|t| t.status == TrackStatus::Valid)
            .filter_map(|t| t.payload.map(|p| (t.id, p)))
            .collect();

        let mut beacons = Vec::new();
        if let Some(truth) = truth {
            for log in self.logs.values_mut() {
                let first = log.positions.first().map(|p| (p[1], p[2]));
                log.beacon = first.and_then(|pos| match_beacon(truth, pos, log.created_us as f64));
            }
            let period = 1e6 / f_beacon;
            for (id, beacon) in &truth.beacons {
                let evidence: Vec<(u64, TrackEvidence)> = self
                    .logs
                    .values()
                    .filter(|l| l.beacon.as_deref() == Some(id.as_str()))
                    .map(|l| {
                        (
                            l.id,
                            TrackEvidence {
                                runs: l.runs.clone(),
                                frames: l
                                    .decodes
                                    .iter()
                                    .filter_map(|d| Some((d.bit_time_us?, d.payload)))
                                    .collect(),
                            },
                        )
                    })
                    .collect();
                let refs: Vec<(u64, &TrackEvidence)> =
                    evidence.iter().map(|(i, e)| (*i, e)).collect();
                beacons.push(score_beacon(id, beacon, &refs, period));
            }
        }
        let emitted: usize = beacons.iter().map(|b| b.emitted_frames).sum();
        let correct: usize = beacons.iter().map(|b| b.correct_frames).sum();
        let truth_bits: usize = beacons.iter().map(|b| b.truth_bits).sum();
        let correct_bits: usize = beacons.iter().map(|b| b.correct_bits).sum();

        let duration_us = match (events.first(), events.last()) {
            (Some(a), Some(b)) => b.t_us - a.t_us,
            _ => 0,
        };
        let tracks: Vec<TrackLog> = self.logs.into_values().collect();
        Ok(RunReport {
            events: events.len(),
            duration_us,
            ticks: sched.ticks,
            event_rate: if events.is_empty() {
                0.0
            } else {
                events.len() as f64 / ((duration_us + 1) as f64 * 1e-6)
            },
            mar: metrics::mar(correct, emitted),
            bar: metrics::bar(correct_bits, truth_bits),
            valid_tracks: tracks.iter().filter(|t| t.ever_valid).count(),
            identifications,
            beacons,
            tracks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{BeaconSpec, NoiseSpec, Scene, SensorConfig};

    fn clean_scene(f: f64, duration: f64) -> Scene {
        Scene {
            sensor: SensorConfig::default(),
            duration_s: duration,
            beacons: vec![BeaconSpec::fixed(42, f, 3.0, 100.0, 100.0)],
            noise: NoiseSpec::default(),
        }
    }

    #[test]
    fn empty_stream_gives_empty_report() {
        let s = EventStream::new(64, 64, Vec::new());
        let r = run(&s, None, &PipelineConfig::default()).unwrap();
        assert_eq!((r.events, r.ticks, r.tracks.len()), (0, 0, 0));
        assert_eq!(r.mar, None);
    }

    #[test]
    fn unsorted_stream_is_rejected() {
        let s = EventStream::new(
            64,
            64,
            vec![Event::new(10, 0, 0, 1), Event::new(5, 0, 0, 1)],
        );
        assert!(run(&s, None, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn clean_static_beacon() {
        let (s, gt) = clean_scene(1000.0, 2.0).simulate(1).unwrap();
        let r = run(&s, Some(&gt), &PipelineConfig::default()).unwrap();
        assert_eq!(
            r.valid_tracks,
            1,
            "{:#?}",
            r.tracks
                .iter()
                .map(|t| (t.id, t.final_status))
                .collect::<Vec<_>>()
        );
        assert_eq!(
            r.identifications.iter().map(|x| x.1).collect::<Vec<_>>(),
            vec![42]
        );
        assert_eq!(r.mar, Some(100.0));
    }

    #[test]
    fn concurrent_mode_matches() {
        let (s, gt) = clean_scene(1000.0, 1.0).simulate(3).unwrap();
        let det = run(&s, Some(&gt), &PipelineConfig::default()).unwrap();
        let cfg = PipelineConfig {
            mode: RunMode::Concurrent,
            ..PipelineConfig::default()
        };
        let con = run(&s, Some(&gt), &cfg).unwrap();
        assert_eq!(det.to_json().unwrap(), con.to_json().unwrap());
    }
}
