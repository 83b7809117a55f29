//! Synthetic event camera.
//!
//! Beacons and distractors are lit discs. Every on/off toggle makes each
//! pixel of the disc fire with a fixed probability; a lit disc that moves by
//! at least one pixel fires its leading boundary (+1) and trailing boundary
//! (-1). Background activity is a uniform Poisson process. Timestamps are
//! jittered, sorted, then filtered by a per-pixel refractory period.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Event, EventStream};
use crate::error::{Error, Result};
use crate::protocol::{bits_to_string, encode_frame, FRAME_BITS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub width: u32,
    pub height: u32,
    pub timestamp_jitter_sigma_us: f64,
    pub refractory_period_us: f64,
    /// Probability that a pixel under a toggling source reports the change.
    pub event_probability: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            width: 640,
            height: 480,
            timestamp_jitter_sigma_us: 50.0,
            refractory_period_us: 300.0,
            event_probability: 0.9,
        }
    }
}

impl SensorConfig {
    /// An ideal sensor: no jitter, no refractory period, every pixel fires.
    pub fn ideal(width: u32, height: u32) -> Self {
        SensorConfig {
            width,
            height,
            timestamp_jitter_sigma_us: 0.0,
            refractory_period_us: 0.0,
            event_probability: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || self.width > u16::MAX as u32 + 1
            || self.height > u16::MAX as u32 + 1
        {
            return Err(Error::InvalidParam(format!(
                "sensor size {}x{} out of range",
                self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.event_probability) {
            return Err(Error::InvalidParam(format!(
                "event probability {} not in [0, 1]",
                self.event_probability
            )));
        }
        if self.timestamp_jitter_sigma_us < 0.0 || self.refractory_period_us < 0.0 {
            return Err(Error::InvalidParam(
                "jitter and refractory period must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Position of a source over time, in pixels; time in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Static {
        x: f64,
        y: f64,
    },
    /// Piecewise linear through `[t_s, x, y]` points; constant outside.
    Waypoints {
        points: Vec<[f64; 3]>,
    },
    /// Circular motion at `omega` rad/s starting at angle `phase`.
    Arc {
        cx: f64,
        cy: f64,
        radius: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Trajectory {
    pub fn position(&self, t_s: f64) -> (f64, f64) {
        match self {
            Trajectory::Static { x, y } => (*x, *y),
            Trajectory::Waypoints { points } => {
                let Some(first) = points.first() else {
                    return (0.0, 0.0);
                };
                if t_s <= first[0] {
                    return (first[1], first[2]);
                }
                for w in points.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    if t_s <= b[0] {
                        let span = b[0] - a[0];
                        let f = if span > 0.0 { (t_s - a[0]) / span } else { 1.0 };
                        return (a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2]));
                    }
                }
                let last = points[points.len() - 1];
                (last[1], last[2])
            }
            Trajectory::Arc {
                cx,
                cy,
                radius,
                omega,
                phase,
            } => {
                let a = phase + omega * t_s;
                (cx + radius * a.cos(), cy + radius * a.sin())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Trajectory::Waypoints { points } = self {
            if points.is_empty() {
                return Err(Error::InvalidParam(
                    "waypoint trajectory needs at least one point".into(),
                ));
            }
            if points.windows(2).any(|w| w[1][0] < w[0][0]) {
                return Err(Error::InvalidParam(
                    "waypoints must be sorted by time".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconSpec {
    pub payload: u32,
    pub f_beacon: f64,
    pub radius: f64,
    pub trajectory: Trajectory,
    /// `[start_s, end_s]` windows during which the beacon is hidden.
    #[serde(default)]
    pub occlusions: Vec<[f64; 2]>,
    /// Time at which the beacon starts emitting its first frame.
    #[serde(default)]
    pub phase_s: f64,
}

impl BeaconSpec {
    pub fn fixed(payload: u32, f_beacon: f64, radius: f64, x: f64, y: f64) -> Self {
        BeaconSpec {
            payload,
            f_beacon,
            radius,
            trajectory: Trajectory::Static { x, y },
            occlusions: Vec::new(),
            phase_s: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        encode_frame(self.payload)?;
        if !(self.f_beacon > 0.0) {
            return Err(Error::InvalidParam(format!(
                "beacon frequency {} must be > 0",
                self.f_beacon
            )));
        }
        if !(self.radius >= 1.0) {
            return Err(Error::InvalidParam(format!(
                "beacon radius {} must be >= 1",
                self.radius
            )));
        }
        if self.phase_s < 0.0 {
            return Err(Error::InvalidParam("phase offset must be >= 0".into()));
        }
        let mut occ = self.occlusions.clone();
        occ.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for w in &occ {
            if w[1] < w[0] {
                return Err(Error::InvalidParam(format!(
                    "occlusion window {w:?} is reversed"
                )));
            }
        }
        if occ.windows(2).any(|w| w[1][0] < w[0][1]) {
            return Err(Error::InvalidParam("occlusion windows overlap".into()));
        }
        self.trajectory.validate()
    }
}

/// A disc blinking at random (Poisson switching), used as structured noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub trajectory: Trajectory,
    pub radius: f64,
    pub switch_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Events per pixel per second.
    pub background_rate: f64,
    pub distractors: Vec<Distractor>,
}

/// Declarative scene description, as stored in scene JSON files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default)]
    pub sensor: SensorConfig,
    pub duration_s: f64,
    #[serde(default)]
    pub beacons: Vec<BeaconSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl Scene {
    pub fn simulate(&self, seed: u64) -> Result<(EventStream, GroundTruth)> {
        simulate(
            &self.beacons,
            &self.noise,
            &self.sensor,
            self.duration_s,
            seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconTruth {
    pub payload: u32,
    /// Emitted bits, starting at `start_us`, one per `bit_period_us`.
    pub bits: String,
    pub bit_period_us: f64,
    pub start_us: f64,
    pub radius: f64,
    /// `[t_us, x, y]` samples at a fixed cadence.
    pub positions: Vec<[f64; 3]>,
    /// Parallel to `positions`: not occluded and centred inside the sensor.
    pub visible: Vec<bool>,
    /// `[start_us, end_us]` windows.
    pub occlusions: Vec<[f64; 2]>,
}

impl BeaconTruth {
    pub fn bit(&self, index: usize) -> Option<bool> {
        self.bits.as_bytes().get(index).map(|&b| b == b'1')
    }

    pub fn bit_count(&self) -> usize {
        self.bits.len()
    }

    /// Index of the bit emitted at `t_us`, if any.
    pub fn bit_index_at(&self, t_us: f64) -> Option<usize> {
        if t_us < self.start_us {
            return None;
        }
        let k = ((t_us - self.start_us) / self.bit_period_us).floor() as usize;
        (k < self.bits.len()).then_some(k)
    }

    pub fn bit_center_us(&self, index: usize) -> f64 {
        self.start_us + (index as f64 + 0.5) * self.bit_period_us
    }

    pub fn is_occluded(&self, t_us: f64) -> bool {
        self.occlusions.iter().any(|w| t_us >= w[0] && t_us <= w[1])
    }

    /// Linearly interpolated position at `t_us`.
    pub fn position_at(&self, t_us: f64) -> Option<(f64, f64)> {
        let first = self.positions.first()?;
        if t_us <= first[0] {
            return Some((first[1], first[2]));
        }
        let i = self.positions.partition_point(|p| p[0] < t_us);
        if i >= self.positions.len() {
            let last = self.positions[self.positions.len() - 1];
            return Some((last[1], last[2]));
        }
        let (a, b) = (self.positions[i - 1], self.positions[i]);
        let f = if b[0] > a[0] {
            (t_us - a[0]) / (b[0] - a[0])
        } else {
            1.0
        };
        Some((a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2])))
    }

    /// Whether the beacon can be seen at `t_us`.
    pub fn visible_at(&self, t_us: f64) -> bool {
        if self.positions.is_empty() || self.is_occluded(t_us) {
            return false;
        }
        let i = self
            .positions
            .partition_point(|p| p[0] <= t_us)
            .saturating_sub(1);
        self.visible[i]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub duration_us: f64,
    /// Keyed by beacon index in the scene, as a decimal string.
    pub beacons: BTreeMap<String, BeaconTruth>,
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

const POSITION_CADENCE_US: f64 = 10_000.0;
const MOTION_STEP_MAX_S: f64 = 1e-3;

/// Raw event before jitter, sorting and the refractory filter.
struct RawEvent {
    t_us: f64,
    x: u16,
    y: u16,
    p: i8,
}

/// Shared emission model for beacons and distractors.
struct Emitter<'a> {
    trajectory: &'a Trajectory,
    radius: f64,
    occlusions: &'a [[f64; 2]],
    /// Toggle times in seconds and the state after each toggle.
    toggles: Vec<(f64, bool)>,
    initial_on: bool,
}

impl Emitter<'_> {
    fn occluded(&self, t_s: f64) -> bool {
        self.occlusions.iter().any(|w| t_s >= w[0] && t_s <= w[1])
    }

    fn lit_at(&self, t_s: f64) -> bool {
        let i = self.toggles.partition_point(|&(t, _)| t <= t_s);
        if i == 0 {
            self.initial_on
        } else {
            self.toggles[i - 1].1
        }
    }
}

fn disc_pixels(cx: f64, cy: f64, r: f64, sensor: &SensorConfig) -> Vec<(u16, u16)> {
    let mut out = Vec::new();
    let x0 = (cx - r).ceil().max(0.0) as i64;
    let x1 = (cx + r).floor().min(sensor.width as f64 - 1.0) as i64;
    let y0 = (cy - r).ceil().max(0.0) as i64;
    let y1 = (cy + r).floor().min(sensor.height as f64 - 1.0) as i64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= r * r {
                out.push((x as u16, y as u16));
            }
        }
    }
    out
}

fn in_disc(x: u16, y: u16, c: (f64, f64), r: f64) -> bool {
    let (dx, dy) = (x as f64 - c.0, y as f64 - c.1);
    dx * dx + dy * dy <= r * r
}

fn emit_source(
    em: &Emitter<'_>,
    sensor: &SensorConfig,
    duration_s: f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<RawEvent>,
) {
    let prob = sensor.event_probability;
    let fire = |t_s: f64, x: u16, y: u16, p: i8, rng: &mut ChaCha8Rng, out: &mut Vec<RawEvent>| {
        if prob >= 1.0 || rng.gen::<f64>() < prob {
            out.push(RawEvent {
                t_us: t_s * 1e6,
                x,
                y,
                p,
            });
        }
    };

    for &(t, on) in &em.toggles {
        if t >= duration_s || em.occluded(t) {
            continue;
        }
        let (cx, cy) = em.trajectory.position(t);
        let p = if on { 1 } else { -1 };
        for (x, y) in disc_pixels(cx, cy, em.radius, sensor) {
            fire(t, x, y, p, rng, out);
        }
    }

    if matches!(em.trajectory, Trajectory::Static { .. }) {
        return;
    }
    // Boundary events of a moving lit disc.
    let mut step = MOTION_STEP_MAX_S;
    if let Some(min_gap) = em
        .toggles
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .reduce(f64::min)
    {
        step = step.min(min_gap.max(1e-5));
    }
    let mut last: Option<(f64, f64)> = None;
    let mut next_toggle = 0usize;
    let mut t = 0.0;
    while t < duration_s {
        while next_toggle < em.toggles.len() && em.toggles[next_toggle].0 <= t {
            // a toggle re-images the whole disc
            last = None;
            next_toggle += 1;
        }
        if !em.lit_at(t) || em.occluded(t) {
            last = None;
        } else {
            let pos = em.trajectory.position(t);
            match last {
                None => last = Some(pos),
                Some(prev) => {
                    let moved = ((pos.0 - prev.0).powi(2) + (pos.1 - prev.1).powi(2)).sqrt();
                    if moved >= 1.0 {
                        for (x, y) in disc_pixels(pos.0, pos.1, em.radius, sensor) {
                            if !in_disc(x, y, prev, em.radius) {
                                fire(t, x, y, 1, rng, out);
                            }
                        }
                        for (x, y) in disc_pixels(prev.0, prev.1, em.radius, sensor) {
                            if !in_disc(x, y, pos, em.radius) {
                                fire(t, x, y, -1, rng, out);
                            }
                        }
                        last = Some(pos);
                    }
                }
            }
        }
        t += step;
    }
}

fn beacon_toggles(b: &BeaconSpec, duration_s: f64) -> (Vec<(f64, bool)>, Vec<bool>) {
    let frame = encode_frame(b.payload).expect("validated payload");
    let period = 1.0 / b.f_beacon;
    let mut bits = Vec::new();
    let mut toggles = Vec::new();
    let mut prev = false;
    let mut k = 0usize;
    loop {
        let t = b.phase_s + k as f64 * period;
        if t >= duration_s {
            break;
        }
        let bit = frame[k % FRAME_BITS];
        if bit != prev {
            toggles.push((t, bit));
            prev = bit;
        }
        bits.push(bit);
        k += 1;
    }
    (toggles, bits)
}

fn distractor_toggles(
    d: &Distractor,
    duration_s: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<(f64, bool)>, bool) {
    let initial = rng.gen::<bool>();
    let mut toggles = Vec::new();
    if d.switch_rate_hz > 0.0 {
        let exp = Exp::new(d.switch_rate_hz).expect("positive rate");
        let mut t = 0.0;
        let mut state = initial;
        loop {
            t += exp.sample(rng);
            if t >= duration_s {
                break;
            }
            state = !state;
            toggles.push((t, state));
        }
    }
    (toggles, initial)
}

fn truth_for(b: &BeaconSpec, bits: &[bool], sensor: &SensorConfig, duration_s: f64) -> BeaconTruth {
    let duration_us = duration_s * 1e6;
    let mut positions = Vec::new();
    let mut visible = Vec::new();
    let mut t = 0.0;
    loop {
        let (x, y) = b.trajectory.position(t * 1e-6);
        let inside = x >= 0.0 && y >= 0.0 && x < sensor.width as f64 && y < sensor.height as f64;
        let occluded = b
            .occlusions
            .iter()
            .any(|w| t >= w[0] * 1e6 && t <= w[1] * 1e6);
        positions.push([t, x, y]);
        visible.push(inside && !occluded);
        if t >= duration_us {
            break;
        }
        t = (t + POSITION_CADENCE_US).min(duration_us);
    }
    BeaconTruth {
        payload: b.payload,
        bits: bits_to_string(bits),
        bit_period_us: 1e6 / b.f_beacon,
        start_us: b.phase_s * 1e6,
        radius: b.radius,
        positions,
        visible,
        occlusions: b
            .occlusions
            .iter()
            .map(|w| [w[0] * 1e6, w[1] * 1e6])
            .collect(),
    }
}

/// Renders beacons and noise into an event stream plus ground truth.
/// Deterministic for a given seed.
pub fn simulate(
    beacons: &[BeaconSpec],
    noise: &NoiseSpec,
    sensor: &SensorConfig,
    duration_s: f64,
    seed: u64,
) -> Result<(EventStream, GroundTruth)> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidParam(format!(
            "duration {duration_s} must be > 0"
        )));
    }
    sensor.validate()?;
    for b in beacons {
        b.validate()?;
    }
    if noise.background_rate < 0.0
        || noise
            .distractors
            .iter()
            .any(|d| d.switch_rate_hz < 0.0 || d.radius < 0.0)
    {
        return Err(Error::InvalidParam("noise rates must be >= 0".into()));
    }
    for d in &noise.distractors {
        d.trajectory.validate()?;
    }

    let mut raw = Vec::new();
    let mut truth = GroundTruth {
        duration_us: duration_s * 1e6,
        beacons: BTreeMap::new(),
    };
    // One independent random stream per source keeps sources decoupled.
    let rng_for = |stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    };

    for (i, b) in beacons.iter().enumerate() {
        let (toggles, bits) = beacon_toggles(b, duration_s);
        let em = Emitter {
            trajectory: &b.trajectory,
            radius: b.radius,
            occlusions: &b.occlusions,
            toggles,
            initial_on: false,
        };
        emit_source(
            &em,
            sensor,
            duration_s,
            &mut rng_for(1 + i as u64),
            &mut raw,
        );
        truth
            .beacons
            .insert(i.to_string(), truth_for(b, &bits, sensor, duration_s));
    }

    for (i, d) in noise.distractors.iter().enumerate() {
        let mut rng = rng_for(1_000_000 + i as u64);
        let (toggles, initial_on) = distractor_toggles(d, duration_s, &mut rng);
        let em = Emitter {
            trajectory: &d.trajectory,
            radius: d.radius,
            occlusions: &[],
            toggles,
            initial_on,
        };
        emit_source(&em, sensor, duration_s, &mut rng, &mut raw);
    }

    let mut rng = rng_for(0);
    if sensor.timestamp_jitter_sigma_us > 0.0 {
        let normal = Normal::new(0.0, sensor.timestamp_jitter_sigma_us).expect("finite sigma");
        for e in &mut raw {
            e.t_us += normal.sample(&mut rng);
        }
    }

    if noise.background_rate > 0.0 {
        let mean = noise.background_rate * sensor.width as f64 * sensor.height as f64 * duration_s;
        let n = Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize;
        raw.reserve(n);
        for _ in 0..n {
            raw.push(RawEvent {
                t_us: rng.gen::<f64>() * duration_s * 1e6,
                x: rng.gen_range(0..sensor.width) as u16,
                y: rng.gen_range(0..sensor.height) as u16,
                p: if rng.gen::<bool>() { 1 } else { -1 },
            });
        }
    }

    let mut events: Vec<Event> = raw
        .into_iter()
        .map(|e| Event {
            t_us: e.t_us.round().max(0.0) as u64,
            x: e.x,
            y: e.y,
            p: e.p,
        })
        .collect();
    events.sort_unstable();

    if sensor.refractory_period_us > 0.0 {
        let refractory = sensor.refractory_period_us;
        let mut last = vec![None::<u64>; sensor.width as usize * sensor.height as usize];
        events.retain(|e| {
            let slot = &mut last[e.y as usize * sensor.width as usize + e.x as usize];
            match *slot {
                Some(prev) if ((e.t_us - prev) as f64) < refractory => false,
                _ => {
                    *slot = Some(e.t_us);
                    true
                }
            }
        });
    }

    Ok((EventStream::new(sensor.width, sensor.height, events), truth))
}
