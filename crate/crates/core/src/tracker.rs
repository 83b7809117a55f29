//! Multi-beacon tracking: constant-velocity Kalman filter optionally driven by
//! optical flow, L1 association inside motion-aligned search windows, and the
//! confidence lifecycle that validates tracks from decoded frames.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::cluster::Target;
use crate::error::{Error, Result};
use crate::flow::{FlowQuery, FlowReading};
use crate::protocol::{frame_scan, BitBuffer, RunOutcome, ScannedFrame, Transition};

/// How a flow reading enters the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    /// Flow velocity overrides the Kalman velocity.
    Replace,
    /// Flow and Kalman velocities are averaged.
    Blend,
    Off,
}

impl FromStr for FlowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replace" => Ok(FlowMode::Replace),
            "blend" => Ok(FlowMode::Blend),
            "off" => Ok(FlowMode::Off),
            other => Err(Error::InvalidParam(format!("unknown flow mode {other:?}"))),
        }
    }
}

impl fmt::Display for FlowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowMode::Replace => "replace",
            FlowMode::Blend => "blend",
            FlowMode::Off => "off",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    New,
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    pub confidence_min: i32,
    pub confidence_max: i32,
    pub confidence_init: i32,
    pub valid_increment: i32,
    pub miss_decrement: i32,
    /// Forget a track this long after its last transition.
    pub delay_max_us: u64,
    /// Search window base size in pixels.
    pub window_px: f64,
    /// Acceleration noise, px per period squared.
    pub sigma_a: f64,
    /// Measurement noise, px.
    pub sigma_m: f64,
    pub flow_mode: FlowMode,
    /// Radius around a track searched for flow entries.
    pub flow_radius_px: f64,
    /// Oldest flow entry used, in flow steps.
    pub flow_max_age: u64,
    /// Weakest flow entry used.
    pub flow_min_strength: f64,
    /// Flow entries that must agree on a direction.
    pub flow_min_support: usize,
    /// Exponential smoothing factor for the track size.
    pub size_alpha: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams {
            confidence_min: 0,
            confidence_max: 20,
            confidence_init: 10,
            valid_increment: 2,
            miss_decrement: 1,
            delay_max_us: 500_000,
            window_px: 10.0,
            sigma_a: 1.0,
            sigma_m: 1.0,
            flow_mode: FlowMode::Replace,
            flow_radius_px: 6.0,
            flow_max_age: 10,
            flow_min_strength: 22.5,
            flow_min_support: 3,
            size_alpha: 0.5,
        }
    }
}

impl TrackerParams {
    pub fn flow_query(&self) -> FlowQuery {
        FlowQuery {
            radius: self.flow_radius_px,
            max_age: self.flow_max_age,
            min_strength: self.flow_min_strength as f32,
            min_support: self.flow_min_support,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_min <= self.confidence_init
            && self.confidence_init <= self.confidence_max)
        {
            return Err(Error::InvalidParam(format!(
                "need confidence min ({}) <= init ({}) <= max ({})",
                self.confidence_min, self.confidence_init, self.confidence_max
            )));
        }
        if self.valid_increment < 0 || self.miss_decrement < 0 {
            return Err(Error::InvalidParam(
                "confidence steps must be non-negative".into(),
            ));
        }
        for (name, v) in [
            ("window_px", self.window_px),
            ("sigma_a", self.sigma_a),
            ("sigma_m", self.sigma_m),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParam(format!("{name} {v} must be > 0")));
            }
        }
        if !(self.flow_radius_px >= 0.0) {
            return Err(Error::InvalidParam("flow_radius_px must be >= 0".into()));
        }
        if !(self.size_alpha > 0.0 && self.size_alpha <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "size_alpha {} must lie in (0, 1]",
                self.size_alpha
            )));
        }
        Ok(())
    }
}

/// Constant-velocity filter over `[x, y, vx, vy]`, one tracking period per
/// step.
#[derive(Debug, Clone, PartialEq)]
pub struct Kalman {
    pub state: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl Kalman {
    pub fn new(x: f64, y: f64, pos_var: f64, vel_var: f64) -> Self {
        Kalman {
            state: Vector4::new(x, y, 0.0, 0.0),
            cov: Matrix4::from_diagonal(&Vector4::new(pos_var, pos_var, vel_var, vel_var)),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.state[2], self.state[3])
    }

    pub fn set_velocity(&mut self, vx: f64, vy: f64) {
        self.state[2] = vx;
        self.state[3] = vy;
    }

    fn transition() -> Matrix4<f64> {
        Matrix4::new(
            1.0, 0.0, 1.0, 0.0, //
            0.0, 1.0, 0.0, 1.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        )
    }

    /// Discrete white-noise acceleration model.
    fn process_noise(sigma_a: f64) -> Matrix4<f64> {
        let q = sigma_a * sigma_a;
        Matrix4::new(
            0.25, 0.0, 0.5, 0.0, //
            0.0, 0.25, 0.0, 0.5, //
            0.5, 0.0, 1.0, 0.0, //
            0.0, 0.5, 0.0, 1.0,
        ) * q
    }

    pub fn predict(&mut self, sigma_a: f64) {
        let f = Self::transition();
        self.state = f * self.state;
        self.cov = f * self.cov * f.transpose() + Self::process_noise(sigma_a);
    }

    pub fn update(&mut self, z: (f64, f64), sigma_m: f64) {
        let h = Matrix2x4::new(
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0,
        );
        let r = Matrix2::identity() * (sigma_m * sigma_m);
        let innovation = Vector2::new(z.0, z.1) - h * self.state;
        let s = h * self.cov * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            return;
        };
        let k = self.cov * h.transpose() * s_inv;
        self.state += k * innovation;
        self.cov = (Matrix4::identity() - k * h) * self.cov;
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub kalman: Kalman,
    pub size: f64,
    pub buffer: BitBuffer,
    pub confidence: i32,
    pub status: TrackStatus,
    pub payload: Option<u8>,
    pub last_seen_us: u64,
    pub created_us: u64,
}

impl Track {
    pub fn position(&self) -> (f64, f64) {
        self.kalman.position()
    }

    pub fn velocity(&self) -> (f64, f64) {
        self.kalman.velocity()
    }

    /// Time of the last transition, or of creation if none was seen.
    pub fn last_transition_us(&self) -> f64 {
        self.buffer
            .last_transition_us()
            .unwrap_or(self.created_us as f64)
    }
}

/// Kalman predict over one period. A flow reading, when present and enabled,
/// sets the velocity first.
pub fn predict(track: &mut Track, flow: Option<&FlowReading>, params: &TrackerParams) {
    if let Some(f) = flow {
        let (vx, vy) = track.velocity();
        match params.flow_mode {
            FlowMode::Replace => track.kalman.set_velocity(f.vx, f.vy),
            FlowMode::Blend => track
                .kalman
                .set_velocity(0.5 * (vx + f.vx), 0.5 * (vy + f.vy)),
            FlowMode::Off => {}
        }
    }
    track.kalman.predict(params.sigma_a);
}

/// Whether `point` lies in the search window of a track predicted at
/// `center` moving with `velocity` (px per period).
pub fn in_search_window(
    center: (f64, f64),
    velocity: (f64, f64),
    point: (f64, f64),
    base: f64,
) -> bool {
    let (dx, dy) = (point.0 - center.0, point.1 - center.1);
    let speed = velocity.0.hypot(velocity.1);
    let (ux, uy) = if speed > 1e-9 {
        (velocity.0 / speed, velocity.1 / speed)
    } else {
        (1.0, 0.0)
    };
    let along = dx * ux + dy * uy;
    let across = -dx * uy + dy * ux;
    along.abs() <= (base + speed) / 2.0 && across.abs() <= base / 2.0
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// `(track index, target index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_targets: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
}

/// Greedy L1 assignment among in-window candidates. Ties go to the lower
/// track id, then the lower target index.
pub fn associate(tracks: &[Track], targets: &[Target], params: &TrackerParams) -> Association {
    let mut candidates = Vec::new();
    for (i, tr) in tracks.iter().enumerate() {
        let c = tr.position();
        let v = tr.velocity();
        for (j, tg) in targets.iter().enumerate() {
            if in_search_window(c, v, (tg.x, tg.y), params.window_px) {
                let l1 = (tg.x - c.0).abs() + (tg.y - c.1).abs();
                candidates.push((l1, tr.id, j, i));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; tracks.len()];
    let mut target_used = vec![false; targets.len()];
    let mut pairs = Vec::new();
    for (_, _, j, i) in candidates {
        if !track_used[i] && !target_used[j] {
            track_used[i] = true;
            target_used[j] = true;
            pairs.push((i, j));
        }
    }
    Association {
        pairs,
        unmatched_targets: (0..targets.len()).filter(|&j| !target_used[j]).collect(),
        unmatched_tracks: (0..tracks.len()).filter(|&i| !track_used[i]).collect(),
    }
}

/// Transition implied by a target's mean polarity, if any.
pub fn polarity_transition(target: &Target) -> Option<Transition> {
    let t = target.window_end_us as f64;
    if target.polarity >= 0.5 {
        Some(Transition::on(t))
    } else if target.polarity <= -0.5 {
        Some(Transition::off(t))
    } else {
        None
    }
}

/// Measurement update and, when `f_beacon` is given, the polarity-driven
/// sequence update.
pub fn update_track(
    track: &mut Track,
    target: &Target,
    t_now: u64,
    f_beacon: Option<f64>,
    params: &TrackerParams,
) -> Result<Option<RunOutcome>> {
    track.kalman.update((target.x, target.y), params.sigma_m);
    track.size = params.size_alpha * target.size as f64 + (1.0 - params.size_alpha) * track.size;
    track.last_seen_us = t_now;
    let mut outcome = None;
    if let (Some(f), Some(tr)) = (f_beacon, polarity_transition(target)) {
        if track
            .buffer
            .last_transition_us()
            .is_none_or(|last| tr.time_us >= last)
        {
            outcome = Some(track.buffer.push_transition(tr, f)?);
        }
    }
    Ok(outcome)
}

/// Whether this tick's frames count as a valid sequence: one payload must
/// hold a strict majority of them and agree with the recorded one, if any.
pub fn tick_payload(frames: &[ScannedFrame], recorded: Option<u8>) -> Option<u8> {
    let mut counts = [0usize; 64];
    for f in frames {
        counts[f.payload as usize & 63] += 1;
    }
    let (payload, n) = counts
        .iter()
        .enumerate()
        .max_by_key(|&(p, &c)| (c, std::cmp::Reverse(p)))?;
    if 2 * n <= frames.len() {
        return None;
    }
    let payload = payload as u8;
    match recorded {
        Some(r) if r != payload => None,
        _ => Some(payload),
    }
}

/// Confidence update for one tick. Returns whether the track is forgotten.
pub fn classify_track(
    track: &mut Track,
    frames: &[ScannedFrame],
    t_now: u64,
    params: &TrackerParams,
) -> bool {
    match tick_payload(frames, track.payload) {
        Some(p) => {
            track.confidence += params.valid_increment;
            track.payload.get_or_insert(p);
        }
        None => track.confidence -= params.miss_decrement,
    }
    track.confidence = track
        .confidence
        .clamp(params.confidence_min, params.confidence_max);
    if track.confidence >= params.confidence_max {
        track.status = TrackStatus::Valid;
    } else if track.confidence <= 0 {
        track.status = TrackStatus::Invalid;
    }
    let stale = t_now as f64 - track.last_transition_us() > params.delay_max_us as f64;
    track.confidence <= params.confidence_min || stale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusChange {
    pub track_id: u64,
    pub status: TrackStatus,
    pub confidence: i32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutput {
    /// `(track id, payload)` of Valid tracks after the tick.
    pub identifications: Vec<(u64, u8)>,
    pub decodes: Vec<(u64, ScannedFrame)>,
    pub spawned: Vec<u64>,
    pub forgotten: Vec<u64>,
    pub status_changes: Vec<StatusChange>,
}

/// Track registry and tick logic.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    tracks: Vec<Track>,
    next_id: u64,
    /// Beacon rate used for sequence updates from target polarity; `None`
    /// when transitions are fed by another path.
    target_decoding: Option<f64>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Result<Self> {
        params.validate()?;
        Ok(Tracker {
            params,
            tracks: Vec::new(),
            next_id: 0,
            target_decoding: None,
        })
    }

    /// Enables sequence updates from target polarity at the given rate.
    pub fn with_target_decoding(mut self, f_beacon: f64) -> Result<Self> {
        if !(f_beacon > 0.0) {
            return Err(Error::InvalidParam(format!(
                "f_beacon {f_beacon} must be > 0"
            )));
        }
        self.target_decoding = Some(f_beacon);
        Ok(self)
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    /// Live tracks, ordered by id.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track_mut(&mut self, id: u64) -> Option<&mut Track> {
        let i = self.tracks.binary_search_by_key(&id, |t| t.id).ok()?;
        Some(&mut self.tracks[i])
    }

    fn spawn(&mut self, target: &Target, t_now: u64) -> Result<u64> {
        let id = self.next_id;
        self.next_id += 1;
        let var = self.params.sigma_m * self.params.sigma_m;
        let vel_var = self.params.window_px * self.params.window_px;
        let mut track = Track {
            id,
            kalman: Kalman::new(target.x, target.y, var, vel_var),
            size: target.size as f64,
            buffer: BitBuffer::new(),
            confidence: self.params.confidence_init,
            status: TrackStatus::New,
            payload: None,
            last_seen_us: t_now,
            created_us: t_now,
        };
        if let (Some(f), Some(tr)) = (self.target_decoding, polarity_transition(target)) {
            track.buffer.push_transition(tr, f)?;
        }
        self.tracks.push(track);
        Ok(id)
    }

    /// One tracking tick. `flow` returns the flow reading for a position.
    pub fn tick<F>(&mut self, targets: &[Target], mut flow: F, t_now: u64) -> Result<TickOutput>
    where
        F: FnMut((f64, f64)) -> Option<FlowReading>,
    {
        let mut out = TickOutput::default();
        let params = self.params.clone();
        for track in &mut self.tracks {
            let reading = match params.flow_mode {
                FlowMode::Off => None,
                _ => flow(track.position()),
            };
            predict(track, reading.as_ref(), &params);
        }
        let assoc = associate(&self.tracks, targets, &params);
        for &(i, j) in &assoc.pairs {
            update_track(
                &mut self.tracks[i],
                &targets[j],
                t_now,
                self.target_decoding,
                &params,
            )?;
        }
        let mut forgotten = Vec::new();
        for track in &mut self.tracks {
            let frames = frame_scan(&mut track.buffer);
            out.decodes.extend(frames.iter().map(|f| (track.id, *f)));
            let before = track.status;
            let forget = classify_track(track, &frames, t_now, &params);
            if track.status != before {
                out.status_changes.push(StatusChange {
                    track_id: track.id,
                    status: track.status,
                    confidence: track.confidence,
                });
            }
            if forget {
                forgotten.push(track.id);
            }
        }
        self.tracks.retain(|t| !forgotten.contains(&t.id));
        out.forgotten = forgotten;
        for &j in &assoc.unmatched_targets {
            out.spawned.push(self.spawn(&targets[j], t_now)?);
        }
        out.identifications = self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Valid)
            .filter_map(|t| t.payload.map(|p| (t.id, p)))
            .collect();
        Ok(out)
    }
}
