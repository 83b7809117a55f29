//! Sparse optical flow from a convolutional layer of spiking units with
//! per-synapse delays.
//!
//! Every pixel hosts `n_dirs * n_speeds` units. A unit sees the `k x k`
//! neighborhood of its pixel through a delay kernel whose values grow along
//! its preferred direction, so an edge moving in that direction at the
//! matching speed delivers all of its spikes in the same step. Unit dynamics:
//!
//! ```text
//! s_t = W * d(x_t) + l * s_{t-1} * (1 - y_{t-1})
//! y_t = step(s_t - v_th)
//! ```
//!
//! The layer is event driven: a binarized input pixel schedules its
//! contributions into a ring of future steps, and only units with pending
//! input or residual state are updated.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Event;

/// Residual state below this counts as rest in diagnostics.
const RESIDUAL: f32 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnuParams {
    pub v_th: f64,
    /// Per-step decay factor `l(tau)`.
    pub decay: f64,
    pub weight: f64,
}

impl Default for SnuParams {
    fn default() -> Self {
        SnuParams {
            v_th: 5.0,
            decay: 0.8,
            weight: 1.0,
        }
    }
}

impl SnuParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_th > 0.0) {
            return Err(Error::InvalidParam(format!(
                "v_th {} must be > 0",
                self.v_th
            )));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(Error::InvalidParam(format!(
                "decay {} must lie in [0, 1)",
                self.decay
            )));
        }
        Ok(())
    }
}

/// One update of a single unit. `input` is the weighted sum of the spikes
/// delivered this step. Returns the new state and output.
pub fn snu_step(state: f64, prev_output: bool, input: f64, params: &SnuParams) -> (f64, bool) {
    let carried = if prev_output {
        0.0
    } else {
        params.decay * state
    };
    let s = input + carried;
    (s, s - params.v_th >= 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub snu: SnuParams,
    pub n_dirs: usize,
    pub n_speeds: usize,
    /// Kernel side length (odd).
    pub kernel: usize,
    pub max_delay: usize,
    /// Layer steps per tracking period.
    pub steps_per_period: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            snu: SnuParams::default(),
            n_dirs: 8,
            n_speeds: 4,
            kernel: 5,
            max_delay: 10,
            steps_per_period: 10,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        self.snu.validate()?;
        if self.n_dirs == 0 || !self.n_dirs.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "n_dirs {} must be even and > 0",
                self.n_dirs
            )));
        }
        if self.steps_per_period == 0 {
            return Err(Error::InvalidParam("steps_per_period must be > 0".into()));
        }
        DelayKernelBank::build(self.n_dirs, self.n_speeds, self.kernel, self.max_delay).map(|_| ())
    }
}

/// Integer synaptic delays, indexed `[direction][speed][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayKernelBank {
    n_dirs: usize,
    n_speeds: usize,
    k: usize,
    max_delay: usize,
    delays: Vec<u8>,
    /// Largest |projection| of a kernel offset onto each direction.
    max_proj: Vec<f64>,
}

impl DelayKernelBank {
    pub fn build(n_dirs: usize, n_speeds: usize, k: usize, max_delay: usize) -> Result<Self> {
        if k < 3 || k.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "kernel size {k} must be odd and >= 3"
            )));
        }
        if n_dirs == 0 || n_speeds == 0 {
            return Err(Error::InvalidParam(
                "need at least one direction and one speed".into(),
            ));
        }
        if max_delay < n_speeds || max_delay > u8::MAX as usize {
            return Err(Error::InvalidParam(format!(
                "max_delay {max_delay} must lie in [n_speeds, 255]"
            )));
        }
        let half = (k as f64 - 1.0) / 2.0;
        let mut delays = Vec::with_capacity(n_dirs * n_speeds * k * k);
        let mut max_proj = Vec::with_capacity(n_dirs);
        for d in 0..n_dirs {
            let (ux, uy) = Self::unit_vector(d, n_dirs);
            let proj = |kx: usize, ky: usize| (kx as f64 - half) * ux + (ky as f64 - half) * uy;
            let m = (0..k)
                .flat_map(|ky| (0..k).map(move |kx| (kx, ky)))
                .map(|(kx, ky)| proj(kx, ky).abs())
                .fold(0.0, f64::max);
            max_proj.push(m);
            for s in 0..n_speeds {
                let scale = max_delay as f64 * (s + 1) as f64 / n_speeds as f64;
                for ky in 0..k {
                    for kx in 0..k {
                        // snapped so that opposite directions see bitwise
                        // identical projections
                        let p = (proj(kx, ky) * half / m * 1e9).round() / 1e9;
                        let raw = (scale * (p + half) / (k as f64 - 1.0)).round();
                        delays.push(raw.clamp(0.0, max_delay as f64) as u8);
                    }
                }
            }
        }
        Ok(DelayKernelBank {
            n_dirs,
            n_speeds,
            k,
            max_delay,
            delays,
            max_proj,
        })
    }

    /// Unit vector of direction `d` in pixel coordinates (x right, y down).
    pub fn unit_vector(d: usize, n_dirs: usize) -> (f64, f64) {
        let a = 2.0 * PI * d as f64 / n_dirs as f64;
        let (s, c) = a.sin_cos();
        // snap the exact zeros so axis directions are exactly axis aligned
        (
            if c.abs() < 1e-12 { 0.0 } else { c },
            if s.abs() < 1e-12 { 0.0 } else { s },
        )
    }

    pub fn n_dirs(&self) -> usize {
        self.n_dirs
    }

    pub fn n_speeds(&self) -> usize {
        self.n_speeds
    }

    pub fn n_units(&self) -> usize {
        self.n_dirs * self.n_speeds
    }

    pub fn kernel(&self) -> usize {
        self.k
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    pub fn delay(&self, direction: usize, speed: usize, ky: usize, kx: usize) -> u8 {
        let k = self.k;
        self.delays[((direction * self.n_speeds + speed) * k + ky) * k + kx]
    }

    /// Edge speed, in pixels per layer step, that this unit is tuned to.
    pub fn matched_speed(&self, direction: usize, speed: usize) -> f64 {
        let half = (self.k as f64 - 1.0) / 2.0;
        let per_proj = self.max_delay as f64 * (speed + 1) as f64
            / self.n_speeds as f64
            / (self.k as f64 - 1.0);
        self.max_proj[direction] / (per_proj * half)
    }

    pub fn unit_index(&self, direction: usize, speed: usize) -> usize {
        direction * self.n_speeds + speed
    }

    pub fn opposite(&self, direction: usize) -> usize {
        (direction + self.n_dirs / 2) % self.n_dirs
    }
}

/// One detected motion at a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEntry {
    pub direction: u8,
    pub speed: u8,
    pub step: u64,
    /// Membrane state of the winning unit when it fired.
    pub strength: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowUpdate {
    pub x: u16,
    pub y: u16,
    pub entry: FlowEntry,
}

/// Sparse motion map: recent entries per pixel, at most one per step.
#[derive(Debug, Clone, Default)]
pub struct FlowField {
    entries: HashMap<(u16, u16), Vec<FlowEntry>>,
    step: u64,
}

impl FlowField {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current layer step (the step of the latest update).
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn insert(&mut self, x: u16, y: u16, entry: FlowEntry) {
        let list = self.entries.entry((x, y)).or_default();
        match list.last_mut() {
            Some(last) if last.step == entry.step => *last = entry,
            _ => list.push(entry),
        }
        self.step = self.step.max(entry.step);
    }

    pub fn at(&self, x: u16, y: u16) -> &[FlowEntry] {
        self.entries.get(&(x, y)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drops entries older than `max_age` steps.
    pub fn prune(&mut self, max_age: u64) {
        let now = self.step;
        self.entries.retain(|_, list| {
            list.retain(|e| now.saturating_sub(e.step) <= max_age);
            !list.is_empty()
        });
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u16, u16), &FlowEntry)> {
        self.entries
            .iter()
            .flat_map(|(&k, v)| v.iter().map(move |e| (k, e)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowReading {
    /// Pixels per tracking period.
    pub vx: f64,
    pub vy: f64,
    pub direction: u8,
    pub speed: u8,
    pub age: u64,
    pub strength: f32,
}

/// Velocity of a flow entry, in pixels per tracking period.
pub fn entry_velocity(
    bank: &DelayKernelBank,
    entry: &FlowEntry,
    steps_per_period: usize,
) -> (f64, f64) {
    let v = bank.matched_speed(entry.direction as usize, entry.speed as usize)
        * steps_per_period as f64;
    let (ux, uy) = DelayKernelBank::unit_vector(entry.direction as usize, bank.n_dirs());
    (v * ux, v * uy)
}

/// Which flow entries a read-out considers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowQuery {
    pub radius: f64,
    /// Oldest entry, in steps before the field's current step.
    pub max_age: u64,
    /// Weaker entries are ignored.
    pub min_strength: f32,
    /// Entries that must agree on the winning direction.
    pub min_support: usize,
}

impl FlowQuery {
    /// Every entry within `radius` and `max_age`.
    pub fn any(radius: f64, max_age: u64) -> Self {
        FlowQuery {
            radius,
            max_age,
            min_strength: f32::NEG_INFINITY,
            min_support: 1,
        }
    }
}

/// Reads the flow around `pos`. Qualifying entries vote for their
/// direction; the direction with the most votes wins (ties to the larger
/// summed strength, then the lower index) if it has `min_support` votes.
/// Within it the strongest entry gives the speed, ties going to the most
/// recent and then the nearest.
pub fn read_flow_at(
    field: &FlowField,
    bank: &DelayKernelBank,
    pos: (f64, f64),
    query: &FlowQuery,
    steps_per_period: usize,
) -> Option<FlowReading> {
    let now = field.step();
    let r = query.radius.max(0.0);
    let x0 = (pos.0 - r).ceil().max(0.0) as i64;
    let x1 = (pos.0 + r).floor().min(u16::MAX as f64) as i64;
    let y0 = (pos.1 - r).ceil().max(0.0) as i64;
    let y1 = (pos.1 + r).floor().min(u16::MAX as f64) as i64;
    let n_dirs = bank.n_dirs();
    let mut votes = vec![(0usize, 0f64); n_dirs];
    let mut best: Vec<Option<(f32, u64, f64, FlowEntry)>> = vec![None; n_dirs];
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d2 = (x as f64 - pos.0).powi(2) + (y as f64 - pos.1).powi(2);
            if d2 > r * r {
                continue;
            }
            for e in field.at(x as u16, y as u16) {
                let age = now.saturating_sub(e.step);
                if age > query.max_age || e.strength < query.min_strength {
                    continue;
                }
                let d = e.direction as usize;
                votes[d].0 += 1;
                votes[d].1 += e.strength as f64;
                let better = match &best[d] {
                    None => true,
                    Some((s, a, dd, _)) => {
                        e.strength > *s
                            || (e.strength == *s && (age < *a || (age == *a && d2 < *dd)))
                    }
                };
                if better {
                    best[d] = Some((e.strength, age, d2, *e));
                }
            }
        }
    }
    let mut winner = 0;
    for d in 1..n_dirs {
        let (c, s) = votes[d];
        let (wc, ws) = votes[winner];
        if c > wc || (c == wc && s > ws) {
            winner = d;
        }
    }
    if votes[winner].0 < query.min_support.max(1) {
        return None;
    }
    best[winner].map(|(_, age, _, e)| {
        let (vx, vy) = entry_velocity(bank, &e, steps_per_period);
        FlowReading {
            vx,
            vy,
            direction: e.direction,
            speed: e.speed,
            age,
            strength: e.strength,
        }
    })
}

/// State `elapsed` steps after it was written without input: reset after a
/// spike, geometric leak otherwise. `leak[e]` is `decay^e`.
fn carry(s: f32, v_th: f32, leak: &[f32], elapsed: u64) -> f32 {
    if elapsed == 0 {
        s
    } else if s - v_th >= 0.0 {
        0.0
    } else {
        leak.get(elapsed as usize).map_or(0.0, |l| s * l)
    }
}

/// Pixels with at least one event, deduplicated, in first-seen order.
pub fn binarize(events: &[Event]) -> Vec<(u16, u16)> {
    let mut seen = std::collections::HashSet::with_capacity(events.len());
    events
        .iter()
        .filter(|e| seen.insert((e.x, e.y)))
        .map(|e| (e.x, e.y))
        .collect()
}

/// The stateful spiking layer.
///
/// Membrane states are stored densely, `n_units` per pixel, and brought up
/// to date lazily: a pixel without input cannot fire (it either fired last
/// step and resets, or sits below threshold and leaks), so only pixels
/// receiving input are visited. A unit fired at its last update exactly when
/// its stored state reached the threshold.
#[derive(Debug, Clone)]
pub struct FlowLayer {
    params: FlowParams,
    bank: DelayKernelBank,
    width: u32,
    height: u32,
    /// Unit groups sharing one delay at one kernel offset.
    groups: Vec<Vec<u16>>,
    /// `schedule[o]` lists `(delay, group)` for kernel offset `o`.
    schedule: Vec<Vec<(u8, u32)>>,
    /// Ring of future deliveries `(pixel, group)`; slot `step % len`.
    pending: Vec<Vec<(u32, u32)>>,
    states: Vec<f32>,
    /// Step after which each pixel's state was written, plus one; 0 if never.
    written: Vec<u64>,
    step: u64,
    field: FlowField,
    retention: u64,
    spikes: Vec<((u16, u16), Vec<u16>)>,
    /// `decay^e`, until it underflows.
    leak: Vec<f32>,
}

impl FlowLayer {
    pub fn new(params: FlowParams, width: u32, height: u32) -> Result<Self> {
        params.validate()?;
        let bank = DelayKernelBank::build(
            params.n_dirs,
            params.n_speeds,
            params.kernel,
            params.max_delay,
        )?;
        let k = bank.kernel();
        let mut groups = Vec::new();
        let mut schedule = Vec::with_capacity(k * k);
        for ky in 0..k {
            for kx in 0..k {
                let mut by_delay: Vec<(u8, Vec<u16>)> = Vec::new();
                for d in 0..bank.n_dirs() {
                    for s in 0..bank.n_speeds() {
                        let delay = bank.delay(d, s, ky, kx);
                        let u = bank.unit_index(d, s) as u16;
                        match by_delay.iter_mut().find(|(dl, _)| *dl == delay) {
                            Some((_, units)) => units.push(u),
                            None => by_delay.push((delay, vec![u])),
                        }
                    }
                }
                by_delay.sort_by_key(|(d, _)| *d);
                let mut offset = Vec::with_capacity(by_delay.len());
                for (delay, units) in by_delay {
                    offset.push((delay, groups.len() as u32));
                    groups.push(units);
                }
                schedule.push(offset);
            }
        }
        let slots = params.max_delay + 1;
        let retention = (2 * params.steps_per_period).max(params.max_delay) as u64;
        let pixels = width as usize * height as usize;
        let mut leak = vec![1.0f32];
        while leak.len() < 4096 && leak[leak.len() - 1] > 0.0 {
            leak.push(leak[leak.len() - 1] * params.snu.decay as f32);
        }
        Ok(FlowLayer {
            leak,
            states: vec![0.0; pixels * bank.n_units()],
            written: vec![0; pixels],
            bank,
            width,
            height,
            groups,
            schedule,
            pending: vec![Vec::new(); slots],
            step: 0,
            field: FlowField::new(),
            retention,
            spikes: Vec::new(),
            params,
        })
    }

    pub fn bank(&self) -> &DelayKernelBank {
        &self.bank
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn field(&self) -> &FlowField {
        &self.field
    }

    /// Index of the next step to run.
    pub fn current_step(&self) -> u64 {
        self.step
    }

    /// Units that fired in the last step, per pixel in row-major order, as
    /// unit indices.
    pub fn last_spikes(&self) -> &[((u16, u16), Vec<u16>)] {
        &self.spikes
    }

    /// State of every unit of pixel `p` as of the end of the last step.
    fn current_states(&self, p: usize) -> impl Iterator<Item = f32> + '_ {
        let n = self.bank.n_units();
        let v_th = self.params.snu.v_th as f32;
        let elapsed = self.step.saturating_sub(self.written[p]);
        self.states[p * n..(p + 1) * n]
            .iter()
            .map(move |&s| carry(s, v_th, &self.leak, elapsed))
    }

    /// Number of pixels carrying residual state. Scans the whole layer.
    pub fn active_pixels(&self) -> usize {
        (0..self.written.len())
            .filter(|&p| self.written[p] > 0 && self.current_states(p).any(|s| s >= RESIDUAL))
            .count()
    }

    /// Largest membrane state anywhere in the layer. Scans the whole layer.
    pub fn max_state(&self) -> f32 {
        (0..self.written.len())
            .filter(|&p| self.written[p] > 0)
            .flat_map(|p| self.current_states(p))
            .fold(0.0, f32::max)
    }

    /// Advances the layer by one step with the given binary input frame and
    /// returns the new flow entries, one per pixel at most, in row-major
    /// order.
    pub fn step(&mut self, input: &[(u16, u16)]) -> Vec<FlowUpdate> {
        let n_units = self.bank.n_units();
        let k = self.bank.kernel() as i32;
        let half = (k - 1) / 2;
        let slots = self.pending.len() as u64;
        let (w, h) = (self.width as i32, self.height as i32);

        // Convolution: the unit at q reads pixel q - o, so an input at p
        // reaches the units at p + o.
        for &(px, py) in input {
            for ky in 0..k {
                for kx in 0..k {
                    let qx = px as i32 + (kx - half);
                    let qy = py as i32 + (ky - half);
                    if qx < 0 || qy < 0 || qx >= w || qy >= h {
                        continue;
                    }
                    let q = (qy * w + qx) as u32;
                    for &(delay, group) in &self.schedule[(ky * k + kx) as usize] {
                        let slot = ((self.step + delay as u64) % slots) as usize;
                        self.pending[slot].push((q, group));
                    }
                }
            }
        }

        let v_th = self.params.snu.v_th as f32;
        let weight = self.params.snu.weight as f32;
        let now = self.step + 1;
        let slot = (self.step % slots) as usize;
        let deliveries = std::mem::take(&mut self.pending[slot]);
        let mut touched = Vec::new();
        for &(q, group) in &deliveries {
            let p = q as usize;
            let base = p * n_units;
            if self.written[p] != now {
                if self.written[p] > 0 {
                    let elapsed = now - self.written[p];
                    for s in &mut self.states[base..base + n_units] {
                        *s = carry(*s, v_th, &self.leak, elapsed);
                    }
                }
                self.written[p] = now;
                touched.push(q);
            }
            for &u in &self.groups[group as usize] {
                self.states[base + u as usize] += weight;
            }
        }
        let mut recycled = deliveries;
        recycled.clear();
        self.pending[slot] = recycled;

        let mut updates = Vec::new();
        self.spikes.clear();
        for &p in &touched {
            let st = &self.states[p as usize * n_units..(p as usize + 1) * n_units];
            if !st.iter().any(|&s| s - v_th >= 0.0) {
                continue;
            }
            let q = ((p % self.width) as u16, (p / self.width) as u16);
            let units = (0..n_units)
                .filter(|&u| st[u] - v_th >= 0.0)
                .map(|u| u as u16)
                .collect();
            self.spikes.push((q, units));
            if let Some(entry) = Self::resolve(&self.bank, st, v_th, self.step) {
                updates.push(FlowUpdate {
                    x: q.0,
                    y: q.1,
                    entry,
                });
            }
        }

        self.spikes.sort_unstable_by_key(|&((x, y), _)| (y, x));
        updates.sort_unstable_by_key(|u| (u.y, u.x));
        for u in &updates {
            self.field.insert(u.x, u.y, u.entry);
        }
        self.field.set_step(self.step);
        if self
            .step
            .is_multiple_of(self.params.steps_per_period as u64)
        {
            self.field.prune(self.retention);
        }
        self.step += 1;
        updates
    }

    /// Picks the firing unit with the highest state, ties to the lowest
    /// direction then speed. A winner whose opposite direction fires at
    /// least as strongly carries no direction and is dropped.
    fn resolve(bank: &DelayKernelBank, st: &[f32], v_th: f32, step: u64) -> Option<FlowEntry> {
        let fires = |u: usize| st[u] - v_th >= 0.0;
        let mut best: Option<(usize, f32)> = None;
        for (u, &s) in st.iter().enumerate() {
            if fires(u) && best.is_none_or(|(_, b)| s > b) {
                best = Some((u, s));
            }
        }
        let (u, strength) = best?;
        let n_speeds = bank.n_speeds();
        let (d, s) = (u / n_speeds, u % n_speeds);
        let opp = bank.opposite(d);
        let opposed = (0..n_speeds).any(|sp| {
            let v = bank.unit_index(opp, sp);
            fires(v) && st[v] >= strength
        });
        if opposed {
            return None;
        }
        Some(FlowEntry {
            direction: d as u8,
            speed: s as u8,
            step,
            strength,
        })
    }

    /// Flow reading at a position, see [`read_flow_at`].
    pub fn read(&self, pos: (f64, f64), query: &FlowQuery) -> Option<FlowReading> {
        read_flow_at(
            &self.field,
            &self.bank,
            pos,
            query,
            self.params.steps_per_period,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> DelayKernelBank {
        DelayKernelBank::build(8, 4, 5, 10).unwrap()
    }

    #[test]
    fn snu_examples() {
        let p = SnuParams::default();
        assert_eq!(snu_step(0.0, false, 5.0, &p), (5.0, true));
        let mut s = (0.0, false);
        for _ in 0..100 {
            s = snu_step(s.0, s.1, 0.0, &p);
            assert_eq!(s, (0.0, false));
        }
        assert_eq!(snu_step(5.0, true, 0.0, &p), (0.0, false));
        // carried state without reset
        let (s1, y1) = snu_step(4.0, false, 0.0, &p);
        assert!((s1 - 3.2).abs() < 1e-12 && !y1);
    }

    #[test]
    fn delays_rightward_depend_on_dx_only() {
        let b = bank();
        for s in 0..4 {
            for kx in 0..5 {
                let col: Vec<u8> = (0..5).map(|ky| b.delay(0, s, ky, kx)).collect();
                assert!(col.iter().all(|&d| d == col[0]));
                if kx > 0 {
                    assert!(b.delay(0, s, 0, kx) >= b.delay(0, s, 0, kx - 1));
                }
            }
        }
    }

    #[test]
    fn center_delay() {
        let b = bank();
        for d in 0..8 {
            for s in 0..4 {
                let expected = (10.0 * (s + 1) as f64 / 4.0 * 0.5).round() as u8;
                assert_eq!(b.delay(d, s, 2, 2), expected, "d={d} s={s}");
            }
        }
    }

    #[test]
    fn single_speed_delays() {
        let b = DelayKernelBank::build(8, 1, 5, 10).unwrap();
        let row: Vec<u8> = (0..5).map(|kx| b.delay(0, 0, 2, kx)).collect();
        assert_eq!(row[0], 0);
        assert!(row[1] == 2 || row[1] == 3);
        assert_eq!(row[2], 5);
        assert!(row[3] == 7 || row[3] == 8);
        assert_eq!(row[4], 10);
    }

    #[test]
    fn opposite_kernels_are_point_reflections() {
        let b = bank();
        for d in 0..8 {
            for s in 0..4 {
                for ky in 0..5 {
                    for kx in 0..5 {
                        assert_eq!(
                            b.delay(d, s, ky, kx),
                            b.delay(b.opposite(d), s, 4 - ky, 4 - kx)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_kernel_rejected() {
        assert!(DelayKernelBank::build(8, 4, 4, 10).is_err());
        assert!(DelayKernelBank::build(8, 4, 5, 3).is_err());
    }

    #[test]
    fn silence_without_input() {
        let mut layer = FlowLayer::new(FlowParams::default(), 32, 32).unwrap();
        for _ in 0..50 {
            assert!(layer.step(&[]).is_empty());
        }
        assert!(layer.field().is_empty());
    }

    #[test]
    fn isolated_event_never_fires() {
        let mut layer = FlowLayer::new(FlowParams::default(), 32, 32).unwrap();
        assert!(layer.step(&[(16, 16)]).is_empty());
        for _ in 0..100 {
            assert!(layer.step(&[]).is_empty());
            assert!(layer.max_state() < 5.0);
        }
        assert_eq!(layer.active_pixels(), 0, "state decays away");
    }

    #[test]
    fn static_full_flash_has_no_direction() {
        let mut layer = FlowLayer::new(FlowParams::default(), 32, 32).unwrap();
        let block: Vec<(u16, u16)> = (0..32).flat_map(|y| (0..32).map(move |x| (x, y))).collect();
        let mut interior_hits = 0;
        for u in layer.step(&block) {
            if (4..28).contains(&u.x) && (4..28).contains(&u.y) {
                interior_hits += 1;
            }
        }
        for _ in 0..30 {
            for u in layer.step(&[]) {
                if (4..28).contains(&u.x) && (4..28).contains(&u.y) {
                    interior_hits += 1;
                }
            }
        }
        assert_eq!(interior_hits, 0);
    }

    #[test]
    fn read_flow_rules() {
        let b = bank();
        let mut f = FlowField::new();
        assert!(read_flow_at(&f, &b, (5.0, 5.0), &FlowQuery::any(3.0, 10), 10).is_none());
        let e = |d: u8, step: u64| FlowEntry {
            direction: d,
            speed: 3,
            step,
            strength: 10.0,
        };
        f.insert(5, 5, e(0, 3));
        f.set_step(3);
        let r = read_flow_at(&f, &b, (5.0, 5.0), &FlowQuery::any(0.0, 10), 10).unwrap();
        assert_eq!((r.direction, r.age), (0, 0));
        assert!((r.vx - 4.0).abs() < 1e-9 && r.vy == 0.0);
        // ages 2 and 5: the younger wins
        f.insert(6, 5, e(0, 6));
        f.insert(4, 5, e(0, 9));
        f.set_step(11);
        let r = read_flow_at(&f, &b, (5.0, 5.0), &FlowQuery::any(2.0, 10), 10).unwrap();
        assert_eq!((r.direction, r.age), (0, 2));
        // out of age
        assert!(read_flow_at(&f, &b, (5.0, 5.0), &FlowQuery::any(0.0, 5), 10).is_none());
    }

    #[test]
    fn read_flow_votes_and_gates() {
        let b = bank();
        let mut f = FlowField::new();
        let e = |d: u8, strength: f32| FlowEntry {
            direction: d,
            speed: 0,
            step: 4,
            strength,
        };
        f.insert(10, 10, e(2, 25.0));
        f.insert(11, 10, e(6, 12.0));
        f.insert(12, 10, e(6, 12.0));
        let all = FlowQuery::any(3.0, 10);
        assert_eq!(
            read_flow_at(&f, &b, (11.0, 10.0), &all, 10)
                .unwrap()
                .direction,
            6
        );
        let strong = FlowQuery {
            min_strength: 20.0,
            ..all
        };
        assert_eq!(
            read_flow_at(&f, &b, (11.0, 10.0), &strong, 10)
                .unwrap()
                .direction,
            2
        );
        let supported = FlowQuery {
            min_support: 2,
            ..strong
        };
        assert!(read_flow_at(&f, &b, (11.0, 10.0), &supported, 10).is_none());
    }

    #[test]
    fn matched_speeds() {
        let b = bank();
        let axis: Vec<f64> = (0..4).map(|s| b.matched_speed(0, s)).collect();
        for (s, v) in axis.iter().enumerate() {
            assert!((v - 1.6 / (s + 1) as f64).abs() < 1e-9);
        }
        assert!((b.matched_speed(1, 0) - 1.6 * 2f64.sqrt()).abs() < 1e-9);
    }
}
