//! Flat `key = value` configuration covering every module.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterParams;
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::tracker::TrackerParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Single thread, stage after stage.
    Deterministic,
    /// Clustering and flow run on their own threads ahead of tracking.
    Concurrent,
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" | "replay" => Ok(RunMode::Deterministic),
            "concurrent" => Ok(RunMode::Concurrent),
            other => Err(Error::InvalidParam(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Deterministic => "deterministic",
            RunMode::Concurrent => "concurrent",
        })
    }
}

/// Settings of the per-track polarity vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    /// Half side of the square region read around a track.
    pub roi_px: f64,
    /// Events needed in a bin before it can vote.
    pub min_events: usize,
    /// Bins per bit period.
    pub oversample: f64,
    /// Mean polarity needed for a vote.
    pub polarity_threshold: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            roi_px: 8.0,
            min_events: 4,
            oversample: 2.0,
            polarity_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tracking_rate_hz: f64,
    pub f_beacon: f64,
    pub mode: RunMode,
    pub seed: u64,
    pub cluster: ClusterParams,
    pub flow: FlowParams,
    pub tracker: TrackerParams,
    pub decode: DecodeParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tracking_rate_hz: 10.0,
            f_beacon: 1000.0,
            mode: RunMode::Deterministic,
            seed: 0,
            cluster: ClusterParams::default(),
            flow: FlowParams::default(),
            tracker: TrackerParams::default(),
            decode: DecodeParams::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| {
        Error::parse(
            format!("line {line}"),
            format!("invalid value {raw:?} for {key}"),
        )
    })
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tracking_rate_hz > 0.0) {
            return Err(Error::InvalidParam(format!(
                "tracking rate {} must be > 0",
                self.tracking_rate_hz
            )));
        }
        if !(self.f_beacon > 0.0) {
            return Err(Error::InvalidParam(format!(
                "f_beacon {} must be > 0",
                self.f_beacon
            )));
        }
        if !(self.decode.roi_px > 0.0)
            || !(self.decode.oversample >= 1.0)
            || self.decode.min_events == 0
        {
            return Err(Error::InvalidParam(
                "decode needs roi_px > 0, oversample >= 1 and min_events >= 1".into(),
            ));
        }
        if !(self.decode.polarity_threshold > 0.0 && self.decode.polarity_threshold <= 1.0) {
            return Err(Error::InvalidParam(
                "decode.polarity_threshold must lie in (0, 1]".into(),
            ));
        }
        self.cluster.validate()?;
        self.flow.validate()?;
        self.tracker.validate()
    }

    /// Tracking period in microseconds.
    pub fn period_us(&self) -> f64 {
        1e6 / self.tracking_rate_hz
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, raw: &str, line: usize) -> Result<()> {
        let c = &mut self.cluster;
        let f = &mut self.flow;
        let t = &mut self.tracker;
        let d = &mut self.decode;
        match key {
            "tracking_rate_hz" => self.tracking_rate_hz = value(key, raw, line)?,
            "f_beacon" => self.f_beacon = value(key, raw, line)?,
            "mode" => self.mode = value(key, raw, line)?,
            "seed" => self.seed = value(key, raw, line)?,
            "eps" => c.eps = value(key, raw, line)?,
            "min_pts" => c.min_pts = value(key, raw, line)?,
            "shape_ratio" => c.shape_ratio = value(key, raw, line)?,
            "n_min" => c.n_min = value(key, raw, line)?,
            "n_max" => c.n_max = value(key, raw, line)?,
            "window_us" => c.window_us = value(key, raw, line)?,
            "flow.v_th" => f.snu.v_th = value(key, raw, line)?,
            "flow.decay" => f.snu.decay = value(key, raw, line)?,
            "flow.weight" => f.snu.weight = value(key, raw, line)?,
            "flow.n_dirs" => f.n_dirs = value(key, raw, line)?,
            "flow.n_speeds" => f.n_speeds = value(key, raw, line)?,
            "flow.kernel" => f.kernel = value(key, raw, line)?,
            "flow.max_delay" => f.max_delay = value(key, raw, line)?,
            "flow.steps_per_period" => f.steps_per_period = value(key, raw, line)?,
            "tracker.confidence_min" => t.confidence_min = value(key, raw, line)?,
            "tracker.confidence_max" => t.confidence_max = value(key, raw, line)?,
            "tracker.confidence_init" => t.confidence_init = value(key, raw, line)?,
            "tracker.valid_increment" => t.valid_increment = value(key, raw, line)?,
            "tracker.miss_decrement" => t.miss_decrement = value(key, raw, line)?,
            "tracker.delay_max_ms" => {
                let ms: f64 = value(key, raw, line)?;
                if !(ms >= 0.0) {
                    return Err(Error::parse(
                        format!("line {line}"),
                        "delay_max_ms must be >= 0",
                    ));
                }
                t.delay_max_us = (ms * 1000.0).round() as u64;
            }
            "tracker.window_px" => t.window_px = value(key, raw, line)?,
            "tracker.flow_mode" => t.flow_mode = value(key, raw, line)?,
            "tracker.sigma_a" => t.sigma_a = value(key, raw, line)?,
            "tracker.sigma_m" => t.sigma_m = value(key, raw, line)?,
            "tracker.flow_radius_px" => t.flow_radius_px = value(key, raw, line)?,
            "tracker.flow_max_age" => t.flow_max_age = value(key, raw, line)?,
            "tracker.flow_min_strength" => t.flow_min_strength = value(key, raw, line)?,
            "tracker.flow_min_support" => t.flow_min_support = value(key, raw, line)?,
            "tracker.size_alpha" => t.size_alpha = value(key, raw, line)?,
            "decode.roi_px" => d.roi_px = value(key, raw, line)?,
            "decode.min_events" => d.min_events = value(key, raw, line)?,
            "decode.oversample" => d.oversample = value(key, raw, line)?,
            "decode.polarity_threshold" => d.polarity_threshold = value(key, raw, line)?,
            other => {
                return Err(Error::parse(
                    format!("line {line}"),
                    format!("unknown key {other:?}"),
                ));
            }
        }
        Ok(())
    }

    /// Renders every key, parseable by [`FromStr`].
    pub fn to_kv_string(&self) -> String {
        let (c, f, t, d) = (&self.cluster, &self.flow, &self.tracker, &self.decode);
        let mut s = String::new();
        let mut put = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("tracking_rate_hz", &self.tracking_rate_hz);
        put("f_beacon", &self.f_beacon);
        put("mode", &self.mode);
        put("seed", &self.seed);
        put("eps", &c.eps);
        put("min_pts", &c.min_pts);
        put("shape_ratio", &c.shape_ratio);
        put("n_min", &c.n_min);
        put("n_max", &c.n_max);
        put("window_us", &c.window_us);
        put("flow.v_th", &f.snu.v_th);
        put("flow.decay", &f.snu.decay);
        put("flow.weight", &f.snu.weight);
        put("flow.n_dirs", &f.n_dirs);
        put("flow.n_speeds", &f.n_speeds);
        put("flow.kernel", &f.kernel);
        put("flow.max_delay", &f.max_delay);
        put("flow.steps_per_period", &f.steps_per_period);
        put("tracker.confidence_min", &t.confidence_min);
        put("tracker.confidence_max", &t.confidence_max);
        put("tracker.confidence_init", &t.confidence_init);
        put("tracker.valid_increment", &t.valid_increment);
        put("tracker.miss_decrement", &t.miss_decrement);
        put("tracker.delay_max_ms", &(t.delay_max_us as f64 / 1000.0));
        put("tracker.window_px", &t.window_px);
        put("tracker.flow_mode", &t.flow_mode);
        put("tracker.sigma_a", &t.sigma_a);
        put("tracker.sigma_m", &t.sigma_m);
        put("tracker.flow_radius_px", &t.flow_radius_px);
        put("tracker.flow_max_age", &t.flow_max_age);
        put("tracker.flow_min_strength", &t.flow_min_strength);
        put("tracker.flow_min_support", &t.flow_min_support);
        put("tracker.size_alpha", &t.size_alpha);
        put("decode.roi_px", &d.roi_px);
        put("decode.min_events", &d.min_events);
        put("decode.oversample", &d.oversample);
        put("decode.polarity_threshold", &d.polarity_threshold);
        s
    }
}

impl FromStr for PipelineConfig {
    type Err = Error;

    /// Parses a config document; keys not given keep their defaults.
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, val)) = content.split_once('=') else {
                return Err(Error::parse(
                    format!("line {line}"),
                    "expected `key = value`",
                ));
            };
            cfg.set(key.trim(), val.trim(), line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
