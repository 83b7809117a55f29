//! Event data model, stream file formats and the synthetic event camera.

mod io;
mod sim;

pub use io::{
    read_stream, read_stream_from, write_stream, write_stream_to, StreamFormat, BIN_MAGIC,
    BIN_RECORD_LEN, CSV_HEADER,
};
pub use sim::{
    simulate, BeaconSpec, BeaconTruth, Distractor, GroundTruth, NoiseSpec, Scene, SensorConfig,
    Trajectory,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single brightness change reported by the sensor.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    /// +1 for a brightness increase, -1 for a decrease.
    pub p: i8,
}

impl Event {
    pub fn new(t_us: u64, x: u16, y: u16, p: i8) -> Self {
        Event { t_us, x, y, p }
    }

    pub fn is_on(&self) -> bool {
        self.p > 0
    }
}

/// A time-sorted sequence of events from one sensor.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u32, height: u32, events: Vec<Event>) -> Self {
        EventStream {
            width,
            height,
            events,
        }
    }

    /// Builds a stream whose sensor size is the bounding box of the events.
    pub fn from_events(events: Vec<Event>) -> Self {
        let width = events.iter().map(|e| e.x as u32 + 1).max().unwrap_or(0);
        let height = events.iter().map(|e| e.y as u32 + 1).max().unwrap_or(0);
        EventStream {
            width,
            height,
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn duration_us(&self) -> u64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.t_us - a.t_us,
            _ => 0,
        }
    }

    /// Checks polarity values, sensor bounds and time ordering.
    pub fn validate(&self) -> Result<()> {
        let mut last = 0u64;
        for (i, e) in self.events.iter().enumerate() {
            if e.x as u32 >= self.width || e.y as u32 >= self.height {
                return Err(Error::OutOfBounds {
                    index: i,
                    x: e.x as u32,
                    y: e.y as u32,
                    width: self.width,
                    height: self.height,
                });
            }
            if e.p != 1 && e.p != -1 {
                return Err(Error::parse(
                    format!("event {i}"),
                    format!("polarity {} not in {{1,-1}}", e.p),
                ));
            }
            if e.t_us < last {
                return Err(Error::Unsorted(i));
            }
            last = e.t_us;
        }
        Ok(())
    }
}
