//! 11-bit beacon frame codec.
//!
//! A beacon repeats one fixed frame forever: the start code `1110`, a 6-bit
//! payload (most significant bit first) and a parity bit that is 1 when the
//! payload has an even number of ones. The receiver never sees the frame
//! boundary, only on/off transitions, so decoding is split in two steps:
//! transitions are expanded into bit runs ([`BitBuffer`]), then 11-bit
//! windows of that buffer are aligned by searching the rotation that starts
//! with the start code and carries a correct parity bit ([`align_frame`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRAME_BITS: usize = 11;
pub const PAYLOAD_BITS: usize = 6;
pub const START_CODE: [bool; 4] = [true, true, true, false];
pub const MAX_PAYLOAD: u32 = (1 << PAYLOAD_BITS) - 1;

/// One serialized frame, index 0 first on the wire.
pub type FrameBits = [bool; FRAME_BITS];

fn check_payload(payload: u32) -> Result<u8> {
    if payload > MAX_PAYLOAD {
        return Err(Error::PayloadOutOfRange(payload));
    }
    Ok(payload as u8)
}

/// Parity bit for a payload: `true` iff the payload has an even number of
/// ones (zero ones counts as even).
pub fn parity_bit(payload: u32) -> Result<bool> {
    let p = check_payload(payload)?;
    Ok(p.count_ones() % 2 == 0)
}

/// Serializes `payload` into `1110 ++ payload[5..0] ++ parity`.
pub fn encode_frame(payload: u32) -> Result<FrameBits> {
    Ok(Frame::new(payload)?.bits())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frame {
    payload: u8,
}

impl Frame {
    pub fn new(payload: u32) -> Result<Self> {
        Ok(Frame {
            payload: check_payload(payload)?,
        })
    }

    pub fn payload(&self) -> u8 {
        self.payload
    }

    pub fn parity(&self) -> bool {
        self.payload.count_ones().is_multiple_of(2)
    }

    pub fn bits(&self) -> FrameBits {
        let mut out = [false; FRAME_BITS];
        out[..4].copy_from_slice(&START_CODE);
        for i in 0..PAYLOAD_BITS {
            out[4 + i] = (self.payload >> (PAYLOAD_BITS - 1 - i)) & 1 == 1;
        }
        out[FRAME_BITS - 1] = self.parity();
        out
    }

    /// Validates an already aligned 11-bit window: start code at the front
    /// and a matching parity bit at the back.
    pub fn from_aligned(bits: &[bool]) -> Option<Frame> {
        if bits.len() != FRAME_BITS || bits[..4] != START_CODE {
            return None;
        }
        let payload = bits[4..4 + PAYLOAD_BITS]
            .iter()
            .fold(0u8, |acc, &b| (acc << 1) | b as u8);
        let frame = Frame { payload };
        (frame.parity() == bits[FRAME_BITS - 1]).then_some(frame)
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&bits_to_string(&self.bits()))
    }
}

/// Outcome of searching the 11 cyclic rotations of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alignment {
    /// Exactly one payload validates; `offset` is the left rotation that
    /// brings the start code to the front.
    Aligned {
        payload: u8,
        offset: usize,
    },
    NoStartCode,
    /// Two or more rotations validate with different payloads.
    Ambiguous,
}

impl Alignment {
    pub fn payload(&self) -> Option<u8> {
        match *self {
            Alignment::Aligned { payload, .. } => Some(payload),
            _ => None,
        }
    }
}

pub fn rotate_left(bits: &[bool], offset: usize) -> Vec<bool> {
    let mut out = bits.to_vec();
    if !out.is_empty() {
        out.rotate_left(offset % bits.len());
    }
    out
}

pub fn align_frame(window: &[bool]) -> Result<Alignment> {
    if window.len() != FRAME_BITS {
        return Err(Error::BitLength {
            expected: FRAME_BITS,
            got: window.len(),
        });
    }
    let mut rotated = [false; FRAME_BITS];
    let mut found: Option<(u8, usize)> = None;
    for offset in 0..FRAME_BITS {
        for (i, slot) in rotated.iter_mut().enumerate() {
            *slot = window[(i + offset) % FRAME_BITS];
        }
        if let Some(frame) = Frame::from_aligned(&rotated) {
            match found {
                None => found = Some((frame.payload(), offset)),
                Some((p, _)) if p == frame.payload() => {}
                Some(_) => return Ok(Alignment::Ambiguous),
            }
        }
    }
    Ok(match found {
        Some((payload, offset)) => Alignment::Aligned { payload, offset },
        None => Alignment::NoStartCode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    ToOn,
    ToOff,
}

/// A beacon state change, timestamped in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub time_us: f64,
    pub direction: Direction,
}

impl Transition {
    pub fn on(time_us: f64) -> Self {
        Transition {
            time_us,
            direction: Direction::ToOn,
        }
    }

    pub fn off(time_us: f64) -> Self {
        Transition {
            time_us,
            direction: Direction::ToOff,
        }
    }
}

/// What a single transition did to a [`BitBuffer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    /// First transition ever seen: only stores `t_t`.
    Seeded,
    /// `count` copies of `bit` were appended; the run started at `start_us`.
    Appended {
        bit: bool,
        count: usize,
        start_us: f64,
    },
    /// Less than half a bit period since the last transition; ignored.
    Jitter,
    /// Run longer than a frame: the signal was lost and the buffer cleared.
    Reset,
}

/// Run-length expanded bit history of one beacon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BitBuffer {
    bits: Vec<bool>,
    last_transition_us: Option<f64>,
    consumed: usize,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn last_transition_us(&self) -> Option<f64> {
        self.last_transition_us
    }

    /// Index of the first bit not yet covered by [`frame_scan`].
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn clear(&mut self) {
        self.bits.clear();
        self.consumed = 0;
    }

    /// Applies one transition. A transition into the on state closes a run
    /// of zeros, a transition into the off state a run of ones.
    pub fn push_transition(&mut self, transition: Transition, f_beacon: f64) -> Result<RunOutcome> {
        if !(f_beacon > 0.0) || !f_beacon.is_finite() {
            return Err(Error::InvalidParam(format!(
                "beacon frequency must be positive, got {f_beacon}"
            )));
        }
        let Some(last) = self.last_transition_us else {
            self.last_transition_us = Some(transition.time_us);
            return Ok(RunOutcome::Seeded);
        };
        if transition.time_us < last {
            return Err(Error::InvalidParam(format!(
                "transition at {} us precedes last transition at {} us",
                transition.time_us, last
            )));
        }
        let periods = (transition.time_us - last) * 1e-6 * f_beacon;
        let n = periods.round() as usize;
        if n == 0 {
            return Ok(RunOutcome::Jitter);
        }
        self.last_transition_us = Some(transition.time_us);
        if n > FRAME_BITS {
            self.clear();
            return Ok(RunOutcome::Reset);
        }
        let bit = transition.direction == Direction::ToOff;
        self.bits.extend(std::iter::repeat_n(bit, n));
        Ok(RunOutcome::Appended {
            bit,
            count: n,
            start_us: last,
        })
    }
}

/// Expands `transitions` into bit runs appended to `buffer`.
pub fn runs_from_transitions(
    transitions: &[Transition],
    f_beacon: f64,
    mut buffer: BitBuffer,
) -> Result<BitBuffer> {
    for t in transitions {
        buffer.push_transition(*t, f_beacon)?;
    }
    Ok(buffer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScannedFrame {
    pub payload: u8,
    pub bit_index: usize,
}

/// Decodes every complete window after the consumed index. A successful
/// decode advances by a full frame, a failed one by a single bit.
pub fn frame_scan(buffer: &mut BitBuffer) -> Vec<ScannedFrame> {
    let mut out = Vec::new();
    let mut idx = buffer.consumed;
    while idx + FRAME_BITS <= buffer.bits.len() {
        let window = &buffer.bits[idx..idx + FRAME_BITS];
        match align_frame(window) {
            Ok(Alignment::Aligned { payload, .. }) => {
                out.push(ScannedFrame {
                    payload,
                    bit_index: idx,
                });
                idx += FRAME_BITS;
            }
            _ => idx += 1,
        }
    }
    buffer.consumed = idx;
    out
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .enumerate()
        .map(|(i, c)| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Parse {
                location: format!("bit {i}"),
                message: format!("expected '0' or '1', found {other:?}"),
            }),
        })
        .collect()
}
