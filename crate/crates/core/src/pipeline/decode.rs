//! Fast per-track decoding: events inside a track's region are binned at a
//! fraction of the bit period and each bin votes on a transition by its mean
//! polarity.

use crate::events::Event;
use crate::protocol::{Direction, Transition};

use super::config::DecodeParams;

#[derive(Debug, Clone, Default)]
struct Bin {
    index: i64,
    n: usize,
    sum_p: i64,
    on_t: f64,
    on_n: usize,
    off_t: f64,
    off_n: usize,
}

#[derive(Debug, Clone)]
struct Pending {
    direction: Direction,
    sum_t: f64,
    n: usize,
    last_bin: i64,
}

/// Turns a time-ordered event sequence into transitions.
#[derive(Debug, Clone)]
pub struct BinVoter {
    bin_us: f64,
    period_us: f64,
    min_events: usize,
    threshold: f64,
    current: Option<Bin>,
    pending: Option<Pending>,
    last: Option<Transition>,
}

impl BinVoter {
    pub fn new(f_beacon: f64, params: &DecodeParams) -> Self {
        let period_us = 1e6 / f_beacon;
        BinVoter {
            bin_us: period_us / params.oversample,
            period_us,
            min_events: params.min_events,
            threshold: params.polarity_threshold,
            current: None,
            pending: None,
            last: None,
        }
    }

    fn bin_of(&self, t_us: f64) -> i64 {
        (t_us / self.bin_us).floor() as i64
    }

    pub fn feed(&mut self, e: &Event, out: &mut Vec<Transition>) {
        let t = e.t_us as f64;
        let index = self.bin_of(t);
        if self.current.as_ref().is_some_and(|b| b.index != index) {
            self.close(out);
        }
        let bin = self.current.get_or_insert_with(|| Bin {
            index,
            ..Bin::default()
        });
        bin.n += 1;
        bin.sum_p += e.p as i64;
        if e.p > 0 {
            bin.on_t += t;
            bin.on_n += 1;
        } else {
            bin.off_t += t;
            bin.off_n += 1;
        }
    }

    /// Closes everything that can no longer change once time `t_us` is
    /// reached.
    pub fn advance(&mut self, t_us: f64, out: &mut Vec<Transition>) {
        let now = self.bin_of(t_us);
        if self.current.as_ref().is_some_and(|b| b.index < now) {
            self.close(out);
        }
        if self.pending.as_ref().is_some_and(|p| p.last_bin + 1 < now) {
            self.emit(out);
        }
    }

    /// Closes all open state.
    pub fn flush(&mut self, out: &mut Vec<Transition>) {
        self.close(out);
        self.emit(out);
    }

    fn close(&mut self, out: &mut Vec<Transition>) {
        let Some(bin) = self.current.take() else {
            return;
        };
        let vote = if bin.n < self.min_events {
            None
        } else {
            let mean = bin.sum_p as f64 / bin.n as f64;
            if mean >= self.threshold {
                Some((Direction::ToOn, bin.on_t, bin.on_n))
            } else if mean <= -self.threshold {
                Some((Direction::ToOff, bin.off_t, bin.off_n))
            } else {
                None
            }
        };
        if let Some(p) = &mut self.pending {
            match vote {
                Some((d, sum_t, n)) if d == p.direction && bin.index == p.last_bin + 1 => {
                    p.sum_t += sum_t;
                    p.n += n;
                    p.last_bin = bin.index;
                    return;
                }
                _ => self.emit(out),
            }
        }
        if let Some((direction, sum_t, n)) = vote {
            self.pending = Some(Pending {
                direction,
                sum_t,
                n,
                last_bin: bin.index,
            });
        }
    }

    fn emit(&mut self, out: &mut Vec<Transition>) {
        let Some(p) = self.pending.take() else {
            return;
        };
        let t = Transition {
            time_us: p.sum_t / p.n as f64,
            direction: p.direction,
        };
        // a repeated direction this soon is the tail of the same edge
        if let Some(last) = self.last {
            if last.direction == t.direction && t.time_us - last.time_us < self.period_us {
                return;
            }
        }
        self.last = Some(t);
        out.push(t);
    }
}
