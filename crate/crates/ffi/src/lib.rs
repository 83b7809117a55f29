//! C ABI over the `blinkid` library.
//!
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`BlinkidStatus`]; the message of the last failure on the calling thread
//! is available from [`blinkid_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use blinkid::events::{read_stream, Event, EventStream};
use blinkid::pipeline::{run, PipelineConfig, RunReport};
use blinkid::protocol::{align_frame, encode_frame, Alignment, FRAME_BITS};
use blinkid::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlinkidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    NoStartCode = 5,
    Ambiguous = 6,
    /// The requested item does not exist.
    NoValue = 7,
    Panic = 99,
}

/// Event stream handle.
pub struct BlinkidStream(EventStream);

/// Pipeline configuration handle.
pub struct BlinkidConfig(PipelineConfig);

/// Run report handle.
pub struct BlinkidReport(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> BlinkidStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) => BlinkidStatus::Parse,
        Error::Io(_) => BlinkidStatus::Io,
        _ => BlinkidStatus::InvalidArgument,
    }
}

fn fail(status: BlinkidStatus, msg: impl Into<String>) -> BlinkidStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> BlinkidStatus) -> BlinkidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(BlinkidStatus::Panic, "panic inside blinkid"),
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, BlinkidStatus> {
    if s.is_null() {
        return Err(fail(BlinkidStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(BlinkidStatus::InvalidArgument, "string argument is not UTF-8"))
}

/// Message of the last error on this thread; empty if none. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn blinkid_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Number of bits in a frame.
#[no_mangle]
pub extern "C" fn blinkid_frame_bits() -> usize {
    FRAME_BITS
}

/// Writes the 11 frame bits of `payload` (0 or 1 each, MSB first) to `out`.
///
/// # Safety
/// `out` must point to at least 11 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn blinkid_encode_frame(payload: u32, out: *mut u8) -> BlinkidStatus {
    guard(|| {
        if out.is_null() {
            return fail(BlinkidStatus::NullPointer, "null output buffer");
        }
        match encode_frame(payload) {
            Ok(bits) => {
                for (i, b) in bits.iter().enumerate() {
                    *out.add(i) = *b as u8;
                }
                BlinkidStatus::Ok
            }
            Err(e) => fail(BlinkidStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Aligns an 11-bit cyclic window (bytes 0 or 1) and writes its payload.
///
/// # Safety
/// `bits` must point to `len` readable bytes; `payload` must be writable.
#[no_mangle]
pub unsafe extern "C" fn blinkid_align_frame(bits: *const u8, len: usize, payload: *mut u8) -> BlinkidStatus {
    guard(|| {
        if bits.is_null() || payload.is_null() {
            return fail(BlinkidStatus::NullPointer, "null argument");
        }
        let raw = std::slice::from_raw_parts(bits, len);
        if raw.iter().any(|&b| b > 1) {
            return fail(BlinkidStatus::InvalidArgument, "bits must be 0 or 1");
        }
        let window: Vec<bool> = raw.iter().map(|&b| b == 1).collect();
        match align_frame(&window) {
            Ok(Alignment::Aligned { payload: p, .. }) => {
                *payload = p;
                BlinkidStatus::Ok
            }
            Ok(Alignment::NoStartCode) => fail(BlinkidStatus::NoStartCode, "no rotation holds a valid frame"),
            Ok(Alignment::Ambiguous) => fail(BlinkidStatus::Ambiguous, "rotations validate with different payloads"),
            Err(e) => fail(BlinkidStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Creates an empty stream for a `width` x `height` sensor.
#[no_mangle]
pub extern "C" fn blinkid_stream_new(width: u32, height: u32) -> *mut BlinkidStream {
    Box::into_raw(Box::new(BlinkidStream(EventStream::new(width, height, Vec::new()))))
}

/// Reads a CSV or binary stream file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn blinkid_stream_load(path: *const c_char, out: *mut *mut BlinkidStream) -> BlinkidStatus {
    guard(|| {
        if out.is_null() {
            return fail(BlinkidStatus::NullPointer, "null output handle");
        }
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_stream(path) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(BlinkidStream(s)));
                BlinkidStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Appends an event. Events must be pushed in time order.
///
/// # Safety
/// `stream` must be a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn blinkid_stream_push(
    stream: *mut BlinkidStream,
    t_us: u64,
    x: u16,
    y: u16,
    p: i8,
) -> BlinkidStatus {
    guard(|| {
        let Some(s) = stream.as_mut() else {
            return fail(BlinkidStatus::NullPointer, "null stream");
        };
        if p != 1 && p != -1 {
            return fail(BlinkidStatus::InvalidArgument, "polarity must be 1 or -1");
        }
        if x as u32 >= s.0.width || y as u32 >= s.0.height {
            return fail(BlinkidStatus::InvalidArgument, "event outside the sensor");
        }
        if s.0.events.last().is_some_and(|e| e.t_us > t_us) {
            return fail(BlinkidStatus::InvalidArgument, "events must be pushed in time order");
        }
        s.0.events.push(Event::new(t_us, x, y, p));
        BlinkidStatus::Ok
    })
}

/// Number of events in the stream; 0 for a null handle.
///
/// # Safety
/// `stream` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn blinkid_stream_len(stream: *const BlinkidStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `stream` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn blinkid_stream_free(stream: *mut BlinkidStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

/// Creates a configuration with default parameters.
#[no_mangle]
pub extern "C" fn blinkid_config_new() -> *mut BlinkidConfig {
    Box::into_raw(Box::new(BlinkidConfig(PipelineConfig::default())))
}

/// Sets one `key = value` entry, using the config file keys.
///
/// # Safety
/// `config` must be a handle from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn blinkid_config_set(
    config: *mut BlinkidConfig,
    key: *const c_char,
    value: *const c_char,
) -> BlinkidStatus {
    guard(|| {
        let Some(c) = config.as_mut() else {
            return fail(BlinkidStatus::NullPointer, "null config");
        };
        let (key, value) = match (str_arg(key), str_arg(value)) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let mut next = c.0.clone();
        if let Err(e) = next.set(key, value, 0) {
            return fail(status_of(&e), e.to_string());
        }
        if let Err(e) = next.validate() {
            return fail(status_of(&e), e.to_string());
        }
        c.0 = next;
        BlinkidStatus::Ok
    })
}

/// Loads a `key = value` config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn blinkid_config_load(path: *const c_char, out: *mut *mut BlinkidConfig) -> BlinkidStatus {
    guard(|| {
        if out.is_null() {
            return fail(BlinkidStatus::NullPointer, "null output handle");
        }
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match PipelineConfig::load(path) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(BlinkidConfig(c)));
                BlinkidStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `config` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn blinkid_config_free(config: *mut BlinkidConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the pipeline without ground truth.
///
/// # Safety
/// `stream` and `config` must be handles from this library; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn blinkid_run(
    stream: *const BlinkidStream,
    config: *const BlinkidConfig,
    out: *mut *mut BlinkidReport,
) -> BlinkidStatus {
    guard(|| {
        let (Some(s), Some(c)) = (stream.as_ref(), config.as_ref()) else {
            return fail(BlinkidStatus::NullPointer, "null stream or config");
        };
        if out.is_null() {
            return fail(BlinkidStatus::NullPointer, "null output handle");
        }
        match run(&s.0, None, &c.0) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(BlinkidReport(r)));
                BlinkidStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Number of tracks Valid at the end of the run.
///
/// # Safety
/// `report` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn blinkid_report_valid_tracks(report: *const BlinkidReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.valid_tracks)
}

/// Payload of the `index`-th identification (track Valid at the end).
///
/// # Safety
/// `report` must be a handle from this library; `track_id` and `payload`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn blinkid_report_identification(
    report: *const BlinkidReport,
    index: usize,
    track_id: *mut u64,
    payload: *mut u8,
) -> BlinkidStatus {
    guard(|| {
        let Some(r) = report.as_ref() else {
            return fail(BlinkidStatus::NullPointer, "null report");
        };
        if track_id.is_null() || payload.is_null() {
            return fail(BlinkidStatus::NullPointer, "null output");
        }
        match r.0.identifications.get(index) {
            Some(&(id, p)) => {
                *track_id = id;
                *payload = p;
                BlinkidStatus::Ok
            }
            None => fail(BlinkidStatus::NoValue, format!("no identification {index}")),
        }
    })
}

/// Report as JSON. Release with [`blinkid_string_free`].
///
/// # Safety
/// `report` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn blinkid_report_json(report: *const BlinkidReport) -> *mut c_char {
    let Some(r) = report.as_ref() else {
        set_error("null report");
        return ptr::null_mut();
    };
    match catch_unwind(AssertUnwindSafe(|| r.0.to_json())) {
        Ok(Ok(s)) => CString::new(s).map_or(ptr::null_mut(), CString::into_raw),
        Ok(Err(e)) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
        Err(_) => {
            set_error("panic inside blinkid");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn blinkid_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `report` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn blinkid_report_free(report: *mut BlinkidReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(blinkid_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn encode_and_align() {
        let mut bits = [0u8; 11];
        assert_eq!(unsafe { blinkid_encode_frame(42, bits.as_mut_ptr()) }, BlinkidStatus::Ok);
        assert_eq!(bits, [1, 1, 1, 0, 1, 0, 1, 0, 1, 0, 0]);
        bits.rotate_left(5);
        let mut p = 0u8;
        assert_eq!(unsafe { blinkid_align_frame(bits.as_ptr(), 11, &mut p) }, BlinkidStatus::Ok);
        assert_eq!(p, 42);
    }

    #[test]
    fn codec_errors() {
        let mut bits = [0u8; 11];
        assert_eq!(unsafe { blinkid_encode_frame(64, bits.as_mut_ptr()) }, BlinkidStatus::InvalidArgument);
        assert!(last_error().contains("64"));
        let none = [0u8, 0, 0, 0, 0, 1, 1, 1, 1, 0, 1];
        let mut p = 0u8;
        assert_eq!(unsafe { blinkid_align_frame(none.as_ptr(), 11, &mut p) }, BlinkidStatus::NoStartCode);
        assert_eq!(unsafe { blinkid_align_frame(none.as_ptr(), 4, &mut p) }, BlinkidStatus::InvalidArgument);
        assert_eq!(unsafe { blinkid_encode_frame(1, ptr::null_mut()) }, BlinkidStatus::NullPointer);
    }

    #[test]
    fn push_validation() {
        let s = blinkid_stream_new(4, 4);
        unsafe {
            assert_eq!(blinkid_stream_push(s, 10, 1, 1, 1), BlinkidStatus::Ok);
            assert_eq!(blinkid_stream_push(s, 5, 1, 1, 1), BlinkidStatus::InvalidArgument);
            assert_eq!(blinkid_stream_push(s, 11, 4, 1, 1), BlinkidStatus::InvalidArgument);
            assert_eq!(blinkid_stream_push(s, 11, 1, 1, 0), BlinkidStatus::InvalidArgument);
            assert_eq!(blinkid_stream_len(s), 1);
            blinkid_stream_free(s);
        }
    }

    #[test]
    fn config_set_rejects_unknown_and_invalid() {
        let c = blinkid_config_new();
        unsafe {
            assert_eq!(blinkid_config_set(c, c"flow_mode".as_ptr(), c"off".as_ptr()), BlinkidStatus::Parse);
            assert_eq!(blinkid_config_set(c, c"tracker.flow_mode".as_ptr(), c"off".as_ptr()), BlinkidStatus::Ok);
            assert_eq!(blinkid_config_set(c, c"f_beacon".as_ptr(), c"-1".as_ptr()), BlinkidStatus::InvalidArgument);
            blinkid_config_free(c);
        }
    }
}
