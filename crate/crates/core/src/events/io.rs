use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Event, EventStream};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t_us,x,y,p";
pub const BIN_MAGIC: &[u8; 4] = b"EVS1";
/// u64 timestamp + u16 x + u16 y + i8 polarity, packed.
pub const BIN_RECORD_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Csv,
    Bin,
}

impl StreamFormat {
    /// Picks the format from a file extension; anything but `.bin` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("evs") => StreamFormat::Bin,
            _ => StreamFormat::Csv,
        }
    }
}

impl FromStr for StreamFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(StreamFormat::Csv),
            "bin" => Ok(StreamFormat::Bin),
            other => Err(Error::InvalidParam(format!(
                "unknown stream format {other:?}"
            ))),
        }
    }
}

pub fn write_stream(
    stream: &EventStream,
    path: impl AsRef<Path>,
    format: StreamFormat,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stream_to(stream, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn write_stream_to<W: Write>(
    stream: &EventStream,
    w: &mut W,
    format: StreamFormat,
) -> Result<()> {
    match format {
        StreamFormat::Csv => {
            writeln!(w, "{CSV_HEADER}")?;
            for e in &stream.events {
                writeln!(w, "{},{},{},{}", e.t_us, e.x, e.y, e.p)?;
            }
        }
        StreamFormat::Bin => {
            w.write_all(BIN_MAGIC)?;
            w.write_all(&stream.width.to_le_bytes())?;
            w.write_all(&stream.height.to_le_bytes())?;
            let mut rec = [0u8; BIN_RECORD_LEN];
            for e in &stream.events {
                rec[0..8].copy_from_slice(&e.t_us.to_le_bytes());
                rec[8..10].copy_from_slice(&e.x.to_le_bytes());
                rec[10..12].copy_from_slice(&e.y.to_le_bytes());
                rec[12] = e.p as u8;
                w.write_all(&rec)?;
            }
        }
    }
    Ok(())
}

/// Reads a stream, detecting the binary format by its magic bytes.
pub fn read_stream(path: impl AsRef<Path>) -> Result<EventStream> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_stream_from(&bytes)
}

pub fn read_stream_from(bytes: &[u8]) -> Result<EventStream> {
    if bytes.starts_with(BIN_MAGIC) {
        read_bin(bytes)
    } else {
        read_csv(bytes)
    }
}

fn read_bin(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < 12 {
        return Err(Error::parse("offset 4", "truncated header"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let body = &bytes[12..];
    if !body.len().is_multiple_of(BIN_RECORD_LEN) {
        let offset = 12 + body.len() / BIN_RECORD_LEN * BIN_RECORD_LEN;
        return Err(Error::parse(
            format!("offset {offset}"),
            "truncated event record",
        ));
    }
    let mut events = Vec::with_capacity(body.len() / BIN_RECORD_LEN);
    for (i, rec) in body.chunks_exact(BIN_RECORD_LEN).enumerate() {
        let p = rec[12] as i8;
        if p != 1 && p != -1 {
            let offset = 12 + i * BIN_RECORD_LEN + 12;
            return Err(Error::parse(
                format!("offset {offset}"),
                format!("polarity {p} not in {{1,-1}}"),
            ));
        }
        events.push(Event {
            t_us: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            x: u16::from_le_bytes(rec[8..10].try_into().unwrap()),
            y: u16::from_le_bytes(rec[10..12].try_into().unwrap()),
            p,
        });
    }
    let stream = EventStream::new(width, height, events);
    stream.validate()?;
    Ok(stream)
}

fn field<T: FromStr>(parts: &[&str], idx: usize, name: &str, line: usize) -> Result<T> {
    parts[idx].trim().parse().map_err(|_| {
        Error::parse(
            format!("line {line}"),
            format!("invalid {name} {:?}", parts[idx]),
        )
    })
}

fn read_csv(bytes: &[u8]) -> Result<EventStream> {
    let mut lines = BufReader::new(bytes).lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::parse(
            "line 1",
            format!("expected header {CSV_HEADER:?}"),
        ));
    }
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::parse(
                format!("line {lineno}"),
                format!("expected 4 fields, found {}", parts.len()),
            ));
        }
        let p: i8 = field(&parts, 3, "polarity", lineno)?;
        if p != 1 && p != -1 {
            return Err(Error::parse(
                format!("line {lineno}"),
                format!("polarity {p} not in {{1,-1}}"),
            ));
        }
        events.push(Event {
            t_us: field(&parts, 0, "timestamp", lineno)?,
            x: field(&parts, 1, "x", lineno)?,
            y: field(&parts, 2, "y", lineno)?,
            p,
        });
    }
    let stream = EventStream::from_events(events);
    stream.validate()?;
    Ok(stream)
}
