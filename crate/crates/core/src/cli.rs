//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data
//! error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::events::{read_stream, write_stream, GroundTruth, Scene, StreamFormat};
use crate::pipeline::{self, PipelineConfig, RunMode};
use crate::protocol::{align_frame, bits_to_string, encode_frame, parse_bits, Alignment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "blinkid",
    version,
    about = "Identify blinking beacons in event-camera streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scene file into an event stream and ground truth.
    Simulate(SimulateArgs),
    /// Run the identification pipeline and write a JSON report.
    Run(RunArgs),
    /// Measure decode and pipeline throughput.
    Bench(BenchArgs),
    /// Frame codec utilities.
    #[command(subcommand)]
    Protocol(ProtocolCommand),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Output stream; `.bin` selects the binary format, anything else CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the format implied by the extension of `--out`.
    #[arg(long)]
    format: Option<StreamFormat>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Overrides the `mode` key of the config file.
    #[arg(long)]
    mode: Option<RunMode>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ProtocolCommand {
    /// Print the 11-bit frame of a payload.
    Encode {
        #[arg(long)]
        payload: u32,
    },
    /// Align an 11-bit window and print its payload.
    Decode {
        #[arg(long)]
        bits: String,
    },
}

/// Runs the CLI with the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI writing to the given streams; `args[0]` is the program name.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a, out),
        Command::Run(a) => run_pipeline(a, out),
        Command::Bench(a) => bench(a, out),
        Command::Protocol(ProtocolCommand::Encode { payload }) => {
            writeln!(out, "{}", bits_to_string(&encode_frame(payload)?))?;
            Ok(())
        }
        Command::Protocol(ProtocolCommand::Decode { bits }) => {
            match align_frame(&parse_bits(&bits)?)? {
                Alignment::Aligned { payload, .. } => {
                    writeln!(out, "{payload}")?;
                    Ok(())
                }
                Alignment::NoStartCode => Err(Error::InvalidParam(
                    "NoStartCode: no rotation holds a valid frame".into(),
                )),
                Alignment::Ambiguous => Err(Error::InvalidParam(
                    "Ambiguous: rotations validate with different payloads".into(),
                )),
            }
        }
    }
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{}:{}", path.display(), e.line()), e.to_string()))
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let (stream, truth) = scene.simulate(a.seed)?;
    let format = a.format.unwrap_or_else(|| StreamFormat::from_path(&a.out));
    write_stream(&stream, &a.out, format)?;
    fs::write(&a.truth, truth.to_json()?)?;
    writeln!(
        out,
        "wrote {} events ({}x{}, {:.3} s) to {}",
        stream.len(),
        stream.width,
        stream.height,
        scene.duration_s,
        a.out.display()
    )?;
    Ok(())
}

fn run_pipeline(a: RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(mode) = a.mode {
        cfg.mode = mode;
    }
    let stream = read_stream(&a.events)?;
    let truth = match &a.truth {
        Some(p) => Some(GroundTruth::from_json(&fs::read_to_string(p)?)?),
        None => None,
    };
    let report = pipeline::run(&stream, truth.as_ref(), &cfg)?;
    fs::write(&a.report, report.to_json()?)?;
    write!(out, "{}", report.metrics_csv())?;
    Ok(())
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = PipelineConfig::load(&a.config)?;
    let stream = read_stream(&a.events)?;
    let b = pipeline::bench(&stream, &cfg)?;
    writeln!(out, "events {}", b.events)?;
    writeln!(out, "decode {:.0} events/s", b.decode_rate())?;
    writeln!(out, "pipeline {:.0} events/s", b.pipeline_rate())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("blinkid").chain(args.iter().copied());
        let code = run_with(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn encode() {
        assert_eq!(
            call(&["protocol", "encode", "--payload", "42"]),
            (0, "11101010100\n".into(), String::new())
        );
    }

    #[test]
    fn encode_out_of_range_is_data_error() {
        let (code, _, err) = call(&["protocol", "encode", "--payload", "64"]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.contains("64"));
    }

    #[test]
    fn decode_rotation() {
        let (code, out, _) = call(&["protocol", "decode", "--bits", "01010100111"]);
        assert_eq!((code, out.as_str()), (0, "42\n"));
    }

    #[test]
    fn decode_without_start_code() {
        let (code, _, err) = call(&["protocol", "decode", "--bits", "00000111101"]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.contains("NoStartCode"));
    }

    #[test]
    fn decode_bad_length_is_data_error() {
        assert_eq!(call(&["protocol", "decode", "--bits", "1110"]).0, EXIT_DATA);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(
            call(&["protocol", "encode", "--payload", "42", "--bogus"]).0,
            EXIT_USAGE
        );
        assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(call(&["protocol", "encode"]).0, EXIT_USAGE);
        assert_eq!(call(&[]).0, EXIT_USAGE);
    }

    #[test]
    fn help_is_success() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("simulate"));
    }

    #[test]
    fn missing_file_is_data_error() {
        let (code, _, err) = call(&[
            "bench",
            "--events",
            "/nonexistent/e.csv",
            "--config",
            "/nonexistent/c.cfg",
        ]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.starts_with("error:"));
    }
}
