//! Command line front-end: forward transforms, reconstruction, and the
//! experiment/stability drivers.
//!
//! Exit codes: 0 success, 2 configuration error, 3 IO error, 4 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scalopr::experiment::{
    phase_map_csv, records_csv, run_experiment, run_stability, scatter_csv, timings_csv,
    ExperimentConfig, StabilityConfig,
};
use scalopr::io::{ingest_image_line, ingest_wav, load_scalogram_csv, save_scalogram_csv};
use scalopr::recon::{reconstruct, ReconConfig};
use scalopr::spectral::AnalyticSignal;
use scalopr::wavelet::{scalogram, AuxiliaryBank, BankDescriptor, Scalogram, WaveletFamily};
use scalopr::ScaloprError;

const DEFAULT_NEG_LOG_R: f64 = 0.006;

#[derive(Parser)]
#[command(name = "scalopr", about = "Scalogram phase retrieval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the scalogram of a signal file (WAV or grayscale image).
    Transform {
        /// Input file: .wav (16-bit PCM) or .pgm/.png (one row is taken)
        input: PathBuf,
        /// Filter bank description JSON file
        #[arg(long)]
        bank: PathBuf,
        /// Output scalogram CSV
        #[arg(short, long)]
        output: PathBuf,
        /// Sample offset into a WAV file
        #[arg(long, default_value_t = 0)]
        offset: usize,
        /// Row index into an image file
        #[arg(long, default_value_t = 0)]
        row: usize,
    },
    /// Reconstruct a signal from a scalogram CSV (or a WAV round trip).
    Reconstruct {
        /// Input: scalogram .csv (bank read from its header) or .wav
        input: PathBuf,
        /// Filter bank JSON; required for WAV input, overrides CSV header
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Reconstruction parameters JSON (defaults if omitted)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output JSON (reconstructed signal + diagnostics)
        #[arg(short, long)]
        output: PathBuf,
        /// Sample offset into a WAV file
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
    /// Run a noise-sweep experiment from a config JSON.
    Experiment {
        config: PathBuf,
        /// Output directory (records.csv, timings.csv)
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the stability study from a config JSON.
    Stability {
        config: PathBuf,
        /// Output directory (scatter.csv, summary.json, phase_map.csv)
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn exit_code_for(err: &ScaloprError) -> u8 {
    match err {
        ScaloprError::Config(_) | ScaloprError::InvalidArgument(_) => 2,
        ScaloprError::Io { .. } | ScaloprError::BadFile { .. } => 3,
        _ => 4,
    }
}

fn io_err(path: &Path, source: std::io::Error) -> ScaloprError {
    ScaloprError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, ScaloprError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        ScaloprError::config(format!("{what} {}: {e}", path.display()))
    })
}

fn write_file(path: &Path, content: &str) -> Result<(), ScaloprError> {
    std::fs::write(path, content).map_err(|e| io_err(path, e))
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .map(|e| e.eq_ignore_ascii_case(ext))
        .unwrap_or(false)
}

fn load_signal(
    path: &Path,
    n: usize,
    offset: usize,
    row: usize,
) -> Result<(AnalyticSignal, bool), ScaloprError> {
    if has_extension(path, "wav") {
        ingest_wav(path, offset, n)
    } else {
        ingest_image_line(path, row, n)
    }
}

fn run(cli: Cli) -> Result<(), ScaloprError> {
    match cli.command {
        Command::Transform {
            input,
            bank,
            output,
            offset,
            row,
        } => {
            let descriptor: BankDescriptor = read_json(&bank, "bank JSON")?;
            let family = descriptor.build_family()?;
            let (f, degenerate) = load_signal(&input, family.n(), offset, row)?;
            if degenerate {
                eprintln!("warning: input segment is constant; transforming the zero signal");
            }
            let g = scalogram(&f, &family)?;
            save_scalogram_csv(&g, &output)
        }
        Command::Reconstruct {
            input,
            bank,
            config,
            output,
            offset,
        } => {
            let cfg: ReconConfig = match &config {
                Some(path) => read_json(path, "reconstruction config")?,
                None => ReconConfig::default(),
            };
            cfg.validate()?;
            let g: Scalogram = if has_extension(&input, "csv") {
                let g = load_scalogram_csv(&input)?;
                match &bank {
                    Some(path) => {
                        let descriptor: BankDescriptor = read_json(path, "bank JSON")?;
                        Scalogram::new(g.rows().to_vec(), descriptor)?
                    }
                    None => g,
                }
            } else {
                let path = bank.ok_or_else(|| {
                    ScaloprError::config("--bank is required for non-CSV input")
                })?;
                let descriptor: BankDescriptor = read_json(&path, "bank JSON")?;
                let family = descriptor.build_family()?;
                let (f, _) = load_signal(&input, family.n(), offset, 0)?;
                scalogram(&f, &family)?
            };
            let family: WaveletFamily = g.descriptor().build_family()?;
            let r = g
                .descriptor()
                .r
                .unwrap_or_else(|| (-DEFAULT_NEG_LOG_R).exp());
            let aux = AuxiliaryBank::build(&family, r)?;
            let result = reconstruct(g.rows(), &family, &aux, &cfg)?;
            write_file(&output, &serde_json::to_string_pretty(&result.to_json()).expect("json"))
        }
        Command::Experiment { config, output } => {
            let cfg: ExperimentConfig = read_json(&config, "experiment config")?;
            cfg.validate()?;
            let records = run_experiment(&cfg)?;
            std::fs::create_dir_all(&output).map_err(|e| io_err(&output, e))?;
            write_file(&output.join("records.csv"), &records_csv(&records))?;
            write_file(&output.join("timings.csv"), &timings_csv(&records))
        }
        Command::Stability { config, output } => {
            let cfg: StabilityConfig = read_json(&config, "stability config")?;
            cfg.validate()?;
            let out = run_stability(&cfg)?;
            std::fs::create_dir_all(&output).map_err(|e| io_err(&output, e))?;
            write_file(&output.join("scatter.csv"), &scatter_csv(&out.records))?;
            let summary = serde_json::json!({
                "trials": out.records.len(),
                "worst_signal_to_recon_ratio": out.worst_ratio,
            });
            write_file(
                &output.join("summary.json"),
                &serde_json::to_string_pretty(&summary).expect("json"),
            )?;
            if let Some(map) = &out.phase_map {
                write_file(&output.join("phase_map.csv"), &phase_map_csv(map))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
