//! File ingestion (WAV audio, grayscale image lines) and the scalogram CSV
//! format: one row per scale, `N` columns, with the bank description JSON
//! embedded in a header comment.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Result, ScaloprError};
use crate::spectral::{analytic_project, AnalyticSignal, Signal};
use crate::wavelet::{BankDescriptor, Scalogram};

fn io_err(path: &Path, source: std::io::Error) -> ScaloprError {
    ScaloprError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn bad_file(path: &Path, message: impl Into<String>) -> ScaloprError {
    ScaloprError::BadFile {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Zero-mean, unit-norm, analytic projection of raw real samples. The flag
/// is set when the input is (numerically) constant.
fn normalize_real(samples: &[f64]) -> (AnalyticSignal, bool) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let centered: Vec<Complex64> = samples
        .iter()
        .map(|&v| Complex64::new(v - mean, 0.0))
        .collect();
    let f = analytic_project(&Signal::new(centered).expect("finite"));
    let norm = f.norm();
    if norm <= 1e-12 * (mean.abs() + 1.0) {
        return (
            analytic_project(&Signal::zeros(n)),
            true,
        );
    }
    (f.scaled(Complex64::new(1.0 / norm, 0.0)), false)
}

/// Reads `n` samples starting at `offset` from a 16-bit PCM WAV file
/// (stereo is downmixed by averaging), normalized to zero mean and unit
/// norm. The flag marks a degenerate (constant) segment.
pub fn ingest_wav(path: impl AsRef<Path>, offset: usize, n: usize) -> Result<(AnalyticSignal, bool)> {
    let path = path.as_ref();
    if n < 8 {
        return Err(ScaloprError::invalid("segment length must be at least 8"));
    }
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| bad_file(path, format!("cannot open WAV: {e}")))?;
    let spec = reader.spec();
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(bad_file(path, "only 16-bit PCM WAV is supported"));
    }
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(bad_file(path, "only mono or stereo WAV is supported"));
    }
    let frames = reader.len() as usize / channels;
    if offset + n > frames {
        return Err(bad_file(
            path,
            format!("segment {offset}..{} out of range ({frames} frames)", offset + n),
        ));
    }
    let raw: Vec<i16> = reader
        .samples::<i16>()
        .skip(offset * channels)
        .take(n * channels)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad_file(path, format!("cannot decode samples: {e}")))?;
    let samples: Vec<f64> = raw
        .chunks(channels)
        .map(|frame| frame.iter().map(|&s| s as f64).sum::<f64>() / channels as f64)
        .collect();
    Ok(normalize_real(&samples))
}

/// Reads row `row` of a grayscale image (PGM or PNG), truncated to its
/// first `n` pixels, normalized to zero mean and unit norm. The flag marks
/// a degenerate (constant) row.
pub fn ingest_image_line(
    path: impl AsRef<Path>,
    row: usize,
    n: usize,
) -> Result<(AnalyticSignal, bool)> {
    let path = path.as_ref();
    if n < 8 {
        return Err(ScaloprError::invalid("line length must be at least 8"));
    }
    let img = image::open(path)
        .map_err(|e| bad_file(path, format!("cannot open image: {e}")))?
        .into_luma8();
    let (width, height) = img.dimensions();
    if row >= height as usize {
        return Err(bad_file(path, format!("row {row} out of range (height {height})")));
    }
    if n > width as usize {
        return Err(bad_file(path, format!("line length {n} exceeds width {width}")));
    }
    let samples: Vec<f64> = (0..n)
        .map(|x| img.get_pixel(x as u32, row as u32).0[0] as f64 / 255.0)
        .collect();
    Ok(normalize_real(&samples))
}

/// Serializes a scalogram to CSV with the bank JSON in a `#` header comment.
pub fn scalogram_to_csv(g: &Scalogram) -> String {
    let bank = serde_json::to_string(g.descriptor()).expect("descriptor serializes");
    let mut out = format!("# bank: {bank}\n");
    for row in g.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses the CSV produced by [`scalogram_to_csv`].
pub fn scalogram_from_csv(text: &str, context: impl AsRef<Path>) -> Result<Scalogram> {
    let path = context.as_ref();
    let mut descriptor: Option<BankDescriptor> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(json) = rest.trim().strip_prefix("bank:") {
                descriptor = Some(
                    serde_json::from_str(json.trim())
                        .map_err(|e| bad_file(path, format!("bad bank JSON: {e}")))?,
                );
            }
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| bad_file(path, format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    let descriptor =
        descriptor.ok_or_else(|| bad_file(path, "missing '# bank:' header comment"))?;
    Scalogram::new(rows, descriptor)
}

/// Writes a scalogram CSV file.
pub fn save_scalogram_csv(g: &Scalogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scalogram_to_csv(g)).map_err(|e| io_err(path, e))
}

/// Reads a scalogram CSV file.
pub fn load_scalogram_csv(path: impl AsRef<Path>) -> Result<Scalogram> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    scalogram_from_csv(&text, path)
}
