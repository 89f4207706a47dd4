//! Experiment drivers: noise sweeps over signal classes and methods, the
//! stability study (error-on-modulus vs error-on-signal scatter plus the
//! per-scale phase-difference map), and deterministic CSV emission.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baseline::{gs_classic, gs_multiscale, GsInit};
use crate::error::{Result, ScaloprError};
use crate::io::{ingest_image_line, ingest_wav};
use crate::par;
use crate::recon::{reconstruct, ReconConfig};
use crate::signals::{add_noise, gen_gaussian_process, gen_sparse_sinusoids, metrics};
use crate::spectral::{convolve_spectrum, AnalyticSignal};
use crate::wavelet::{scalogram, AuxiliaryBank, Scalogram, WaveletFamily};

/// Which signal family a study draws from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SignalClassConfig {
    GaussianProcess,
    SparseSinusoids { prob: f64 },
    ImageLine { path: String, row: usize },
    AudioWav { path: String, offset: usize },
}

impl SignalClassConfig {
    pub fn label(&self) -> String {
        match self {
            SignalClassConfig::GaussianProcess => "gaussian".into(),
            SignalClassConfig::SparseSinusoids { .. } => "sparse".into(),
            SignalClassConfig::ImageLine { .. } => "image".into(),
            SignalClassConfig::AudioWav { .. } => "audio".into(),
        }
    }

    /// File-backed classes produce the same signal for every seed; the seed
    /// then only drives the noise.
    pub fn generate(&self, n: usize, seed: u64) -> Result<AnalyticSignal> {
        match self {
            SignalClassConfig::GaussianProcess => gen_gaussian_process(n, seed),
            SignalClassConfig::SparseSinusoids { prob } => {
                gen_sparse_sinusoids(n, *prob, seed).map(|(f, _)| f)
            }
            SignalClassConfig::ImageLine { path, row } => {
                ingest_image_line(path, *row, n).map(|(f, _)| f)
            }
            SignalClassConfig::AudioWav { path, offset } => {
                ingest_wav(path, *offset, n).map(|(f, _)| f)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Multiscale,
    GsClassic,
    GsMultiscale,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Multiscale => "multiscale",
            Method::GsClassic => "gs_classic",
            Method::GsMultiscale => "gs_multiscale",
        }
    }
}

fn default_seeds() -> usize {
    20
}
fn default_methods() -> Vec<Method> {
    vec![Method::Multiscale, Method::GsClassic, Method::GsMultiscale]
}
fn default_gs_iters() -> usize {
    600
}
fn default_gs_iters_per_scale() -> usize {
    200
}
fn default_neg_log_r() -> f64 {
    0.006
}

/// Noise-sweep experiment configuration (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub signal: SignalClassConfig,
    pub n: usize,
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub recon: Option<ReconConfig>,
    #[serde(default = "default_gs_iters")]
    pub gs_iters: usize,
    #[serde(default = "default_gs_iters_per_scale")]
    pub gs_iters_per_scale: usize,
    /// −ln r for the auxiliary wavelets.
    #[serde(default = "default_neg_log_r")]
    pub neg_log_r: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() || self.n < 16 {
            return Err(ScaloprError::config("n must be a power of two, at least 16"));
        }
        if self.noise_levels.is_empty() {
            return Err(ScaloprError::config("noise_levels must be nonempty"));
        }
        if self.noise_levels.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(ScaloprError::config("noise levels must be nonnegative and finite"));
        }
        if self.seeds == 0 {
            return Err(ScaloprError::config("seeds must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(ScaloprError::config("methods must be nonempty"));
        }
        if self.neg_log_r <= 0.0 {
            return Err(ScaloprError::config("neg_log_r must be positive"));
        }
        if self.gs_iters == 0 || self.gs_iters_per_scale == 0 {
            return Err(ScaloprError::config("iteration budgets must be at least 1"));
        }
        if let SignalClassConfig::SparseSinusoids { prob } = &self.signal {
            if !(0.0..1.0).contains(prob) {
                return Err(ScaloprError::config("sparse activation prob must be in [0, 1)"));
            }
        }
        if let Some(recon) = &self.recon {
            recon.validate()?;
        }
        Ok(())
    }
}

/// One reconstruction trial's outcome.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub signal_class: String,
    pub n: usize,
    pub method: String,
    pub seed: u64,
    pub noise_target: f64,
    pub noise_amount: f64,
    pub recon_error: f64,
    pub signal_error: f64,
    pub wall_time: f64,
    pub flags: String,
}

/// Deterministic records CSV (wall time deliberately excluded so reruns are
/// byte-identical; timings go to [`timings_csv`]).
pub fn records_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(
        "signal_class,n,method,seed,noise_target,noise_amount,recon_error,signal_error,flags\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
            r.signal_class,
            r.n,
            r.method,
            r.seed,
            r.noise_target,
            r.noise_amount,
            r.recon_error,
            r.signal_error,
            r.flags
        ));
    }
    out
}

/// Wall-clock times, keyed like the records CSV.
pub fn timings_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("method,seed,noise_target,wall_time\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:.17e},{:.6}\n",
            r.method, r.seed, r.noise_target, r.wall_time
        ));
    }
    out
}

fn noise_seed(base: u64, level_idx: usize, trial: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((level_idx as u64) << 32)
        .wrapping_add(trial as u64)
}

fn run_trial(
    cfg: &ExperimentConfig,
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
    method: Method,
    level_idx: usize,
    trial: usize,
) -> Result<TrialRecord> {
    let seed = cfg.base_seed + trial as u64;
    let f = cfg.signal.generate(cfg.n, seed)?;
    let g = scalogram(&f, family)?;
    let target = cfg.noise_levels[level_idx];
    let noisy = add_noise(&g, target, noise_seed(cfg.base_seed, level_idx, trial))?;
    let start = std::time::Instant::now();
    let (f_rec, flags) = match method {
        Method::Multiscale => {
            let recon_cfg = cfg.recon.clone().unwrap_or_default();
            let res = reconstruct(noisy.rows(), family, aux, &recon_cfg)?;
            (res.f_rec, res.flags.join(";"))
        }
        Method::GsClassic => {
            let noisy_g = Scalogram::new(noisy.rows().to_vec(), family.descriptor(None))?;
            let res = gs_classic(&noisy_g, family, GsInit::Random { seed }, cfg.gs_iters)?;
            (res.f_rec, res.flags.join(";"))
        }
        Method::GsMultiscale => {
            let noisy_g = Scalogram::new(noisy.rows().to_vec(), family.descriptor(None))?;
            let res = gs_multiscale(&noisy_g, family, cfg.gs_iters_per_scale)?;
            (res.f_rec, res.flags.join(";"))
        }
    };
    let wall_time = start.elapsed().as_secs_f64();
    let (recon_error, signal_error) = metrics(&f, &f_rec, family)?;
    Ok(TrialRecord {
        signal_class: cfg.signal.label(),
        n: cfg.n,
        method: method.label().into(),
        seed,
        noise_target: target,
        noise_amount: noisy.amount(),
        recon_error,
        signal_error,
        wall_time,
        flags,
    })
}

/// Runs the full grid {method × noise level × seed}; trials run in parallel
/// and the records come back in a fixed deterministic order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let family = WaveletFamily::dyadic_morlet(cfg.n)?;
    let aux = AuxiliaryBank::build(&family, (-cfg.neg_log_r).exp())?;
    let cells: Vec<(Method, usize, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&m| {
            (0..cfg.noise_levels.len())
                .flat_map(move |li| (0..cfg.seeds).map(move |t| (m, li, t)))
        })
        .collect();
    let results: Vec<Result<TrialRecord>> = par::map_indexed(cells.len(), |i| {
        let (m, li, t) = cells[i];
        run_trial(cfg, &family, &aux, m, li, t)
    });
    results.into_iter().collect()
}

/// Stability study configuration (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub signal: SignalClassConfig,
    pub n: usize,
    pub noise: f64,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub recon: Option<ReconConfig>,
    #[serde(default = "default_neg_log_r")]
    pub neg_log_r: f64,
    /// Emit the per-(scale, sample) phase-difference map of the first trial.
    #[serde(default)]
    pub phase_map: bool,
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        ExperimentConfig {
            signal: self.signal.clone(),
            n: self.n,
            noise_levels: vec![self.noise],
            seeds: self.seeds,
            base_seed: self.base_seed,
            methods: vec![Method::Multiscale],
            recon: self.recon.clone(),
            gs_iters: 1,
            gs_iters_per_scale: 1,
            neg_log_r: self.neg_log_r,
        }
        .validate()
    }
}

/// Stability study output: scatter of (reconstruction error, signal error),
/// the smallest stability constant covering all points, and optionally the
/// phase-difference map of the first trial.
pub struct StabilityOutput {
    pub records: Vec<TrialRecord>,
    /// max over trials of signal_error / recon_error (how much worse the
    /// signal can be than its measurements suggest).
    pub worst_ratio: f64,
    /// Rows j, columns n: |phase(f_rec⋆ψ_j) − phase(f⋆ψ_j)| in radians;
    /// NaN where the modulus is too small for the phase to be meaningful.
    pub phase_map: Option<Vec<Vec<f64>>>,
}

/// Phase-difference map between the transforms of two signals, masked
/// (NaN) where the reference modulus is below `1e-3` of its row maximum.
pub fn phase_difference_map(
    f: &AnalyticSignal,
    f_rec: &AnalyticSignal,
    family: &WaveletFamily,
) -> Vec<Vec<f64>> {
    // remove the global-phase gauge first
    let inner: Complex64 = f_rec
        .values()
        .iter()
        .zip(f.values())
        .map(|(r, t)| t * r.conj())
        .sum();
    let gauge = if inner.norm() > 0.0 {
        Complex64::from_polar(1.0, inner.arg())
    } else {
        Complex64::new(1.0, 0.0)
    };
    (0..family.len())
        .map(|j| {
            let c_true = convolve_spectrum(f.values(), family.filter(j).coeffs());
            let c_rec = convolve_spectrum(f_rec.values(), family.filter(j).coeffs());
            let max = c_true.iter().map(|v| v.norm()).fold(0.0, f64::max);
            c_true
                .iter()
                .zip(&c_rec)
                .map(|(t, r)| {
                    if t.norm() < 1e-3 * max || r.norm() == 0.0 {
                        f64::NAN
                    } else {
                        (r * gauge / t).arg().abs()
                    }
                })
                .collect()
        })
        .collect()
}

/// Phase map CSV: one row per scale; masked cells are empty.
pub fn phase_map_csv(map: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in map {
        let cells: Vec<String> = row
            .iter()
            .map(|v| {
                if v.is_nan() {
                    String::new()
                } else {
                    format!("{v:.17e}")
                }
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Runs the stability study.
pub fn run_stability(cfg: &StabilityConfig) -> Result<StabilityOutput> {
    cfg.validate()?;
    let family = WaveletFamily::dyadic_morlet(cfg.n)?;
    let aux = AuxiliaryBank::build(&family, (-cfg.neg_log_r).exp())?;
    let exp_cfg = ExperimentConfig {
        signal: cfg.signal.clone(),
        n: cfg.n,
        noise_levels: vec![cfg.noise],
        seeds: cfg.seeds,
        base_seed: cfg.base_seed,
        methods: vec![Method::Multiscale],
        recon: cfg.recon.clone(),
        gs_iters: 1,
        gs_iters_per_scale: 1,
        neg_log_r: cfg.neg_log_r,
    };
    let records = run_experiment(&exp_cfg)?;
    let worst_ratio = records
        .iter()
        .filter(|r| r.recon_error > 0.0)
        .map(|r| r.signal_error / r.recon_error)
        .fold(0.0, f64::max);
    let phase_map = if cfg.phase_map {
        let f = cfg.signal.generate(cfg.n, cfg.base_seed)?;
        let g = scalogram(&f, &family)?;
        let noisy = add_noise(&g, cfg.noise, noise_seed(cfg.base_seed, 0, 0))?;
        let recon_cfg = cfg.recon.clone().unwrap_or_default();
        let res = reconstruct(noisy.rows(), &family, &aux, &recon_cfg)?;
        Some(phase_difference_map(&f, &res.f_rec, &family))
    } else {
        None
    };
    Ok(StabilityOutput {
        records,
        worst_ratio,
        phase_map,
    })
}

/// Scatter CSV for the stability study.
pub fn scatter_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("seed,recon_error,signal_error\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.17e},{:.17e}\n",
            r.seed, r.recon_error, r.signal_error
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> ExperimentConfig {
        ExperimentConfig {
            signal: SignalClassConfig::GaussianProcess,
            n: 32,
            noise_levels: vec![0.0],
            seeds: 2,
            base_seed: 5,
            methods: vec![Method::GsMultiscale],
            recon: None,
            gs_iters: 5,
            gs_iters_per_scale: 5,
            neg_log_r: 0.006,
        }
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let cfg = quick_cfg();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.n, cfg.n);
        back.validate().unwrap();
        // defaults fill in
        let minimal: ExperimentConfig = serde_json::from_str(
            r#"{"signal":{"kind":"GaussianProcess"},"n":64,"noise_levels":[0.01]}"#,
        )
        .unwrap();
        assert_eq!(minimal.seeds, 20);
        assert_eq!(minimal.methods.len(), 3);
        minimal.validate().unwrap();
        // violations rejected with descriptive errors before any trial
        let mut bad = quick_cfg();
        bad.n = 48;
        assert!(bad.validate().is_err());
        bad = quick_cfg();
        bad.noise_levels = vec![];
        assert!(bad.validate().is_err());
        bad = quick_cfg();
        bad.noise_levels = vec![-0.1];
        assert!(bad.validate().is_err());
        bad = quick_cfg();
        bad.seeds = 0;
        assert!(bad.validate().is_err());
        bad = quick_cfg();
        bad.methods = vec![];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn records_are_deterministic_and_csv_stable() {
        let cfg = quick_cfg();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(records_csv(&a), records_csv(&b));
        assert!(records_csv(&a).starts_with(
            "signal_class,n,method,seed,noise_target,noise_amount,recon_error,signal_error,flags\n"
        ));
        for r in &a {
            assert!(r.recon_error >= 0.0 && r.signal_error >= 0.0);
            assert_eq!(r.signal_class, "gaussian");
        }
        // timings CSV carries one line per record plus header
        assert_eq!(timings_csv(&a).lines().count(), a.len() + 1);
    }

    #[test]
    fn noise_amount_matches_target() {
        let mut cfg = quick_cfg();
        cfg.noise_levels = vec![1e-2];
        let records = run_experiment(&cfg).unwrap();
        for r in &records {
            assert!((r.noise_amount - 1e-2).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_map_masks_small_moduli() {
        let n = 64;
        let family = WaveletFamily::dyadic_morlet(n).unwrap();
        let f = gen_gaussian_process(n, 2).unwrap();
        let map = phase_difference_map(&f, &f, &family);
        assert_eq!(map.len(), family.len());
        for row in &map {
            assert_eq!(row.len(), n);
            for v in row {
                // identical signals: phase difference zero wherever defined
                assert!(v.is_nan() || v.abs() < 1e-9);
            }
        }
        // masked cells exist (coarse scales have near-zero moduli somewhere)
        let csv = phase_map_csv(&map);
        assert_eq!(csv.lines().count(), family.len());
        // gauge invariance: rotating one input leaves the map unchanged
        let rotated = f.scaled(Complex64::from_polar(1.0, 1.1));
        let map2 = phase_difference_map(&f, &rotated, &family);
        for (r1, r2) in map.iter().zip(&map2) {
            for (a, b) in r1.iter().zip(r2) {
                assert!(a.is_nan() == b.is_nan());
                if !a.is_nan() {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn stability_outputs_ratio_and_scatter() {
        let cfg = StabilityConfig {
            signal: SignalClassConfig::GaussianProcess,
            n: 32,
            noise: 0.0,
            seeds: 2,
            base_seed: 1,
            recon: Some(ReconConfig {
                max_iters: 50,
                gs_polish_iters: 5,
                ..ReconConfig::default()
            }),
            neg_log_r: 0.006,
            phase_map: false,
        };
        let out = run_stability(&cfg).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.worst_ratio >= 0.0);
        assert!(out.phase_map.is_none());
        let csv = scatter_csv(&out.records);
        assert_eq!(csv.lines().count(), 3);
    }
}
