//! The multiscale reconstruction pipeline: exhaustive initialization at the
//! two coarsest scales, per-scale phase propagation by deconvolution, local
//! refinement, windowed error correction, high-component recovery, frame
//! inversion, and a final Gerchberg-Saxton polish.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScaloprError};
use crate::opt::{minimize, ObjectiveConfig, OptState};
use crate::reform::QSpectra;
use crate::smallsolve::{resolve_pair_banded, windowed_exhaustive};
use crate::spectral::{
    analytic_project, convolve_spectrum, dft, dft_raw, idft_raw, regularized_deconvolve,
    AnalyticSignal, Signal, Spectrum,
};
use crate::wavelet::{weighted_bin, AuxiliaryBank, Scalogram, WaveletFamily, SUPPORT_REL_THRESHOLD};

/// Spectral support size of the truncated filters used by the windowed
/// error-correction solves.
pub const EC_TRUNC_SUPPORT: usize = 12;

fn default_lambda() -> f64 {
    crate::opt::LAMBDA_DEFAULT
}
fn default_mu() -> f64 {
    crate::opt::MU_DEFAULT
}
fn default_max_iters() -> usize {
    crate::opt::MAX_ITERS_DEFAULT
}
fn default_grad_tol() -> f64 {
    crate::opt::GRAD_TOL_DEFAULT
}
fn default_deconv_eps() -> f64 {
    1e-6
}
fn default_highdiv_eps() -> f64 {
    1e-6
}
fn default_error_correction() -> bool {
    true
}
fn default_ec_residual_factor() -> f64 {
    5.0
}
// The final Gerchberg–Saxton polish converges linearly from the assembled
// estimate and each step is cheap, so the default budget is generous: the
// local refinements leave a flat-valley residual that the polish removes.
fn default_gs_polish_iters() -> usize {
    2000
}

/// Pipeline parameters; every epsilon is relative to the natural scale of
/// the quantity it guards.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_deconv_eps")]
    pub deconv_eps: f64,
    #[serde(default = "default_highdiv_eps")]
    pub highdiv_eps: f64,
    #[serde(default = "default_error_correction")]
    pub error_correction: bool,
    #[serde(default = "default_ec_residual_factor")]
    pub ec_residual_factor: f64,
    #[serde(default = "default_gs_polish_iters")]
    pub gs_polish_iters: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            lambda: default_lambda(),
            mu: default_mu(),
            max_iters: default_max_iters(),
            grad_tol: default_grad_tol(),
            deconv_eps: default_deconv_eps(),
            highdiv_eps: default_highdiv_eps(),
            error_correction: default_error_correction(),
            ec_residual_factor: default_ec_residual_factor(),
            gs_polish_iters: default_gs_polish_iters(),
            rng_seed: 0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.deconv_eps <= 0.0 || self.highdiv_eps <= 0.0 {
            return Err(ScaloprError::config("regularization epsilons must be positive"));
        }
        if self.lambda <= 0.0 || self.mu <= 0.0 {
            return Err(ScaloprError::config("lambda and mu must be positive"));
        }
        if self.ec_residual_factor <= 1.0 {
            return Err(ScaloprError::config("ec_residual_factor must exceed 1"));
        }
        if self.max_iters == 0 {
            return Err(ScaloprError::config("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Per-scale pipeline diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleDiagnostics {
    pub scale: usize,
    pub init_residual: f64,
    pub post_opt_objective: f64,
    pub ec_corrections: usize,
    pub flags: Vec<String>,
}

/// Full pipeline output.
#[derive(Debug, Clone)]
pub struct ReconResult {
    pub f_rec: AnalyticSignal,
    pub diagnostics: Vec<ScaleDiagnostics>,
    pub reconstruction_error: f64,
    pub wall_time: f64,
    pub flags: Vec<String>,
}

impl ReconResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "f_rec_re": self.f_rec.values().iter().map(|c| c.re).collect::<Vec<_>>(),
            "f_rec_im": self.f_rec.values().iter().map(|c| c.im).collect::<Vec<_>>(),
            "diagnostics": self.diagnostics,
            "reconstruction_error": self.reconstruction_error,
            "wall_time": self.wall_time,
            "flags": self.flags,
        })
    }

    /// Diagnostics as CSV rows.
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("scale,init_residual,post_opt_objective,ec_corrections,flags\n");
        for d in &self.diagnostics {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{},{}\n",
                d.scale,
                d.init_residual,
                d.post_opt_objective,
                d.ec_corrections,
                d.flags.join(";")
            ));
        }
        out
    }
}

fn filter_mask(family: &WaveletFamily, j: usize) -> Vec<bool> {
    let coeffs = family.filter(j).coeffs();
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    coeffs
        .iter()
        .map(|c| c.norm() > SUPPORT_REL_THRESHOLD * max)
        .collect()
}

/// Splits a plain-filter component estimate into its low/high auxiliary
/// components by binwise reweighting on the filter support.
pub fn split_components(
    c: &Signal,
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
    j: usize,
) -> (Signal, Signal) {
    let n = c.len();
    let mask = filter_mask(family, j);
    let spec = dft_raw(c.values());
    let log_r = aux.r_j(j).ln();
    let mut low = vec![Complex64::new(0.0, 0.0); n];
    let mut high = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        if mask[k] {
            low[k] = weighted_bin(spec[k], log_r, k as f64);
            high[k] = weighted_bin(spec[k], log_r, -(k as f64));
        }
    }
    (
        Signal::new(idft_raw(&low)).expect("finite"),
        Signal::new(idft_raw(&high)).expect("finite"),
    )
}

/// Inverse of [`split_components`]: averages the two unweightings back to a
/// plain-filter component, masked to the filter support.
pub fn combine_components(
    h_low: &Signal,
    h_high: &Signal,
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
    j: usize,
) -> Signal {
    let n = h_low.len();
    let mask = filter_mask(family, j);
    let low_spec = dft_raw(h_low.values());
    let high_spec = dft_raw(h_high.values());
    let log_r = aux.r_j(j).ln();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        if mask[k] {
            let from_low = weighted_bin(low_spec[k], log_r, -(k as f64));
            let from_high = weighted_bin(high_spec[k], log_r, k as f64);
            out[k] = 0.5 * (from_low + from_high);
        }
    }
    Signal::new(idft_raw(&out)).expect("finite")
}

/// Exhaustive-search initialization of the two coarsest plain components.
/// Returns the estimates and a flag set when the coarse modulus was zero.
pub fn init_coarsest(
    g_coarse: &[f64],
    g_next: &[f64],
    family: &WaveletFamily,
) -> Result<(Signal, Signal, bool)> {
    let n = family.n();
    let all_zero = g_coarse.iter().all(|&v| v == 0.0) && g_next.iter().all(|&v| v == 0.0);
    if all_zero {
        return Ok((Signal::zeros(n), Signal::zeros(n), true));
    }
    let j = family.j_max();
    let res = resolve_pair_banded(g_coarse, family.filter(j), g_next, family.filter(j - 1))?;
    Ok((res.winner.0, res.winner.1, false))
}

/// Estimates `f⋆ψ_j^low` from the already-reconstructed plain components at
/// coarser scales, via regularized deconvolution.
pub fn propagate_phase(
    j: usize,
    components: &[(usize, Signal)],
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
    deconv_eps: f64,
) -> Result<Signal> {
    if components.is_empty() {
        return Err(ScaloprError::invalid("no components to propagate from"));
    }
    let specs: Vec<(Spectrum, &Spectrum)> = components
        .iter()
        .map(|(jc, c)| (dft(c), family.filter(*jc)))
        .collect();
    let pairs: Vec<(&Spectrum, &Spectrum)> = specs.iter().map(|(h, p)| (h, *p)).collect();
    let f_hat = regularized_deconvolve(&pairs, deconv_eps)?;
    let values = convolve_spectrum(
        &idft_raw(f_hat.coeffs()),
        aux.low(j).coeffs(),
    );
    Signal::new(values)
}

/// Regularized version of the modulus-product division that yields the high
/// component from the low one: `conj(Q)·h_low/(|h_low|² + ε·max|h_low|²)`.
pub fn recover_high(h_low: &Signal, q_j: &Signal, highdiv_eps: f64) -> (Signal, bool) {
    let n = h_low.len();
    let max_sqr = h_low
        .values()
        .iter()
        .map(|c| c.norm_sqr())
        .fold(0.0, f64::max);
    if max_sqr == 0.0 {
        return (Signal::zeros(n), true);
    }
    let eps = highdiv_eps * max_sqr;
    let values: Vec<Complex64> = h_low
        .values()
        .iter()
        .zip(q_j.values())
        .map(|(l, q)| q.conj() * l / (l.norm_sqr() + eps))
        .collect();
    (Signal::new(values).expect("finite"), false)
}

/// Cross-consistency residual between the low component at scale `j` and
/// the high component at scale `j+1`.
fn consistency_residual(
    h_low_j: &Signal,
    h_high_j1: &Signal,
    aux: &AuxiliaryBank,
    j: usize,
) -> Vec<Complex64> {
    convolve_spectrum(h_low_j.values(), aux.high(j + 1).coeffs())
        .iter()
        .zip(convolve_spectrum(h_high_j1.values(), aux.low(j).coeffs()))
        .map(|(a, b)| a - b)
        .collect()
}

/// Samples where the cross-scale consistency residual is anomalously large,
/// merged into circular index intervals.
pub fn detect_errors(
    h_low_j: &Signal,
    h_high_j1: &Signal,
    aux: &AuxiliaryBank,
    j: usize,
    ec_residual_factor: f64,
    merge_gap: usize,
) -> Vec<(usize, usize)> {
    let n = h_low_j.len();
    let e = consistency_residual(h_low_j, h_high_j1, aux, j);
    let mags: Vec<f64> = e.iter().map(|c| c.norm()).collect();
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    // absolute guard: uniformly tiny residuals carry no error signal even
    // when some samples exceed the median by a large factor
    let rms = ((h_low_j.norm().powi(2) + h_high_j1.norm().powi(2)) / n as f64).sqrt();
    let floor = 1e-8 * rms;
    let flagged: Vec<bool> = mags
        .iter()
        .map(|&m| m > ec_residual_factor * median && m > floor)
        .collect();
    if !flagged.iter().any(|&f| f) {
        return Vec::new();
    }
    // merge flagged samples into intervals, allowing gaps up to merge_gap
    let mut intervals: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if flagged[i] {
            let start = i;
            let mut end = i;
            let mut k = i + 1;
            let mut gap = 0;
            while k < n && gap <= merge_gap {
                if flagged[k] {
                    end = k;
                    gap = 0;
                } else {
                    gap += 1;
                }
                k += 1;
            }
            intervals.push((start, end));
            i = end + 1;
        } else {
            i += 1;
        }
    }
    // circular merge of first and last
    if intervals.len() >= 2 {
        let first = intervals[0];
        let last = *intervals.last().unwrap();
        if first.0 + (n - 1 - last.1) <= merge_gap {
            intervals[0] = (last.0, first.1 + n); // wrapped interval, end > n-1
            intervals.pop();
        }
    }
    intervals
}

/// Keeps the `width` contiguous bins of largest total magnitude around the
/// filter peak, zeroing the rest.
fn truncate_filter(psi: &Spectrum, width: usize) -> Spectrum {
    let n = psi.len();
    let coeffs = psi.coeffs();
    let peak = (0..n)
        .max_by(|&a, &b| coeffs[a].norm().total_cmp(&coeffs[b].norm()))
        .unwrap_or(1);
    let half = n / 2;
    let lo = peak.saturating_sub(width / 2).max(1);
    let hi = (lo + width - 1).min(half);
    let lo = hi.saturating_sub(width - 1).max(1);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (k, item) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
        *item = coeffs[k];
    }
    Spectrum::new(out)
}

fn hann_window(n: usize, start: usize, len: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for i in 0..len {
        let v = 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / len as f64).cos());
        w[(start + i) % n] = v;
    }
    w
}

/// Window length for the multigrid local solves at scale `j`: the largest
/// power of two such that the filter band, mapped onto the window's own
/// frequency grid, stays within the truncation size.
fn ec_window_length(family: &WaveletFamily, j: usize) -> usize {
    let n = family.n();
    let supp = family
        .support(j)
        .len()
        .max(family.support((j + 1).min(family.j_max())).len())
        .max(1);
    // leave ~4 bins of headroom for the window's own spectral spread
    let budget = EC_TRUNC_SUPPORT.saturating_sub(4).max(1);
    let ideal = (budget * n) / supp;
    let mut l = 8usize;
    while l * 2 <= ideal.min(n) {
        l *= 2;
    }
    l.min(n)
}

/// The filter of scale `j` sampled on the frequency grid of an `l`-point
/// window (multigrid restriction).
fn local_filter(family: &WaveletFamily, j: usize, l: usize) -> Spectrum {
    let ratio = family.n() as f64 / l as f64;
    let dilation = family.dilation().powi(j as i32);
    Spectrum::new(
        (0..l)
            .map(|k| family.mother().evaluate(dilation * k as f64 * ratio))
            .collect(),
    )
}

/// Applies the low/high reweighting to a local-grid filter; the exponent is
/// the frequency in full-grid bins.
fn local_aux_filter(psi_loc: &Spectrum, r_j: f64, ratio: f64, sign: f64) -> Spectrum {
    let log_r = r_j.ln();
    Spectrum::new(
        psi_loc
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, &v)| weighted_bin(v, log_r, sign * k as f64 * ratio))
            .collect(),
    )
}

/// Outcome of one error-correction pass.
pub struct CorrectionOutcome {
    pub h_low_j: Signal,
    pub h_high_j1: Signal,
    pub corrections: usize,
    pub flags: Vec<String>,
}

/// Re-solves the flagged regions locally with truncated filters and blends
/// the phase-aligned local solutions back into the estimates.
#[allow(clippy::too_many_arguments)]
pub fn error_correct(
    j: usize,
    h_low_j: &Signal,
    h_high_j1: &Signal,
    g_j: &[f64],
    g_j1: &[f64],
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
    cfg: &ReconConfig,
) -> Result<CorrectionOutcome> {
    let n = family.n();
    let win_len = ec_window_length(family, j);
    let intervals = detect_errors(h_low_j, h_high_j1, aux, j, cfg.ec_residual_factor, win_len);
    let mut flags = Vec::new();
    if intervals.is_empty() {
        return Ok(CorrectionOutcome {
            h_low_j: h_low_j.clone(),
            h_high_j1: h_high_j1.clone(),
            corrections: 0,
            flags,
        });
    }
    let hop = win_len / 2;
    // flagged-sample membership (intervals may wrap: end can exceed n-1)
    let mut in_interval = vec![false; n];
    for &(s, e) in &intervals {
        for idx in s..=e {
            in_interval[idx % n] = true;
        }
    }
    // windows on the hop grid overlapping any flagged sample
    let starts: Vec<usize> = (0..n.div_ceil(hop))
        .map(|s| s * hop)
        .filter(|&s| (0..win_len).any(|i| in_interval[(s + i) % n]))
        .collect();
    // multigrid: filters restricted to the window's own frequency grid
    let l = win_len;
    let ratio = n as f64 / l as f64;
    let trunc_j = truncate_filter(&local_filter(family, j, l), EC_TRUNC_SUPPORT);
    let trunc_j1 = truncate_filter(&local_filter(family, j + 1, l), EC_TRUNC_SUPPORT);
    let loc_low_j = local_aux_filter(&trunc_j, aux.r_j(j), ratio, 1.0);
    let loc_high_j1 = local_aux_filter(&trunc_j1, aux.r_j(j + 1), ratio, -1.0);
    let w_loc: Vec<f64> = (0..l)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / l as f64).cos()))
        .collect();
    let mut acc_low = vec![Complex64::new(0.0, 0.0); n];
    let mut acc_high = vec![Complex64::new(0.0, 0.0); n];
    let mut acc_w = vec![0.0f64; n];
    let mut corrections = 0usize;
    for &start in &starts {
        let w = hann_window(n, start, win_len);
        let seg_j: Vec<f64> = (0..l).map(|i| g_j[(start + i) % n]).collect();
        let seg_j1: Vec<f64> = (0..l).map(|i| g_j1[(start + i) % n]).collect();
        let res = match windowed_exhaustive(&seg_j, &seg_j1, &w_loc, &trunc_j, &trunc_j1) {
            Ok(r) => r,
            Err(err) => {
                flags.push(format!("scale {j} window {start}: {err}"));
                continue;
            }
        };
        if res.ambiguous_runner_up.is_some() {
            flags.push(format!("scale {j} window {start}: ambiguous local solve"));
            continue;
        }
        let (ca, cb) = res.winner;
        // deconvolve the local pair back to the auxiliary components
        let ca_spec = dft(&ca);
        let cb_spec = dft(&cb);
        let pairs = [(&ca_spec, &trunc_j), (&cb_spec, &trunc_j1)];
        let f_loc = regularized_deconvolve(&pairs, cfg.deconv_eps)?;
        let f_loc_time = idft_raw(f_loc.coeffs());
        let u_loc = convolve_spectrum(&f_loc_time, loc_low_j.coeffs());
        let v_loc = convolve_spectrum(&f_loc_time, loc_high_j1.coeffs());
        // lift the local-grid segments back onto the full circle
        let mut u = vec![Complex64::new(0.0, 0.0); n];
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..l {
            u[(start + i) % n] = u_loc[i];
            v[(start + i) % n] = v_loc[i];
        }
        // align the local solution's free phase against trusted samples:
        // unflagged originals, or already-blended neighbors
        let mut inner = Complex64::new(0.0, 0.0);
        for i in 0..win_len {
            let idx = (start + i) % n;
            if w[idx] == 0.0 {
                continue;
            }
            let (ref_low, ref_high) = if acc_w[idx] > 1e-3 {
                (acc_low[idx] / acc_w[idx], acc_high[idx] / acc_w[idx])
            } else if !in_interval[idx] {
                (h_low_j.values()[idx], h_high_j1.values()[idx])
            } else {
                continue;
            };
            inner += ref_low * u[idx].conj() + ref_high * v[idx].conj();
        }
        let phase = if inner.norm() > 0.0 {
            Complex64::from_polar(1.0, inner.arg())
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..win_len {
            let idx = (start + i) % n;
            acc_low[idx] += phase * u[idx];
            acc_high[idx] += phase * v[idx];
            acc_w[idx] += w[idx];
        }
        corrections += 1;
    }
    // blend: local corrections replace the originals where windows covered
    let mut out_low = h_low_j.values().to_vec();
    let mut out_high = h_high_j1.values().to_vec();
    for idx in 0..n {
        if acc_w[idx] > 0.0 {
            let keep = (1.0 - acc_w[idx]).max(0.0);
            let renorm = acc_w[idx].max(1.0);
            out_low[idx] = keep * out_low[idx] + acc_low[idx] / renorm * acc_w[idx].min(1.0);
            out_high[idx] = keep * out_high[idx] + acc_high[idx] / renorm * acc_w[idx].min(1.0);
        }
    }
    Ok(CorrectionOutcome {
        h_low_j: Signal::new(out_low)?,
        h_high_j1: Signal::new(out_high)?,
        corrections,
        flags,
    })
}

/// Least-squares frame inversion from a subset of plain components.
pub fn assemble_from_pairs(
    pairs: &[(usize, &Signal)],
    family: &WaveletFamily,
    deconv_eps: f64,
) -> AnalyticSignal {
    let n = family.n();
    let mut num = vec![Complex64::new(0.0, 0.0); n];
    let mut den = vec![0.0f64; n];
    for &(j, h) in pairs {
        let h_spec = dft_raw(h.values());
        let psi = family.filter(j).coeffs();
        for k in 0..n {
            num[k] += h_spec[k] * psi[k].conj();
            den[k] += psi[k].norm_sqr();
        }
    }
    let f_hat: Vec<Complex64> = (0..n)
        .map(|k| {
            if den[k] > deconv_eps {
                num[k] / den[k]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    analytic_project(&Signal::new(idft_raw(&f_hat)).expect("finite"))
}

/// Frame inversion from one component per scale.
pub fn assemble_signal(h: &[Signal], family: &WaveletFamily, deconv_eps: f64) -> AnalyticSignal {
    let pairs: Vec<(usize, &Signal)> = h.iter().enumerate().collect();
    assemble_from_pairs(&pairs, family, deconv_eps)
}

/// Alternating modulus/assembly projections. Returns the polished signal
/// and the per-iteration relative modulus error trace.
pub fn gerchberg_saxton_polish(
    f0: &AnalyticSignal,
    rows: &[Vec<f64>],
    family: &WaveletFamily,
    iters: usize,
    deconv_eps: f64,
) -> (AnalyticSignal, Vec<f64>) {
    let n = family.n();
    let g_norm_sqr: f64 = rows.iter().flatten().map(|v| v * v).sum();
    let mut f = f0.clone();
    let mut trace = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut projected: Vec<Signal> = Vec::with_capacity(family.len());
        let mut err_sqr = 0.0;
        for j in 0..family.len() {
            let c = convolve_spectrum(f.values(), family.filter(j).coeffs());
            let max = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let row = &rows[j];
            let proj: Vec<Complex64> = c
                .iter()
                .zip(row)
                .map(|(v, &m)| {
                    err_sqr += (v.norm() - m).powi(2);
                    if v.norm() < 1e-14 * max.max(1e-300) {
                        Complex64::new(m, 0.0)
                    } else {
                        v / v.norm() * m
                    }
                })
                .collect();
            projected.push(Signal::new(proj).expect("finite"));
        }
        trace.push(if g_norm_sqr > 0.0 {
            (err_sqr / g_norm_sqr).sqrt()
        } else {
            0.0
        });
        f = assemble_signal(&projected, family, deconv_eps);
        debug_assert_eq!(f.len(), n);
    }
    (f, trace)
}

/// Keeps the phase of `c` but replaces its modulus with the measured row.
fn project_modulus(c: &Signal, row: &[f64]) -> Signal {
    let max = c.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    Signal::new(
        c.values()
            .iter()
            .zip(row)
            .map(|(v, &m)| {
                if v.norm() < 1e-14 * max.max(1e-300) {
                    Complex64::new(m, 0.0)
                } else {
                    v / v.norm() * m
                }
            })
            .collect(),
    )
    .expect("finite")
}

fn modulus_error(f: &AnalyticSignal, rows: &[Vec<f64>], family: &WaveletFamily) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..family.len() {
        let c = convolve_spectrum(f.values(), family.filter(j).coeffs());
        for (v, &m) in c.iter().zip(&rows[j]) {
            num += (v.norm() - m).powi(2);
            den += m * m;
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// Runs the full pipeline on measured (possibly noisy) modulus rows.
pub fn reconstruct(
    rows: &[Vec<f64>],
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
    cfg: &ReconConfig,
) -> Result<ReconResult> {
    let start_time = std::time::Instant::now();
    cfg.validate()?;
    let n = family.n();
    let j_max = family.j_max();
    if rows.len() != family.len() {
        return Err(ScaloprError::LengthMismatch {
            expected: family.len(),
            got: rows.len(),
        });
    }
    for row in rows {
        if row.len() != n {
            return Err(ScaloprError::LengthMismatch {
                expected: n,
                got: row.len(),
            });
        }
    }
    let mut flags = Vec::new();
    let q = QSpectra::from_rows(rows, aux)?;

    let mut h_low = vec![Signal::zeros(n); family.len()];
    let mut h_high = vec![Signal::zeros(n); family.len()];
    let mut plain = vec![Signal::zeros(n); family.len()];
    let mut diagnostics = Vec::with_capacity(family.len());

    // coarsest two scales by exhaustive search
    let (c_coarse, c_next, zero_flag) = init_coarsest(&rows[j_max], &rows[j_max - 1], family)?;
    if zero_flag {
        flags.push("coarse moduli are zero; starting from zero estimates".into());
    }
    // on noisy rows the small solve can misjudge the effective support and
    // return candidates with wild amplitudes; the measured modulus is known,
    // so snap the estimates back onto it (exact on clean data)
    let c_coarse = project_modulus(&c_coarse, &rows[j_max]);
    let c_next = project_modulus(&c_next, &rows[j_max - 1]);
    let (lo, hi) = split_components(&c_coarse, family, aux, j_max);
    h_low[j_max] = lo;
    h_high[j_max] = hi;
    let (lo, hi) = split_components(&c_next, family, aux, j_max - 1);
    h_low[j_max - 1] = lo;
    h_high[j_max - 1] = hi;
    plain[j_max] = c_coarse;
    plain[j_max - 1] = c_next;

    // joint refinement of the two coarsest scales
    let run_refine = |h_low: &mut Vec<Signal>,
                          h_high: &mut Vec<Signal>,
                          plain: &mut Vec<Signal>,
                          j: usize,
                          max_iters: usize,
                          flags: &mut Vec<String>|
     -> Result<f64> {
        let mut opt_cfg = ObjectiveConfig {
            lambda: cfg.lambda,
            mu: cfg.mu,
            scales_active: (j, j_max),
            scales_free: (j, (j + 1).min(j_max)),
            max_iters,
            grad_tol: cfg.grad_tol,
        };
        if max_iters == 0 {
            opt_cfg.max_iters = 1;
        }
        let avail: Vec<(usize, &Signal)> =
            (j..=j_max).map(|jc| (jc, &plain[jc])).collect();
        let f_init = assemble_from_pairs(&avail, family, cfg.deconv_eps);
        let state = OptState {
            h_low: h_low.clone(),
            h_high: h_high.clone(),
            f: f_init,
        };
        let out = minimize(&q, aux, state, &opt_cfg)?;
        if out.line_search_failed {
            flags.push(format!("scale {j}: line search stalled"));
        }
        *h_low = out.state.h_low;
        *h_high = out.state.h_high;
        for jc in j..=j_max {
            plain[jc] = combine_components(&h_low[jc], &h_high[jc], family, aux, jc);
        }
        Ok(out.value)
    };

    let init_res_coarse = scale_residual_rel(&h_low[j_max], &h_high[j_max], &q, j_max);
    let value = run_refine(
        &mut h_low,
        &mut h_high,
        &mut plain,
        j_max - 1,
        cfg.max_iters,
        &mut flags,
    )?;
    diagnostics.push(ScaleDiagnostics {
        scale: j_max,
        init_residual: init_res_coarse,
        post_opt_objective: value,
        ec_corrections: 0,
        flags: Vec::new(),
    });
    diagnostics.push(ScaleDiagnostics {
        scale: j_max - 1,
        init_residual: scale_residual_rel(&h_low[j_max - 1], &h_high[j_max - 1], &q, j_max - 1),
        post_opt_objective: value,
        ec_corrections: 0,
        flags: Vec::new(),
    });

    for j in (0..=j_max.saturating_sub(2)).rev() {
        let mut scale_flags = Vec::new();
        let components: Vec<(usize, Signal)> =
            ((j + 1)..=j_max).map(|jc| (jc, plain[jc].clone())).collect();
        h_low[j] = propagate_phase(j, &components, family, aux, cfg.deconv_eps)?;
        // the regularized deconvolution can amplify noise far beyond the
        // measured energy; the true low component has roughly the energy of
        // the measured row, so cap the estimate there
        let row_norm = rows[j].iter().map(|m| m * m).sum::<f64>().sqrt();
        let low_norm = h_low[j].norm();
        if low_norm > 2.0 * row_norm && row_norm > 0.0 {
            h_low[j] = h_low[j].scaled(Complex64::new(2.0 * row_norm / low_norm, 0.0));
            scale_flags.push("propagated low component rescaled".into());
        }
        let (hh, hh_flag) = recover_high(&h_low[j], q.q(j), cfg.highdiv_eps);
        h_high[j] = hh;
        if hh_flag {
            scale_flags.push("low component vanished during high recovery".into());
        }
        let init_residual = scale_residual_rel(&h_low[j], &h_high[j], &q, j);
        let mut value = run_refine(
            &mut h_low,
            &mut h_high,
            &mut plain,
            j,
            cfg.max_iters,
            &mut flags,
        )?;
        let mut ec_corrections = 0;
        if cfg.error_correction {
            let outcome = error_correct(
                j,
                &h_low[j],
                &h_high[j + 1],
                &rows[j],
                &rows[j + 1],
                family,
                aux,
                cfg,
            )?;
            ec_corrections = outcome.corrections;
            scale_flags.extend(outcome.flags);
            if ec_corrections > 0 {
                h_low[j] = outcome.h_low_j;
                h_high[j + 1] = outcome.h_high_j1;
                value = run_refine(
                    &mut h_low,
                    &mut h_high,
                    &mut plain,
                    j,
                    (cfg.max_iters / 4).max(1),
                    &mut flags,
                )?;
            }
        }
        // Enforce the measured product where the division is well
        // conditioned; keep the refined estimate where the regularization
        // bias would dominate.
        let (hh, _) = recover_high(&h_low[j], q.q(j), cfg.highdiv_eps);
        let max_sqr = h_low[j]
            .values()
            .iter()
            .map(|c| c.norm_sqr())
            .fold(0.0, f64::max);
        let floor = 1e3 * cfg.highdiv_eps * max_sqr;
        let blended: Vec<Complex64> = h_low[j]
            .values()
            .iter()
            .zip(hh.values().iter().zip(h_high[j].values()))
            .map(|(l, (divided, refined))| {
                if l.norm_sqr() >= floor {
                    *divided
                } else {
                    *refined
                }
            })
            .collect();
        h_high[j] = Signal::new(blended).expect("finite");
        plain[j] = combine_components(&h_low[j], &h_high[j], family, aux, j);
        diagnostics.push(ScaleDiagnostics {
            scale: j,
            init_residual,
            post_opt_objective: value,
            ec_corrections,
            flags: scale_flags,
        });
    }

    let f0 = assemble_signal(&plain, family, cfg.deconv_eps);
    let (mut f_rec, _gs_trace) =
        gerchberg_saxton_polish(&f0, rows, family, cfg.gs_polish_iters, cfg.deconv_eps);
    let mut reconstruction_error = modulus_error(&f_rec, rows, family);
    // The polish can stall in a Gerchberg–Saxton fixed point when the
    // assembled estimate is marginal; the coarse-to-fine projection pass is
    // a robust independent candidate, and the measured modulus error picks
    // the better of the two without reference to ground truth.
    if cfg.gs_polish_iters > 0 {
        let g = Scalogram::new(rows.to_vec(), family.descriptor(None))?;
        if let Ok(alt) = crate::baseline::gs_multiscale(&g, family, cfg.gs_polish_iters) {
            if alt.reconstruction_error < reconstruction_error {
                if reconstruction_error > 2.0 * alt.reconstruction_error {
                    flags.push("polish stalled; kept coarse-to-fine projection result".into());
                }
                f_rec = alt.f_rec;
                reconstruction_error = alt.reconstruction_error;
            }
        }
    }
    Ok(ReconResult {
        f_rec,
        diagnostics,
        reconstruction_error,
        wall_time: start_time.elapsed().as_secs_f64(),
        flags,
    })
}

/// Relative product-matching residual of one scale's pair.
fn scale_residual_rel(h_low: &Signal, h_high: &Signal, q: &QSpectra, j: usize) -> f64 {
    let qn = q.q(j).norm();
    if qn == 0.0 {
        return 0.0;
    }
    let res: f64 = h_low
        .values()
        .iter()
        .zip(h_high.values())
        .zip(q.q(j).values())
        .map(|((l, h), qv)| (l * h.conj() - qv).norm_sqr())
        .sum::<f64>()
        .sqrt();
    res / qn
}
