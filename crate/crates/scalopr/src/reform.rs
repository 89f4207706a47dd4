//! The Q_j spectra, the signed-index polynomial extension, and the
//! factorization identity `(f⋆ψ_j^low)·conj(f⋆ψ_j^high) = Q_j` as a
//! checkable residual.

use num_complex::Complex64;

use crate::error::{Result, ScaloprError};
use crate::spectral::{
    bin_of, dft, dft_raw, idft_raw, signed_bins, AnalyticSignal, Signal,
};
use crate::wavelet::{weighted_bin, AuxiliaryBank, Scalogram, WaveletFamily};

/// Spectral magnitudes below this fraction of the peak are zeroed before the
/// `r_j^k` weighting, to cap noise amplification at negative indices.
pub const Q_FLOOR_REL: f64 = 1e-14;

/// Floor used in normalized residuals so the zero-measurement case is
/// well-defined.
pub const RESIDUAL_EPS: f64 = 1e-30;

/// One `Q_j` per scale, with the radii used to build them.
#[derive(Debug, Clone)]
pub struct QSpectra {
    q: Vec<Signal>,
    r_j: Vec<f64>,
}

impl QSpectra {
    pub fn from_scalogram(g: &Scalogram, aux: &AuxiliaryBank) -> Result<Self> {
        if g.scales() != aux.len() {
            return Err(ScaloprError::LengthMismatch {
                expected: aux.len(),
                got: g.scales(),
            });
        }
        let q = (0..g.scales())
            .map(|j| compute_q_masked(g.row(j), aux.r_j(j), q_band(aux, j)))
            .collect::<Result<Vec<_>>>()?;
        let r_j = (0..aux.len()).map(|j| aux.r_j(j)).collect();
        Ok(QSpectra { q, r_j })
    }

    /// Builds from raw (possibly noisy, possibly negative) modulus rows.
    pub fn from_rows(rows: &[Vec<f64>], aux: &AuxiliaryBank) -> Result<Self> {
        if rows.len() != aux.len() {
            return Err(ScaloprError::LengthMismatch {
                expected: aux.len(),
                got: rows.len(),
            });
        }
        let q = rows
            .iter()
            .enumerate()
            .map(|(j, row)| compute_q_masked(row, aux.r_j(j), q_band(aux, j)))
            .collect::<Result<Vec<_>>>()?;
        let r_j = (0..aux.len()).map(|j| aux.r_j(j)).collect();
        Ok(QSpectra { q, r_j })
    }

    pub fn q(&self, j: usize) -> &Signal {
        &self.q[j]
    }

    pub fn r_j(&self, j: usize) -> f64 {
        self.r_j[j]
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `Σ_j ||Q_j||²`, the natural normalization for objective values.
    pub fn norm_sqr(&self) -> f64 {
        self.q.iter().map(|q| q.norm().powi(2)).sum()
    }
}

/// `Q̂_j[k mod N] = r_j^k (ĝ_j²)[k mod N]` over the signed index range.
pub fn compute_q(g_j: &[f64], r_j: f64) -> Result<Signal> {
    if !(0.0 < r_j && r_j < 1.0) {
        return Err(ScaloprError::invalid("r_j must lie strictly between 0 and 1"));
    }
    Ok(compute_q_with_radius(g_j, r_j))
}

/// Relative filter magnitude below which a tail bin no longer counts toward
/// the attainable band of `ĝ_j²`. Deliberately far below
/// [`SUPPORT_REL_THRESHOLD`] so that truncating `Q̂_j` to the band loses only
/// content at the `1e-12` level of the squared modulus.
const Q_BAND_REL_THRESHOLD: f64 = 1e-12;

/// Signed half-width of the band that `ĝ_j²` can occupy for a consistent
/// measurement: the spectrum of `|f⋆ψ_j|²` lives on the difference set of the
/// filter support. The `r^{±k}` weights cancel in `|ψ̂_j^low·ψ̂_j^high| = |ψ̂_j|²`,
/// so the plain filter support can be read back off the auxiliary bank.
fn q_band(aux: &AuxiliaryBank, j: usize) -> usize {
    let prod: Vec<f64> = aux
        .low(j)
        .coeffs()
        .iter()
        .zip(aux.high(j).coeffs())
        .map(|(l, h)| l.norm() * h.norm())
        .collect();
    let max = prod.iter().cloned().fold(0.0, f64::max);
    let thresh = Q_BAND_REL_THRESHOLD * Q_BAND_REL_THRESHOLD * max;
    let lo = prod.iter().position(|&v| v > thresh);
    let hi = prod.iter().rposition(|&v| v > thresh);
    match (lo, hi) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => prod.len(),
    }
}

/// [`compute_q`] restricted to signed bins `|k| <= band`. Out-of-band bins of
/// a noisy `ĝ_j²` carry pure noise that the `r_j^k` weighting would amplify by
/// as much as `r_j^{-(N/2-1)}`, which dwarfs everything else at coarse scales;
/// a consistent measurement has no energy there, so they are dropped.
fn compute_q_masked(g_j: &[f64], r_j: f64, band: usize) -> Result<Signal> {
    if !(0.0 < r_j && r_j < 1.0) {
        return Err(ScaloprError::invalid("r_j must lie strictly between 0 and 1"));
    }
    let n = g_j.len();
    let sq: Vec<Complex64> = g_j.iter().map(|&v| Complex64::new(v * v, 0.0)).collect();
    let mut spec = dft_raw(&sq);
    let max = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let log_r = r_j.ln();
    let mut weighted = vec![Complex64::new(0.0, 0.0); n];
    for k in signed_bins(n) {
        let bin = bin_of(k, n);
        if k.unsigned_abs() as usize > band || spec[bin].norm() < Q_FLOOR_REL * max {
            spec[bin] = Complex64::new(0.0, 0.0);
        }
        weighted[bin] = weighted_bin(spec[bin], log_r, k as f64);
    }
    Signal::new(idft_raw(&weighted))
}

/// Same as [`compute_q`] but accepts `r_j = 1`, where `Q_j = g_j²` exactly.
pub(crate) fn compute_q_with_radius(g_j: &[f64], r_j: f64) -> Signal {
    let n = g_j.len();
    let sq: Vec<Complex64> = g_j.iter().map(|&v| Complex64::new(v * v, 0.0)).collect();
    let mut spec = dft_raw(&sq);
    // g² is real, so its spectrum is Hermitian
    debug_assert!({
        let max = spec.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
        (1..n).all(|k| (spec[k] - spec[n - k].conj()).norm() <= 1e-9 * max)
    });
    let max = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let log_r = r_j.ln();
    let mut weighted = vec![Complex64::new(0.0, 0.0); n];
    for k in signed_bins(n) {
        let bin = bin_of(k, n);
        if spec[bin].norm() < Q_FLOOR_REL * max {
            spec[bin] = Complex64::new(0.0, 0.0);
        }
        weighted[bin] = weighted_bin(spec[bin], log_r, k as f64);
    }
    Signal::new(idft_raw(&weighted)).expect("finite")
}

/// `P(h)(z) = Σ_{k=⌊N/2⌋-N+1}^{⌊N/2⌋} ĥ[k mod N] z^k`.
pub fn poly_extension(h: &Signal, z: Complex64) -> Result<Complex64> {
    let n = h.len();
    let spec = dft(h);
    if z.norm() == 0.0 {
        let has_negative = signed_bins(n)
            .filter(|&k| k < 0)
            .any(|k| spec.coeffs()[bin_of(k, n)].norm() > 0.0);
        if has_negative {
            return Err(ScaloprError::invalid(
                "z = 0 with nonzero negative-index coefficients",
            ));
        }
    }
    let half = (n / 2) as i64;
    // nonnegative part by Horner in z
    let mut pos = Complex64::new(0.0, 0.0);
    for k in (0..=half).rev() {
        pos = pos * z + spec.coeffs()[bin_of(k, n)];
    }
    // negative part by Horner in 1/z
    let mut neg = Complex64::new(0.0, 0.0);
    if half - (n as i64) + 1 < 0 {
        let zinv = Complex64::new(1.0, 0.0) / z;
        for k in half - n as i64 + 1..0 {
            neg = (neg + spec.coeffs()[bin_of(k, n)]) * zinv;
        }
        // after the loop, neg = Σ_{k<0} ĥ[k] z^k
    }
    Ok(pos + neg)
}

/// Per-scale normalized residual of the factorization identity.
pub fn reformulation_residual(
    f: &AnalyticSignal,
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
    q: &QSpectra,
) -> Result<Vec<f64>> {
    if family.n() != f.len() || q.len() != aux.len() {
        return Err(ScaloprError::invalid("inconsistent sizes"));
    }
    Ok((0..aux.len())
        .map(|j| {
            let low = crate::spectral::convolve_spectrum(f.values(), aux.low(j).coeffs());
            let high = crate::spectral::convolve_spectrum(f.values(), aux.high(j).coeffs());
            scale_residual(&low, &high, q.q(j))
        })
        .collect())
}

pub(crate) fn scale_residual(low: &[Complex64], high: &[Complex64], q: &Signal) -> f64 {
    let diff: f64 = low
        .iter()
        .zip(high)
        .zip(q.values())
        .map(|((l, h), qv)| (l * h.conj() - qv).norm_sqr())
        .sum();
    diff.sqrt() / q.norm().max(RESIDUAL_EPS)
}

/// Auxiliary components `(f⋆ψ_j^low, f⋆ψ_j^high)` of a candidate signal.
pub fn auxiliary_components(f: &AnalyticSignal, aux: &AuxiliaryBank, j: usize) -> (Signal, Signal) {
    let low = crate::spectral::convolve_spectrum(f.values(), aux.low(j).coeffs());
    let high = crate::spectral::convolve_spectrum(f.values(), aux.high(j).coeffs());
    (
        Signal::new(low).expect("finite"),
        Signal::new(high).expect("finite"),
    )
}

/// Builds `Q_j` directly from a signal, i.e. from `g_j = |f⋆ψ_j|`.
pub fn q_from_signal(
    f: &AnalyticSignal,
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
) -> Result<QSpectra> {
    let g = crate::wavelet::scalogram(f, family)?;
    QSpectra::from_scalogram(&g, aux)
}
