//! Deterministic DFT/IDFT, circular convolution, analytic projection and
//! regularized spectral deconvolution.
//!
//! The forward transform is unnormalized, the inverse carries the `1/N`
//! factor. Any length `N >= 4` is supported; powers of two are fastest.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, ScaloprError};

/// Smallest signal length the pipeline supports.
pub const MIN_LEN: usize = 4;

/// Relative tolerance on the upper half-spectrum of an analytic signal.
pub const EPS_ANALYTIC: f64 = 1e-12;

/// Length-N complex sequence in the time domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<Complex64>,
}

/// Length-N complex sequence indexed by DFT bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    coeffs: Vec<Complex64>,
}

/// A signal whose spectrum vanishes on bins `N/2 < k <= N-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSignal(Signal);

impl Signal {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.len() < MIN_LEN {
            return Err(ScaloprError::invalid(format!(
                "signal length {} below minimum {MIN_LEN}",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(ScaloprError::invalid("signal contains non-finite entries"));
        }
        Ok(Signal { values })
    }

    pub fn zeros(n: usize) -> Self {
        Signal {
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Signal::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Entrywise modulus.
    pub fn modulus(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn scaled(&self, c: Complex64) -> Signal {
        Signal {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

impl Spectrum {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Spectrum { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        Spectrum {
            coeffs: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Pointwise product of two spectra.
    pub fn product(&self, other: &Spectrum) -> Spectrum {
        assert_eq!(self.len(), other.len());
        Spectrum {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

impl AnalyticSignal {
    /// Validates the analyticity invariant without modifying the signal.
    pub fn try_new(signal: Signal) -> Result<Self> {
        let spec = dft(&signal);
        let max = spec.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        let n = signal.len();
        for k in (n / 2 + 1)..n {
            if spec.coeffs()[k].norm() > EPS_ANALYTIC * max {
                return Err(ScaloprError::invalid(format!(
                    "upper half-spectrum not negligible at bin {k}"
                )));
            }
        }
        Ok(AnalyticSignal(signal))
    }

    pub fn signal(&self) -> &Signal {
        &self.0
    }

    pub fn into_signal(self) -> Signal {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        self.0.values()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scaled(&self, c: Complex64) -> AnalyticSignal {
        AnalyticSignal(self.0.scaled(c))
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans_for(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

pub(crate) fn dft_raw(values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    plans_for(values.len()).forward.process(&mut buf);
    buf
}

pub(crate) fn idft_raw(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len();
    let mut buf = coeffs.to_vec();
    plans_for(n).inverse.process(&mut buf);
    let scale = 1.0 / n as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Forward DFT: `f̂[k] = Σ_n f[n] e^{-2πikn/N}`.
pub fn dft(f: &Signal) -> Spectrum {
    Spectrum::new(dft_raw(f.values()))
}

/// Inverse DFT, with the `1/N` factor.
pub fn idft(spectrum: &Spectrum) -> Signal {
    Signal {
        values: idft_raw(spectrum.coeffs()),
    }
}

/// Circular convolution via the spectral product.
pub fn circular_convolve(f: &Signal, g: &Signal) -> Result<Signal> {
    if f.len() != g.len() {
        return Err(ScaloprError::LengthMismatch {
            expected: f.len(),
            got: g.len(),
        });
    }
    let prod = dft(f).product(&dft(g));
    Ok(idft(&prod))
}

pub(crate) fn convolve_spectrum(f: &[Complex64], filter_hat: &[Complex64]) -> Vec<Complex64> {
    let mut spec = dft_raw(f);
    for (s, h) in spec.iter_mut().zip(filter_hat) {
        *s *= h;
    }
    idft_raw(&spec)
}

pub(crate) fn zero_upper_half(coeffs: &mut [Complex64]) {
    let n = coeffs.len();
    for c in coeffs.iter_mut().take(n).skip(n / 2 + 1) {
        *c = Complex64::new(0.0, 0.0);
    }
}

/// Zeroes the spectrum on bins `N/2 < k <= N-1`.
pub fn analytic_project(f: &Signal) -> AnalyticSignal {
    let mut coeffs = dft_raw(f.values());
    zero_upper_half(&mut coeffs);
    AnalyticSignal(Signal {
        values: idft_raw(&coeffs),
    })
}

/// Least-squares estimate of `f̂` from measurement/filter spectrum pairs.
///
/// Returns `(Σ ĥ·conj(ψ̂)) / (Σ |ψ̂|² + eps)`, with bins where the
/// accumulated filter energy falls below `eps` set to zero.
pub fn regularized_deconvolve(pairs: &[(&Spectrum, &Spectrum)], eps: f64) -> Result<Spectrum> {
    if eps <= 0.0 {
        return Err(ScaloprError::invalid("deconvolution eps must be positive"));
    }
    let n = pairs
        .first()
        .map(|(h, _)| h.len())
        .ok_or_else(|| ScaloprError::invalid("no spectra to deconvolve"))?;
    let mut numer = vec![Complex64::new(0.0, 0.0); n];
    let mut denom = vec![0.0; n];
    for (h, psi) in pairs {
        if h.len() != n || psi.len() != n {
            return Err(ScaloprError::LengthMismatch {
                expected: n,
                got: h.len().max(psi.len()),
            });
        }
        for k in 0..n {
            numer[k] += h.coeffs()[k] * psi.coeffs()[k].conj();
            denom[k] += psi.coeffs()[k].norm_sqr();
        }
    }
    let coeffs = numer
        .into_iter()
        .zip(denom)
        .map(|(num, den)| {
            if den < eps {
                Complex64::new(0.0, 0.0)
            } else {
                num / (den + eps)
            }
        })
        .collect();
    Ok(Spectrum::new(coeffs))
}

/// Signed frequency indices `{⌊N/2⌋-N+1, ..., ⌊N/2⌋}`.
pub fn signed_bins(n: usize) -> impl Iterator<Item = i64> {
    let half = (n / 2) as i64;
    (half - n as i64 + 1)..=half
}

/// Maps a signed frequency index to its DFT bin.
pub fn bin_of(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}
