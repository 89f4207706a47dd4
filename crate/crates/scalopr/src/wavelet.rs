//! Mother wavelets, the dilated filter family `ψ̂_j[k] = ψ̂(a^j k)`, the
//! auxiliary low/high banks `ψ̂_j r_j^{±k}` and the forward scalogram.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScaloprError};
use crate::spectral::{convolve_spectrum, AnalyticSignal, Signal, Spectrum};

/// Default cap on the Fourier-support size used by the exhaustive solver.
pub const K_MAX_DEFAULT: usize = 12;

/// Threshold (relative to the peak) below which a filter bin counts as
/// outside the support.
pub const SUPPORT_REL_THRESHOLD: f64 = 1e-6;

/// Mother wavelet, given by its Fourier transform on the nonnegative axis.
///
/// `center` rescales the frequency axis so the peak sits at `ω = center`;
/// a family for length-N signals typically uses `center = a^J` so that the
/// coarsest filter peaks at bin 1 and the finest near `N/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotherWavelet {
    /// `exp(-p(ω/c-1)²) - β exp(-p(ω/c)²)` with `β = e^{-p}` so `ψ̂(0)=0`.
    Morlet { p: f64, center: f64 },
    /// `(ω/c)² e^{1-(ω/c)²}`.
    Laplacian { center: f64 },
    /// Derivative-of-gammatone: `i(ω/c)·(1 + iλ(ω/c - 1))^{-m}`.
    Gammatone { m: u32, lambda: f64, center: f64 },
    /// `ω^{p1} e^{-p2 ω}`; peaks at `ω = p1/p2`.
    Cauchy { p1: f64, p2: f64 },
}

impl MotherWavelet {
    pub fn morlet(p: f64) -> Self {
        MotherWavelet::Morlet { p, center: 1.0 }
    }

    pub fn cauchy(p1: f64, p2: f64) -> Self {
        MotherWavelet::Cauchy { p1, p2 }
    }

    /// Evaluates `ψ̂(ω)` for `ω >= 0`.
    pub fn evaluate(&self, omega: f64) -> Complex64 {
        match *self {
            MotherWavelet::Morlet { p, center } => {
                let x = omega / center;
                let beta = (-p).exp();
                Complex64::new((-p * (x - 1.0).powi(2)).exp() - beta * (-p * x * x).exp(), 0.0)
            }
            MotherWavelet::Laplacian { center } => {
                let x = omega / center;
                Complex64::new(x * x * (1.0 - x * x).exp(), 0.0)
            }
            MotherWavelet::Gammatone { m, lambda, center } => {
                let x = omega / center;
                let num = Complex64::new(0.0, x);
                let den = Complex64::new(1.0, lambda * (x - 1.0));
                num * den.powi(-(m as i32))
            }
            MotherWavelet::Cauchy { p1, p2 } => {
                if omega <= 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    // computed in log space to survive large exponents
                    let lg = p1 * omega.ln() - p2 * omega;
                    Complex64::new(if lg < -745.0 { 0.0 } else { lg.exp() }, 0.0)
                }
            }
        }
    }
}

/// The dilated family `ψ̂_j[k] = ψ̂(a^j k)`, `j = 0..=J`.
#[derive(Debug, Clone)]
pub struct WaveletFamily {
    mother: MotherWavelet,
    a: f64,
    j_max: usize,
    n: usize,
    filters: Vec<Spectrum>,
}

impl WaveletFamily {
    /// Builds the family and checks that the coarsest filter is narrow
    /// enough for the exhaustive initialization.
    pub fn build(mother: MotherWavelet, n: usize, a: f64, j_max: usize) -> Result<Self> {
        if a <= 1.0 {
            return Err(ScaloprError::invalid("dilation factor a must exceed 1"));
        }
        if j_max < 2 {
            return Err(ScaloprError::invalid("J must be at least 2"));
        }
        if n < 8 {
            return Err(ScaloprError::invalid("N must be at least 8"));
        }
        let filters: Vec<Spectrum> = (0..=j_max)
            .map(|j| {
                let dilation = a.powi(j as i32);
                Spectrum::new((0..n).map(|k| mother.evaluate(dilation * k as f64)).collect())
            })
            .collect();
        let family = WaveletFamily {
            mother,
            a,
            j_max,
            n,
            filters,
        };
        let coarse = family.support(j_max);
        if coarse.len() > K_MAX_DEFAULT {
            return Err(ScaloprError::config(format!(
                "J too small for exhaustive initialization: coarsest filter support {} exceeds {}",
                coarse.len(),
                K_MAX_DEFAULT
            )));
        }
        Ok(family)
    }

    /// Dyadic Morlet defaults: `a = 2`, `J = log2(N/2)`, mother centered so
    /// the finest filter peaks near `N/2`. For `N = 256` this gives a family
    /// of eight filters.
    pub fn dyadic_morlet(n: usize) -> Result<Self> {
        Self::dyadic_morlet_with_p(n, 1.0)
    }

    pub fn dyadic_morlet_with_p(n: usize, p: f64) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(ScaloprError::invalid("dyadic Morlet defaults need power-of-two N"));
        }
        let j_max = (n / 2).trailing_zeros() as usize;
        let center = (n / 2) as f64;
        Self::build(MotherWavelet::Morlet { p, center }, n, 2.0, j_max)
    }

    pub fn mother(&self) -> &MotherWavelet {
        &self.mother
    }

    pub fn dilation(&self) -> f64 {
        self.a
    }

    /// Largest scale index J; the family has J+1 filters.
    pub fn j_max(&self) -> usize {
        self.j_max
    }

    pub fn len(&self) -> usize {
        self.j_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn filter(&self, j: usize) -> &Spectrum {
        &self.filters[j]
    }

    pub fn filters(&self) -> &[Spectrum] {
        &self.filters
    }

    /// Bins where `|ψ̂_j|` exceeds `1e-6` of its peak.
    pub fn support(&self, j: usize) -> Vec<usize> {
        let coeffs = self.filters[j].coeffs();
        let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        (0..self.n)
            .filter(|&k| coeffs[k].norm() > SUPPORT_REL_THRESHOLD * max)
            .collect()
    }

    /// Operator norm of `f ↦ {f⋆ψ_j}_j` on the analytic subspace.
    pub fn operator_norm(&self) -> f64 {
        (0..=self.n / 2)
            .map(|k| {
                self.filters
                    .iter()
                    .map(|psi| psi.coeffs()[k].norm_sqr())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn descriptor(&self, r: Option<f64>) -> BankDescriptor {
        BankDescriptor {
            mother: self.mother.clone(),
            a: self.a,
            j_max: self.j_max,
            n: self.n,
            r,
        }
    }
}

/// Serializable description of a bank, sufficient to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankDescriptor {
    pub mother: MotherWavelet,
    pub a: f64,
    #[serde(rename = "j")]
    pub j_max: usize,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl BankDescriptor {
    pub fn build_family(&self) -> Result<WaveletFamily> {
        WaveletFamily::build(self.mother.clone(), self.n, self.a, self.j_max)
    }
}

/// Multiplies a filter bin by `r^e` without overflowing through the
/// underflowed tail of the filter.
pub(crate) fn weighted_bin(value: Complex64, log_r: f64, exponent: f64) -> Complex64 {
    let mag = value.norm();
    if mag == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let lg = (mag.ln() + exponent * log_r).min(700.0);
    value / mag * lg.exp()
}

/// The low/high auxiliary filters and radii `r_j = r^{a^j}`.
#[derive(Debug, Clone)]
pub struct AuxiliaryBank {
    r: f64,
    r_j: Vec<f64>,
    low: Vec<Spectrum>,
    high: Vec<Spectrum>,
}

impl AuxiliaryBank {
    pub fn build(family: &WaveletFamily, r: f64) -> Result<Self> {
        if !(0.0 < r && r < 1.0) {
            return Err(ScaloprError::invalid("r must lie strictly between 0 and 1"));
        }
        let n = family.n();
        let r_j: Vec<f64> = (0..family.len())
            .map(|j| r.powf(family.dilation().powi(j as i32)))
            .collect();
        let mut low = Vec::with_capacity(family.len());
        let mut high = Vec::with_capacity(family.len());
        for (j, rj) in r_j.iter().enumerate() {
            let log_rj = rj.ln();
            let psi = family.filter(j).coeffs();
            low.push(Spectrum::new(
                (0..n).map(|k| weighted_bin(psi[k], log_rj, k as f64)).collect(),
            ));
            high.push(Spectrum::new(
                (0..n).map(|k| weighted_bin(psi[k], log_rj, -(k as f64))).collect(),
            ));
        }
        Ok(AuxiliaryBank { r, r_j, low, high })
    }

    /// Builds the bank with the Cauchy-specific radius
    /// `r = e^{-p2 (a-1)/(a+1)}`, for which `ψ̂_{j+1}^high = a^{p1} ψ̂_j^low`
    /// holds binwise.
    pub fn cauchy(family: &WaveletFamily) -> Result<Self> {
        let MotherWavelet::Cauchy { p2, .. } = *family.mother() else {
            return Err(ScaloprError::invalid("cauchy auxiliary bank needs a Cauchy mother"));
        };
        let a = family.dilation();
        let r = (-p2 * (a - 1.0) / (a + 1.0)).exp();
        Self::build(family, r)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn r_j(&self, j: usize) -> f64 {
        self.r_j[j]
    }

    pub fn low(&self, j: usize) -> &Spectrum {
        &self.low[j]
    }

    pub fn high(&self, j: usize) -> &Spectrum {
        &self.high[j]
    }

    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }
}

/// `Wf = {f⋆ψ_j}_j` via the spectral product.
pub fn wavelet_transform(f: &AnalyticSignal, family: &WaveletFamily) -> Result<Vec<Signal>> {
    if f.len() != family.n() {
        return Err(ScaloprError::LengthMismatch {
            expected: family.n(),
            got: f.len(),
        });
    }
    Ok(family
        .filters()
        .iter()
        .map(|psi| Signal::new(convolve_spectrum(f.values(), psi.coeffs())).expect("finite"))
        .collect())
}

/// The `(J+1) × N` nonnegative measurement matrix `{|f⋆ψ_j|}_j`.
#[derive(Debug, Clone)]
pub struct Scalogram {
    g: Vec<Vec<f64>>,
    descriptor: BankDescriptor,
}

impl Scalogram {
    pub fn new(g: Vec<Vec<f64>>, descriptor: BankDescriptor) -> Result<Self> {
        for row in &g {
            if row.len() != descriptor.n {
                return Err(ScaloprError::LengthMismatch {
                    expected: descriptor.n,
                    got: row.len(),
                });
            }
            if !row.iter().all(|v| v.is_finite()) {
                return Err(ScaloprError::invalid("scalogram contains non-finite entries"));
            }
        }
        if g.len() != descriptor.j_max + 1 {
            return Err(ScaloprError::LengthMismatch {
                expected: descriptor.j_max + 1,
                got: g.len(),
            });
        }
        Ok(Scalogram { g, descriptor })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.g
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.g[j]
    }

    pub fn scales(&self) -> usize {
        self.g.len()
    }

    pub fn n(&self) -> usize {
        self.descriptor.n
    }

    pub fn descriptor(&self) -> &BankDescriptor {
        &self.descriptor
    }

    /// Squared Frobenius norm `Σ_j ||g_j||²`.
    pub fn norm_sqr(&self) -> f64 {
        self.g.iter().flatten().map(|v| v * v).sum()
    }
}

/// Entrywise modulus of the wavelet transform.
pub fn scalogram(f: &AnalyticSignal, family: &WaveletFamily) -> Result<Scalogram> {
    let components = wavelet_transform(f, family)?;
    Scalogram::new(
        components.iter().map(|c| c.modulus()).collect(),
        family.descriptor(None),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{analytic_project, dft};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_analytic(n: usize, seed: u64) -> AnalyticSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sig = Signal::new(
            (0..n)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect(),
        )
        .unwrap();
        analytic_project(&sig)
    }

    #[test]
    fn morlet_vanishes_at_zero() {
        let m = MotherWavelet::morlet(0.7);
        assert_eq!(m.evaluate(0.0).norm(), 0.0);
    }

    #[test]
    fn laplacian_peak_is_one() {
        let m = MotherWavelet::Laplacian { center: 1.0 };
        assert!((m.evaluate(1.0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dyadic_morlet_256_has_eight_filters() {
        let fam = WaveletFamily::dyadic_morlet(256).unwrap();
        assert_eq!(fam.len(), 8);
        // coarsest filter peaks at bin 1
        let coarse = fam.filter(fam.j_max()).coeffs();
        let peak = (0..256).max_by(|&i, &j| coarse[i].norm().total_cmp(&coarse[j].norm())).unwrap();
        assert_eq!(peak, 1);
    }

    #[test]
    fn coarse_support_fits_exhaustive_cap() {
        let fam = WaveletFamily::dyadic_morlet(256).unwrap();
        assert!(fam.support(fam.j_max()).len() <= K_MAX_DEFAULT);
        assert!(fam.support(fam.j_max() - 1).len() <= K_MAX_DEFAULT);
    }

    #[test]
    fn auxiliary_radius_formula() {
        let fam = WaveletFamily::dyadic_morlet(256).unwrap();
        let aux = AuxiliaryBank::build(&fam, 0.99).unwrap();
        // r_3 = 0.99^(2^3)
        assert!((aux.r_j(3) - 0.99f64.powi(8)).abs() < 1e-12);
        assert!((aux.r_j(3) - 0.92274).abs() < 1e-4);
        for j in 0..aux.len() {
            assert!(0.0 < aux.r_j(j) && aux.r_j(j) < 1.0);
        }
    }

    #[test]
    fn auxiliary_dc_bin_unchanged() {
        let fam = WaveletFamily::dyadic_morlet(128).unwrap();
        let aux = AuxiliaryBank::build(&fam, 0.9).unwrap();
        for j in 0..fam.len() {
            let psi0 = fam.filter(j).coeffs()[0];
            assert!((aux.low(j).coeffs()[0] - psi0).norm() < 1e-14);
            assert!((aux.high(j).coeffs()[0] - psi0).norm() < 1e-14);
        }
    }

    #[test]
    fn auxiliary_low_high_product_is_filter_squared() {
        let fam = WaveletFamily::dyadic_morlet(128).unwrap();
        let aux = AuxiliaryBank::build(&fam, (-0.006f64).exp()).unwrap();
        for j in 0..fam.len() {
            for k in 0..=64 {
                let lhs = aux.low(j).coeffs()[k] * aux.high(j).coeffs()[k];
                let rhs = fam.filter(j).coeffs()[k].powi(2);
                assert!(
                    (lhs - rhs).norm() <= 1e-10 * rhs.norm().max(1e-300),
                    "j={j} k={k}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn cauchy_radius_and_identity() {
        let fam = WaveletFamily::build(MotherWavelet::cauchy(1.0, 1.0), 64, 2.0, 3).unwrap();
        let aux = AuxiliaryBank::cauchy(&fam).unwrap();
        assert!((aux.r() - (-1.0f64 / 3.0).exp()).abs() < 1e-12);
        assert!((aux.r() - 0.716531).abs() < 1e-6);
        let a_p1 = 2.0f64;
        for j in 0..fam.j_max() {
            let max = aux.low(j).coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
            for k in 0..64 {
                let lhs = aux.high(j + 1).coeffs()[k];
                let rhs = aux.low(j).coeffs()[k] * a_p1;
                assert!((lhs - rhs).norm() < 1e-10 * max, "j={j} k={k}");
            }
        }
    }

    #[test]
    fn cauchy_auxiliary_rejects_other_mothers() {
        let fam = WaveletFamily::dyadic_morlet(64).unwrap();
        assert!(AuxiliaryBank::cauchy(&fam).is_err());
    }

    #[test]
    fn zero_signal_gives_zero_scalogram() {
        let fam = WaveletFamily::dyadic_morlet(64).unwrap();
        let f = AnalyticSignal::try_new(Signal::zeros(64)).unwrap();
        let sc = scalogram(&f, &fam).unwrap();
        assert_eq!(sc.norm_sqr(), 0.0);
    }

    #[test]
    fn pure_tone_has_constant_modulus() {
        let n = 128;
        let fam = WaveletFamily::dyadic_morlet(n).unwrap();
        let j = 2;
        // peak bin of ψ_2
        let psi = fam.filter(j).coeffs();
        let peak = (0..n).max_by(|&i, &l| psi[i].norm().total_cmp(&psi[l].norm())).unwrap();
        let tone = Signal::new(
            (0..n)
                .map(|i| {
                    Complex64::from_polar(
                        0.7,
                        2.0 * std::f64::consts::PI * peak as f64 * i as f64 / n as f64,
                    )
                })
                .collect(),
        )
        .unwrap();
        let f = AnalyticSignal::try_new(tone).unwrap();
        let sc = scalogram(&f, &fam).unwrap();
        let expect = psi[peak].norm() * 0.7;
        for v in sc.row(j) {
            assert!((v - expect).abs() < 1e-10 * expect);
        }
    }

    #[test]
    fn scalogram_global_phase_invariant() {
        let n = 64;
        let fam = WaveletFamily::dyadic_morlet(n).unwrap();
        let f = random_analytic(n, 42);
        let base = scalogram(&f, &fam).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            let rotated = f.scaled(Complex64::from_polar(1.0, phi));
            let sc = scalogram(&rotated, &fam).unwrap();
            for j in 0..fam.len() {
                for k in 0..n {
                    assert!((sc.row(j)[k] - base.row(j)[k]).abs() < 1e-12 * base.row(j)[k].max(1.0));
                }
            }
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let fam = WaveletFamily::dyadic_morlet(128).unwrap();
        let desc = fam.descriptor(Some(0.99));
        let json = serde_json::to_string(&desc).unwrap();
        let back: BankDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(desc, back);
        let rebuilt = back.build_family().unwrap();
        for j in 0..fam.len() {
            assert_eq!(fam.filter(j).coeffs(), rebuilt.filter(j).coeffs());
        }
    }

    #[test]
    fn analytic_transform_components_are_analytic() {
        let n = 64;
        let fam = WaveletFamily::dyadic_morlet(n).unwrap();
        let f = random_analytic(n, 3);
        for comp in wavelet_transform(&f, &fam).unwrap() {
            let spec = dft(&comp);
            let max = spec.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
            for k in n / 2 + 1..n {
                assert!(spec.coeffs()[k].norm() <= 1e-12 * max.max(1e-300));
            }
        }
    }
}
