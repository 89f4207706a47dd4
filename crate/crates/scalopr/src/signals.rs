//! Test-signal generators, measurement-noise injection, and the two error
//! metrics (relative modulus error of the transform, and phase-aligned
//! relative error on the signal itself).

use num_complex::Complex64;
use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::error::{Result, ScaloprError};
use crate::spectral::{analytic_project, idft_raw, AnalyticSignal, Signal};
use crate::wavelet::{scalogram, Scalogram, WaveletFamily};

/// Default per-sample activation probability for the sparse-sinusoid class.
pub const SPARSE_PROB_DEFAULT: f64 = 0.01;

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) / std::f64::consts::SQRT_2
}

/// A stationary Gaussian process with spectrum weights 1/√(k+1) on the
/// analytic bins.
pub fn gen_gaussian_process(n: usize, seed: u64) -> Result<AnalyticSignal> {
    if n < 8 {
        return Err(ScaloprError::invalid("signal length must be at least 8"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    for (k, item) in spec.iter_mut().enumerate().take(n / 2 + 1).skip(1) {
        *item = complex_gaussian(&mut rng) / ((k as f64 + 1.0).sqrt());
    }
    let f = Signal::new(idft_raw(&spec))?;
    AnalyticSignal::try_new(f)
}

/// A sparse sum of complex sinusoids under a raised-cosine window. Returns
/// the signal and a flag set when the first draw was empty and a redraw
/// with an incremented seed was needed.
pub fn gen_sparse_sinusoids(n: usize, prob: f64, seed: u64) -> Result<(AnalyticSignal, bool)> {
    if n < 8 {
        return Err(ScaloprError::invalid("signal length must be at least 8"));
    }
    if !(0.0..1.0).contains(&prob) {
        return Err(ScaloprError::invalid("activation probability must be in [0, 1)"));
    }
    let mut redrawn = false;
    let mut seed = seed;
    for attempt in 0.. {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        let mut any = false;
        // keep one guard bin at each band edge so the window's spectral
        // spread stays inside the analytic band
        for item in spec.iter_mut().take(n / 2).skip(2) {
            if rng.gen::<f64>() < prob {
                *item = complex_gaussian(&mut rng);
                any = true;
            }
        }
        if !any {
            redrawn = true;
            if attempt < 32 {
                seed = seed.wrapping_add(1);
                continue;
            }
            // degenerate probability: force one mid-band tone so the
            // generator always terminates
            spec[n / 4] = complex_gaussian(&mut rng);
        }
        let tones = idft_raw(&spec);
        let windowed: Vec<Complex64> = tones
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let w = 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos());
                v * w
            })
            .collect();
        let f = analytic_project(&Signal::new(windowed)?);
        return Ok((f, redrawn));
    }
    unreachable!("generation loop always returns")
}

/// A noisy scalogram: per-scale white Gaussian noise added to the moduli,
/// globally scaled so the relative noise amount hits the target exactly.
#[derive(Debug, Clone)]
pub struct NoisyMeasurement {
    h: Vec<Vec<f64>>,
    amount: f64,
    seed: u64,
}

impl NoisyMeasurement {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.h
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.h[j]
    }

    pub fn amount(&self) -> f64 {
        self.amount
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The noisy moduli repackaged as a scalogram-shaped measurement
    /// (entries may be negative; downstream Q computation squares them).
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.h.clone()
    }
}

/// Adds white Gaussian noise to the moduli, scaled so that
/// √(Σ‖n_j‖²)/√(Σ‖g_j‖²) equals `target_amount`.
pub fn add_noise(g: &Scalogram, target_amount: f64, seed: u64) -> Result<NoisyMeasurement> {
    if target_amount < 0.0 {
        return Err(ScaloprError::invalid("noise amount must be nonnegative"));
    }
    if target_amount == 0.0 {
        return Ok(NoisyMeasurement {
            h: g.rows().to_vec(),
            amount: 0.0,
            seed,
        });
    }
    let g_norm_sqr: f64 = g
        .rows()
        .iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>())
        .sum();
    if g_norm_sqr == 0.0 {
        return Err(ScaloprError::UndefinedMetric("zero reference norm".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<Vec<f64>> = g
        .rows()
        .iter()
        .map(|row| row.iter().map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let raw_norm_sqr: f64 = raw
        .iter()
        .map(|row| row.iter().map(|v: &f64| v * v).sum::<f64>())
        .sum();
    let scale = target_amount * (g_norm_sqr / raw_norm_sqr).sqrt();
    let h: Vec<Vec<f64>> = g
        .rows()
        .iter()
        .zip(&raw)
        .map(|(grow, nrow)| {
            grow.iter()
                .zip(nrow)
                // a perturbed magnitude measurement stays a magnitude
                .map(|(gv, nv)| (gv + scale * nv).max(0.0))
                .collect()
        })
        .collect();
    Ok(NoisyMeasurement {
        h,
        amount: target_amount,
        seed,
    })
}

/// Relative noise amount recomputed from a measurement and the clean
/// scalogram.
pub fn noise_amount(g: &Scalogram, h: &[Vec<f64>]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (grow, hrow) in g.rows().iter().zip(h) {
        for (gv, hv) in grow.iter().zip(hrow) {
            num += (hv - gv).powi(2);
            den += gv * gv;
        }
    }
    if den == 0.0 {
        return Err(ScaloprError::UndefinedMetric("zero reference norm".into()));
    }
    Ok((num / den).sqrt())
}

/// Relative modulus error of the wavelet transform between two signals.
pub fn reconstruction_error(
    f: &AnalyticSignal,
    f_rec: &AnalyticSignal,
    family: &WaveletFamily,
) -> Result<f64> {
    let g = scalogram(f, family)?;
    let g_rec = scalogram(f_rec, family)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (row, row_rec) in g.rows().iter().zip(g_rec.rows()) {
        for (a, b) in row.iter().zip(row_rec) {
            num += (a - b).powi(2);
            den += a * a;
        }
    }
    if den == 0.0 {
        return Err(ScaloprError::UndefinedMetric("zero reference norm".into()));
    }
    Ok((num / den).sqrt())
}

/// Phase-aligned relative distance between the signals; the optimal global
/// phase is arg⟨f_rec, f⟩.
pub fn signal_error(f: &AnalyticSignal, f_rec: &AnalyticSignal) -> Result<f64> {
    let fnorm = f.norm();
    if fnorm == 0.0 {
        return Err(ScaloprError::UndefinedMetric("zero reference norm".into()));
    }
    let inner: Complex64 = f_rec
        .values()
        .iter()
        .zip(f.values())
        .map(|(r, x)| r * x.conj())
        .sum();
    let phase = if inner.norm() > 0.0 {
        Complex64::from_polar(1.0, inner.arg())
    } else {
        Complex64::new(1.0, 0.0)
    };
    let dist: f64 = f
        .values()
        .iter()
        .zip(f_rec.values())
        .map(|(x, r)| (x * phase - r).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(dist / fnorm)
}

/// Both error metrics at once.
pub fn metrics(
    f: &AnalyticSignal,
    f_rec: &AnalyticSignal,
    family: &WaveletFamily,
) -> Result<(f64, f64)> {
    Ok((
        reconstruction_error(f, f_rec, family)?,
        signal_error(f, f_rec)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::dft;
    use crate::wavelet::WaveletFamily;

    #[test]
    fn gaussian_process_spectrum_shape() {
        let n = 128;
        let f = gen_gaussian_process(n, 42).unwrap();
        let spec = dft(f.signal());
        let max = spec.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(spec.coeffs()[0].norm() < 1e-12 * max);
        for k in n / 2 + 1..n {
            assert!(spec.coeffs()[k].norm() < 1e-12 * max, "bin {k}");
        }
        assert!(spec.coeffs()[1].norm() > 0.0);
    }

    #[test]
    fn gaussian_process_deterministic() {
        let a = gen_gaussian_process(64, 7).unwrap();
        let b = gen_gaussian_process(64, 7).unwrap();
        assert_eq!(a.values(), b.values());
        let c = gen_gaussian_process(64, 8).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn gaussian_process_scale_energies_comparable() {
        // per-scale transform energies, averaged over seeds, stay within a
        // 3x band of each other for the dyadic Morlet bank
        let n = 128;
        let family = WaveletFamily::dyadic_morlet(n).unwrap();
        let mut energy = vec![0.0f64; family.len()];
        for seed in 0..100 {
            let f = gen_gaussian_process(n, seed).unwrap();
            let g = scalogram(&f, &family).unwrap();
            for (j, row) in g.rows().iter().enumerate() {
                energy[j] += row.iter().map(|v| v * v).sum::<f64>();
            }
        }
        // the finest scale sits at the band edge; compare the interior
        let interior = &energy[..family.len() - 1];
        let max = interior.iter().cloned().fold(0.0, f64::max);
        let min = interior.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "energy spread {max}/{min}");
    }

    #[test]
    fn sparse_sinusoids_redraw_on_empty() {
        let n = 64;
        let (f, redrawn) = gen_sparse_sinusoids(n, 0.0, 3).unwrap();
        assert!(redrawn);
        assert!(f.norm() > 0.0);
    }

    #[test]
    fn sparse_sinusoids_single_tone_energy_location() {
        let n = 128;
        let family = WaveletFamily::dyadic_morlet(n).unwrap();
        // find a seed whose draw at small prob has exactly one active bin
        let mut chosen = None;
        for seed in 0..200 {
            let (f, _) = gen_sparse_sinusoids(n, 0.02, seed).unwrap();
            let spec = dft(f.signal());
            let max = spec.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
            // the window spreads each tone over three bins; a single tone
            // shows one dominant bin and negligible energy elsewhere
            let dominant: Vec<usize> = (1..n / 2)
                .filter(|&k| spec.coeffs()[k].norm() > 0.9 * max)
                .collect();
            if dominant.len() == 1 {
                let k0 = dominant[0];
                let stray: f64 = (0..n)
                    .filter(|&k| k + 1 < k0 || k > k0 + 1)
                    .map(|k| spec.coeffs()[k].norm_sqr())
                    .sum();
                let total: f64 = spec.coeffs().iter().map(|c| c.norm_sqr()).sum();
                if stray < 0.01 * total {
                    chosen = Some((f, k0));
                    break;
                }
            }
        }
        let (f, k0) = chosen.expect("some seed yields a single tone");
        let g = scalogram(&f, &family).unwrap();
        // the scale with the largest response must have a filter that is
        // large at k0
        let best_scale = (0..family.len())
            .max_by(|&a, &b| {
                let ea: f64 = g.row(a).iter().map(|v| v * v).sum();
                let eb: f64 = g.row(b).iter().map(|v| v * v).sum();
                ea.total_cmp(&eb)
            })
            .unwrap();
        let response = family.filter(best_scale).coeffs()[k0].norm();
        let peak = family
            .filter(best_scale)
            .coeffs()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        assert!(response > 0.3 * peak, "tone at {k0} vs scale {best_scale}");
    }

    #[test]
    fn sparse_sinusoids_analytic_and_deterministic() {
        let (a, _) = gen_sparse_sinusoids(64, 0.05, 5).unwrap();
        let (b, _) = gen_sparse_sinusoids(64, 0.05, 5).unwrap();
        assert_eq!(a.values(), b.values());
        let projected = analytic_project(a.signal());
        let d: f64 = projected
            .values()
            .iter()
            .zip(a.values())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(d < 1e-12 * a.norm().max(1e-300));
    }

    #[test]
    fn noise_amount_is_exact() {
        let n = 128;
        let family = WaveletFamily::dyadic_morlet(n).unwrap();
        let f = gen_gaussian_process(n, 1).unwrap();
        let g = scalogram(&f, &family).unwrap();
        for target in [0.0, 1e-3, 0.01, 0.1] {
            let m = add_noise(&g, target, 99).unwrap();
            let measured = noise_amount(&g, m.rows()).unwrap();
            assert!(
                (measured - target).abs() < 1e-12,
                "target {target}: measured {measured}"
            );
        }
        // zero target reproduces the scalogram bitwise
        let m = add_noise(&g, 0.0, 99).unwrap();
        assert_eq!(m.rows(), g.rows());
        // different seeds differ, same amount
        let m1 = add_noise(&g, 0.01, 1).unwrap();
        let m2 = add_noise(&g, 0.01, 2).unwrap();
        assert_ne!(m1.rows(), m2.rows());
    }

    #[test]
    fn metrics_gauge_invariance() {
        let n = 128;
        let family = WaveletFamily::dyadic_morlet(n).unwrap();
        let f = gen_gaussian_process(n, 11).unwrap();
        let (re, se) = metrics(&f, &f, &family).unwrap();
        assert!(re < 1e-14 && se < 1e-14);
        for phi in [0.7, std::f64::consts::PI, -1.1] {
            let rotated = f.scaled(Complex64::from_polar(1.0, phi));
            let (re, se) = metrics(&f, &rotated, &family).unwrap();
            assert!(re < 1e-12, "phi {phi}: recon {re}");
            assert!(se < 1e-12, "phi {phi}: signal {se}");
        }
        // -f is a phase rotation by pi
        let neg = f.scaled(Complex64::new(-1.0, 0.0));
        let (re, se) = metrics(&f, &neg, &family).unwrap();
        assert!(re < 1e-12 && se < 1e-12);
    }

    #[test]
    fn zero_signal_metric_is_undefined() {
        let n = 64;
        let family = WaveletFamily::dyadic_morlet(n).unwrap();
        let zero = analytic_project(&Signal::zeros(n));
        let f = gen_gaussian_process(n, 2).unwrap();
        assert!(matches!(
            metrics(&zero, &f, &family),
            Err(ScaloprError::UndefinedMetric(_))
        ));
    }
}
