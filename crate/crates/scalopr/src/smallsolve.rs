//! Exhaustive-search phase retrieval for signals with tiny Fourier support,
//! and pair resolution across two adjacent scales. Used for the
//! coarsest-scale initialization and the windowed error correction.

use num_complex::Complex64;

use crate::error::{Result, ScaloprError};
use crate::par;
use crate::spectral::{bin_of, convolve_spectrum, dft_raw, idft_raw, Signal, Spectrum};
use crate::wavelet::{K_MAX_DEFAULT, SUPPORT_REL_THRESHOLD};

/// Relative modulus-reproduction tolerance for noiseless candidates.
pub const TOL_CAND: f64 = 1e-6;

/// Default pair-consistency tolerance (noiseless).
pub const TOL_PAIR: f64 = 1e-4;

const ROOT_PAIR_TOL: f64 = 1e-6;

/// A nonnegative modulus together with the claimed Fourier support
/// `{1..K}` of the unknown signal.
#[derive(Debug, Clone)]
pub struct SupportedModulus {
    m: Vec<f64>,
    k: usize,
}

impl SupportedModulus {
    pub fn new(m: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 || k > K_MAX_DEFAULT {
            return Err(ScaloprError::invalid(format!(
                "support size {k} outside 1..={K_MAX_DEFAULT}"
            )));
        }
        if m.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(ScaloprError::invalid("modulus must be nonnegative and finite"));
        }
        if 2 * k > m.len() {
            return Err(ScaloprError::invalid(format!(
                "support size {k} exceeds half the signal length {}",
                m.len()
            )));
        }
        Ok(SupportedModulus { m, k })
    }

    pub fn modulus(&self) -> &[f64] {
        &self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Roots of a complex polynomial (ascending coefficients) by the
/// Aberth-Ehrlich simultaneous iteration.
fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[degree];
    if lead.norm() == 0.0 {
        return Err(ScaloprError::invalid("leading coefficient is zero"));
    }
    // initial guesses on a circle of the geometric-mean root radius
    let c0 = coeffs[0].norm().max(1e-300);
    let radius = (c0 / lead.norm()).powf(1.0 / degree as f64).max(1e-6);
    let mut roots: Vec<Complex64> = (0..degree)
        .map(|i| {
            Complex64::from_polar(
                radius,
                std::f64::consts::TAU * (i as f64 + 0.37) / degree as f64,
            )
        })
        .collect();
    let eval = |z: Complex64| -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for c in coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    };
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..degree {
            let z = roots[i];
            let (p, dp) = eval(z);
            if p.norm() == 0.0 {
                continue;
            }
            let dp = if dp.norm() == 0.0 {
                Complex64::new(1e-300, 0.0)
            } else {
                dp
            };
            let w = p / dp;
            let mut repulsion = Complex64::new(0.0, 0.0);
            for (j, &other) in roots.iter().enumerate() {
                if j != i {
                    let diff = z - other;
                    if diff.norm() > 1e-300 {
                        repulsion += Complex64::new(1.0, 0.0) / diff;
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - w * repulsion;
            let step = if denom.norm() > 1e-300 { w / denom } else { w };
            roots[i] = z - step;
            max_step = max_step.max(step.norm() / (1.0 + roots[i].norm()));
        }
        if max_step < 1e-14 {
            break;
        }
    }
    Ok(roots)
}

#[derive(Debug, Clone)]
struct RootPair {
    inside: Complex64,
    outside: Complex64,
    /// true when both choices coincide (root on the unit circle)
    degenerate: bool,
}

/// Groups the roots of the self-inversive modulus polynomial into
/// `(s, 1/conj(s))` pairs.
fn pair_roots(roots: &[Complex64]) -> Result<Vec<RootPair>> {
    let mut used = vec![false; roots.len()];
    let mut pairs = Vec::with_capacity(roots.len() / 2);
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let s = roots[i];
        used[i] = true;
        if (s.norm() - 1.0).abs() < ROOT_PAIR_TOL {
            // unit-circle root: its mirror is (numerically) itself; consume
            // the coincident partner from the double root
            let mut partner = None;
            let mut best = f64::INFINITY;
            for (j, &t) in roots.iter().enumerate() {
                if !used[j] {
                    let d = (t - s).norm();
                    if d < best {
                        best = d;
                        partner = Some(j);
                    }
                }
            }
            match partner {
                Some(j) if best < 1e-4 * (1.0 + s.norm()) => used[j] = true,
                _ => {
                    return Err(ScaloprError::DegenerateRoots {
                        root: format!("{s}"),
                        modulus: s.norm(),
                    })
                }
            }
            pairs.push(RootPair {
                inside: s,
                outside: s,
                degenerate: true,
            });
            continue;
        }
        let mirror = Complex64::new(1.0, 0.0) / s.conj();
        let mut partner = None;
        let mut best = f64::INFINITY;
        for (j, &t) in roots.iter().enumerate() {
            if !used[j] {
                let score = (s * t.conj() - Complex64::new(1.0, 0.0)).norm();
                if score < best {
                    best = score;
                    partner = Some(j);
                }
            }
        }
        match partner {
            Some(j) if best < ROOT_PAIR_TOL * (1.0 + s.norm_sqr()) => {
                used[j] = true;
                let (inside, outside) = if s.norm() <= roots[j].norm() {
                    (s, roots[j])
                } else {
                    (roots[j], s)
                };
                pairs.push(RootPair {
                    inside,
                    outside,
                    degenerate: false,
                });
            }
            _ => {
                let _ = mirror;
                return Err(ScaloprError::DegenerateRoots {
                    root: format!("{s}"),
                    modulus: s.norm(),
                });
            }
        }
    }
    Ok(pairs)
}

/// Tolerant variant of [`pair_roots`] for moduli that are only
/// approximately representable on the claimed band (windowed local solves):
/// roots are greedily matched to their best reciprocal partner with no
/// rejection threshold, and a leftover root is self-paired.
fn pair_roots_robust(roots: &[Complex64]) -> Vec<RootPair> {
    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by(|&a, &b| roots[b].norm().total_cmp(&roots[a].norm()));
    let mut used = vec![false; roots.len()];
    let mut pairs = Vec::with_capacity(roots.len() / 2);
    for &i in &order {
        if used[i] {
            continue;
        }
        used[i] = true;
        let s = roots[i];
        let mut partner = None;
        let mut best = f64::INFINITY;
        for (j, &t) in roots.iter().enumerate() {
            if !used[j] {
                let score = (s * t.conj() - Complex64::new(1.0, 0.0)).norm();
                if score < best {
                    best = score;
                    partner = Some(j);
                }
            }
        }
        match partner {
            Some(j) => {
                used[j] = true;
                let t = roots[j];
                let degenerate = (s - t).norm() < TOL_PAIR * (1.0 + s.norm());
                let (inside, outside) = if s.norm() <= t.norm() { (s, t) } else { (t, s) };
                pairs.push(RootPair {
                    inside,
                    outside,
                    degenerate,
                });
            }
            None => pairs.push(RootPair {
                inside: s,
                outside: s,
                degenerate: true,
            }),
        }
    }
    pairs
}

/// Expands `lead·Π(X - r_i)` into ascending coefficients.
fn expand_monic(lead: Complex64, roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); roots.len() + 1];
    coeffs[0] = lead;
    let mut degree = 0;
    for &r in roots {
        degree += 1;
        for i in (0..degree).rev() {
            let lower = coeffs[i];
            coeffs[i + 1] += lower;
            coeffs[i] = -r * lower;
        }
    }
    coeffs
}

/// All signals `g` with `Supp(ĝ) ⊆ {1..K}` and `|g| = m`, up to global
/// phase, by the root-pairing exhaustive search. Each candidate is
/// normalized so its top nonzero Fourier coefficient is real positive.
pub fn candidate_signals(m: &SupportedModulus) -> Result<Vec<Signal>> {
    candidate_signals_inner(m, true).map(|(c, _)| c)
}

/// Like [`candidate_signals`], but also returns the effective support width
/// after trimming negligible top Laurent coefficients. Candidates are
/// anchored at bin 1; when the width is smaller than the claimed band, the
/// true support may sit at any translation inside it.
fn candidate_signals_inner(m: &SupportedModulus, strict: bool) -> Result<(Vec<Signal>, usize)> {
    // A nearly-vanishing edge coefficient makes the extreme roots ill
    // conditioned and the strict reciprocal pairing can fail on them;
    // retrying with a harder edge trim sacrifices that coefficient instead.
    let mut last_err = None;
    for trim in [1e-12, 1e-9, 1e-6, 1e-4] {
        match candidate_signals_trimmed(m, strict, trim) {
            Ok(out) => return Ok(out),
            Err(e @ ScaloprError::DegenerateRoots { .. }) if strict => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("loop ran"))
}

fn candidate_signals_trimmed(
    m: &SupportedModulus,
    strict: bool,
    trim: f64,
) -> Result<(Vec<Signal>, usize)> {
    let n = m.len();
    if m.norm() == 0.0 {
        return Ok((vec![Signal::zeros(n)], m.k()));
    }
    let sq: Vec<Complex64> = m.modulus().iter().map(|&v| Complex64::new(v * v, 0.0)).collect();
    let sq_hat = dft_raw(&sq);
    // Laurent coefficients t_k = N·(m̂²)[k], k = -(K-1)..K-1
    let mut k_eff = m.k();
    let max_t = (0..m.k() as i64)
        .map(|k| sq_hat[bin_of(k, n)].norm())
        .fold(0.0, f64::max);
    while k_eff > 1 && sq_hat[bin_of(k_eff as i64 - 1, n)].norm() < trim * max_t {
        k_eff -= 1;
    }
    if k_eff == 1 {
        // single coefficient: |ĝ[1]|² = N·m̂²[0]
        let amp = (n as f64 * sq_hat[0].re).max(0.0).sqrt();
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        spec[1] = Complex64::new(amp, 0.0);
        return Ok((vec![Signal::new(idft_raw(&spec)).expect("finite")], 1));
    }
    let coeffs: Vec<Complex64> = (-(k_eff as i64 - 1)..=(k_eff as i64 - 1))
        .map(|k| sq_hat[bin_of(k, n)] * n as f64)
        .collect();
    let roots = polynomial_roots(&coeffs)?;
    let pairs = if strict {
        pair_roots(&roots)?
    } else {
        pair_roots_robust(&roots)
    };
    let lead = coeffs[coeffs.len() - 1];

    let selections = 1usize << pairs.len();
    let mut out = Vec::new();
    let mut seen_degenerate = 0usize;
    for sel in 0..selections {
        // skip the redundant branch of every degenerate pair
        if pairs
            .iter()
            .enumerate()
            .any(|(i, p)| p.degenerate && sel & (1 << i) != 0)
        {
            seen_degenerate += 1;
            continue;
        }
        let chosen: Vec<Complex64> = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| if sel & (1 << i) == 0 { p.inside } else { p.outside })
            .collect();
        // |ĝ[K]|² from the leading Laurent coefficient
        let mut prod = Complex64::new(1.0, 0.0);
        for r in &chosen {
            prod *= -r.conj();
        }
        if prod.norm() < 1e-300 {
            continue;
        }
        let amp_sqr = (lead / prod).re;
        if amp_sqr <= 0.0 {
            continue;
        }
        let top = Complex64::new(amp_sqr.sqrt(), 0.0);
        let poly = expand_monic(top, &chosen);
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        for (i, c) in poly.iter().enumerate() {
            spec[i + 1] = *c;
        }
        out.push(Signal::new(idft_raw(&spec)).expect("finite"));
    }
    let _ = seen_degenerate;
    Ok((out, k_eff))
}

/// Candidates modulated onto the band starting at `k0`, including every
/// translation the trimmed width leaves room for within the claimed band.
fn placed_candidates(
    m: &SupportedModulus,
    k0: i64,
    k_band: usize,
    strict: bool,
) -> Result<Vec<Signal>> {
    let (base, k_eff) = candidate_signals_inner(m, strict)?;
    let slack = k_band.saturating_sub(k_eff);
    let mut out = Vec::with_capacity(base.len() * (slack + 1));
    for c in &base {
        for t in 0..=slack {
            out.push(modulate_up_signed(c, k0 + t as i64));
        }
    }
    Ok(out)
}

/// Outcome of resolving a candidate pair across two scales.
#[derive(Debug, Clone)]
pub struct PairResolution {
    /// Winning estimates, phase-aligned to each other.
    pub winner: (Signal, Signal),
    /// Cross-consistency residual of the winner.
    pub residual: f64,
    /// A second pair within a factor 2 of the best residual, if any.
    pub ambiguous_runner_up: Option<(Signal, Signal)>,
}

/// Picks, among the candidate lists for two adjacent scales, the pair
/// minimizing `‖c_a⋆ψ_b − c_b⋆ψ_a‖` over the relative phase.
pub fn resolve_pair(
    m_a: &SupportedModulus,
    psi_a: &Spectrum,
    m_b: &SupportedModulus,
    psi_b: &Spectrum,
) -> Result<PairResolution> {
    let cands_a = candidate_signals(m_a)?;
    let cands_b = candidate_signals(m_b)?;
    resolve_pair_from_candidates(&cands_a, psi_a, &cands_b, psi_b)
}

pub(crate) fn resolve_pair_from_candidates(
    cands_a: &[Signal],
    psi_a: &Spectrum,
    cands_b: &[Signal],
    psi_b: &Spectrum,
) -> Result<PairResolution> {
    resolve_pair_from_candidates_penalized(cands_a, psi_a, cands_b, psi_b, false)
}

/// Energy of the candidate spectrum weighted by how invisible each bin is
/// to the filter (time-domain normalization).
fn off_band_energy(c: &Signal, psi: &Spectrum) -> f64 {
    let max = psi.coeffs().iter().map(|p| p.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let spec = dft_raw(c.values());
    spec.iter()
        .zip(psi.coeffs())
        .map(|(s, p)| {
            let vis = p.norm() / max;
            s.norm_sqr() * (1.0 - vis) * (1.0 - vis)
        })
        .sum::<f64>()
        / c.len() as f64
}

pub(crate) fn resolve_pair_from_candidates_penalized(
    cands_a: &[Signal],
    psi_a: &Spectrum,
    cands_b: &[Signal],
    psi_b: &Spectrum,
    penalize_off_band: bool,
) -> Result<PairResolution> {
    // cross terms: c_a ⋆ ψ_b must match c_b ⋆ ψ_a up to one phase
    let cross_a: Vec<Vec<Complex64>> =
        par::map_slice(cands_a, |c| convolve_spectrum(c.values(), psi_b.coeffs()));
    let cross_b: Vec<Vec<Complex64>> =
        par::map_slice(cands_b, |c| convolve_spectrum(c.values(), psi_a.coeffs()));
    let norms_a: Vec<f64> = cross_a.iter().map(|v| v.iter().map(|c| c.norm_sqr()).sum()).collect();
    let norms_b: Vec<f64> = cross_b.iter().map(|v| v.iter().map(|c| c.norm_sqr()).sum()).collect();
    // candidates can park energy in bins the filters barely see, where the
    // consistency residual is blind; penalizing that energy keeps the
    // selection honest on padded bands
    let pen_a: Vec<f64> = if penalize_off_band {
        par::map_slice(cands_a, |c| off_band_energy(c, psi_a))
    } else {
        vec![0.0; cands_a.len()]
    };
    let pen_b: Vec<f64> = if penalize_off_band {
        par::map_slice(cands_b, |c| off_band_energy(c, psi_b))
    } else {
        vec![0.0; cands_b.len()]
    };

    let scored: Vec<(f64, f64)> = par::map_indexed(cands_a.len() * cands_b.len(), |idx| {
        let (ia, ib) = (idx / cands_b.len(), idx % cands_b.len());
        let inner: Complex64 = cross_b[ib]
            .iter()
            .zip(&cross_a[ia])
            .map(|(vb, va)| va * vb.conj())
            .sum();
        let res_sqr =
            (norms_a[ia] + norms_b[ib] - 2.0 * inner.norm()).max(0.0) + pen_a[ia] + pen_b[ib];
        (res_sqr, inner.arg())
    });
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&x, &y| scored[x].0.total_cmp(&scored[y].0));
    let best = order
        .first()
        .copied()
        .ok_or_else(|| ScaloprError::invalid("empty candidate list"))?;
    let make_pair = |idx: usize| {
        let (ia, ib) = (idx / cands_b.len(), idx % cands_b.len());
        let phase = Complex64::from_polar(1.0, scored[idx].1);
        (cands_a[ia].clone(), cands_b[ib].scaled(phase))
    };
    let best_res = scored[best].0.sqrt();
    let winner = make_pair(best);
    // an ambiguity is a *different* signal pair scoring almost as well;
    // near-duplicate candidates (double roots) do not count
    let mut ambiguous_runner_up = None;
    for &idx in order.iter().skip(1).take(200) {
        if scored[idx].0.sqrt() >= 2.0 * best_res.max(1e-300) {
            break;
        }
        let cand = make_pair(idx);
        if pairs_distinct(&winner, &cand, psi_a, psi_b) {
            ambiguous_runner_up = Some(cand);
            break;
        }
    }
    Ok(PairResolution {
        winner,
        residual: best_res,
        ambiguous_runner_up,
    })
}

/// Spectrum weighted by the filter's relative magnitude: the part of the
/// candidate downstream consumers can actually see.
fn visible_spectrum(c: &Signal, psi: &Spectrum) -> Vec<Complex64> {
    let max = psi.coeffs().iter().map(|p| p.norm()).fold(0.0, f64::max);
    dft_raw(c.values())
        .iter()
        .zip(psi.coeffs())
        .map(|(s, p)| {
            if max > 0.0 {
                s * (p.norm() / max)
            } else {
                *s
            }
        })
        .collect()
}

/// Whether two candidate pairs differ in their filter-visible content by
/// more than a small relative distance, after optimizing over the common
/// phase. Differences hidden from the filters are not ambiguities.
fn pairs_distinct(a: &(Signal, Signal), b: &(Signal, Signal), psi_a: &Spectrum, psi_b: &Spectrum) -> bool {
    let va0 = visible_spectrum(&a.0, psi_a);
    let va1 = visible_spectrum(&a.1, psi_b);
    let vb0 = visible_spectrum(&b.0, psi_a);
    let vb1 = visible_spectrum(&b.1, psi_b);
    let inner: Complex64 = vb0
        .iter()
        .zip(&va0)
        .chain(vb1.iter().zip(&va1))
        .map(|(x, y)| y * x.conj())
        .sum();
    let phase = if inner.norm() > 0.0 {
        Complex64::from_polar(1.0, inner.arg())
    } else {
        Complex64::new(1.0, 0.0)
    };
    let dist_sqr: f64 = va0
        .iter()
        .zip(&vb0)
        .chain(va1.iter().zip(&vb1))
        .map(|(x, y)| (x - y * phase).norm_sqr())
        .sum();
    let norm_sqr: f64 = va0
        .iter()
        .chain(&va1)
        .map(|x| x.norm_sqr())
        .sum();
    dist_sqr > 0.01 * norm_sqr
}

/// Detects the Fourier support of a (possibly truncated) filter and maps the
/// problem to the `{1..K}` band by modulation. Returns the support offset
/// `k0` (the band is `{k0..k0+K-1}`) and `K`.
pub fn filter_support_band(psi: &Spectrum) -> Result<(usize, usize)> {
    let coeffs = psi.coeffs();
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return Err(ScaloprError::invalid("filter is identically zero"));
    }
    // Use the tightest truncation threshold whose band still fits the
    // exhaustive cap: the band edges feed the Laurent coefficients, so a
    // looser threshold puts a matching floor on solve accuracy.
    for thr in [1e-12, 1e-9, SUPPORT_REL_THRESHOLD] {
        let support: Vec<usize> = (0..coeffs.len())
            .filter(|&k| coeffs[k].norm() > thr * max)
            .collect();
        let k0 = *support.first().expect("nonempty support");
        let k1 = *support.last().expect("nonempty support");
        let k = k1 - k0 + 1;
        if k > K_MAX_DEFAULT {
            continue;
        }
        if k0 == 0 {
            return Err(ScaloprError::invalid("filter support includes the DC bin"));
        }
        return Ok((k0, k));
    }
    Err(ScaloprError::config(format!(
        "filter support exceeds exhaustive cap {K_MAX_DEFAULT}"
    )))
}

/// Modulates a candidate solved on the `{1..K}` band back to `{k0..}`.
/// `k0` may be zero or negative (bands crossing DC on the circle).
pub(crate) fn modulate_up_signed(signal: &Signal, k0: i64) -> Signal {
    if k0 == 1 {
        return signal.clone();
    }
    let n = signal.len();
    let shift = (k0 - 1) as f64;
    Signal::new(
        signal
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * Complex64::from_polar(1.0, std::f64::consts::TAU * shift * i as f64 / n as f64))
            .collect(),
    )
    .expect("finite")
}

/// Solves the two-scale problem for filters whose band does not start at
/// bin 1, by modulating the problem down and the solution back up.
pub fn resolve_pair_banded(
    m_a: &[f64],
    psi_a: &Spectrum,
    m_b: &[f64],
    psi_b: &Spectrum,
) -> Result<PairResolution> {
    resolve_pair_banded_mode(m_a, psi_a, m_b, psi_b, true)
}

fn resolve_pair_banded_mode(
    m_a: &[f64],
    psi_a: &Spectrum,
    m_b: &[f64],
    psi_b: &Spectrum,
    strict: bool,
) -> Result<PairResolution> {
    let (k0_a, k_a) = filter_support_band(psi_a)?;
    let (k0_b, k_b) = filter_support_band(psi_b)?;
    let sm_a = SupportedModulus::new(m_a.to_vec(), k_a)?;
    let sm_b = SupportedModulus::new(m_b.to_vec(), k_b)?;
    let cands_a = placed_candidates(&sm_a, k0_a as i64, k_a, strict)?;
    let cands_b = placed_candidates(&sm_b, k0_b as i64, k_b, strict)?;
    resolve_pair_from_candidates(&cands_a, psi_a, &cands_b, psi_b)
}

/// Windowed local solve used by the error correction step: the moduli are
/// `w·g_j` and `w·g_{j+1}`, the filters are truncated to a small band.
pub fn windowed_exhaustive(
    g_a: &[f64],
    g_b: &[f64],
    window: &[f64],
    psi_a_trunc: &Spectrum,
    psi_b_trunc: &Spectrum,
) -> Result<PairResolution> {
    if window.iter().all(|&w| w == 0.0) {
        let n = window.len();
        return Ok(PairResolution {
            winner: (Signal::zeros(n), Signal::zeros(n)),
            residual: 0.0,
            ambiguous_runner_up: None,
        });
    }
    let m_a: Vec<f64> = g_a.iter().zip(window).map(|(g, w)| g * w).collect();
    let m_b: Vec<f64> = g_b.iter().zip(window).map(|(g, w)| g * w).collect();
    // windowing leaks energy a little beyond the filter band (including
    // across DC), so the candidate band is padded where the cap allows
    let cands_a = padded_candidates(&m_a, psi_a_trunc)?;
    let cands_b = padded_candidates(&m_b, psi_b_trunc)?;
    resolve_pair_from_candidates_penalized(&cands_a, psi_a_trunc, &cands_b, psi_b_trunc, true)
}

/// Robust candidate generation on the filter band extended by up to 3 bins
/// on each side (within the `K_max` cap).
fn padded_candidates(m: &[f64], psi_trunc: &Spectrum) -> Result<Vec<Signal>> {
    let n = m.len();
    let (k0, k) = filter_support_band(psi_trunc)?;
    let pad = 3usize
        .min(K_MAX_DEFAULT.saturating_sub(k) / 2)
        .min((n / 2).saturating_sub(k) / 2);
    let k0_signed = k0 as i64 - pad as i64;
    let k_padded = k + 2 * pad;
    let sm = SupportedModulus::new(m.to_vec(), k_padded)?;
    placed_candidates(&sm, k0_signed, k_padded, false)
}
