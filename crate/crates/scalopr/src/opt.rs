//! Objective functions over the auxiliary variables (the product-matching
//! objective with its coupling and constraint-penalty terms, the classical
//! squared-modulus objective, and the Cauchy-specific reduced objectives)
//! together with a limited-memory quasi-Newton minimizer.
//!
//! Complex variables are optimized over stacked real/imaginary parts; the
//! gradient handed to the minimizer is the real gradient, i.e. twice the
//! conjugate Wirtinger derivative.

use num_complex::Complex64;

use crate::error::{Result, ScaloprError};
use crate::reform::QSpectra;
use crate::spectral::{analytic_project, AnalyticSignal, Signal, Spectrum};
use crate::wavelet::{AuxiliaryBank, MotherWavelet, Scalogram, WaveletFamily};

/// Default data-coupling weight.
pub const LAMBDA_DEFAULT: f64 = 1e-2;
/// Default constraint-penalty weight.
pub const MU_DEFAULT: f64 = 10.0;
/// Default gradient-norm stopping tolerance.
pub const GRAD_TOL_DEFAULT: f64 = 1e-9;
/// Default iteration cap.
pub const MAX_ITERS_DEFAULT: usize = 10_000;

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C: f64 = 1e-4;

/// Variables of the product-matching objective: one low/high pair per scale
/// plus the signal estimate.
#[derive(Debug, Clone)]
pub struct OptState {
    pub h_low: Vec<Signal>,
    pub h_high: Vec<Signal>,
    pub f: AnalyticSignal,
}

impl OptState {
    pub fn zeros(n: usize, scales: usize) -> Self {
        OptState {
            h_low: vec![Signal::zeros(n); scales],
            h_high: vec![Signal::zeros(n); scales],
            f: analytic_project(&Signal::zeros(n)),
        }
    }

    /// The ground-truth state for a known signal: auxiliary components at
    /// every scale and the signal itself.
    pub fn from_signal(f: &AnalyticSignal, aux: &AuxiliaryBank) -> Self {
        let scales = aux.len();
        let mut h_low = Vec::with_capacity(scales);
        let mut h_high = Vec::with_capacity(scales);
        for j in 0..scales {
            let (lo, hi) = crate::reform::auxiliary_components(f, aux, j);
            h_low.push(lo);
            h_high.push(hi);
        }
        OptState {
            h_low,
            h_high,
            f: f.clone(),
        }
    }

    pub fn scales(&self) -> usize {
        self.h_low.len()
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    fn validate(&self, n: usize, scales: usize) -> Result<()> {
        if self.h_low.len() != scales || self.h_high.len() != scales {
            return Err(ScaloprError::LengthMismatch {
                expected: scales,
                got: self.h_low.len().min(self.h_high.len()),
            });
        }
        for s in self.h_low.iter().chain(&self.h_high) {
            if s.len() != n {
                return Err(ScaloprError::LengthMismatch {
                    expected: n,
                    got: s.len(),
                });
            }
        }
        if self.f.len() != n {
            return Err(ScaloprError::LengthMismatch {
                expected: n,
                got: self.f.len(),
            });
        }
        Ok(())
    }
}

/// Weights, active-scale window, and stopping parameters.
#[derive(Debug, Clone)]
pub struct ObjectiveConfig {
    pub lambda: f64,
    pub mu: f64,
    /// Inclusive scale range whose terms enter the objective.
    pub scales_active: (usize, usize),
    /// Inclusive scale range whose variables move; others stay frozen.
    pub scales_free: (usize, usize),
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl ObjectiveConfig {
    /// All scales active and free, default weights.
    pub fn all(j_max: usize) -> Self {
        ObjectiveConfig {
            lambda: LAMBDA_DEFAULT,
            mu: MU_DEFAULT,
            scales_active: (0, j_max),
            scales_free: (0, j_max),
            max_iters: MAX_ITERS_DEFAULT,
            grad_tol: GRAD_TOL_DEFAULT,
        }
    }

    fn validate(&self, scales: usize) -> Result<()> {
        if self.lambda <= 0.0 || self.mu <= 0.0 {
            return Err(ScaloprError::invalid("lambda and mu must be positive"));
        }
        let (lo, hi) = self.scales_active;
        if lo > hi || hi >= scales {
            return Err(ScaloprError::invalid(format!(
                "active scale range {lo}..={hi} outside 0..{scales}"
            )));
        }
        let (flo, fhi) = self.scales_free;
        if flo > fhi || fhi >= scales {
            return Err(ScaloprError::invalid(format!(
                "free scale range {flo}..={fhi} outside 0..{scales}"
            )));
        }
        if self.max_iters == 0 {
            return Err(ScaloprError::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Gradient with the same shape as the state (f part already projected
/// analytic).
#[derive(Debug, Clone)]
pub struct OptGradient {
    pub h_low: Vec<Vec<Complex64>>,
    pub h_high: Vec<Vec<Complex64>>,
    pub f: Vec<Complex64>,
}

impl OptGradient {
    fn zeros(n: usize, scales: usize) -> Self {
        OptGradient {
            h_low: vec![vec![Complex64::new(0.0, 0.0); n]; scales],
            h_high: vec![vec![Complex64::new(0.0, 0.0); n]; scales],
            f: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for row in self.h_low.iter().chain(&self.h_high) {
            acc += row.iter().map(|c| c.norm_sqr()).sum::<f64>();
        }
        acc += self.f.iter().map(|c| c.norm_sqr()).sum::<f64>();
        acc.sqrt()
    }
}

fn conv(values: &[Complex64], filter: &Spectrum) -> Vec<Complex64> {
    crate::spectral::convolve_spectrum(values, filter.coeffs())
}

/// Adjoint of convolution: correlation with the filter.
fn adjoint_conv(values: &[Complex64], filter: &Spectrum) -> Vec<Complex64> {
    let mut spec = crate::spectral::dft_raw(values);
    for (s, psi) in spec.iter_mut().zip(filter.coeffs()) {
        *s *= psi.conj();
    }
    crate::spectral::idft_raw(&spec)
}

fn norm_sqr(values: &[Complex64]) -> f64 {
    values.iter().map(|c| c.norm_sqr()).sum()
}

fn axpy(dst: &mut [Complex64], scale: f64, src: &[Complex64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Value and real gradient of the product-matching objective
/// Σ‖h_j^low·conj(h_j^high) − Q_j‖² + λΣ(‖f⋆ψ_j^low − h_j^low‖² +
/// ‖f⋆ψ_j^high − h_j^high‖²) + μΣ‖h_j^low⋆ψ_{j+1}^high −
/// h_{j+1}^high⋆ψ_j^low‖², summed over the active scales.
pub fn objective_and_gradient(
    state: &OptState,
    q: &QSpectra,
    aux: &AuxiliaryBank,
    cfg: &ObjectiveConfig,
) -> Result<(f64, OptGradient)> {
    let n = state.n();
    let scales = aux.len();
    state.validate(n, scales)?;
    cfg.validate(scales)?;
    let (lo, hi) = cfg.scales_active;
    let mut value = 0.0;
    let mut grad = OptGradient::zeros(n, scales);
    let mut grad_f = vec![Complex64::new(0.0, 0.0); n];
    for j in lo..=hi {
        let hl = state.h_low[j].values();
        let hh = state.h_high[j].values();
        // product-matching term
        let e: Vec<Complex64> = hl
            .iter()
            .zip(hh)
            .zip(q.q(j).values())
            .map(|((l, h), qv)| l * h.conj() - qv)
            .collect();
        let term = norm_sqr(&e);
        for i in 0..n {
            grad.h_low[j][i] += 2.0 * e[i] * hh[i];
            grad.h_high[j][i] += 2.0 * e[i].conj() * hl[i];
        }
        // data-coupling terms
        let fl = conv(state.f.values(), aux.low(j));
        let fh = conv(state.f.values(), aux.high(j));
        let dl: Vec<Complex64> = fl.iter().zip(hl).map(|(a, b)| a - b).collect();
        let dh: Vec<Complex64> = fh.iter().zip(hh).map(|(a, b)| a - b).collect();
        let term = term + cfg.lambda * (norm_sqr(&dl) + norm_sqr(&dh));
        axpy(&mut grad.h_low[j], -2.0 * cfg.lambda, &dl);
        axpy(&mut grad.h_high[j], -2.0 * cfg.lambda, &dh);
        axpy(&mut grad_f, 2.0 * cfg.lambda, &adjoint_conv(&dl, aux.low(j)));
        axpy(&mut grad_f, 2.0 * cfg.lambda, &adjoint_conv(&dh, aux.high(j)));
        // constraint penalty for the (j, j+1) pair
        let term = if j + 1 <= hi {
            let c: Vec<Complex64> = conv(hl, aux.high(j + 1))
                .iter()
                .zip(conv(state.h_high[j + 1].values(), aux.low(j)))
                .map(|(a, b)| a - b)
                .collect();
            axpy(&mut grad.h_low[j], 2.0 * cfg.mu, &adjoint_conv(&c, aux.high(j + 1)));
            axpy(&mut grad.h_high[j + 1], -2.0 * cfg.mu, &adjoint_conv(&c, aux.low(j)));
            term + cfg.mu * norm_sqr(&c)
        } else {
            term
        };
        if !term.is_finite() {
            return Err(ScaloprError::Numerical {
                scale: j,
                message: "non-finite objective term".into(),
            });
        }
        value += term;
    }
    grad.f = analytic_project(&Signal::new(grad_f).map_err(|_| ScaloprError::Numerical {
        scale: lo,
        message: "non-finite signal gradient".into(),
    })?)
    .into_signal()
    .into_values();
    // freeze variables outside the free window
    let (flo, fhi) = cfg.scales_free;
    for j in 0..scales {
        if j < flo || j > fhi {
            grad.h_low[j].iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            grad.h_high[j].iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        }
    }
    Ok((value, grad))
}

/// Value and real gradient of the classical objective
/// Σ‖|h_j|² − g_j²‖² + λΣ‖f⋆ψ_j − h_j‖².
pub fn classical_objective_and_gradient(
    h: &[Signal],
    f: &AnalyticSignal,
    g: &Scalogram,
    family: &WaveletFamily,
    lambda: f64,
) -> Result<(f64, Vec<Vec<Complex64>>, Vec<Complex64>)> {
    let n = f.len();
    let scales = family.len();
    if h.len() != scales {
        return Err(ScaloprError::LengthMismatch {
            expected: scales,
            got: h.len(),
        });
    }
    if lambda <= 0.0 {
        return Err(ScaloprError::invalid("lambda must be positive"));
    }
    let mut value = 0.0;
    let mut grad_h = vec![vec![Complex64::new(0.0, 0.0); n]; scales];
    let mut grad_f = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..scales {
        let hj = h[j].values();
        let u: Vec<f64> = hj
            .iter()
            .zip(g.row(j))
            .map(|(c, m)| c.norm_sqr() - m * m)
            .collect();
        let mut term: f64 = u.iter().map(|v| v * v).sum();
        for i in 0..n {
            grad_h[j][i] += 4.0 * u[i] * hj[i];
        }
        let d: Vec<Complex64> = conv(f.values(), family.filter(j))
            .iter()
            .zip(hj)
            .map(|(a, b)| a - b)
            .collect();
        term += lambda * norm_sqr(&d);
        axpy(&mut grad_h[j], -2.0 * lambda, &d);
        axpy(&mut grad_f, 2.0 * lambda, &adjoint_conv(&d, family.filter(j)));
        if !term.is_finite() {
            return Err(ScaloprError::Numerical {
                scale: j,
                message: "non-finite objective term".into(),
            });
        }
        value += term;
    }
    let grad_f = analytic_project(&Signal::new(grad_f).map_err(|_| ScaloprError::Numerical {
        scale: 0,
        message: "non-finite signal gradient".into(),
    })?)
    .into_signal()
    .into_values();
    Ok((value, grad_h, grad_f))
}

fn require_matched_cauchy(family: &WaveletFamily, aux: &AuxiliaryBank) -> Result<f64> {
    match *family.mother() {
        MotherWavelet::Cauchy { p1, p2 } => {
            let a = family.dilation();
            let expected = (-p2 * (a - 1.0) / (a + 1.0)).exp();
            if (aux.r() - expected).abs() > 1e-12 * expected {
                return Err(ScaloprError::invalid(format!(
                    "auxiliary radius {} does not match the Cauchy choice {expected}",
                    aux.r()
                )));
            }
            Ok(a.powf(p1))
        }
        _ => Err(ScaloprError::invalid(
            "reduced objectives require a Cauchy bank with its matched radius",
        )),
    }
}

/// First-term-only objective Σ‖h_j^low·conj(h_j^high) − Q_j‖² for a Cauchy
/// bank with the matched radius.
pub fn cauchy_obj1(
    h_low: &[Signal],
    h_high: &[Signal],
    q: &QSpectra,
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
) -> Result<f64> {
    require_matched_cauchy(family, aux)?;
    let mut value = 0.0;
    for j in 0..q.len() {
        value += h_low[j]
            .values()
            .iter()
            .zip(h_high[j].values())
            .zip(q.q(j).values())
            .map(|((l, h), qv)| (l * h.conj() - qv).norm_sqr())
            .sum::<f64>();
    }
    Ok(value)
}

/// Real gradient of obj₁ restricted to the constraint subspace
/// `h_{j+1}^high = a^{p1}·h_j^low`. Free coordinates are all `h_j^low` and
/// `h_0^high`; the returned pair is (per-scale low gradients, h_0^high
/// gradient).
pub fn cauchy_obj1_subspace_gradient(
    h_low: &[Signal],
    h_high: &[Signal],
    q: &QSpectra,
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
) -> Result<(Vec<Vec<Complex64>>, Vec<Complex64>)> {
    let gain = require_matched_cauchy(family, aux)?;
    let n = family.n();
    let scales = q.len();
    let mut grad_low = vec![vec![Complex64::new(0.0, 0.0); n]; scales];
    let mut grad_high = vec![vec![Complex64::new(0.0, 0.0); n]; scales];
    for j in 0..scales {
        let hl = h_low[j].values();
        let hh = h_high[j].values();
        for i in 0..n {
            let e = hl[i] * hh[i].conj() - q.q(j).values()[i];
            grad_low[j][i] += 2.0 * e * hh[i];
            grad_high[j][i] += 2.0 * e.conj() * hl[i];
        }
    }
    // chain rule through h_{j+1}^high = gain·h_j^low
    for j in 0..scales - 1 {
        let upper = grad_high[j + 1].clone();
        axpy(&mut grad_low[j], gain, &upper);
    }
    Ok((grad_low, grad_high[0].clone()))
}

/// The alternating data-attachment objective of the reduced problem:
/// low terms on scales with `j ≡ J (mod 2)`, high terms on the others.
pub fn cauchy_obj2(
    h_low: &[Signal],
    h_high: &[Signal],
    f: &AnalyticSignal,
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
) -> Result<f64> {
    require_matched_cauchy(family, aux)?;
    let j_max = family.j_max();
    let mut value = 0.0;
    for j in 0..=j_max {
        if j % 2 == j_max % 2 {
            let fl = conv(f.values(), aux.low(j));
            value += fl
                .iter()
                .zip(h_low[j].values())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
        } else {
            let fh = conv(f.values(), aux.high(j));
            value += fh
                .iter()
                .zip(h_high[j].values())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
        }
    }
    Ok(value)
}

/// Real gradient of obj₂ with respect to the participating `h` rows and the
/// signal estimate. Rows of the non-participating parity get a zero gradient;
/// the signal gradient is projected onto the analytic subspace.
pub fn cauchy_obj2_gradient(
    h_low: &[Signal],
    h_high: &[Signal],
    f: &AnalyticSignal,
    family: &WaveletFamily,
    aux: &AuxiliaryBank,
) -> Result<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>, Vec<Complex64>)> {
    require_matched_cauchy(family, aux)?;
    let n = family.n();
    let j_max = family.j_max();
    let mut grad_low = vec![vec![Complex64::new(0.0, 0.0); n]; j_max + 1];
    let mut grad_high = vec![vec![Complex64::new(0.0, 0.0); n]; j_max + 1];
    let mut grad_f = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..=j_max {
        if j % 2 == j_max % 2 {
            let fl = conv(f.values(), aux.low(j));
            let d: Vec<Complex64> = fl
                .iter()
                .zip(h_low[j].values())
                .map(|(a, b)| a - b)
                .collect();
            axpy(&mut grad_low[j], -2.0, &d);
            axpy(&mut grad_f, 2.0, &adjoint_conv(&d, aux.low(j)));
        } else {
            let fh = conv(f.values(), aux.high(j));
            let d: Vec<Complex64> = fh
                .iter()
                .zip(h_high[j].values())
                .map(|(a, b)| a - b)
                .collect();
            axpy(&mut grad_high[j], -2.0, &d);
            axpy(&mut grad_f, 2.0, &adjoint_conv(&d, aux.high(j)));
        }
    }
    let gf = analytic_project(&Signal::new(grad_f).map_err(|_| ScaloprError::Numerical {
        scale: 0,
        message: "non-finite signal gradient".into(),
    })?)
    .into_signal()
    .into_values();
    Ok((grad_low, grad_high, gf))
}

/// One point of the optimization trace.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
}

/// Trace rows as a CSV body with header.
pub fn trace_to_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("iter,value,gradnorm\n");
    for p in trace {
        out.push_str(&format!("{},{:.17e},{:.17e}\n", p.iter, p.value, p.grad_norm));
    }
    out
}

/// Result of a minimization run.
#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub state: OptState,
    pub value: f64,
    pub grad_norm: f64,
    pub trace: Vec<TracePoint>,
    /// Set when a line search could not find a decrease; the best iterate
    /// seen is returned.
    pub line_search_failed: bool,
}

/// Limited-memory BFGS over flat real coordinates with backtracking Armijo
/// line search. Stops at `max_iters` or when the gradient norm falls below
/// `grad_tol·(1 + |value|)`. Never raises on a stalled line search; returns
/// the best iterate with a flag instead.
pub fn lbfgs_flat<F>(
    mut x: Vec<f64>,
    mut eval: F,
    max_iters: usize,
    grad_tol: f64,
) -> Result<(Vec<f64>, f64, f64, Vec<TracePoint>, bool)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let (mut value, mut grad) = eval(&x)?;
    let mut gnorm = dot(&grad, &grad).sqrt();
    let mut trace = vec![TracePoint {
        iter: 0,
        value,
        grad_norm: gnorm,
    }];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut line_search_failed = false;
    for iter in 1..=max_iters {
        if gnorm < grad_tol * (1.0 + value.abs()) {
            break;
        }
        // two-loop recursion
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for i in (0..m).rev() {
            alphas[i] = rho_hist[i] * dot(&s_hist[i], &dir);
            for (d, y) in dir.iter_mut().zip(&y_hist[i]) {
                *d -= alphas[i] * y;
            }
        }
        if m > 0 {
            let ys = 1.0 / rho_hist[m - 1];
            let yy = dot(&y_hist[m - 1], &y_hist[m - 1]);
            if yy > 0.0 {
                let gamma = ys / yy;
                dir.iter_mut().for_each(|d| *d *= gamma);
            }
        }
        for i in 0..m {
            let beta = rho_hist[i] * dot(&y_hist[i], &dir);
            for (d, s) in dir.iter_mut().zip(&s_hist[i]) {
                *d += (alphas[i] - beta) * s;
            }
        }
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // fall back to steepest descent if the model direction is bad
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }
        // backtracking Armijo
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (cv, cg) = eval(&cand)?;
            if cv <= value + ARMIJO_C * step * slope {
                accepted = Some((cand, cv, cg));
                break;
            }
            step *= 0.5;
        }
        let Some((new_x, new_value, new_grad)) = accepted else {
            line_search_failed = true;
            break;
        };
        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let ys = dot(&y, &s);
        if ys > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if s_hist.len() == LBFGS_MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / ys);
        }
        x = new_x;
        value = new_value;
        grad = new_grad;
        gnorm = dot(&grad, &grad).sqrt();
        trace.push(TracePoint {
            iter,
            value,
            grad_norm: gnorm,
        });
    }
    Ok((x, value, gnorm, trace, line_search_failed))
}

fn pack(state: &OptState) -> Vec<f64> {
    let n = state.n();
    let scales = state.scales();
    let mut flat = Vec::with_capacity((2 * scales + 1) * 2 * n);
    for s in state.h_low.iter().chain(&state.h_high) {
        for c in s.values() {
            flat.push(c.re);
            flat.push(c.im);
        }
    }
    for c in state.f.values() {
        flat.push(c.re);
        flat.push(c.im);
    }
    flat
}

fn unpack(flat: &[f64], n: usize, scales: usize) -> OptState {
    let complex_at = |base: usize| -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::new(flat[base + 2 * i], flat[base + 2 * i + 1]))
            .collect()
    };
    let mut h_low = Vec::with_capacity(scales);
    let mut h_high = Vec::with_capacity(scales);
    for j in 0..scales {
        h_low.push(Signal::new(complex_at(2 * n * j)).expect("finite"));
    }
    for j in 0..scales {
        h_high.push(Signal::new(complex_at(2 * n * (scales + j))).expect("finite"));
    }
    let f = analytic_project(&Signal::new(complex_at(2 * n * 2 * scales)).expect("finite"));
    OptState { h_low, h_high, f }
}

fn pack_gradient(grad: &OptGradient) -> Vec<f64> {
    let mut flat = Vec::new();
    for row in grad.h_low.iter().chain(&grad.h_high) {
        for c in row {
            flat.push(c.re);
            flat.push(c.im);
        }
    }
    for c in &grad.f {
        flat.push(c.re);
        flat.push(c.im);
    }
    flat
}

/// Minimizes the product-matching objective from `init`.
pub fn minimize(
    q: &QSpectra,
    aux: &AuxiliaryBank,
    init: OptState,
    cfg: &ObjectiveConfig,
) -> Result<MinimizeOutcome> {
    let n = init.n();
    let scales = aux.len();
    init.validate(n, scales)?;
    cfg.validate(scales)?;
    let x0 = pack(&init);
    let (x, value, grad_norm, trace, line_search_failed) = lbfgs_flat(
        x0,
        |flat| {
            let state = unpack(flat, n, scales);
            let (v, g) = objective_and_gradient(&state, q, aux, cfg)?;
            Ok((v, pack_gradient(&g)))
        },
        cfg.max_iters,
        cfg.grad_tol,
    )?;
    Ok(MinimizeOutcome {
        state: unpack(&x, n, scales),
        value,
        grad_norm,
        trace,
        line_search_failed,
    })
}

/// Minimizes the classical objective; variables are the per-scale `h_j`
/// and the signal estimate.
pub fn minimize_classical(
    g: &Scalogram,
    family: &WaveletFamily,
    init_h: Vec<Signal>,
    init_f: AnalyticSignal,
    lambda: f64,
    max_iters: usize,
    grad_tol: f64,
) -> Result<(Vec<Signal>, AnalyticSignal, f64, Vec<TracePoint>, bool)> {
    let n = family.n();
    let scales = family.len();
    let mut x0 = Vec::with_capacity((scales + 1) * 2 * n);
    for s in &init_h {
        for c in s.values() {
            x0.push(c.re);
            x0.push(c.im);
        }
    }
    for c in init_f.values() {
        x0.push(c.re);
        x0.push(c.im);
    }
    let unpack_h = |flat: &[f64]| -> (Vec<Signal>, AnalyticSignal) {
        let complex_at = |base: usize| -> Vec<Complex64> {
            (0..n)
                .map(|i| Complex64::new(flat[base + 2 * i], flat[base + 2 * i + 1]))
                .collect()
        };
        let h: Vec<Signal> = (0..scales)
            .map(|j| Signal::new(complex_at(2 * n * j)).expect("finite"))
            .collect();
        let f = analytic_project(&Signal::new(complex_at(2 * n * scales)).expect("finite"));
        (h, f)
    };
    let (x, value, _gnorm, trace, flag) = lbfgs_flat(
        x0,
        |flat| {
            let (h, f) = unpack_h(flat);
            let (v, gh, gf) = classical_objective_and_gradient(&h, &f, g, family, lambda)?;
            let mut out = Vec::with_capacity(flat.len());
            for row in &gh {
                for c in row {
                    out.push(c.re);
                    out.push(c.im);
                }
            }
            for c in &gf {
                out.push(c.re);
                out.push(c.im);
            }
            Ok((v, out))
        },
        max_iters,
        grad_tol,
    )?;
    let (h, f) = unpack_h(&x);
    Ok((h, f, value, trace, flag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reform::q_from_signal;
    use crate::spectral::idft_raw;
    use crate::wavelet::scalogram;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn random_analytic(n: usize, seed: u64) -> AnalyticSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        for item in spec.iter_mut().take(n / 2 + 1).skip(1) {
            *item = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let f = Signal::new(idft_raw(&spec)).unwrap();
        let scale = 1.0 / f.norm();
        AnalyticSignal::try_new(f.scaled(Complex64::new(scale, 0.0))).unwrap()
    }

    fn random_state(n: usize, scales: usize, seed: u64) -> OptState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand_signal = |amp: f64| {
            Signal::new(
                (0..n)
                    .map(|_| amp * Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect(),
            )
            .unwrap()
        };
        let h_low = (0..scales).map(|_| rand_signal(0.3)).collect();
        let h_high = (0..scales).map(|_| rand_signal(0.3)).collect();
        OptState {
            h_low,
            h_high,
            f: random_analytic(n, seed.wrapping_mul(31).wrapping_add(7)),
        }
    }

    fn morlet_setup(n: usize) -> (WaveletFamily, AuxiliaryBank) {
        let family = WaveletFamily::dyadic_morlet(n).unwrap();
        let aux = AuxiliaryBank::build(&family, (-0.006f64).exp()).unwrap();
        (family, aux)
    }

    #[test]
    fn ground_truth_is_global_minimum() {
        let n = 64;
        let (family, aux) = morlet_setup(n);
        let f = random_analytic(n, 1);
        let q = q_from_signal(&f, &family, &aux).unwrap();
        let state = OptState::from_signal(&f, &aux);
        let cfg = ObjectiveConfig::all(family.j_max());
        let (value, grad) = objective_and_gradient(&state, &q, &aux, &cfg).unwrap();
        assert!(value < 1e-18 * q.norm_sqr(), "value {value}");
        assert!(grad.norm() < 1e-9, "grad {}", grad.norm());
    }

    #[test]
    fn zero_state_value_is_q_norm() {
        let n = 64;
        let (family, aux) = morlet_setup(n);
        let f = random_analytic(n, 2);
        let q = q_from_signal(&f, &family, &aux).unwrap();
        let state = OptState::zeros(n, aux.len());
        let cfg = ObjectiveConfig::all(family.j_max());
        let (value, _) = objective_and_gradient(&state, &q, &aux, &cfg).unwrap();
        assert!((value - q.norm_sqr()).abs() < 1e-12 * q.norm_sqr());
    }

    fn finite_diff_check<F>(x0: Vec<f64>, mut eval: F, coords: usize, seed: u64)
    where
        F: FnMut(&[f64]) -> (f64, Vec<f64>),
    {
        let (_, grad) = eval(&x0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-6;
        for _ in 0..coords {
            let i = rng.gen_range(0..x0.len());
            let mut xp = x0.clone();
            xp[i] += h;
            let mut xm = x0.clone();
            xm[i] -= h;
            let fd = (eval(&xp).0 - eval(&xm).0) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            let rel = (fd - grad[i]).abs() / denom;
            assert!(rel < 1e-6, "coord {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let n = 32;
        let (family, aux) = morlet_setup(n);
        let f = random_analytic(n, 3);
        let q = q_from_signal(&f, &family, &aux).unwrap();
        let scales = aux.len();
        let cfg = ObjectiveConfig::all(family.j_max());
        let state = random_state(n, scales, 4);
        let x0 = pack(&state);
        finite_diff_check(
            x0,
            |flat| {
                let s = unpack(flat, n, scales);
                let (v, g) = objective_and_gradient(&s, &q, &aux, &cfg).unwrap();
                (v, pack_gradient(&g))
            },
            50,
            11,
        );
    }

    #[test]
    fn classical_gradient_matches_finite_differences() {
        let n = 32;
        let (family, _) = morlet_setup(n);
        let f_true = random_analytic(n, 5);
        let g = scalogram(&f_true, &family).unwrap();
        let scales = family.len();
        let state = random_state(n, scales, 6);
        let mut x0 = Vec::new();
        for s in &state.h_low {
            for c in s.values() {
                x0.push(c.re);
                x0.push(c.im);
            }
        }
        for c in state.f.values() {
            x0.push(c.re);
            x0.push(c.im);
        }
        let n_flat = x0.len();
        finite_diff_check(
            x0,
            |flat| {
                let complex_at = |base: usize| -> Vec<Complex64> {
                    (0..n)
                        .map(|i| Complex64::new(flat[base + 2 * i], flat[base + 2 * i + 1]))
                        .collect()
                };
                let h: Vec<Signal> = (0..scales)
                    .map(|j| Signal::new(complex_at(2 * n * j)).unwrap())
                    .collect();
                let f = analytic_project(&Signal::new(complex_at(2 * n * scales)).unwrap());
                let (v, gh, gf) =
                    classical_objective_and_gradient(&h, &f, &g, &family, 1e-2).unwrap();
                let mut out = Vec::with_capacity(n_flat);
                for row in &gh {
                    for c in row {
                        out.push(c.re);
                        out.push(c.im);
                    }
                }
                for c in &gf {
                    out.push(c.re);
                    out.push(c.im);
                }
                (v, out)
            },
            50,
            12,
        );
    }

    #[test]
    fn classical_ground_truth_and_zero_state() {
        let n = 64;
        let (family, aux) = morlet_setup(n);
        let f = random_analytic(n, 7);
        let g = scalogram(&f, &family).unwrap();
        let h: Vec<Signal> = (0..family.len())
            .map(|j| {
                let (lo, _) = crate::reform::auxiliary_components(&f, &aux, j);
                let _ = lo;
                Signal::new(conv(f.values(), family.filter(j))).unwrap()
            })
            .collect();
        let (value, gh, gf) =
            classical_objective_and_gradient(&h, &f, &g, &family, 1e-2).unwrap();
        assert!(value < 1e-18, "value {value}");
        let gn: f64 = gh
            .iter()
            .flat_map(|r| r.iter())
            .chain(gf.iter())
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(gn < 1e-9, "grad {gn}");

        let zeros = vec![Signal::zeros(n); family.len()];
        let g_sqr_norm: f64 = g
            .rows()
            .iter()
            .map(|row| row.iter().map(|m| m.powi(4)).sum::<f64>())
            .sum();
        let f0 = analytic_project(&Signal::zeros(n));
        let (v0, _, _) = classical_objective_and_gradient(&zeros, &f0, &g, &family, 1e-2).unwrap();
        assert!((v0 - g_sqr_norm).abs() < 1e-12 * (1.0 + g_sqr_norm));
    }

    #[test]
    fn objective_invariant_under_global_phase() {
        let n = 32;
        let (family, aux) = morlet_setup(n);
        let f = random_analytic(n, 8);
        let q = q_from_signal(&f, &family, &aux).unwrap();
        let cfg = ObjectiveConfig::all(family.j_max());
        let state = random_state(n, aux.len(), 9);
        let (v0, _) = objective_and_gradient(&state, &q, &aux, &cfg).unwrap();
        for phi in [0.3, 1.7, -2.2] {
            let rot = Complex64::from_polar(1.0, phi);
            let rotated = OptState {
                h_low: state.h_low.iter().map(|s| s.scaled(rot)).collect(),
                h_high: state.h_high.iter().map(|s| s.scaled(rot)).collect(),
                f: state.f.scaled(rot),
            };
            let (v1, _) = objective_and_gradient(&rotated, &q, &aux, &cfg).unwrap();
            assert!((v0 - v1).abs() < 1e-10 * (1.0 + v0), "phi {phi}: {v0} vs {v1}");
        }
    }

    fn cauchy_setup(n: usize) -> (WaveletFamily, AuxiliaryBank) {
        let family =
            WaveletFamily::build(MotherWavelet::cauchy(1.0, 1.0), n, 2.0, 3).unwrap();
        let aux = AuxiliaryBank::cauchy(&family).unwrap();
        (family, aux)
    }

    /// Builds the entrywise-scaled family of states on which obj₁ vanishes.
    fn c1_point(
        f: &AnalyticSignal,
        aux: &AuxiliaryBank,
        gamma: &[Complex64],
        j_max: usize,
    ) -> (Vec<Signal>, Vec<Signal>) {
        let mut h_low = Vec::new();
        let mut h_high = Vec::new();
        for j in 0..=j_max {
            let (lo, hi) = crate::reform::auxiliary_components(f, aux, j);
            let (wl, wh): (Vec<Complex64>, Vec<Complex64>) = if j % 2 == j_max % 2 {
                (
                    lo.values().iter().zip(gamma).map(|(v, g)| v * g).collect(),
                    hi.values()
                        .iter()
                        .zip(gamma)
                        .map(|(v, g)| v / g.conj())
                        .collect(),
                )
            } else {
                (
                    lo.values()
                        .iter()
                        .zip(gamma)
                        .map(|(v, g)| v / g.conj())
                        .collect(),
                    hi.values().iter().zip(gamma).map(|(v, g)| v * g).collect(),
                )
            };
            h_low.push(Signal::new(wl).unwrap());
            h_high.push(Signal::new(wh).unwrap());
        }
        (h_low, h_high)
    }

    #[test]
    fn obj1_vanishes_on_scaled_states() {
        let n = 64;
        let (family, aux) = cauchy_setup(n);
        let f = random_analytic(n, 10);
        let q = q_from_signal(&f, &family, &aux).unwrap();
        let j_max = family.j_max();
        // gamma ≡ 1: exact factorization
        let ones = vec![Complex64::new(1.0, 0.0); n];
        let (hl, hh) = c1_point(&f, &aux, &ones, j_max);
        let v = cauchy_obj1(&hl, &hh, &q, &family, &aux).unwrap();
        assert!(v < 1e-16 * q.norm_sqr(), "gamma=1: {v}");
        // random entrywise-nonzero gamma
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let gamma: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(0.5 + rng.gen::<f64>(), rng.gen::<f64>() * 6.28))
            .collect();
        let (hl, hh) = c1_point(&f, &aux, &gamma, j_max);
        let v = cauchy_obj1(&hl, &hh, &q, &family, &aux).unwrap();
        assert!(v < 1e-16 * q.norm_sqr(), "random gamma: {v}");
        let (gl, gh0) = cauchy_obj1_subspace_gradient(&hl, &hh, &q, &family, &aux).unwrap();
        let gn: f64 = gl
            .iter()
            .flat_map(|r| r.iter())
            .chain(gh0.iter())
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(gn < 1e-8, "subspace gradient {gn}");
    }

    #[test]
    fn c1_point_satisfies_subspace_constraint() {
        let n = 64;
        let (family, aux) = cauchy_setup(n);
        let f = random_analytic(n, 14);
        let j_max = family.j_max();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let gamma: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(0.5 + rng.gen::<f64>(), rng.gen::<f64>() * 6.28))
            .collect();
        let (hl, hh) = c1_point(&f, &aux, &gamma, j_max);
        let gain = match *family.mother() {
            MotherWavelet::Cauchy { p1, .. } => family.dilation().powf(p1),
            _ => unreachable!(),
        };
        for j in 0..j_max {
            let err: f64 = hh[j + 1]
                .values()
                .iter()
                .zip(hl[j].values())
                .map(|(h, l)| (h - gain * l).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-10 * hh[j + 1].norm().max(1e-30), "j={j}: {err}");
        }
    }

    #[test]
    fn obj2_zero_only_for_unit_gamma() {
        let n = 64;
        let (family, aux) = cauchy_setup(n);
        let f = random_analytic(n, 16);
        let j_max = family.j_max();
        let ones = vec![Complex64::new(1.0, 0.0); n];
        let (hl, hh) = c1_point(&f, &aux, &ones, j_max);
        let v = cauchy_obj2(&hl, &hh, &f, &family, &aux).unwrap();
        assert!(v < 1e-20, "gamma=1: {v}");
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gamma: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(0.5 + rng.gen::<f64>(), rng.gen::<f64>() * 6.28))
            .collect();
        let (hl, hh) = c1_point(&f, &aux, &gamma, j_max);
        let v = cauchy_obj2(&hl, &hh, &f, &family, &aux).unwrap();
        assert!(v > 1e-6, "non-constant gamma should cost: {v}");
    }

    #[test]
    fn non_cauchy_bank_rejected_for_reduced_objectives() {
        let n = 64;
        let (family, aux) = morlet_setup(n);
        let f = random_analytic(n, 18);
        let q = q_from_signal(&f, &family, &aux).unwrap();
        let state = OptState::from_signal(&f, &aux);
        assert!(cauchy_obj1(&state.h_low, &state.h_high, &q, &family, &aux).is_err());
    }

    #[test]
    fn lbfgs_solves_quadratic() {
        let target: Vec<f64> = (0..20).map(|i| (i as f64) * 0.3 - 2.0).collect();
        let t = target.clone();
        let (x, value, _, trace, flag) = lbfgs_flat(
            vec![0.0; 20],
            move |x| {
                let v: f64 = x.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum();
                let g: Vec<f64> = x.iter().zip(&t).map(|(a, b)| 2.0 * (a - b)).collect();
                Ok((v, g))
            },
            50,
            1e-12,
        )
        .unwrap();
        assert!(!flag);
        assert!(trace.len() <= 51);
        assert!(value < 1e-20);
        let err: f64 = x
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-10, "distance {err}");
    }

    #[test]
    fn minimize_at_ground_truth_returns_immediately() {
        let n = 64;
        let (family, aux) = morlet_setup(n);
        let f = random_analytic(n, 19);
        let q = q_from_signal(&f, &family, &aux).unwrap();
        let state = OptState::from_signal(&f, &aux);
        let cfg = ObjectiveConfig::all(family.j_max());
        let out = minimize(&q, &aux, state, &cfg).unwrap();
        assert!(out.trace.len() <= 2, "{} trace points", out.trace.len());
        assert!(!out.line_search_failed);
    }

    #[test]
    fn minimize_descends_from_random_init() {
        let n = 32;
        let (family, aux) = morlet_setup(n);
        let f = random_analytic(n, 20);
        let q = q_from_signal(&f, &family, &aux).unwrap();
        let mut cfg = ObjectiveConfig::all(family.j_max());
        cfg.max_iters = 60;
        let init = random_state(n, aux.len(), 21);
        let (v0, _) = objective_and_gradient(&init, &q, &aux, &cfg).unwrap();
        let out = minimize(&q, &aux, init, &cfg).unwrap();
        assert!(out.value <= v0, "no descent: {v0} -> {}", out.value);
        assert!(out.value < 0.5 * v0, "weak descent: {v0} -> {}", out.value);
        // f stays analytic
        assert!(AnalyticSignal::try_new(out.state.f.signal().clone()).is_ok());
    }

    #[test]
    fn frozen_scales_do_not_move() {
        let n = 32;
        let (family, aux) = morlet_setup(n);
        let f = random_analytic(n, 22);
        let q = q_from_signal(&f, &family, &aux).unwrap();
        let j_max = family.j_max();
        let mut cfg = ObjectiveConfig::all(j_max);
        cfg.max_iters = 20;
        cfg.scales_free = (j_max - 1, j_max);
        let init = random_state(n, aux.len(), 23);
        let frozen_before: Vec<Signal> = init.h_low[..j_max - 1].to_vec();
        let out = minimize(&q, &aux, init, &cfg).unwrap();
        for (before, after) in frozen_before.iter().zip(&out.state.h_low) {
            let d: f64 = before
                .values()
                .iter()
                .zip(after.values())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(d == 0.0, "frozen scale moved by {d}");
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let trace = vec![
            TracePoint {
                iter: 0,
                value: 1.0,
                grad_norm: 0.5,
            },
            TracePoint {
                iter: 1,
                value: 0.5,
                grad_norm: 0.1,
            },
        ];
        let csv = trace_to_csv(&trace);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iter,value,gradnorm"));
        assert_eq!(lines.count(), 2);
    }
}
