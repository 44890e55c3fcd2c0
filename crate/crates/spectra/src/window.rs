//! Soft spectral steps and windows applied through ridge regression.
//!
//! A step at threshold `a` on the scaled Gram spectrum is realized as a
//! low-degree Chebyshev polynomial of the ridge map r_a(x) = x/(x+a), which
//! sends x = a to 1/2 and x = (1-gamma)a below 1/2 - gamma/4; the polynomial
//! only has to separate [0, 1/2 - Theta(gamma)] from [1/2, 1]. A window
//! [lo, hi] is the product of an up-step at lo and a complemented up-step at
//! (1+gamma)hi. Because the second step's ridge coordinate is a Mobius
//! function of the first's, the whole window collapses to a single series in
//! r_lo whose shape depends only on hi/lo, gamma, and eps; series are fitted
//! once per such key and cached process-wide.
//!
//! Three interchangeable evaluation engines: `Folded` runs the single series
//! in Lanczos coordinates of the scaled Gram (the default), `Product` chains
//! two independent step series (kept as a structurally different reference),
//! and `Direct` evaluates the series in ambient space with one conjugate
//! gradient ridge solve per Clenshaw term.

use crate::deflate::Preconditioner;
use crate::error::{Error, Result};
use crate::linops::{LinOp, ScaledGram};
use crate::numeric::{inv_norm_cdf, norm2, norm_cdf};
use crate::solvers::{precond_cg, LanczosBasis, RidgeProblem, SolverConfig, SolverMethod};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Absolute ceiling on fitted series degree, independent of the analytic
/// per-instance cap. Keeps worst-case fits (tiny gamma times tiny eps)
/// bounded in time and memory.
pub const HARD_DEGREE_CAP: usize = 16384;

#[derive(Debug, Clone)]
pub struct StepSpec {
    /// Threshold on the scaled Gram spectrum, in (0,1).
    pub lambda: f64,
    pub gamma: f64,
    pub eps: f64,
    pub solver_config: SolverConfig,
}

impl StepSpec {
    pub fn new(lambda: f64, gamma: f64, eps: f64) -> Self {
        StepSpec {
            lambda,
            gamma,
            eps,
            solver_config: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowEngine {
    /// Single folded series in Lanczos coordinates (default).
    Folded,
    /// Two chained step series, a structurally independent realization.
    Product,
    /// Ambient-space Clenshaw with a CG ridge solve per term.
    Direct,
}

/// Mollified-step parameters in the ridge coordinate: transition band is
/// [1/2 - 2w, 1/2] with w = gamma/(4(2-gamma)); the erf profile is centered
/// mid-band and scaled so both band edges sit z standard deviations out,
/// where Phi(-z) = eps/4.
pub(crate) fn step_params(gamma: f64, eps: f64) -> (f64, f64) {
    let halfw = gamma / (4.0 * (2.0 - gamma));
    let z = inv_norm_cdf(1.0 - 0.25 * eps);
    let sigma = halfw / z.max(0.5);
    (0.5 - halfw, sigma)
}

/// Ideal smooth step in the ridge coordinate: 0 below the transition band,
/// 1 above, erf profile inside, off by at most eps/4 at the band edges.
pub fn step_target(gamma: f64, eps: f64, r: f64) -> f64 {
    let (c, sigma) = step_params(gamma, eps);
    norm_cdf((r - c) / sigma)
}

/// Ideal soft-window value at scaled Gram eigenvalue `x` for window
/// [lo, hi]: up-step at lo times complemented gamma/2-step at (1+gamma)hi;
/// plain step when the upper edge clears the spectrum top.
pub fn soft_window_value(x: f64, lo: f64, hi: f64, gamma: f64, eps: f64) -> f64 {
    let r1 = x / (x + lo);
    let f1 = step_target(gamma, eps, r1);
    if hi >= 1.0 / (1.0 + gamma) {
        return f1;
    }
    let hi2 = (1.0 + gamma) * hi;
    let r2 = x / (x + hi2);
    f1 * (1.0 - step_target(0.5 * gamma, eps, r2))
}

pub fn clenshaw_scalar(coeffs: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + coeffs.first().copied().unwrap_or(0.0)
}

#[derive(Debug, Clone)]
pub struct StepPolynomial {
    /// Chebyshev coefficients over r in [0,1] (plain c0 convention).
    pub coefficients: Vec<f64>,
    pub degree: usize,
    pub gamma: f64,
    pub eps: f64,
}

impl StepPolynomial {
    /// q(r) for r in [0,1].
    pub fn eval(&self, r: f64) -> f64 {
        clenshaw_scalar(&self.coefficients, 2.0 * r - 1.0)
    }

    pub fn coeff_one_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }
}

/// Chebyshev coefficients of f on [0,1] by Gauss quadrature at `fx.len()`
/// nodes. Direct O(N*D) sums with blocked angle tables so no long trig
/// recurrences accumulate error.
fn dct_coefficients(fx: &[f64], d_max: usize) -> Vec<f64> {
    let n = fx.len();
    let b = (((d_max + 1) as f64).sqrt().ceil() as usize).max(1);
    let nb = d_max / b + 1;
    let mut coeffs = vec![0.0; d_max + 1];
    let mut cs = vec![0.0; b];
    let mut ss = vec![0.0; b];
    let mut cb = vec![0.0; nb];
    let mut sb = vec![0.0; nb];
    for (j, &f) in fx.iter().enumerate() {
        let theta = PI * (j as f64 + 0.5) / n as f64;
        for k2 in 0..b {
            let (s, c) = (k2 as f64 * theta).sin_cos();
            cs[k2] = c;
            ss[k2] = s;
        }
        for k1 in 0..nb {
            let (s, c) = ((k1 * b) as f64 * theta).sin_cos();
            cb[k1] = c;
            sb[k1] = s;
        }
        for k1 in 0..nb {
            let base = k1 * b;
            let top = b.min(d_max + 1 - base);
            for k2 in 0..top {
                // cos((k1*b + k2) theta) by angle addition
                let ck = cb[k1] * cs[k2] - sb[k1] * ss[k2];
                coeffs[base + k2] += f * ck;
            }
        }
    }
    let scale = 2.0 / n as f64;
    for c in &mut coeffs {
        *c *= scale;
    }
    coeffs[0] *= 0.5;
    coeffs
}

/// Fit f on [0,1] to sup error <= eps_fit with degree <= cap, escalating the
/// quadrature grid until the truncated series certifies on a 10^4-point grid.
fn chebfit_unit(f: &dyn Fn(f64) -> f64, eps_fit: f64, cap: usize) -> Option<Vec<f64>> {
    let cap = cap.min(HARD_DEGREE_CAP).max(4);
    let n_max = (4 * cap).next_power_of_two().max(2048).min(65536);
    let mut n_pts = 512.min(n_max);
    loop {
        let d_max = (n_pts / 2).min(cap);
        let fx: Vec<f64> = (0..n_pts)
            .map(|j| {
                let t = (PI * (j as f64 + 0.5) / n_pts as f64).cos();
                f((t + 1.0) * 0.5)
            })
            .collect();
        let coeffs = dct_coefficients(&fx, d_max);
        // smallest degree whose discarded tail is negligible
        let mut tail = 0.0;
        let mut chosen = d_max;
        let mut found = false;
        let mut tails = vec![0.0; d_max + 2];
        for k in (0..=d_max).rev() {
            tail += coeffs[k].abs();
            tails[k] = tail;
        }
        for d in 0..=d_max {
            if tails[d + 1] <= 0.25 * eps_fit {
                chosen = d;
                found = true;
                break;
            }
        }
        if found {
            let c = coeffs[..=chosen].to_vec();
            let mut ok = true;
            for i in 0..=10_000 {
                let r = i as f64 / 10_000.0;
                if (clenshaw_scalar(&c, 2.0 * r - 1.0) - f(r)).abs() > eps_fit {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Some(c);
            }
        }
        if n_pts >= n_max {
            return None;
        }
        n_pts = (n_pts * 4).min(n_max);
    }
}

fn analytic_degree_cap(gamma: f64, eps: f64) -> usize {
    let raw = 40.0 / gamma * (1.0 / (eps * gamma)).ln().max(1.0);
    if raw >= HARD_DEGREE_CAP as f64 {
        HARD_DEGREE_CAP
    } else {
        raw.ceil() as usize
    }
}

pub fn build_step_polynomial(gamma: f64, eps: f64) -> Result<StepPolynomial> {
    if !(gamma > 0.0 && gamma < 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "step polynomial needs gamma, eps in (0,1); got gamma={gamma}, eps={eps}"
        )));
    }
    let cap = analytic_degree_cap(gamma, eps);
    let target = |r: f64| step_target(gamma, eps, r);
    let coefficients = chebfit_unit(&target, 0.5 * eps, cap).ok_or(Error::DegreeCapExceeded {
        degree: cap + 1,
        cap,
        gamma,
        eps,
    })?;
    let poly = StepPolynomial {
        degree: coefficients.len().saturating_sub(1),
        coefficients,
        gamma,
        eps,
    };
    // envelope certification on the standard grid
    let lower_edge = (1.0 - gamma) / (2.0 - gamma);
    for i in 0..=10_000 {
        let r = i as f64 / 10_000.0;
        let v = poly.eval(r);
        let ok = v >= -eps
            && v <= 1.0 + eps
            && (r < 0.5 || v >= 1.0 - eps)
            && (r > lower_edge || v <= eps);
        if !ok {
            return Err(Error::Other(format!(
                "step polynomial violated its envelope at r={r}: value {v}"
            )));
        }
    }
    Ok(poly)
}

#[derive(Debug, Clone)]
pub struct WindowSeries {
    /// Chebyshev coefficients of the folded window transfer function in the
    /// ridge coordinate of the lower edge.
    pub coefficients: Vec<f64>,
    pub degree: usize,
    /// hi/lo for the window this series realizes (1.0 for top windows).
    pub ratio: f64,
    pub gamma: f64,
    pub eps: f64,
    pub top: bool,
}

impl WindowSeries {
    pub fn eval_r(&self, r: f64) -> f64 {
        clenshaw_scalar(&self.coefficients, 2.0 * r - 1.0)
    }

    /// Window value at scaled eigenvalue x, entering through r = x/(x+lo).
    pub fn eval_x(&self, x: f64, lo: f64) -> f64 {
        self.eval_r(x / (x + lo))
    }

    pub fn coeff_one_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }
}

/// Transfer function of the window in the lower edge's ridge coordinate.
/// With R = (1+gamma) hi/lo, the upper step's coordinate is the Mobius image
/// r/(r + R(1-r)), so the product of both steps is a single function of r.
fn window_transfer(ratio: f64, gamma: f64, eps: f64, top: bool, r: f64) -> f64 {
    let f1 = step_target(gamma, eps, r);
    if top {
        return f1;
    }
    let big_r = (1.0 + gamma) * ratio;
    let rho = r / (r + big_r * (1.0 - r));
    f1 * (1.0 - step_target(0.5 * gamma, eps, rho))
}

pub fn build_window_series(ratio: f64, gamma: f64, eps: f64, top: bool) -> Result<WindowSeries> {
    if !(gamma > 0.0 && gamma < 1.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "window series needs gamma, eps in (0,1); got gamma={gamma}, eps={eps}"
        )));
    }
    if !top && !(ratio > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "window series needs hi/lo > 1, got {ratio}"
        )));
    }
    // the upper step is the narrower one (gamma/2), so budget the cap for it
    let cap = analytic_degree_cap(0.5 * gamma, eps);
    let target = |r: f64| window_transfer(ratio, gamma, eps, top, r);
    let coefficients = chebfit_unit(&target, 0.5 * eps, cap).ok_or(Error::DegreeCapExceeded {
        degree: cap + 1,
        cap,
        gamma,
        eps,
    })?;
    Ok(WindowSeries {
        degree: coefficients.len().saturating_sub(1),
        coefficients,
        ratio,
        gamma,
        eps,
        top,
    })
}

type SeriesKey = (u64, u64, u64, bool);

fn series_cache() -> &'static Mutex<HashMap<SeriesKey, Arc<WindowSeries>>> {
    static CACHE: OnceLock<Mutex<HashMap<SeriesKey, Arc<WindowSeries>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn step_cache() -> &'static Mutex<HashMap<(u64, u64), Arc<StepPolynomial>>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), Arc<StepPolynomial>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared, process-wide series per (ratio, gamma, eps, top) key. Fits are
/// built outside the lock; a lost race just means one redundant fit.
pub fn window_series_cached(ratio: f64, gamma: f64, eps: f64, top: bool) -> Result<Arc<WindowSeries>> {
    let ratio_key = if top { 1.0f64 } else { ratio };
    let key = (ratio_key.to_bits(), gamma.to_bits(), eps.to_bits(), top);
    if let Some(s) = series_cache().lock().unwrap().get(&key) {
        return Ok(Arc::clone(s));
    }
    let built = Arc::new(build_window_series(ratio_key, gamma, eps, top)?);
    let mut map = series_cache().lock().unwrap();
    Ok(Arc::clone(map.entry(key).or_insert(built)))
}

pub fn step_polynomial_cached(gamma: f64, eps: f64) -> Result<Arc<StepPolynomial>> {
    let key = (gamma.to_bits(), eps.to_bits());
    if let Some(s) = step_cache().lock().unwrap().get(&key) {
        return Ok(Arc::clone(s));
    }
    let built = Arc::new(build_step_polynomial(gamma, eps)?);
    let mut map = step_cache().lock().unwrap();
    Ok(Arc::clone(map.entry(key).or_insert(built)))
}

/// Evaluate a series of the ridge map on `y` in Lanczos coordinates, growing
/// the basis until the accumulated out-of-basis defect fits the budget
/// (relative to ||y||) or the basis is exact.
pub(crate) fn apply_series_adaptive(
    gram: &ScaledGram,
    y: &[f64],
    coeffs: &[f64],
    shift: f64,
    budget_rel: f64,
) -> Result<Vec<f64>> {
    if y.len() != gram.dim() {
        return Err(Error::DimensionMismatch {
            expected: gram.dim(),
            got: y.len(),
        });
    }
    if !(shift > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge shift must be positive, got {shift}"
        )));
    }
    let ynorm = norm2(y);
    if ynorm == 0.0 {
        return Ok(vec![0.0; y.len()]);
    }
    let budget = budget_rel * ynorm;
    let mut basis = LanczosBasis::new(gram, y)?;
    let mut m = gram.dim().min(30).max(2);
    loop {
        basis.grow_to(m);
        let y0 = basis.start_coords();
        let (out, defect) = basis.clenshaw_ridge_series(coeffs, shift, &y0);
        if basis.is_exact() || defect <= budget || basis.len() >= gram.dim() {
            return Ok(basis.lift(&out));
        }
        m = (m * 3 / 2 + 10).min(gram.dim());
    }
}

/// A^T viewed as the primary operator, so Gram-side work can run on the row
/// space when the matrix is wide.
struct TransposeOp<'a>(&'a dyn LinOp);

impl LinOp for TransposeOp<'_> {
    fn n_rows(&self) -> usize {
        self.0.n_cols()
    }
    fn n_cols(&self) -> usize {
        self.0.n_rows()
    }
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        self.0.apply_transpose_into(v, out);
    }
    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        self.0.apply_into(v, out);
    }
}

/// Ambient-space Clenshaw with an optional caller-owned preconditioner
/// (which must be built at lambda = shift * m_est^2). Each term applies
/// xhat = 2(G + aM^2)^{-1}G - I with a CG solve at accuracy
/// eps/(4 * degree * ||c||_1). Returns the result and the matvecs spent.
pub(crate) fn apply_series_solver(
    a: &dyn LinOp,
    m_est: f64,
    coeffs: &[f64],
    shift: f64,
    y: &[f64],
    precond: Option<&Preconditioner>,
    base_cfg: &SolverConfig,
    eps: f64,
) -> Result<(Vec<f64>, usize)> {
    let t;
    let eff: &dyn LinOp = if a.n_rows() < a.n_cols() {
        t = TransposeOp(a);
        &t
    } else {
        a
    };
    let d = eff.n_cols();
    if y.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y.len(),
        });
    }
    let lambda = shift * m_est * m_est;
    let one_norm: f64 = coeffs.iter().map(|c| c.abs()).sum();
    let degree = coeffs.len().saturating_sub(1).max(1);
    let tol = (eps / (4.0 * degree as f64 * one_norm.max(1.0))).max(1e-13);
    let mut cfg = base_cfg.clone();
    cfg.method = SolverMethod::PrecondCg;
    cfg.target_rel_error = tol;
    let mut problem = RidgeProblem::from_linop(eff, lambda)?;
    if let Some(p) = precond {
        problem = problem.with_preconditioner(p);
    }
    let mut matvecs = 0usize;
    let mut xhat = |v: &[f64]| -> Result<Vec<f64>> {
        let g = eff.gram_apply(v);
        let sol = precond_cg(&problem, &g, &cfg)?;
        matvecs += sol.matvec_count + 2;
        let mut out = sol.solution;
        for (o, vi) in out.iter_mut().zip(v) {
            *o = 2.0 * *o - vi;
        }
        Ok(out)
    };
    let deg = coeffs.len() - 1;
    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    for kk in (1..=deg).rev() {
        let xb = xhat(&b1)?;
        let mut b0 = vec![0.0; d];
        for i in 0..d {
            b0[i] = 2.0 * xb[i] - b2[i] + coeffs[kk] * y[i];
        }
        b2 = std::mem::replace(&mut b1, b0);
    }
    let xb = xhat(&b1)?;
    let mut out = vec![0.0; d];
    for i in 0..d {
        out[i] = xb[i] - b2[i] + coeffs[0] * y[i];
    }
    Ok((out, matvecs))
}

/// apply_series_solver with a throwaway rank-k deflation preconditioner.
fn apply_series_direct(
    a: &dyn LinOp,
    m_est: f64,
    coeffs: &[f64],
    shift: f64,
    y: &[f64],
    k: usize,
    base_cfg: &SolverConfig,
    eps: f64,
) -> Result<Vec<f64>> {
    let t;
    let eff: &dyn LinOp = if a.n_rows() < a.n_cols() {
        t = TransposeOp(a);
        &t
    } else {
        a
    };
    let lambda = shift * m_est * m_est;
    let defl_storage;
    let precond = if k > 0 {
        let defl = crate::deflate::block_krylov_topk(eff, k, 0.25, base_cfg.seed)?;
        defl_storage = crate::deflate::build_preconditioner(defl, lambda)?;
        Some(&defl_storage)
    } else {
        None
    };
    apply_series_solver(a, m_est, coeffs, shift, y, precond, base_cfg, eps).map(|r| r.0)
}

fn validate_scale(m_est: f64) -> Result<()> {
    if !(m_est > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "norm estimate must be positive, got {m_est}"
        )));
    }
    Ok(())
}

/// Apply a gamma-soft step at spec.lambda (on the spectrum of A^T A / M^2)
/// to y: result is within eps*||y|| of s(G)y for a valid soft step s.
pub fn apply_soft_step(a: &dyn LinOp, m_est: f64, y: &[f64], spec: &StepSpec) -> Result<Vec<f64>> {
    apply_soft_step_with(a, m_est, y, spec, WindowEngine::Folded, 0)
}

pub fn apply_soft_step_with(
    a: &dyn LinOp,
    m_est: f64,
    y: &[f64],
    spec: &StepSpec,
    engine: WindowEngine,
    k: usize,
) -> Result<Vec<f64>> {
    validate_scale(m_est)?;
    if !(spec.lambda > 0.0 && spec.lambda < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "step threshold must be in (0,1), got {}",
            spec.lambda
        )));
    }
    let poly = step_polynomial_cached(spec.gamma, spec.eps)?;
    match engine {
        WindowEngine::Folded | WindowEngine::Product => {
            let gram = ScaledGram::new(a, m_est);
            apply_series_adaptive(&gram, y, &poly.coefficients, spec.lambda, 0.25 * spec.eps)
        }
        WindowEngine::Direct => apply_series_direct(
            a,
            m_est,
            &poly.coefficients,
            spec.lambda,
            y,
            k,
            &spec.solver_config,
            spec.eps,
        ),
    }
}

/// Apply the soft window for [lo, hi] (scaled Gram spectrum) to y.
pub fn apply_soft_window(
    a: &dyn LinOp,
    m_est: f64,
    y: &[f64],
    lo: f64,
    hi: f64,
    gamma: f64,
    eps: f64,
    k: usize,
) -> Result<Vec<f64>> {
    apply_soft_window_with(
        a,
        m_est,
        y,
        lo,
        hi,
        gamma,
        eps,
        k,
        WindowEngine::Folded,
        &SolverConfig::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn apply_soft_window_with(
    a: &dyn LinOp,
    m_est: f64,
    y: &[f64],
    lo: f64,
    hi: f64,
    gamma: f64,
    eps: f64,
    k: usize,
    engine: WindowEngine,
    solver_config: &SolverConfig,
) -> Result<Vec<f64>> {
    validate_scale(m_est)?;
    if !(lo > 0.0 && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "window needs 0 < lo < hi <= 1, got [{lo}, {hi}]"
        )));
    }
    let top = hi >= 1.0 / (1.0 + gamma);
    match engine {
        WindowEngine::Folded => {
            let series = window_series_cached(hi / lo, gamma, eps, top)?;
            let gram = ScaledGram::new(a, m_est);
            apply_series_adaptive(&gram, y, &series.coefficients, lo, 0.25 * eps)
        }
        WindowEngine::Product => {
            let gram = ScaledGram::new(a, m_est);
            let p1 = step_polynomial_cached(gamma, eps)?;
            let x1 = apply_series_adaptive(&gram, y, &p1.coefficients, lo, 0.125 * eps)?;
            if top {
                return Ok(x1);
            }
            let p2 = step_polynomial_cached(0.5 * gamma, eps)?;
            let s2 =
                apply_series_adaptive(&gram, &x1, &p2.coefficients, (1.0 + gamma) * hi, 0.125 * eps)?;
            Ok(x1.iter().zip(&s2).map(|(a, b)| a - b).collect())
        }
        WindowEngine::Direct => {
            let series = window_series_cached(hi / lo, gamma, eps, top)?;
            apply_series_direct(a, m_est, &series.coefficients, lo, y, k, solver_config, eps)
        }
    }
}
