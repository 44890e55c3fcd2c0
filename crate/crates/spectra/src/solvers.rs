//! Ridge-regression solvers for M_lambda = A^T A + lambda I.
//!
//! Four methods behind one dispatch: plain SVRG with the ridge-splitting row
//! decomposition, deflation-preconditioned SVRG on the stacked system
//! B = [A P^{-1/2}; sqrt(lambda) P^{-1/2}], an accelerated variant that wraps
//! the preconditioned solver in approximate proximal-point rounds, and
//! preconditioned conjugate gradient. Stochastic steps cost O(d_s + k) via
//! coefficient tracking: the inner iterate is never materialized inside an
//! epoch, only its decomposition over {sparse accumulator, anchor gradient,
//! deflation block} is updated.
//!
//! Also home to `LanczosBasis`, the per-probe tridiagonalization of the
//! scaled Gram operator that the spectral-window pipeline evaluates ridge
//! solves and Chebyshev series in, with an explicit out-of-basis defect
//! certificate per solve.

use crate::deflate::{build_preconditioner, Deflation, Preconditioner};
use crate::error::{Error, Result};
use crate::linops::{
    row_distribution, spectral_norm_estimate, LinOp, RowDistribution, ScaledGram, SparseMatrix,
};
use crate::numeric::{dot, norm2, orthonormalize_against};
use crate::rng::{stream_rng, STREAM_SOLVER_BASE};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    Svrg,
    PrecondSvrg,
    AccelPrecondSvrg,
    PrecondCg,
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svrg" => Ok(SolverMethod::Svrg),
            "precond_svrg" => Ok(SolverMethod::PrecondSvrg),
            "accel_precond_svrg" => Ok(SolverMethod::AccelPrecondSvrg),
            "precond_cg" => Ok(SolverMethod::PrecondCg),
            other => Err(Error::InvalidArgument(format!(
                "unknown solver method '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub target_rel_error: f64,
    pub max_epochs: usize,
    /// m = ceil(epoch_length_factor * S_bar / mu).
    pub epoch_length_factor: f64,
    /// eta = step_size_factor / S_bar.
    pub step_size_factor: f64,
    pub seed: u64,
    pub method: SolverMethod,
    /// Proximal regularization override for the accelerated loop; None selects
    /// gamma from the measured average condition number, Some(0.0) forces
    /// pass-through.
    pub gamma_override: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            target_rel_error: 1e-6,
            max_epochs: 600,
            epoch_length_factor: 2.0,
            step_size_factor: 0.125,
            seed: 0,
            method: SolverMethod::PrecondCg,
            gamma_override: None,
        }
    }
}

/// A ridge system. `rows` must be set for the stochastic methods (they sample
/// rows); `precond_cg` accepts any operator.
pub struct RidgeProblem<'a> {
    pub a: &'a dyn LinOp,
    pub rows: Option<&'a SparseMatrix>,
    pub lambda: f64,
    pub preconditioner: Option<&'a Preconditioner>,
}

impl<'a> RidgeProblem<'a> {
    pub fn new(a: &'a SparseMatrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ridge parameter must be positive, got {lambda}"
            )));
        }
        Ok(RidgeProblem {
            a,
            rows: Some(a),
            lambda,
            preconditioner: None,
        })
    }

    /// Operator-only problem (no row sampling available).
    pub fn from_linop(a: &'a dyn LinOp, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ridge parameter must be positive, got {lambda}"
            )));
        }
        Ok(RidgeProblem {
            a,
            rows: None,
            lambda,
            preconditioner: None,
        })
    }

    /// Attach a preconditioner built for this same (A, lambda).
    pub fn with_preconditioner(mut self, p: &'a Preconditioner) -> Self {
        self.preconditioner = Some(p);
        self
    }

    pub fn dim(&self) -> usize {
        self.a.n_cols()
    }

    /// M_lambda v = A^T A v + lambda v.
    pub fn mlambda_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.a.gram_apply(v);
        for (o, x) in out.iter_mut().zip(v) {
            *o += self.lambda * x;
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub solution: Vec<f64>,
    /// Epochs for the stochastic methods, iterations for CG.
    pub epochs_run: usize,
    /// Operator applications of A or A^T.
    pub matvec_count: usize,
    pub row_sample_count: usize,
    /// Termination-time upper bound on ||x - x*||_M / ||x*||_M (the
    /// kappa-inflated 2-norm residual proxy; exact only vs a test oracle).
    pub final_residual_mnorm_rel: f64,
}

fn check_b(problem: &RidgeProblem, b: &[f64]) -> Result<()> {
    if b.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Detect the all-zero operator so M_lambda = lambda I can be solved directly.
fn zero_matrix_shortcut(problem: &RidgeProblem, b: &[f64]) -> Option<SolverReport> {
    let zero = match problem.rows {
        Some(m) => m.frob_sq == 0.0,
        None => false,
    };
    if zero {
        Some(SolverReport {
            solution: b.iter().map(|x| x / problem.lambda).collect(),
            epochs_run: 0,
            matvec_count: 0,
            row_sample_count: 0,
            final_residual_mnorm_rel: 0.0,
        })
    } else {
        None
    }
}

/// Entry point: dispatch on `config.method`.
pub fn ridge_solve(problem: &RidgeProblem, b: &[f64], config: &SolverConfig) -> Result<SolverReport> {
    check_b(problem, b)?;
    if let Some(r) = zero_matrix_shortcut(problem, b) {
        return Ok(r);
    }
    match config.method {
        SolverMethod::Svrg => svrg_solve(problem, b, config),
        SolverMethod::PrecondSvrg => precond_svrg_solve(problem, b, config),
        SolverMethod::AccelPrecondSvrg => accelerated_outer_loop(problem, b, config),
        SolverMethod::PrecondCg => precond_cg(problem, b, config),
    }
}

/// Heuristic from the runtime case analysis: row sampling wins when the
/// matrix is large relative to per-step cost times average condition number;
/// acceleration when it is not; CG when rows are dense.
pub fn auto_select_method(
    nnz: usize,
    d: usize,
    avg_row_nnz: f64,
    k: usize,
    kappa_bar: f64,
) -> SolverMethod {
    let n_rows_est = if avg_row_nnz > 0.0 {
        nnz as f64 / avg_row_nnz
    } else {
        1.0
    };
    if avg_row_nnz >= 4.0 * (nnz as f64 / n_rows_est.max(1.0)).max(1.0) && avg_row_nnz >= d as f64 / 2.0
    {
        return SolverMethod::PrecondCg;
    }
    let step_cost = d as f64 * (avg_row_nnz + k as f64);
    if (nnz as f64) >= step_cost * kappa_bar {
        SolverMethod::PrecondSvrg
    } else {
        SolverMethod::AccelPrecondSvrg
    }
}

// ---------------------------------------------------------------------------
// plain SVRG
// ---------------------------------------------------------------------------

/// Residual-based stopping proxy: (||M x - b||_2 / ||b||_2) * sqrt(kappa),
/// an upper bound on the M_lambda-norm relative error.
fn residual_proxy(problem: &RidgeProblem, x: &[f64], b: &[f64], kappa_est: f64) -> f64 {
    let bn = norm2(b);
    if bn == 0.0 {
        return 0.0;
    }
    let mut r = problem.mlambda_apply(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    norm2(&r) / bn * kappa_est.sqrt()
}

/// Condition-number estimate (M^2 + lambda)/lambda with M an overestimate of
/// the spectral norm, preferring information already in the preconditioner.
fn kappa_estimate(problem: &RidgeProblem, seed: u64) -> Result<f64> {
    let m_sq = if let Some(p) = problem.preconditioner {
        p.deflation.norm_sq_bound.max(p.deflation.tail_base_sq())
    } else {
        let m = spectral_norm_estimate(problem.a, seed)?;
        m * m
    };
    Ok((m_sq + problem.lambda) / problem.lambda)
}

fn require_rows<'a>(problem: &'a RidgeProblem) -> Result<&'a SparseMatrix> {
    problem.rows.ok_or_else(|| {
        Error::InvalidArgument("stochastic solver needs row access to the matrix".into())
    })
}

/// One SVRG epoch on f(x) = 1/2 x^T M_lambda x - b^T x with the row
/// decomposition psi_i = 1/2 x^T (a_i a_i^T + (lambda ||a_i||^2/||A||_F^2) I) x
/// - (1/n) b^T x, sampling row i with probability ||a_i||^2/||A||_F^2.
/// Runs K ~ U[1,m] coefficient-tracked steps from the anchor `x0` and returns
/// the iterate x_K.
pub fn svrg_epoch(
    problem: &RidgeProblem,
    x0: &[f64],
    b: &[f64],
    dist: &RowDistribution,
    m: usize,
    eta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    svrg_epoch_counted(problem, x0, b, dist, m, eta, rng).map(|(x, _)| x)
}

fn svrg_epoch_counted(
    problem: &RidgeProblem,
    x0: &[f64],
    b: &[f64],
    dist: &RowDistribution,
    m: usize,
    eta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, usize)> {
    check_b(problem, b)?;
    let a = require_rows(problem)?;
    if m == 0 {
        return Ok((x0.to_vec(), 0));
    }
    let lambda = problem.lambda;
    let d = problem.dim();
    // anchor gradient g0 = M_lambda x0 - b and its row dots A g0
    let mut g0 = problem.mlambda_apply(x0);
    for (g, bi) in g0.iter_mut().zip(b) {
        *g -= bi;
    }
    let ag0 = a.apply(&g0);
    // iterate delta = theta * u + phi * g0, u updated sparsely
    let mut u = vec![0.0; d];
    let mut theta = 1.0f64;
    let mut phi = 0.0f64;
    let k_steps = rng.gen_range(1..=m);
    // per-step ridge contraction is (1 - eta*lambda) exactly: the splitting
    // weight lambda_i / p_i equals lambda for every sampled row
    for _ in 0..k_steps {
        let i = dist.sample(rng.gen::<f64>());
        let p_i = dist.probabilities[i];
        let (cols, vals) = a.row(i);
        let mut a_dot_u = 0.0;
        for (j, v) in cols.iter().zip(vals) {
            a_dot_u += u[*j] * v;
        }
        let a_dot_delta = theta * a_dot_u + phi * ag0[i];
        let c = eta / p_i * a_dot_delta;
        theta *= 1.0 - eta * lambda;
        phi = (1.0 - eta * lambda) * phi - eta;
        let scale = c / theta;
        for (j, v) in cols.iter().zip(vals) {
            u[*j] -= scale * v;
        }
    }
    let mut x = x0.to_vec();
    for j in 0..d {
        x[j] += theta * u[j] + phi * g0[j];
    }
    Ok((x, k_steps))
}

fn svrg_solve(problem: &RidgeProblem, b: &[f64], config: &SolverConfig) -> Result<SolverReport> {
    let a = require_rows(problem)?;
    let dist = row_distribution(a)?;
    let lambda = problem.lambda;
    let s_bar = a.frob_sq + 2.0 * lambda;
    let mu = lambda;
    let m = ((config.epoch_length_factor * s_bar / mu).ceil() as usize).max(1);
    let eta = config.step_size_factor / s_bar;
    let kappa = kappa_estimate(problem, config.seed)?;
    let mut x = vec![0.0; problem.dim()];
    let mut matvec_count = 0usize;
    let mut row_sample_count = 0usize;
    let mut proxy = residual_proxy(problem, &x, b, kappa);
    matvec_count += 2;
    let mut epochs = 0usize;
    while proxy > config.target_rel_error {
        if epochs >= config.max_epochs {
            return Err(Error::SolverDidNotConverge {
                epochs,
                residual: proxy,
                last_iterate: x,
            });
        }
        let mut rng = stream_rng(config.seed, STREAM_SOLVER_BASE + epochs as u64);
        let (next, k_steps) = svrg_epoch_counted(problem, &x, b, &dist, m, eta, &mut rng)?;
        x = next;
        row_sample_count += k_steps;
        matvec_count += 4; // anchor gradient + A g0 per epoch
        epochs += 1;
        proxy = residual_proxy(problem, &x, b, kappa);
        matvec_count += 2;
    }
    Ok(SolverReport {
        solution: x,
        epochs_run: epochs,
        matvec_count,
        row_sample_count,
        final_residual_mnorm_rel: proxy,
    })
}

// ---------------------------------------------------------------------------
// preconditioned SVRG
// ---------------------------------------------------------------------------

/// Per-solve context for the stacked system B = [A P^{-1/2}; sqrt(lambda)
/// P^{-1/2}]: cached row projections Z^T a_i, row norms of B, the sampling
/// distribution over the n+d components, and the smoothness/convexity
/// constants of the preconditioned objective.
struct PsvrgCtx<'a> {
    a: &'a SparseMatrix,
    p: &'a Preconditioner,
    /// zeta[l][i] = (A z_l)_i, one vector per deflation direction.
    zeta: Vec<Vec<f64>>,
    /// Squared norms of all n+d rows of B.
    row_sq: Vec<f64>,
    cum: Vec<f64>,
    s_bar: f64,
    mu_hat: f64,
    sqrt_lambda: f64,
    delta: f64,
    /// diag_scales[l] - delta, the coefficient of the deflated correction.
    dmind: Vec<f64>,
}

impl<'a> PsvrgCtx<'a> {
    fn new(a: &'a SparseMatrix, p: &'a Preconditioner) -> Result<Self> {
        let n = a.n_rows();
        let d = a.n_cols();
        if p.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.dim(),
            });
        }
        let k = p.deflation.k;
        let lambda = p.lambda;
        let delta = p.tail_scale;
        let dmind: Vec<f64> = p.diag_scales.iter().map(|s| s - delta).collect();
        let zeta: Vec<Vec<f64>> = p.deflation.z.iter().map(|z| a.apply(z)).collect();
        let mut row_sq = vec![0.0; n + d];
        for i in 0..n {
            let mut s = delta * delta * a.row_sq_norms[i];
            for l in 0..k {
                let dsq = p.diag_scales[l] * p.diag_scales[l] - delta * delta;
                s += dsq * zeta[l][i] * zeta[l][i];
            }
            row_sq[i] = s;
        }
        for j in 0..d {
            let mut s = delta * delta;
            for l in 0..k {
                let dsq = p.diag_scales[l] * p.diag_scales[l] - delta * delta;
                s += dsq * p.deflation.z[l][j] * p.deflation.z[l][j];
            }
            row_sq[n + j] = lambda * s;
        }
        let s_bar: f64 = row_sq.iter().sum();
        if s_bar <= 0.0 {
            return Err(Error::DegenerateDistribution);
        }
        let mut cum = Vec::with_capacity(n + d);
        let mut acc = 0.0;
        for &s in &row_sq {
            acc += s / s_bar;
            cum.push(acc);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        let mu_hat = lambda * delta * delta;
        Ok(PsvrgCtx {
            a,
            p,
            zeta,
            row_sq,
            cum,
            s_bar,
            mu_hat,
            sqrt_lambda: lambda.sqrt(),
            delta,
            dmind,
        })
    }

    fn sample(&self, u: f64) -> usize {
        let i = self.cum.partition_point(|&c| c <= u);
        i.min(self.cum.len() - 1)
    }

    /// M_hat y = P^{-1/2}(A^T A + lambda I)P^{-1/2} y.
    fn mhat_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut v = y.to_vec();
        self.p.apply_sqrt_inv_into(&mut v);
        let mut out = self.a.gram_apply(&v);
        for (o, vi) in out.iter_mut().zip(&v) {
            *o += self.p.lambda * vi;
        }
        self.p.apply_sqrt_inv_into(&mut out);
        out
    }
}

/// One epoch of SVRG on the preconditioned system, with optional extra ridge
/// `gamma` (the proximal term of the accelerated loop, in the preconditioned
/// metric). `b_eff` is the subproblem right-hand side. Returns (iterate,
/// steps run).
fn psvrg_epoch(
    ctx: &PsvrgCtx,
    y0: &[f64],
    b_eff: &[f64],
    m: usize,
    eta: f64,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, usize) {
    if m == 0 {
        return (y0.to_vec(), 0);
    }
    let n = ctx.a.n_rows();
    let d = ctx.a.n_cols();
    let k = ctx.p.deflation.k;
    // anchor gradient of the subproblem: ghat0 = (M_hat + gamma) y0 - b_eff
    let mut g0 = ctx.mhat_apply(y0);
    for j in 0..d {
        g0[j] += gamma * y0[j] - b_eff[j];
    }
    // caches: raw row dots A g0, and deflation dots Z^T g0
    let ag0 = ctx.a.apply(&g0);
    let zg0 = ctx.p.deflation.zt_apply(&g0);
    // delta = theta*u + phi*g0 + Z w; vu tracks Z^T u incrementally
    let mut u = vec![0.0; d];
    let mut w = vec![0.0; k];
    let mut vu = vec![0.0; k];
    let mut theta = 1.0f64;
    let mut phi = 0.0f64;
    let mut ztd = vec![0.0; k];
    let k_steps = rng.gen_range(1..=m);
    for _ in 0..k_steps {
        let idx = ctx.sample(rng.gen::<f64>());
        let p_idx = ctx.row_sq[idx] / ctx.s_bar;
        // Z^T delta, O(k)
        for l in 0..k {
            ztd[l] = theta * vu[l] + phi * zg0[l] + w[l];
        }
        let b_dot_delta;
        if idx < n {
            let (cols, vals) = ctx.a.row(idx);
            let mut a_dot_u = 0.0;
            for (j, v) in cols.iter().zip(vals) {
                a_dot_u += u[*j] * v;
            }
            let mut a_dot_delta = theta * a_dot_u + phi * ag0[idx];
            for l in 0..k {
                a_dot_delta += ctx.zeta[l][idx] * w[l];
            }
            let mut corr = 0.0;
            for l in 0..k {
                corr += ctx.dmind[l] * ctx.zeta[l][idx] * ztd[l];
            }
            b_dot_delta = ctx.delta * a_dot_delta + corr;
            let c = eta / p_idx * b_dot_delta;
            theta *= 1.0 - eta * gamma;
            phi = (1.0 - eta * gamma) * phi - eta;
            let scale = c * ctx.delta / theta;
            for (j, v) in cols.iter().zip(vals) {
                u[*j] -= scale * v;
            }
            for l in 0..k {
                vu[l] -= scale * ctx.zeta[l][idx];
                w[l] = (1.0 - eta * gamma) * w[l] - c * ctx.dmind[l] * ctx.zeta[l][idx];
            }
        } else {
            let j = idx - n;
            let mut delta_j = theta * u[j] + phi * g0[j];
            for l in 0..k {
                delta_j += ctx.p.deflation.z[l][j] * w[l];
            }
            let mut corr = 0.0;
            for l in 0..k {
                corr += ctx.dmind[l] * ctx.p.deflation.z[l][j] * ztd[l];
            }
            b_dot_delta = ctx.sqrt_lambda * (ctx.delta * delta_j + corr);
            let c = eta / p_idx * b_dot_delta;
            theta *= 1.0 - eta * gamma;
            phi = (1.0 - eta * gamma) * phi - eta;
            let cs = c * ctx.sqrt_lambda;
            u[j] -= cs * ctx.delta / theta;
            for l in 0..k {
                vu[l] -= cs * ctx.delta / theta * ctx.p.deflation.z[l][j];
                w[l] = (1.0 - eta * gamma) * w[l] - cs * ctx.dmind[l] * ctx.p.deflation.z[l][j];
            }
        }
    }
    let mut y = y0.to_vec();
    for j in 0..d {
        y[j] += theta * u[j] + phi * g0[j];
    }
    for l in 0..k {
        let c = w[l];
        for (yj, zj) in y.iter_mut().zip(&ctx.p.deflation.z[l]) {
            *yj += c * zj;
        }
    }
    (y, k_steps)
}

/// Solve (M_hat + gamma) y = b_eff from warm start y0 until the absolute
/// 2-norm residual drops to `tol_abs`. Epochs are budgeted against
/// `config.max_epochs` per call; the caller owns the accuracy schedule.
fn psvrg_inner_solve(
    ctx: &PsvrgCtx,
    y0: &[f64],
    b_eff: &[f64],
    gamma: f64,
    tol_abs: f64,
    config: &SolverConfig,
    epoch_offset: &mut usize,
    matvecs: &mut usize,
    samples: &mut usize,
) -> Result<Vec<f64>> {
    let s_bar = ctx.s_bar + 2.0 * gamma;
    let mu = ctx.mu_hat + gamma;
    let m = ((config.epoch_length_factor * s_bar / mu).ceil() as usize).max(1);
    let eta = config.step_size_factor / s_bar;
    let mut y = y0.to_vec();
    let mut epochs_here = 0usize;
    loop {
        let mut r = ctx.mhat_apply(&y);
        *matvecs += 2;
        for j in 0..r.len() {
            r[j] += gamma * y[j] - b_eff[j];
        }
        let rnorm = norm2(&r);
        if rnorm <= tol_abs {
            return Ok(y);
        }
        if epochs_here >= config.max_epochs {
            return Err(Error::SolverDidNotConverge {
                epochs: epochs_here,
                residual: rnorm,
                last_iterate: y,
            });
        }
        let mut rng = stream_rng(config.seed, STREAM_SOLVER_BASE + *epoch_offset as u64);
        *epoch_offset += 1;
        let (next, steps) = psvrg_epoch(ctx, &y, b_eff, m, eta, gamma, &mut rng);
        y = next;
        *samples += steps;
        *matvecs += 4;
        epochs_here += 1;
    }
}

fn ensure_preconditioner<'a>(
    problem: &'a RidgeProblem,
    config: &SolverConfig,
    storage: &'a mut Option<Preconditioner>,
) -> Result<&'a Preconditioner> {
    if let Some(p) = problem.preconditioner {
        return Ok(p);
    }
    // build a scalar (k = 0) preconditioner when none was supplied
    let m = spectral_norm_estimate(problem.a, config.seed)?;
    let defl = Deflation::empty(problem.dim(), m * m);
    *storage = Some(build_preconditioner(defl, problem.lambda)?);
    Ok(storage.as_ref().unwrap())
}

fn precond_svrg_solve(
    problem: &RidgeProblem,
    b: &[f64],
    config: &SolverConfig,
) -> Result<SolverReport> {
    let a = require_rows(problem)?;
    let mut storage = None;
    let p = ensure_preconditioner(problem, config, &mut storage)?;
    let ctx = PsvrgCtx::new(a, p)?;
    let mut b_hat = b.to_vec();
    p.apply_sqrt_inv_into(&mut b_hat);
    let mut matvecs = 2 * p.deflation.k; // zeta precompute
    let mut samples = 0usize;
    let mut epoch_offset = 0usize;
    // absolute target chosen so the kappa-inflated relative proxy meets the
    // requested accuracy
    let tol_abs =
        config.target_rel_error * norm2(&b_hat).max(1e-300) / (2.0 * p.kappa_hat()).sqrt();
    let y = psvrg_inner_solve(
        &ctx,
        &vec![0.0; problem.dim()],
        &b_hat,
        0.0,
        tol_abs,
        config,
        &mut epoch_offset,
        &mut matvecs,
        &mut samples,
    )?;
    // final reported proxy in the preconditioned metric
    let mut r = ctx.mhat_apply(&y);
    matvecs += 2;
    for (ri, bi) in r.iter_mut().zip(&b_hat) {
        *ri -= bi;
    }
    let proxy = norm2(&r) / norm2(&b_hat).max(1e-300) * (2.0 * p.kappa_hat()).sqrt();
    let mut x = y;
    p.apply_sqrt_inv_into(&mut x);
    Ok(SolverReport {
        solution: x,
        epochs_run: epoch_offset,
        matvec_count: matvecs,
        row_sample_count: samples,
        final_residual_mnorm_rel: proxy,
    })
}

// ---------------------------------------------------------------------------
// accelerated preconditioned SVRG (approximate proximal point)
// ---------------------------------------------------------------------------

/// Proximal-point acceleration of the preconditioned solver. Rounds s solve
/// f_hat(y) + (gamma/2)||y - c_s||^2 to fixed relative accuracy with warm
/// starts, with Nesterov extrapolation on the prox centers; gamma = (r-1) mu
/// where r = max(1, kappa_bar/4) and kappa_bar is the measured average
/// condition number of the preconditioned system. gamma = 0 degenerates to a
/// single pass-through inner solve.
pub fn accelerated_outer_loop(
    problem: &RidgeProblem,
    b: &[f64],
    config: &SolverConfig,
) -> Result<SolverReport> {
    check_b(problem, b)?;
    if let Some(r) = zero_matrix_shortcut(problem, b) {
        return Ok(r);
    }
    let a = require_rows(problem)?;
    let mut storage = None;
    let p = ensure_preconditioner(problem, config, &mut storage)?;
    let ctx = PsvrgCtx::new(a, p)?;
    let n_plus_d = (a.n_rows() + a.n_cols()) as f64;
    let kappa_bar = ctx.s_bar / (n_plus_d * ctx.mu_hat);
    let gamma = match config.gamma_override {
        Some(g) => {
            if !(g >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "gamma must be nonnegative, got {g}"
                )));
            }
            g
        }
        None => {
            let r = (kappa_bar / 4.0).max(1.0);
            (r - 1.0) * ctx.mu_hat
        }
    };
    let mut b_hat = b.to_vec();
    p.apply_sqrt_inv_into(&mut b_hat);
    let bn = norm2(&b_hat).max(1e-300);
    let kappa_full = (2.0 * p.kappa_hat()).sqrt();
    // absolute residual on M_hat y = b_hat that meets the inflated proxy
    let abs_target = config.target_rel_error * bn / kappa_full;

    let mut matvecs = 2 * p.deflation.k;
    let mut samples = 0usize;
    let mut epoch_offset = 0usize;

    if gamma == 0.0 {
        // pass-through: one direct inner solve at the target accuracy
        let y = psvrg_inner_solve(
            &ctx,
            &vec![0.0; problem.dim()],
            &b_hat,
            0.0,
            abs_target,
            config,
            &mut epoch_offset,
            &mut matvecs,
            &mut samples,
        )?;
        let mut x = y;
        p.apply_sqrt_inv_into(&mut x);
        let proxy = residual_proxy(problem, &x, b, 2.0 * p.kappa_hat());
        return Ok(SolverReport {
            solution: x,
            epochs_run: epoch_offset,
            matvec_count: matvecs,
            row_sample_count: samples,
            final_residual_mnorm_rel: proxy,
        });
    }

    let r_ratio = 1.0 + gamma / ctx.mu_hat;
    let q = 1.0 / r_ratio; // mu/(mu+gamma)
    let beta_mom = (1.0 - q.sqrt()) / (1.0 + q.sqrt());
    // Each prox subproblem is solved to a fixed fraction of the current
    // outer residual; since || M_hat (y - y*) || <= || (M_hat+gamma)(y -
    // y*) ||, an inner residual of (sqrt(q)/4) r keeps the perturbation
    // below the per-round contraction and the schedule tightens itself.
    let inner_frac = 0.25 * q.sqrt();
    let max_rounds = ((r_ratio.sqrt() * (1.0 / config.target_rel_error).ln()).ceil() as usize)
        .max(2)
        * 2
        + 8;

    let d = problem.dim();
    let mut y = vec![0.0; d];
    let mut y_prev = vec![0.0; d];
    let mut rnorm = f64::INFINITY;
    for round in 0..=max_rounds {
        let mut resid = ctx.mhat_apply(&y);
        matvecs += 2;
        for j in 0..d {
            resid[j] -= b_hat[j];
        }
        rnorm = norm2(&resid);
        if rnorm <= abs_target {
            break;
        }
        if round == max_rounds {
            return Err(Error::SolverDidNotConverge {
                epochs: epoch_offset,
                residual: rnorm / bn * kappa_full,
                last_iterate: y,
            });
        }
        let tol_abs = (inner_frac * rnorm).max(0.25 * abs_target);
        // prox center with momentum
        let mut b_eff = b_hat.clone();
        for j in 0..d {
            let center = y[j] + beta_mom * (y[j] - y_prev[j]);
            b_eff[j] += gamma * center;
        }
        let next = psvrg_inner_solve(
            &ctx, &y, &b_eff, gamma, tol_abs, config, &mut epoch_offset, &mut matvecs,
            &mut samples,
        )?;
        y_prev = std::mem::replace(&mut y, next);
    }
    let mut x = y;
    p.apply_sqrt_inv_into(&mut x);
    Ok(SolverReport {
        solution: x,
        epochs_run: epoch_offset,
        matvec_count: matvecs,
        row_sample_count: samples,
        final_residual_mnorm_rel: rnorm / bn * kappa_full,
    })
}

// ---------------------------------------------------------------------------
// preconditioned conjugate gradient
// ---------------------------------------------------------------------------

/// CG on the symmetrically preconditioned system P^{-1/2} M_lambda P^{-1/2}
/// y = P^{-1/2} b, x = P^{-1/2} y. Terminates on the kappa-inflated 2-norm
/// residual; restarts once on curvature breakdown, then errors.
pub fn precond_cg(problem: &RidgeProblem, b: &[f64], config: &SolverConfig) -> Result<SolverReport> {
    check_b(problem, b)?;
    if let Some(r) = zero_matrix_shortcut(problem, b) {
        return Ok(r);
    }
    let mut storage = None;
    let p = match ensure_preconditioner(problem, config, &mut storage) {
        Ok(p) => p,
        Err(Error::ZeroMatrix(_)) => {
            // operator-only zero matrix: M_lambda = lambda I
            return Ok(SolverReport {
                solution: b.iter().map(|x| x / problem.lambda).collect(),
                epochs_run: 0,
                matvec_count: 0,
                row_sample_count: 0,
                final_residual_mnorm_rel: 0.0,
            });
        }
        Err(e) => return Err(e),
    };
    let d = problem.dim();
    let kappa = p.kappa_hat();
    let infl = (2.0 * kappa).sqrt();
    let mhat = |y: &[f64]| -> Vec<f64> {
        let mut v = y.to_vec();
        p.apply_sqrt_inv_into(&mut v);
        let mut out = problem.a.gram_apply(&v);
        for (o, vi) in out.iter_mut().zip(&v) {
            *o += problem.lambda * vi;
        }
        p.apply_sqrt_inv_into(&mut out);
        out
    };
    let mut b_hat = b.to_vec();
    p.apply_sqrt_inv_into(&mut b_hat);
    let bn = norm2(&b_hat);
    if bn == 0.0 {
        return Ok(SolverReport {
            solution: vec![0.0; d],
            epochs_run: 0,
            matvec_count: 0,
            row_sample_count: 0,
            final_residual_mnorm_rel: 0.0,
        });
    }
    let max_iters = (4.0 * kappa.sqrt() * (2.0 / config.target_rel_error).ln())
        .ceil() as usize
        + p.deflation.k
        + 30;
    let mut y = vec![0.0; d];
    let mut r = b_hat.clone();
    let mut pv = r.clone();
    let mut rs = dot(&r, &r);
    let mut iters = 0usize;
    let mut matvecs = 0usize;
    let mut restarted = false;
    loop {
        let proxy = rs.sqrt() / bn * infl;
        if proxy <= config.target_rel_error {
            let mut x = y;
            p.apply_sqrt_inv_into(&mut x);
            return Ok(SolverReport {
                solution: x,
                epochs_run: iters,
                matvec_count: matvecs,
                row_sample_count: 0,
                final_residual_mnorm_rel: proxy,
            });
        }
        if iters >= max_iters {
            let mut x = y.clone();
            p.apply_sqrt_inv_into(&mut x);
            return Err(Error::SolverDidNotConverge {
                epochs: iters,
                residual: proxy,
                last_iterate: x,
            });
        }
        let mp = mhat(&pv);
        matvecs += 2;
        let curv = dot(&pv, &mp);
        if !(curv > 1e-300 * rs.max(1e-300)) {
            if restarted {
                let mut x = y.clone();
                p.apply_sqrt_inv_into(&mut x);
                return Err(Error::SolverDidNotConverge {
                    epochs: iters,
                    residual: proxy,
                    last_iterate: x,
                });
            }
            restarted = true;
            // rebuild the residual and direction from scratch
            r = b_hat.clone();
            let my = mhat(&y);
            matvecs += 2;
            for (ri, mi) in r.iter_mut().zip(&my) {
                *ri -= mi;
            }
            pv = r.clone();
            rs = dot(&r, &r);
            continue;
        }
        let alpha = rs / curv;
        for j in 0..d {
            y[j] += alpha * pv[j];
            r[j] -= alpha * mp[j];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        for j in 0..d {
            pv[j] = r[j] + beta * pv[j];
        }
        iters += 1;
        // periodic true-residual refresh against drift
        if iters % 64 == 0 {
            let my = mhat(&y);
            matvecs += 2;
            r = b_hat.clone();
            for (ri, mi) in r.iter_mut().zip(&my) {
                *ri -= mi;
            }
            rs = dot(&r, &r);
            pv = r.clone();
        }
    }
}

// ---------------------------------------------------------------------------
// Lanczos coordinate engine
// ---------------------------------------------------------------------------

/// Incrementally grown Lanczos basis of the scaled Gram operator from a probe
/// vector, with full reorthogonalization. All ridge solves and Chebyshev
/// window evaluations for one probe run in these coordinates at O(m) per
/// operation; every shifted solve carries an out-of-basis defect certificate
/// beta_m * |last coordinate| / shift that callers accumulate and test
/// against their error budget, growing the basis when it fails.
pub struct LanczosBasis<'a> {
    gram: &'a ScaledGram<'a>,
    v: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Residual norm after the last vector; zero after happy breakdown.
    beta_next: f64,
    resid: Vec<f64>,
    pub start_norm: f64,
    exact: bool,
    tmp: Vec<f64>,
}

impl<'a> LanczosBasis<'a> {
    /// Start a basis from probe vector `g` (not necessarily normalized).
    pub fn new(gram: &'a ScaledGram<'a>, g: &[f64]) -> Result<Self> {
        if g.len() != gram.dim() {
            return Err(Error::DimensionMismatch {
                expected: gram.dim(),
                got: g.len(),
            });
        }
        let start_norm = norm2(g);
        if start_norm == 0.0 {
            return Err(Error::ZeroMatrix("zero probe vector"));
        }
        let v0: Vec<f64> = g.iter().map(|x| x / start_norm).collect();
        Ok(LanczosBasis {
            gram,
            v: vec![v0],
            alpha: Vec::new(),
            beta: Vec::new(),
            beta_next: 0.0,
            resid: Vec::new(),
            start_norm,
            exact: false,
            tmp: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// True once the Krylov space is (numerically) invariant: coordinate
    /// computations are then exact.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn dim_cap(&self) -> usize {
        self.gram.dim()
    }

    /// Diagonal and subdiagonal of the projected (Jacobi) matrix.
    pub fn tridiagonal(&self) -> (&[f64], &[f64]) {
        (&self.alpha, &self.beta)
    }

    /// Extend the tridiagonalization to `m` vectors (or until breakdown /
    /// the ambient dimension). Each step is one Gram application plus full
    /// reorthogonalization against the current basis. Callable repeatedly
    /// with growing `m`; resumes from the stored residual.
    pub fn grow_to(&mut self, m: usize) {
        let cap = self.gram.dim();
        let target = m.min(cap);
        while self.alpha.len() < target && !self.exact {
            if self.v.len() == self.alpha.len() {
                // promote the residual left by a previous call
                self.beta.push(self.beta_next);
                let r = std::mem::take(&mut self.resid);
                self.v.push(r);
                self.beta_next = 0.0;
            }
            let j = self.alpha.len();
            let mut w = vec![0.0; cap];
            self.gram.apply(&self.v[j], &mut w, &mut self.tmp);
            let a_j = dot(&w, &self.v[j]);
            self.alpha.push(a_j);
            let left = orthonormalize_against(&mut w, &self.v);
            // scale reference: operator norm of the scaled Gram is <= 1
            if left <= 1e-13 || self.v.len() == cap {
                self.beta_next = 0.0;
                self.exact = true;
                self.resid.clear();
                return;
            }
            if self.alpha.len() == target {
                self.beta_next = left;
                self.resid = w;
                return;
            }
            self.beta.push(left);
            self.v.push(w);
        }
    }

    /// Tridiagonal multiply y = T x in coordinates.
    pub fn t_apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.alpha.len();
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut s = self.alpha[i] * x[i];
            if i > 0 {
                s += self.beta[i - 1] * x[i - 1];
            }
            if i + 1 < m {
                s += self.beta[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// Solve (T + shift) z = rhs by the Thomas algorithm (T + shift is SPD
    /// for shift > 0 since T is a projection of a PSD operator).
    pub fn solve_shifted(&self, rhs: &[f64], shift: f64) -> Vec<f64> {
        let m = self.alpha.len();
        debug_assert_eq!(rhs.len(), m);
        let mut c_prime = vec![0.0; m];
        let mut d_prime = vec![0.0; m];
        let mut z = vec![0.0; m];
        let b0 = self.alpha[0] + shift;
        c_prime[0] = if m > 1 { self.beta[0] / b0 } else { 0.0 };
        d_prime[0] = rhs[0] / b0;
        for i in 1..m {
            let a_i = self.beta[i - 1];
            let b_i = self.alpha[i] + shift;
            let c_i = if i + 1 < m { self.beta[i] } else { 0.0 };
            let denom = b_i - a_i * c_prime[i - 1];
            c_prime[i] = c_i / denom;
            d_prime[i] = (rhs[i] - a_i * d_prime[i - 1]) / denom;
        }
        z[m - 1] = d_prime[m - 1];
        for i in (0..m - 1).rev() {
            z[i] = d_prime[i] - c_prime[i] * z[i + 1];
        }
        z
    }

    /// z = (T + a)^{-1} T y with the out-of-basis defect increment
    /// (beta_next/a)|y_last - z_last| of the corresponding full-space
    /// operation (X + a)^{-1} X.
    pub fn apply_ridge_ratio(&self, y: &[f64], a: f64) -> (Vec<f64>, f64) {
        let ty = self.t_apply(y);
        let z = self.solve_shifted(&ty, a);
        let m = y.len();
        let defect = if self.exact {
            0.0
        } else {
            self.beta_next / a * (y[m - 1] - z[m - 1]).abs()
        };
        (z, defect)
    }

    /// Clenshaw evaluation of sum_k c_k T_k(2 R_a - I) applied to `y0` in
    /// coordinates, where R_a = (X+a)^{-1} X. Returns the coordinate result
    /// and the accumulated defect certificate.
    pub fn clenshaw_ridge_series(&self, coeffs: &[f64], a: f64, y0: &[f64]) -> (Vec<f64>, f64) {
        let m = y0.len();
        let deg = coeffs.len().saturating_sub(1);
        let mut b1 = vec![0.0; m];
        let mut b2 = vec![0.0; m];
        let mut defect = 0.0;
        // xhat_apply: v -> 2 R_a v - v
        let xhat = |v: &[f64], defect: &mut f64| -> Vec<f64> {
            let (z, dinc) = self.apply_ridge_ratio(v, a);
            *defect += 2.0 * dinc;
            let mut out = vec![0.0; m];
            for i in 0..m {
                out[i] = 2.0 * z[i] - v[i];
            }
            out
        };
        for k in (1..=deg).rev() {
            let xb = xhat(&b1, &mut defect);
            let mut b0 = vec![0.0; m];
            for i in 0..m {
                b0[i] = 2.0 * xb[i] - b2[i] + coeffs[k] * y0[i];
            }
            b2 = std::mem::replace(&mut b1, b0);
        }
        let xb = xhat(&b1, &mut defect);
        let mut out = vec![0.0; m];
        for i in 0..m {
            out[i] = xb[i] - b2[i] + coeffs[0] * y0[i];
        }
        (out, defect)
    }

    /// Lift a coordinate vector back to the ambient space.
    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.gram.dim()];
        for (c, vcol) in y.iter().zip(&self.v) {
            for (o, vi) in out.iter_mut().zip(vcol) {
                *o += c * vi;
            }
        }
        out
    }

    /// Coordinates of the start probe: ||g|| e_0.
    pub fn start_coords(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.alpha.len()];
        if !e.is_empty() {
            e[0] = self.start_norm;
        }
        e
    }
}
