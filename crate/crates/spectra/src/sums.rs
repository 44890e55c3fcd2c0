//! Spectral-sum estimators on top of the histogram machinery: Schatten
//! p-norms (bucket route and windowed-polynomial route), Orlicz sums,
//! Ky Fan norms, and SVD entropy via multi-point Tsallis interpolation.
//!
//! Every estimator follows the same deflate-then-sample shape. The top k
//! singular directions are peeled off and scored exactly from their Rayleigh
//! quotients; the remainder operator A(I - ZZ^T) is probed once, each probe
//! reduced to a Gauss quadrature of its spectral measure. All window counts,
//! truncation-depth searches, and power-function sums are then scalar
//! evaluations against those fixed quadratures, so deepening lambda or
//! sharpening a window never touches the matrix again.

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

use crate::deflate::{block_krylov_topk, Deflation};
use crate::error::{Error, Result};
use crate::histogram::{
    geometric_boundaries, probe_quadrature, probe_vector, window_count, HistogramResult,
    ProbeQuadrature,
};
use crate::linops::{spectral_norm_estimate, LinOp, ScaledGram};
use crate::numeric::{barycentric_eval, GL8};
use crate::rng::{stream_rng, STREAM_SHIFT};
use crate::window::{soft_window_value, step_params, step_target};

/// Subspace accuracy for the deflation stage; tight enough that head
/// Rayleigh quotients carry estimator-level precision.
const DEFLATE_EPS: f64 = 0.05;

/// Domain of the spot-check grids for function-handle hypotheses.
const GRID_LO: f64 = 1e-3;
const GRID_HI: f64 = 10.0;

// ---------------------------------------------------------------------------
// specs and options

/// What to sum over the singular values.
#[derive(Clone, Copy)]
pub enum SumSpec {
    Schatten {
        p: f64,
    },
    Orlicz {
        g: fn(f64) -> f64,
        p1: f64,
        p2: f64,
    },
    KyFan {
        w: usize,
    },
    Entropy,
    Custom {
        f: fn(f64) -> f64,
        delta_f: f64,
        /// Truncation-depth schedule the caller asserts for f.
        lambda_f: fn(f64) -> f64,
    },
}

impl std::fmt::Debug for SumSpec {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SumSpec::Schatten { p } => write!(fm, "Schatten {{ p: {p} }}"),
            SumSpec::Orlicz { p1, p2, .. } => write!(fm, "Orlicz {{ p1: {p1}, p2: {p2} }}"),
            SumSpec::KyFan { w } => write!(fm, "KyFan {{ w: {w} }}"),
            SumSpec::Entropy => write!(fm, "Entropy"),
            SumSpec::Custom { delta_f, .. } => write!(fm, "Custom {{ delta_f: {delta_f} }}"),
        }
    }
}

impl SumSpec {
    /// Spot-check the hypotheses the estimators rely on: the Orlicz growth
    /// envelope and multiplicative smoothness for custom handles. Grid-based;
    /// a pass is evidence, not proof, which matches how the assumptions are
    /// stated by the caller in the first place.
    pub fn validate(&self) -> Result<()> {
        match *self {
            SumSpec::Schatten { p } => {
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "schatten exponent must be positive and finite, got {p}"
                    )));
                }
            }
            SumSpec::KyFan { w } => {
                if w == 0 {
                    return Err(Error::InvalidArgument(
                        "ky fan order w must be at least 1".into(),
                    ));
                }
            }
            SumSpec::Entropy => {}
            SumSpec::Orlicz { g, p1, p2 } => {
                if !(p1 > 0.0 && p2 > 0.0 && p1.is_finite() && p2.is_finite() && p2 <= p1) {
                    return Err(Error::InvalidArgument(format!(
                        "orlicz envelope exponents need 0 < p2 <= p1, got p1 = {p1}, p2 = {p2}"
                    )));
                }
                let grid = log_grid(25);
                for &x in &grid {
                    if !(g(x) > 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "orlicz handle must be positive on ({GRID_LO}, {GRID_HI}), g({x}) = {}",
                            g(x)
                        )));
                    }
                }
                for i in 0..grid.len() {
                    for j in (i + 1)..grid.len() {
                        let (a, b) = (grid[i], grid[j]);
                        let ratio = g(b) / g(a);
                        let lo = (b / a).powf(p2);
                        let hi = (b / a).powf(p1);
                        if ratio < lo * (1.0 - 1e-7) || ratio > hi * (1.0 + 1e-7) {
                            return Err(Error::InvalidArgument(format!(
                                "orlicz envelope violated at ({a:.3e}, {b:.3e}): \
                                 g(b)/g(a) = {ratio:.6e} outside [(b/a)^p2, (b/a)^p1] = \
                                 [{lo:.6e}, {hi:.6e}]"
                            )));
                        }
                    }
                }
            }
            SumSpec::Custom { f, delta_f, .. } => {
                if !(delta_f > 0.0 && delta_f.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "custom smoothness delta_f must be positive, got {delta_f}"
                    )));
                }
                let grid = log_grid(25);
                for &x in &grid {
                    let fx = f(x);
                    if !(fx > 0.0 && fx.is_finite()) {
                        return Err(Error::InvalidArgument(format!(
                            "custom handle must be positive and finite on the test grid, f({x}) = {fx}"
                        )));
                    }
                    let h = 1e-6 * x;
                    let deriv = (f(x + h) - f(x - h)) / (2.0 * h);
                    if deriv.abs() > delta_f * fx / x * (1.0 + 1e-4) + 1e-12 {
                        return Err(Error::InvalidArgument(format!(
                            "custom handle is not {delta_f}-multiplicatively smooth at x = {x:.3e}: \
                             |f'| = {:.6e} exceeds delta_f*f(x)/x = {:.6e}",
                            deriv.abs(),
                            delta_f * fx / x
                        )));
                    }
                    // transfer form of the same hypothesis: values at relative
                    // distance c move by at most 3*delta_f*c
                    let c = 0.9 / (3.0 * delta_f).max(1.0);
                    for y in [(1.0 - c) * x, (1.0 + c) * x] {
                        let fy = f(y);
                        let band = 3.0 * delta_f * c;
                        if fy < fx * (1.0 - band) * (1.0 - 1e-7) - 1e-12
                            || fy > fx * (1.0 + band) * (1.0 + 1e-7) + 1e-12
                        {
                            return Err(Error::InvalidArgument(format!(
                                "custom handle breaks smoothness transfer at x = {x:.3e}, \
                                 y = {y:.3e}: f(y)/f(x) = {:.6e} outside 1 +- {band:.3e}",
                                fy / fx
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Multiplicative-smoothness scale the spec implies, used to check a
    /// histogram's bucket width against the function being summed.
    fn smoothness(&self) -> Option<f64> {
        match *self {
            SumSpec::Schatten { p } => Some(p.max(1e-12)),
            SumSpec::Orlicz { p1, .. } => Some(p1),
            SumSpec::Custom { delta_f, .. } => Some(delta_f),
            SumSpec::KyFan { .. } | SumSpec::Entropy => None,
        }
    }
}

fn log_grid(points: usize) -> Vec<f64> {
    let lr = (GRID_HI / GRID_LO).ln();
    (0..points)
        .map(|i| GRID_LO * (lr * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Shared knobs for the histogram-route estimators.
#[derive(Debug, Clone)]
pub struct SumOptions {
    pub eps: f64,
    /// The "sufficiently small" constant: bucket width is c*eps/max(1,p),
    /// count accuracy targets are c*eps, truncation keeps c*eps of the sum.
    pub c: f64,
    /// Multiplier for the Ky Fan count-accuracy schedule eps2 = c2*eps^2/ln(1/lambda).
    pub c2: f64,
    pub seed: u64,
    /// Deflation rank; None picks a p-dependent default.
    pub k: Option<usize>,
    /// Probe count; None picks ceil(2.4/eps).
    pub probes: Option<usize>,
    /// Score buckets by their log-average of f instead of the bottom
    /// endpoint. Removes the O(alpha*p) endpoint bias; off = literal scoring.
    pub calibrated: bool,
    /// Use the per-window count target eps2 = c*eps/T instead of c*eps.
    pub eps2_per_window: bool,
    /// Hard cap on window count during the lambda search; None derives
    /// 8x the nominal depth.
    pub budget_windows: Option<usize>,
}

impl Default for SumOptions {
    fn default() -> Self {
        SumOptions {
            eps: 0.1,
            c: 0.1,
            c2: 0.1,
            seed: 0,
            k: None,
            probes: None,
            calibrated: true,
            eps2_per_window: false,
            budget_windows: None,
        }
    }
}

impl SumOptions {
    pub fn new(eps: f64, seed: u64) -> Self {
        SumOptions {
            eps,
            seed,
            ..SumOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps", self.eps), ("c", self.c), ("c2", self.c2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in (0,1), got {v}"
                )));
            }
        }
        if self.probes == Some(0) {
            return Err(Error::InvalidArgument("probe count must be positive".into()));
        }
        Ok(())
    }
}

/// Estimate plus the run's audit trail.
#[derive(Debug, Clone, Serialize)]
pub struct SumEstimate {
    pub value: f64,
    /// Contribution scored exactly from the deflated head.
    pub head_exact: f64,
    /// Contribution of the probed remainder.
    pub tail_estimate: f64,
    pub deflation_rank: usize,
    pub probes: usize,
    pub windows: usize,
    /// Scalar window-kernel evaluations consumed across the whole call.
    pub window_evals: usize,
    pub alpha: f64,
    /// Final truncation depth (scaled units); 0 when no tail was probed.
    pub lambda: f64,
    pub lambda_trace: Vec<f64>,
    /// Spectral-norm overestimate of the remainder operator.
    pub scale: f64,
    pub seed: u64,
}

fn head_only_estimate(
    value: f64,
    sampler: &Sampler,
    probes: usize,
    seed: u64,
) -> SumEstimate {
    SumEstimate {
        value,
        head_exact: value,
        tail_estimate: 0.0,
        deflation_rank: sampler.head.len(),
        probes,
        windows: 0,
        window_evals: 0,
        alpha: sampler.alpha,
        lambda: 0.0,
        lambda_trace: Vec::new(),
        scale: sampler.m,
        seed,
    }
}

/// Deflation rank heuristic: for p < 2 the head must absorb enough variance
/// that the remaining Hutchinson noise is O(eps), which balances at
/// d^{(1/p - 1/2)/(1/p + 1/2)}; for p >= 2 a fixed small head suffices since
/// large powers concentrate on the top of the spectrum anyway.
pub fn default_deflation_rank(p: f64, dim: usize) -> usize {
    let cap = dim.min(48);
    let k = if p >= 2.0 {
        8 * (p / 2.0).ceil() as usize
    } else {
        let e = (1.0 / p - 0.5) / (1.0 / p + 0.5);
        (dim as f64).powf(e).ceil() as usize
    };
    k.clamp(1, cap.max(1))
}

/// Probe count giving ~2-4% tail noise at eps = 0.1.
pub fn default_probe_count(eps: f64) -> usize {
    (2.4 / eps).ceil() as usize
}

// ---------------------------------------------------------------------------
// sampler: deflated head + probe quadratures of the remainder

/// A(I - ZZ^T): the input with the deflated directions annihilated on the
/// column side, matching the deflation's own coordinate convention.
struct DeflatedColumns<'a> {
    inner: &'a dyn LinOp,
    deflation: &'a Deflation,
}

impl LinOp for DeflatedColumns<'_> {
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let mut t = v.to_vec();
        self.deflation.project_out(&mut t);
        self.inner.apply_into(&t, out);
    }
    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        self.inner.apply_transpose_into(v, out);
        self.deflation.project_out(out);
    }
}

/// Everything an estimator needs after the matrix has been touched for the
/// last time: exact head values and one quadrature per probe.
struct Sampler {
    quads: Vec<ProbeQuadrature>,
    /// Spectral-norm overestimate of the remainder; 0 means nothing left.
    m: f64,
    /// Exact head singular-value estimates, nonincreasing.
    head: Vec<f64>,
    a1: f64,
    alpha: f64,
}

impl Sampler {
    fn build(
        a: &dyn LinOp,
        alpha: f64,
        shift_fraction: f64,
        k: usize,
        probes: usize,
        seed: u64,
    ) -> Result<Sampler> {
        let dim = a.n_rows().min(a.n_cols());
        if dim == 0 {
            return Err(Error::InvalidArgument("operator has a zero dimension".into()));
        }
        let a1 = draw_shift_frac(seed, alpha, shift_fraction);
        let empty = |head: Vec<f64>| Sampler {
            quads: Vec::new(),
            m: 0.0,
            head,
            a1,
            alpha,
        };
        match spectral_norm_estimate(a, seed) {
            Ok(_) => {}
            Err(Error::ZeroMatrix(_)) => return Ok(empty(Vec::new())),
            Err(e) => return Err(e),
        }
        let deflation = block_krylov_topk(a, k.min(dim), DEFLATE_EPS, seed)?;
        let head: Vec<f64> = deflation
            .sigma_tilde_sq
            .iter()
            .map(|&s| s.max(0.0).sqrt())
            .filter(|&s| s > 1e-300)
            .collect();
        let projected = DeflatedColumns {
            inner: a,
            deflation: &deflation,
        };
        let m = match spectral_norm_estimate(&projected, seed) {
            Ok(m) => m,
            Err(Error::ZeroMatrix(_)) => return Ok(empty(head)),
            Err(e) => return Err(e),
        };
        let gram = ScaledGram::new(&projected, m);
        let gdim = gram.dim();
        let mut quads = Vec::with_capacity(probes);
        for s in 0..probes {
            let g = probe_vector(seed, 0, s, gdim);
            quads.push(probe_quadrature(&gram, &g)?);
        }
        Ok(Sampler {
            quads,
            m,
            head,
            a1,
            alpha,
        })
    }

    /// Mean Hutchinson window counts for buckets 0..=t_windows, plus the
    /// adjacent-overlap masses tr(W_t W_{t+1}) when requested. Exact per
    /// probe; plateaus are resolved by prefix sums so cost is dominated by
    /// the handful of nodes inside transition bands.
    fn windowed_counts(
        &self,
        t_windows: usize,
        gamma: f64,
        eps_win: f64,
        overlaps: bool,
    ) -> (Vec<f64>, Vec<f64>, usize) {
        let nb = t_windows + 1;
        let mut counts = vec![0.0; nb];
        let mut ovl = vec![0.0; t_windows];
        let mut evals = 0usize;
        if self.quads.is_empty() {
            return (counts, ovl, evals);
        }
        let boundaries = geometric_boundaries(self.a1, self.alpha, t_windows);
        let zones: Vec<WindowZones> = (0..nb)
            .map(|t| window_zones(boundaries[t + 1], boundaries[t], gamma, eps_win))
            .collect();
        let inv = 1.0 / self.quads.len() as f64;
        for q in &self.quads {
            let prefix = prefix_weights(&q.weights);
            for (t, z) in zones.iter().enumerate() {
                let (mass, e) = window_mass(&q.nodes, &q.weights, &prefix, z, gamma, eps_win);
                counts[t] += inv * q.norm_sq * mass;
                evals += e + 1;
            }
            if overlaps {
                for t in 0..t_windows {
                    let (mass, e) =
                        overlap_mass(&q.nodes, &q.weights, &zones[t], &zones[t + 1], gamma, eps_win);
                    ovl[t] += inv * q.norm_sq * mass;
                    evals += e;
                }
            }
        }
        (counts, ovl, evals)
    }
}

fn draw_shift_frac(seed: u64, alpha: f64, fraction: f64) -> f64 {
    let mut rng = stream_rng(seed, STREAM_SHIFT);
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return 1.0 - fraction * alpha * u;
        }
    }
}

fn prefix_weights(weights: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(weights.len() + 1);
    let mut acc = 0.0;
    p.push(0.0);
    for &w in weights {
        acc += w;
        p.push(acc);
    }
    p
}

/// Node-space zones of one soft window: value is 0 below x00 and above x11,
/// 1 on (x01, x10), and needs the full kernel only on the two transition
/// slivers. Plateau identification is conservative (9 sigma), so treating it
/// as exactly 0/1 is below f64 noise.
struct WindowZones {
    lo: f64,
    hi: f64,
    x00: f64,
    x01: f64,
    x10: f64,
    x11: f64,
}

fn window_zones(lo: f64, hi: f64, gamma: f64, eps: f64) -> WindowZones {
    let (c1, s1) = step_params(gamma, eps);
    let r0 = (c1 - 9.0 * s1).max(1e-12);
    let r1 = (c1 + 9.0 * s1).min(0.9);
    let x00 = lo * r0 / (1.0 - r0);
    let x01 = lo * r1 / (1.0 - r1);
    if hi >= 1.0 / (1.0 + gamma) {
        return WindowZones {
            lo,
            hi,
            x00,
            x01,
            x10: f64::INFINITY,
            x11: f64::INFINITY,
        };
    }
    let (c2, s2) = step_params(0.5 * gamma, eps);
    let r0u = (c2 - 9.0 * s2).max(1e-12);
    let r1u = (c2 + 9.0 * s2).min(0.9);
    let hi2 = (1.0 + gamma) * hi;
    WindowZones {
        lo,
        hi,
        x00,
        x01,
        x10: hi2 * r0u / (1.0 - r0u),
        x11: hi2 * r1u / (1.0 - r1u),
    }
}

fn window_mass(
    nodes: &[f64],
    weights: &[f64],
    prefix: &[f64],
    z: &WindowZones,
    gamma: f64,
    eps: f64,
) -> (f64, usize) {
    let i00 = nodes.partition_point(|&x| x < z.x00);
    let i11 = if z.x11.is_finite() {
        nodes.partition_point(|&x| x <= z.x11)
    } else {
        nodes.len()
    };
    if i00 >= i11 {
        return (0.0, 0);
    }
    let i01 = nodes.partition_point(|&x| x <= z.x01).clamp(i00, i11);
    let i10 = if z.x10.is_finite() {
        nodes.partition_point(|&x| x < z.x10).clamp(i01, i11)
    } else {
        i11
    };
    let mut mass = prefix[i10] - prefix[i01];
    let mut evals = 0usize;
    for i in (i00..i01).chain(i10..i11) {
        mass += weights[i] * soft_window_value(nodes[i], z.lo, z.hi, gamma, eps);
        evals += 1;
    }
    (mass, evals)
}

fn overlap_mass(
    nodes: &[f64],
    weights: &[f64],
    zt: &WindowZones,
    znext: &WindowZones,
    gamma: f64,
    eps: f64,
) -> (f64, usize) {
    // the product is supported only where the shallower window's lower
    // roll-off meets the deeper window's upper roll-off
    let i_lo = nodes.partition_point(|&x| x < zt.x00);
    let i_hi = if znext.x11.is_finite() {
        nodes.partition_point(|&x| x <= znext.x11)
    } else {
        nodes.len()
    };
    let mut mass = 0.0;
    let mut evals = 0usize;
    for i in i_lo..i_hi {
        let x = nodes[i];
        mass += weights[i]
            * soft_window_value(x, zt.lo, zt.hi, gamma, eps)
            * soft_window_value(x, znext.lo, znext.hi, gamma, eps);
        evals += 2;
    }
    (mass, evals)
}

/// Overlap subtraction (optional) followed by the sub-half rounding rule.
fn finalize_counts(raw: &[f64], ovl: &[f64], corrected: bool) -> Vec<f64> {
    raw.iter()
        .enumerate()
        .map(|(t, &v)| {
            let adj = if corrected && t >= 1 {
                (v - ovl[t - 1]).max(0.0)
            } else {
                v.max(0.0)
            };
            if adj <= 0.5 {
                0.0
            } else {
                adj
            }
        })
        .collect()
}

/// Score of one bucket: f at the bottom-endpoint singular value, or the
/// log-uniform in-bucket average of f when calibrated.
fn bucket_weight(f: &dyn Fn(f64) -> f64, m: f64, top: f64, bottom: f64, calibrated: bool) -> f64 {
    if !calibrated {
        return f(m * bottom.sqrt());
    }
    let lr = (bottom / top).ln();
    GL8.iter()
        .map(|&(u, w)| w * f(m * (top * (lr * u).exp()).sqrt()))
        .sum()
}

// ---------------------------------------------------------------------------
// truncation-depth search shared by the histogram-route estimators

struct TailSpec<'a> {
    context: &'static str,
    /// Sigma-space weight of one unit of count.
    f: &'a dyn Fn(f64) -> f64,
    head_value: f64,
    /// Running total (head + tail, value units) -> admissible lambda floor.
    floor_rule: &'a dyn Fn(f64) -> f64,
    /// (lambda, t_windows) -> window sharpness gamma.
    gamma_rule: &'a dyn Fn(f64, usize) -> f64,
    eps_win: f64,
    /// Fraction of the sum the truncated tail may carry.
    c_eps: f64,
    calibrated: bool,
    overlap_corrected: bool,
    lambda_start: f64,
    budget: Option<usize>,
}

struct TailSearch {
    counts: Vec<f64>,
    boundaries: Vec<f64>,
    tail_value: f64,
    lambda: f64,
    t_windows: usize,
    trace: Vec<f64>,
    evals: usize,
}

/// Halve lambda until (a) it clears the running-estimate floor and (b) the
/// deepest window's extrapolated contribution is inside the truncation
/// budget. Underestimating the total only pushes the floor deeper, so an
/// accepted depth is sound even while mass is still being discovered.
fn search_tail(sampler: &Sampler, spec: &TailSpec) -> Result<TailSearch> {
    let mut lambda = spec.lambda_start.clamp(1e-250, 0.25);
    let nominal = window_count(sampler.alpha, lambda);
    let cap = spec.budget.unwrap_or_else(|| (8 * nominal).max(4096));
    let mut trace = Vec::new();
    let mut evals_total = 0usize;
    loop {
        let t = window_count(sampler.alpha, lambda);
        if t > cap {
            return Err(Error::BudgetExhausted {
                context: spec.context,
                lambda,
            });
        }
        trace.push(lambda);
        let gamma = (spec.gamma_rule)(lambda, t);
        let (raw, ovl, ev) =
            sampler.windowed_counts(t, gamma, spec.eps_win, spec.overlap_corrected);
        evals_total += ev;
        let counts = finalize_counts(&raw, &ovl, spec.overlap_corrected);
        let boundaries = geometric_boundaries(sampler.a1, sampler.alpha, t);
        let mut tail_value = 0.0;
        for (ti, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            tail_value +=
                bucket_weight(spec.f, sampler.m, boundaries[ti], boundaries[ti + 1], spec.calibrated)
                    * c;
        }
        let total = spec.head_value + tail_value;

        // geometric extrapolation of the deepest window's contribution
        let w_last = bucket_weight(
            spec.f,
            sampler.m,
            boundaries[t],
            boundaries[t + 1],
            spec.calibrated,
        );
        let w_prev = bucket_weight(
            spec.f,
            sampler.m,
            boundaries[t - 1],
            boundaries[t],
            spec.calibrated,
        );
        let ratio = if w_prev > 0.0 && (w_last / w_prev).is_finite() {
            (w_last / w_prev).clamp(0.0, 0.96)
        } else {
            0.96
        };
        let proxy = w_last * counts[t] * (1.0 + ratio / (1.0 - ratio));

        let floor = (spec.floor_rule)(total);
        let deep_enough = lambda <= floor.max(1e-250);
        let tail_ok = proxy <= 0.5 * spec.c_eps * total;
        if (deep_enough && tail_ok) || (total == 0.0 && lambda <= 1e-6) {
            return Ok(TailSearch {
                counts,
                boundaries,
                tail_value,
                lambda,
                t_windows: t,
                trace,
                evals: evals_total,
            });
        }
        lambda *= 0.5;
    }
}

fn win_eps(c: f64, eps: f64, dim: usize) -> f64 {
    (c * (c * eps) * (c * eps) / dim as f64).clamp(1e-12, 0.49)
}

// ---------------------------------------------------------------------------
// generic sums over an existing histogram

/// Literal smooth-f sum over a finished histogram: each bucket scored at its
/// bottom-endpoint singular value M*sqrt(a_{t+1}), zero-count buckets
/// skipped. Checks that the bucket width is fine enough for the spec's
/// smoothness before trusting the result.
pub fn sum_from_histogram(hist: &HistogramResult, spec: &SumSpec) -> Result<f64> {
    spec.validate()?;
    let delta = match spec.smoothness() {
        Some(d) => d,
        None => {
            return Err(Error::InvalidArgument(format!(
                "{spec:?} is not a smooth-f sum; use the dedicated estimator"
            )))
        }
    };
    if hist.boundaries.len() < 3 || hist.counts.len() + 1 != hist.boundaries.len() {
        return Err(Error::InvalidArgument(
            "histogram shape is inconsistent".into(),
        ));
    }
    let alpha_rec = 1.0 - hist.boundaries[2] / hist.boundaries[1];
    if 3.0 * delta * alpha_rec >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "bucket width alpha = {alpha_rec:.4} is too coarse for smoothness \
             delta_f = {delta}: need 3*delta_f*alpha < 1"
        )));
    }
    let f: Box<dyn Fn(f64) -> f64> = match *spec {
        SumSpec::Schatten { p } => Box::new(move |s: f64| s.powf(p)),
        SumSpec::Orlicz { g, .. } => Box::new(g),
        SumSpec::Custom { f, .. } => Box::new(f),
        _ => unreachable!(),
    };
    Ok(hist
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(t, &c)| f(hist.scale * hist.boundaries[t + 1].sqrt()) * c)
        .sum())
}

// ---------------------------------------------------------------------------
// Schatten p-norms, histogram route

/// Sum of sigma_i^p via deflated head + bucket counts, with the truncation
/// depth found by halving search against the running-estimate floor
/// lambda = (c*eps*S_p/d)^{2/p}/M^2.
pub fn schatten_histogram(a: &dyn LinOp, p: f64, opts: &SumOptions) -> Result<SumEstimate> {
    SumSpec::Schatten { p }.validate()?;
    opts.validate()?;
    let (eps, c) = (opts.eps, opts.c);
    let dim = a.n_rows().min(a.n_cols());
    if dim == 0 {
        return Err(Error::InvalidArgument("operator has a zero dimension".into()));
    }
    let alpha = (c * eps / p.max(1.0)).min(0.5);
    let k = opts.k.unwrap_or_else(|| default_deflation_rank(p, dim));
    let probes = opts.probes.unwrap_or_else(|| default_probe_count(eps));
    let sampler = Sampler::build(a, alpha, 0.25, k, probes, opts.seed)?;
    let head: f64 = sampler.head.iter().map(|s| s.powf(p)).sum();
    if sampler.m == 0.0 {
        return Ok(head_only_estimate(head, &sampler, probes, opts.seed));
    }
    // j*sigma_j^p is a certified lower bound on the sum for every head index
    let lower_bound = sampler
        .head
        .iter()
        .enumerate()
        .map(|(i, s)| (i + 1) as f64 * s.powf(p))
        .fold(head, f64::max);
    let m = sampler.m;
    let floor_mult = c * eps / dim as f64;
    let floor_rule = move |total: f64| -> f64 {
        let s_run = total.max(lower_bound);
        if s_run <= 0.0 {
            return 0.0;
        }
        (floor_mult * s_run).powf(2.0 / p) / (m * m)
    };
    let start = {
        let fl = floor_rule(head.max(lower_bound));
        if fl > 0.0 {
            fl
        } else {
            0.25
        }
    };
    let gamma_rule = move |_lambda: f64, t: usize| -> f64 {
        let eps2 = if opts.eps2_per_window {
            c * eps / t as f64
        } else {
            c * eps
        };
        (c * eps2 * alpha).clamp(1e-12, 0.5 * alpha)
    };
    let f = move |s: f64| s.powf(p);
    let ts = search_tail(
        &sampler,
        &TailSpec {
            context: "schatten histogram truncation search",
            f: &f,
            head_value: head,
            floor_rule: &floor_rule,
            gamma_rule: &gamma_rule,
            eps_win: win_eps(c, eps, dim),
            c_eps: c * eps,
            calibrated: opts.calibrated,
            overlap_corrected: false,
            lambda_start: start,
            budget: opts.budget_windows,
        },
    )?;
    Ok(SumEstimate {
        value: head + ts.tail_value,
        head_exact: head,
        tail_estimate: ts.tail_value,
        deflation_rank: sampler.head.len(),
        probes,
        windows: ts.t_windows,
        window_evals: ts.evals,
        alpha,
        lambda: ts.lambda,
        lambda_trace: ts.trace,
        scale: sampler.m,
        seed: opts.seed,
    })
}

// ---------------------------------------------------------------------------
// Orlicz sums

/// Sum of g(sigma_i) for g pinched between power envelopes: bucket width
/// follows p1, the truncation depth follows a p2-norm pilot estimate at
/// accuracy eps/4.
pub fn orlicz_sum(
    a: &dyn LinOp,
    g: fn(f64) -> f64,
    p1: f64,
    p2: f64,
    opts: &SumOptions,
) -> Result<SumEstimate> {
    SumSpec::Orlicz { g, p1, p2 }.validate()?;
    opts.validate()?;
    let (eps, c) = (opts.eps, opts.c);
    let dim = a.n_rows().min(a.n_cols());
    if dim == 0 {
        return Err(Error::InvalidArgument("operator has a zero dimension".into()));
    }
    let pilot = schatten_histogram(
        a,
        p2,
        &SumOptions {
            eps: eps / 4.0,
            ..opts.clone()
        },
    )?;
    let alpha = (c * eps / p1.max(1.0)).min(0.5);
    let k = opts.k.unwrap_or_else(|| default_deflation_rank(p1, dim));
    let probes = opts.probes.unwrap_or_else(|| default_probe_count(eps));
    let sampler = Sampler::build(a, alpha, 0.25, k, probes, opts.seed)?;
    let head: f64 = sampler.head.iter().map(|&s| g(s)).sum();
    if sampler.m == 0.0 {
        return Ok(head_only_estimate(head, &sampler, probes, opts.seed));
    }
    let m = sampler.m;
    let fixed_floor = ((0.5 * c * eps) * pilot.value.max(1e-300) / dim as f64).powf(2.0 / p2)
        / (m * m);
    let floor_rule = move |_total: f64| fixed_floor;
    let gamma_rule =
        move |_lambda: f64, _t: usize| (c * (c * eps) * alpha).clamp(1e-12, 0.5 * alpha);
    let f = move |s: f64| g(s);
    let ts = search_tail(
        &sampler,
        &TailSpec {
            context: "orlicz truncation search",
            f: &f,
            head_value: head,
            floor_rule: &floor_rule,
            gamma_rule: &gamma_rule,
            eps_win: win_eps(c, eps, dim),
            c_eps: c * eps,
            calibrated: opts.calibrated,
            overlap_corrected: false,
            lambda_start: fixed_floor,
            budget: opts.budget_windows,
        },
    )?;
    Ok(SumEstimate {
        value: head + ts.tail_value,
        head_exact: head,
        tail_estimate: ts.tail_value,
        deflation_rank: sampler.head.len(),
        probes,
        windows: ts.t_windows,
        window_evals: ts.evals + pilot.window_evals,
        alpha,
        lambda: ts.lambda,
        lambda_trace: ts.trace,
        scale: sampler.m,
        seed: opts.seed,
    })
}

// ---------------------------------------------------------------------------
// Ky Fan norms

/// Sum of the top w singular values: the deflated head covers min(k, w)
/// exactly, the rest are read off the histogram as quantiles of the
/// inflated cumulative counts.
pub fn kyfan(a: &dyn LinOp, w: usize, opts: &SumOptions) -> Result<SumEstimate> {
    SumSpec::KyFan { w }.validate()?;
    opts.validate()?;
    if w > a.n_cols().max(a.n_rows()) {
        return Err(Error::InvalidArgument(format!(
            "ky fan order w = {w} exceeds the operator dimension"
        )));
    }
    let (eps, c) = (opts.eps, opts.c);
    let dim = a.n_rows().min(a.n_cols());
    if dim == 0 {
        return Err(Error::InvalidArgument("operator has a zero dimension".into()));
    }
    let alpha = (c * eps).min(0.5);
    let k = opts
        .k
        .unwrap_or_else(|| (w as f64).sqrt().ceil() as usize)
        .min(dim);
    let probes = opts.probes.unwrap_or_else(|| default_probe_count(eps));
    let sampler = Sampler::build(a, alpha, 0.25, k, probes, opts.seed)?;
    let h = sampler.head.len().min(w);
    let head_sum: f64 = sampler.head[..h].iter().sum();
    let r = w - h;
    if r == 0 || sampler.m == 0.0 {
        return Ok(head_only_estimate(head_sum, &sampler, probes, opts.seed));
    }
    let m = sampler.m;
    let inflate = 1.0 + 2.0 * c * eps;
    let eps_win = win_eps(c, eps, dim);
    let mut lambda: f64 = 0.25;
    let nominal = window_count(alpha, lambda);
    let cap = opts.budget_windows.unwrap_or_else(|| (8 * nominal).max(4096));
    let mut trace = Vec::new();
    let mut evals_total = 0usize;
    let mut prev_cum = -1.0;
    loop {
        let t = window_count(alpha, lambda);
        if t > cap {
            return Err(Error::BudgetExhausted {
                context: "ky fan truncation search",
                lambda,
            });
        }
        trace.push(lambda);
        // count-accuracy target shrinks with depth, so the window sharpness
        // follows the same schedule
        let eps2 = c2_schedule(opts.c2, eps, lambda);
        let gamma = (c * eps2 * alpha).clamp(1e-12, 0.5 * alpha);
        let (raw, ovl, ev) = sampler.windowed_counts(t, gamma, eps_win, true);
        evals_total += ev;
        let counts = finalize_counts(&raw, &ovl, true);
        let boundaries = geometric_boundaries(sampler.a1, alpha, t);
        let (tail_sum, reached, cum_total) =
            kyfan_from_counts(&counts, &boundaries, m, inflate, r);
        let total = head_sum + tail_sum;
        let floor = (c * eps * total / (m * w as f64)).powi(2).min(0.25);
        let deep_enough = lambda <= floor.max(1e-250);
        // a plateaued cumulative count means the missing quantiles sit below
        // resolution; with the floor cleared their contribution is inside
        // the truncation budget and they score zero
        let stalled = !reached && (cum_total - prev_cum).abs() < 0.25;
        if deep_enough && (reached || stalled) {
            return Ok(SumEstimate {
                value: total,
                head_exact: head_sum,
                tail_estimate: tail_sum,
                deflation_rank: sampler.head.len(),
                probes,
                windows: t,
                window_evals: evals_total,
                alpha,
                lambda,
                lambda_trace: trace,
                scale: m,
                seed: opts.seed,
            });
        }
        prev_cum = cum_total;
        lambda *= 0.5;
    }
}

fn c2_schedule(c2: f64, eps: f64, lambda: f64) -> f64 {
    c2 * eps * eps / (1.0 / lambda).ln().max(1.0)
}

/// Quantile read-out: the i-th remaining singular value is scored at the
/// bottom boundary of the first bucket where the inflated cumulative count
/// reaches i; absent quantiles score zero.
fn kyfan_from_counts(
    counts: &[f64],
    boundaries: &[f64],
    m: f64,
    inflate: f64,
    r: usize,
) -> (f64, bool, f64) {
    let mut sum = 0.0;
    let mut reached = true;
    let mut cum = 0.0;
    let mut t = 0usize;
    for i in 1..=r {
        while t < counts.len() {
            let next = cum + inflate * counts[t];
            if next >= i as f64 {
                break;
            }
            cum = next;
            t += 1;
        }
        if t >= counts.len() {
            reached = false;
        } else {
            sum += m * boundaries[t + 1].sqrt();
        }
    }
    let cum_total: f64 = counts.iter().map(|&c| inflate * c).sum();
    (sum, reached, cum_total)
}

// ---------------------------------------------------------------------------
// SVD entropy

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    Additive,
    Multiplicative,
}

impl std::str::FromStr for EntropyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(EntropyMode::Additive),
            "multiplicative" => Ok(EntropyMode::Multiplicative),
            other => Err(Error::InvalidArgument(format!(
                "unknown entropy mode '{other}' (expected additive|multiplicative)"
            ))),
        }
    }
}

/// Interpolation layout for the Tsallis-to-Shannon extrapolation: k1+1
/// exponents 1+alpha_i with alpha_i the Chebyshev points of [-1,1] mapped
/// into a tiny negative band around zero.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyConfig {
    pub eps: f64,
    pub k1: usize,
    pub ell: f64,
    pub alphas: Vec<f64>,
    pub mode: EntropyMode,
    pub c1: f64,
    /// Accuracy each Tsallis input would need if estimated independently;
    /// recorded for audit, the correlated-histogram design does not consume
    /// it directly.
    pub eps_tilde: f64,
}

impl EntropyConfig {
    pub fn new(eps: f64, n: usize, mode: EntropyMode, c1: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "entropy accuracy must be in (0,1), got {eps}"
            )));
        }
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "condition exponent c1 must be positive, got {c1}"
            )));
        }
        let ln_n = (n.max(2) as f64).ln();
        let terms = (1.0 / eps).ln().ceil() as i64
            + c1.ln().ceil() as i64
            + ln_n.ln().ceil().max(0.0) as i64;
        let k1 = terms.max(5) as usize;
        let kf = k1 as f64;
        let ell = 1.0 / (2.0 * c1 * (kf + 1.0) * ln_n);
        let k2 = kf * kf;
        let alphas: Vec<f64> = (0..=k1)
            .map(|i| {
                let y = (i as f64 * PI / kf).cos();
                (k2 * ell * y - ell * (k2 + 1.0)) / (2.0 * k2 + 1.0)
            })
            .collect();
        let lo = -1.0 / (2.0 * c1 * kf * ln_n);
        let hi = -1.0 / (16.0 * c1 * kf.powi(3) * ln_n);
        for &al in &alphas {
            if !(al > lo && al < hi) {
                return Err(Error::InvalidArgument(format!(
                    "interpolation exponent {al:.3e} escapes the admissible band \
                     ({lo:.3e}, {hi:.3e})"
                )));
            }
        }
        let eps_tilde = eps / (12.0 * c1 * (kf + 1.0).powi(3) * ln_n);
        Ok(EntropyConfig {
            eps,
            k1,
            ell,
            alphas,
            mode,
            c1,
            eps_tilde,
        })
    }
}

/// Extrapolate Tsallis values T(alpha_i) to the Shannon limit alpha -> 0 by
/// barycentric Lagrange interpolation with direct-product weights.
pub fn entropy_from_tsallis(alphas: &[f64], tvals: &[f64]) -> Result<f64> {
    if alphas.len() != tvals.len() || alphas.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two matching interpolation points".into(),
        ));
    }
    let kk = alphas.len();
    let mut ws = vec![1.0; kk];
    for i in 0..kk {
        if alphas[i] == 0.0 {
            return Ok(tvals[i]);
        }
        for j in 0..kk {
            if j != i {
                let d = alphas[i] - alphas[j];
                if d == 0.0 {
                    return Err(Error::InvalidArgument(
                        "interpolation points must be distinct".into(),
                    ));
                }
                ws[i] /= d;
            }
        }
    }
    let mut den = 0.0;
    let mut mag = 0.0;
    for i in 0..kk {
        let term = ws[i] / (0.0 - alphas[i]);
        den += term;
        mag += term.abs();
    }
    if !(den.abs() > 1e-9 * mag) {
        return Err(Error::Other(
            "Tsallis extrapolation to the Shannon limit is ill-conditioned".into(),
        ));
    }
    Ok(barycentric_eval(alphas, tvals, &ws, 0.0))
}

/// Shannon entropy of the normalized singular-value distribution. All
/// partition values Z(1+alpha_i) are read off one shared histogram, so the
/// count errors are common to every exponent and cancel to first order in
/// the Z-ratio; estimating each norm independently would amplify ~1/alpha.
pub fn svd_entropy(a: &dyn LinOp, mode: EntropyMode, opts: &SumOptions) -> Result<SumEstimate> {
    opts.validate()?;
    let (eps, c) = (opts.eps, opts.c);
    let dim = a.n_rows().min(a.n_cols());
    if dim == 0 {
        return Err(Error::InvalidArgument("operator has a zero dimension".into()));
    }
    let cfg = EntropyConfig::new(eps, dim, mode, 1.0)?;
    let alpha = (c * eps).min(0.5);
    let kdef = default_deflation_rank(1.0, dim);
    let k = opts.k.unwrap_or(match mode {
        EntropyMode::Additive => kdef,
        // the heavy-element workaround needs the top direction out
        EntropyMode::Multiplicative => kdef.max(1),
    });
    let probes = opts.probes.unwrap_or_else(|| default_probe_count(eps));
    let sampler = Sampler::build(a, alpha, 0.25, k, probes, opts.seed)?;
    if sampler.m == 0.0 && sampler.head.is_empty() {
        return Err(Error::ZeroMatrix("svd entropy of an all-zero operator"));
    }
    let nuclear_head: f64 = sampler.head.iter().sum();
    if sampler.m == 0.0 {
        // tail is empty: Z(beta) comes from the head alone
        let z1 = nuclear_head;
        let tvals: Vec<f64> = cfg
            .alphas
            .iter()
            .map(|&al| {
                let zb: f64 = sampler.head.iter().map(|s| s.powf(1.0 + al)).sum();
                (1.0 - zb / z1.powf(1.0 + al)) / al
            })
            .collect();
        let hval = entropy_from_tsallis(&cfg.alphas, &tvals)?;
        let mut est = head_only_estimate(hval, &sampler, probes, opts.seed);
        est.head_exact = nuclear_head;
        est.tail_estimate = 0.0;
        return Ok(est);
    }
    // the slowest-decaying exponent drives the truncation depth
    let beta_min = 1.0 + cfg.alphas.iter().cloned().fold(0.0, f64::min);
    let head_beta: f64 = sampler.head.iter().map(|s| s.powf(beta_min)).sum();
    let lower_bound = sampler
        .head
        .iter()
        .enumerate()
        .map(|(i, s)| (i + 1) as f64 * s.powf(beta_min))
        .fold(head_beta, f64::max);
    let m = sampler.m;
    let floor_mult = c * eps / dim as f64;
    let floor_rule = move |total: f64| -> f64 {
        let s_run = total.max(lower_bound);
        if s_run <= 0.0 {
            return 0.0;
        }
        (floor_mult * s_run).powf(2.0 / beta_min) / (m * m)
    };
    let start = {
        let fl = floor_rule(head_beta.max(lower_bound));
        if fl > 0.0 {
            fl
        } else {
            0.25
        }
    };
    let gamma_rule = move |_l: f64, _t: usize| (c * (c * eps) * alpha).clamp(1e-12, 0.5 * alpha);
    let f_search = move |s: f64| s.powf(beta_min);
    let ts = search_tail(
        &sampler,
        &TailSpec {
            context: "entropy truncation search",
            f: &f_search,
            head_value: head_beta,
            floor_rule: &floor_rule,
            gamma_rule: &gamma_rule,
            eps_win: win_eps(c, eps, dim),
            c_eps: c * eps,
            calibrated: opts.calibrated,
            overlap_corrected: false,
            lambda_start: start,
            budget: opts.budget_windows,
        },
    )?;
    let z_of = |beta: f64| -> f64 {
        let fh: f64 = sampler.head.iter().map(|s| s.powf(beta)).sum();
        let fb = |s: f64| s.powf(beta);
        let mut tail = 0.0;
        for (ti, &cnt) in ts.counts.iter().enumerate() {
            if cnt == 0.0 {
                continue;
            }
            tail += bucket_weight(
                &fb,
                m,
                ts.boundaries[ti],
                ts.boundaries[ti + 1],
                opts.calibrated,
            ) * cnt;
        }
        fh + tail
    };
    let z1 = z_of(1.0);
    if !(z1 > 0.0) {
        return Err(Error::ZeroMatrix("svd entropy of an all-zero operator"));
    }
    let tvals: Vec<f64> = cfg
        .alphas
        .iter()
        .map(|&al| (1.0 - z_of(1.0 + al) / z1.powf(1.0 + al)) / al)
        .collect();
    let hval = entropy_from_tsallis(&cfg.alphas, &tvals)?;
    Ok(SumEstimate {
        value: hval,
        head_exact: nuclear_head,
        tail_estimate: z1 - nuclear_head,
        deflation_rank: sampler.head.len(),
        probes,
        windows: ts.t_windows,
        window_evals: ts.evals,
        alpha,
        lambda: ts.lambda,
        lambda_trace: ts.trace,
        scale: sampler.m,
        seed: opts.seed,
    })
}

// ---------------------------------------------------------------------------
// power-function polynomials

/// Certified polynomial approximation of x^p on [a, b]:
/// q(x) = b^p (x/b)^{ceil(p)} * sum_j a_j (1 - x/b)^j.
#[derive(Debug, Clone, Serialize)]
pub struct PowerPolynomial {
    pub p: f64,
    pub taylor: Vec<f64>,
    pub degree: usize,
    pub scale: f64,
    pub eps: f64,
}

impl PowerPolynomial {
    pub fn eval(&self, x: f64) -> f64 {
        let t = x / self.scale;
        let mut series = 0.0;
        for &aj in self.taylor.iter().rev() {
            series = series * (1.0 - t) + aj;
        }
        self.scale.powf(self.p) * t.powi(self.p.ceil() as i32) * series
    }
}

/// Taylor weights of the fractional part: a_j = prod_{i<=j}(1 - (p'+1)/i),
/// which telescope the binomial series of x^{p'} around 1.
pub fn power_taylor(p_prime: f64, degree: usize) -> Result<Vec<f64>> {
    if !(-1.0..0.0).contains(&p_prime) {
        return Err(Error::InvalidArgument(format!(
            "fractional exponent must lie in [-1, 0), got {p_prime}"
        )));
    }
    let mut coeffs = Vec::with_capacity(degree + 1);
    let mut a = 1.0;
    coeffs.push(a);
    for i in 1..=degree {
        a *= 1.0 - (p_prime + 1.0) / i as f64;
        coeffs.push(a);
    }
    Ok(coeffs)
}

/// Build a PowerPolynomial certified to eps relative error on [a, b], with
/// strict monotonicity on (0, b]. The degree constant escalates until a
/// 1000-point grid passes, capped at 2^10.
pub fn build_power_polynomial(p: f64, eps: f64, a: f64, b: f64) -> Result<PowerPolynomial> {
    if !(p > 0.0 && p.is_finite() && eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need p > 0 and eps in (0,1), got p = {p}, eps = {eps}"
        )));
    }
    if !(0.0 < a && a < b && b <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "certification interval needs 0 < a < b <= 1, got [{a}, {b}]"
        )));
    }
    let p_prime = p - p.ceil();
    let mut factor = 1.0f64;
    loop {
        let taylor = if p_prime == 0.0 {
            vec![1.0]
        } else {
            let deg = (factor * (b / (a * eps)).ln().max(1.0) * (b / a)).ceil() as usize;
            power_taylor(p_prime, deg.max(1))?
        };
        let cand = PowerPolynomial {
            p,
            degree: p.ceil() as usize + taylor.len() - 1,
            taylor,
            scale: b,
            eps,
        };
        if certify_power_polynomial(&cand, a, b, eps) {
            return Ok(cand);
        }
        if factor >= 1024.0 {
            return Err(Error::PowerPolyCertification { max_factor: 1024 });
        }
        factor *= 2.0;
    }
}

fn certify_power_polynomial(q: &PowerPolynomial, a: f64, b: f64, eps: f64) -> bool {
    if q.eval(0.0) != 0.0 {
        return false;
    }
    let n = 1000;
    let lr = (b / a).ln();
    for i in 0..=n {
        let x = a * (lr * i as f64 / n as f64).exp();
        let err = (q.eval(x) - x.powf(q.p)).abs();
        if err > eps * x.powf(q.p) * (1.0 + 1e-12) {
            return false;
        }
    }
    // strict increase on (0, b], checked on a linear grid through zero
    let mut prev = 0.0;
    for i in 1..=n {
        let x = b * i as f64 / n as f64;
        let v = q.eval(x);
        if v <= prev - 1e-15 {
            return false;
        }
        prev = v;
    }
    true
}

// ---------------------------------------------------------------------------
// Schatten p-norms, windowed-polynomial route

#[derive(Debug, Clone)]
pub struct PolyOptions {
    pub eps: f64,
    /// Window-extension share threshold and truncation-floor constant.
    pub c1: f64,
    /// Window sharpness gamma = c2*eps.
    pub c2: f64,
    /// Certification accuracy of each per-window power polynomial.
    pub c3: f64,
    pub k: Option<usize>,
    pub probes: Option<usize>,
    pub seed: u64,
    /// Evaluate the literal composition q_t(h_t(x)*x) with certified
    /// polynomials instead of the telescoping partition form.
    pub literal_composition: bool,
    pub budget_windows: Option<usize>,
}

impl Default for PolyOptions {
    fn default() -> Self {
        PolyOptions {
            eps: 0.1,
            c1: 0.1,
            c2: 0.1,
            c3: 0.1,
            k: None,
            probes: None,
            seed: 0,
            literal_composition: false,
            budget_windows: None,
        }
    }
}

impl PolyOptions {
    pub fn new(eps: f64, seed: u64) -> Self {
        PolyOptions {
            eps,
            seed,
            ..PolyOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps", self.eps),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in (0,1), got {v}"
                )));
            }
        }
        if self.probes == Some(0) {
            return Err(Error::InvalidArgument("probe count must be positive".into()));
        }
        Ok(())
    }
}

/// Sum of sigma_i^p through octave windows (alpha = 1/2): the default
/// telescoping form scores u_t - u_{t-1} times the exact power kernel, the
/// literal form composes certified per-window polynomials with the soft
/// window. Windows extend until the marginal share drops below c1*eps or
/// the truncation floor is reached.
pub fn schatten_poly(a: &dyn LinOp, p: f64, opts: &PolyOptions) -> Result<SumEstimate> {
    SumSpec::Schatten { p }.validate()?;
    opts.validate()?;
    let eps = opts.eps;
    let dim = a.n_rows().min(a.n_cols());
    if dim == 0 {
        return Err(Error::InvalidArgument("operator has a zero dimension".into()));
    }
    let alpha = 0.5;
    let k = opts.k.unwrap_or_else(|| default_deflation_rank(p, dim));
    let probes = opts.probes.unwrap_or_else(|| default_probe_count(eps));
    let sampler = Sampler::build(a, alpha, 1.0, k, probes, opts.seed)?;
    let head: f64 = sampler.head.iter().map(|s| s.powf(p)).sum();
    if sampler.m == 0.0 {
        return Ok(head_only_estimate(head, &sampler, probes, opts.seed));
    }
    let lower_bound = sampler
        .head
        .iter()
        .enumerate()
        .map(|(i, s)| (i + 1) as f64 * s.powf(p))
        .fold(head, f64::max);
    let m = sampler.m;
    let mp = m.powf(p);
    let gamma = (opts.c2 * eps).min(0.45);
    let eps_win = (opts.c1 * eps * eps / dim as f64).clamp(1e-12, 0.49);
    let p_half = 0.5 * p;
    let inv = 1.0 / sampler.quads.len() as f64;
    // per-probe prefix sums of w * x^{p/2} resolve each step plateau in one
    // subtraction; nodes clamped at zero against negative Ritz round-off
    let prefix_pow: Vec<Vec<f64>> = sampler
        .quads
        .iter()
        .map(|q| {
            let mut pp = Vec::with_capacity(q.nodes.len() + 1);
            let mut acc = 0.0;
            pp.push(0.0);
            for (&x, &wt) in q.nodes.iter().zip(&q.weights) {
                acc += wt * x.max(0.0).powf(p_half);
                pp.push(acc);
            }
            pp
        })
        .collect();
    let mut evals = 0usize;
    // scaled mass of x^{p/2} above the step at boundary `lo`
    let step_mass = |lo: f64, evals: &mut usize| -> f64 {
        let (cs, ss) = step_params(gamma, eps_win);
        let r0 = (cs - 9.0 * ss).max(1e-12);
        let r1 = (cs + 9.0 * ss).min(0.9);
        let x0 = lo * r0 / (1.0 - r0);
        let x1 = lo * r1 / (1.0 - r1);
        let mut total = 0.0;
        for (q, pp) in sampler.quads.iter().zip(&prefix_pow) {
            let i0 = q.nodes.partition_point(|&x| x < x0);
            let i1 = q.nodes.partition_point(|&x| x <= x1);
            let mut mass = pp[q.nodes.len()] - pp[i1];
            for i in i0..i1 {
                let x = q.nodes[i].max(0.0);
                mass += q.weights[i] * x.powf(p_half) * step_target(gamma, eps_win, x / (x + lo));
                *evals += 1;
            }
            *evals += 1;
            total += inv * q.norm_sq * mass;
        }
        total
    };
    // total scaled mass, for the remaining-share stopping rule
    let u_inf: f64 = sampler
        .quads
        .iter()
        .zip(&prefix_pow)
        .map(|(q, pp)| inv * q.norm_sq * pp[q.nodes.len()])
        .sum();
    let mut literal_tail = 0.0;
    let mut literal_polys = 0usize;
    let mut trace = Vec::new();
    let cap = opts.budget_windows.unwrap_or(1024);
    let mut t = 0usize;
    loop {
        let lo = sampler.a1 * 0.5f64.powi(t as i32 + 1);
        let hi = sampler.a1 * 0.5f64.powi(t as i32);
        let u_cum = step_mass(lo, &mut evals);
        if opts.literal_composition {
            let b_cert = ((1.0 + gamma) * hi).min(1.0);
            let q_t = build_power_polynomial(p_half, (opts.c3 * eps).min(0.9), lo, b_cert)?;
            literal_polys += 1;
            let z = if t == 0 || hi >= 1.0 / (1.0 + gamma) {
                window_zones(lo, 1.0, gamma, eps_win)
            } else {
                window_zones(lo, hi, gamma, eps_win)
            };
            for q in &sampler.quads {
                let i_lo = q.nodes.partition_point(|&x| x < z.x00);
                let i_hi = if z.x11.is_finite() {
                    q.nodes.partition_point(|&x| x <= z.x11)
                } else {
                    q.nodes.len()
                };
                let mut mass = 0.0;
                for i in i_lo..i_hi {
                    let x = q.nodes[i].max(0.0);
                    let h = soft_window_value(x, z.lo, z.hi, gamma, eps_win);
                    mass += q.weights[i] * q_t.eval(h * x);
                    evals += 2;
                }
                literal_tail += inv * q.norm_sq * mass;
            }
        }
        let lambda = lo;
        trace.push(lambda);
        let tail = if opts.literal_composition {
            literal_tail * mp
        } else {
            u_cum * mp
        };
        let total = head + tail;
        let s_run = total.max(lower_bound);
        let floor = if s_run > 0.0 {
            (opts.c1 * eps * s_run / dim as f64).powf(2.0 / p) / (m * m)
        } else {
            0.0
        };
        // everything below the current depth, read off the quadratures in
        // one subtraction; gap-safe where a per-window marginal is not
        let remaining = (u_inf - u_cum).max(0.0) * mp;
        if lambda <= floor || remaining <= opts.c1 * eps * total.max(1e-300) {
            return Ok(SumEstimate {
                value: total,
                head_exact: head,
                tail_estimate: tail,
                deflation_rank: sampler.head.len(),
                probes,
                windows: t + 1,
                window_evals: evals + literal_polys,
                alpha,
                lambda,
                lambda_trace: trace,
                scale: m,
                seed: opts.seed,
            });
        }
        if t + 1 > cap {
            return Err(Error::BudgetExhausted {
                context: "schatten poly window extension",
                lambda,
            });
        }
        t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::{approximate_histogram, BucketEngine, HistogramConfig};
    use crate::linops::{PlantedMatrix, SparseMatrix};
    use crate::oracle;
    use crate::rng::{stream_rng, STREAM_MISC};
    use rand::Rng;

    fn diag(values: &[f64]) -> SparseMatrix {
        SparseMatrix::diag(values)
    }

    fn random_sparse(n: usize, d: usize, seed: u64) -> SparseMatrix {
        let mut rng = stream_rng(seed, STREAM_MISC + 5);
        let mut triplets = Vec::new();
        for i in 0..n {
            for _ in 0..6 {
                let j = rng.gen_range(0..d);
                let v: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                triplets.push((i, j, v));
            }
        }
        SparseMatrix::from_triplets(n, d, &triplets).unwrap()
    }

    fn rel_err(est: f64, truth: f64) -> f64 {
        (est - truth).abs() / truth.abs().max(1e-300)
    }

    // -- power polynomials --------------------------------------------------

    #[test]
    fn power_taylor_product_formula() {
        let ones = power_taylor(-1.0, 6).unwrap();
        assert!(ones.iter().all(|&a| (a - 1.0).abs() < 1e-15));

        let half = power_taylor(-0.5, 3).unwrap();
        assert!((half[0] - 1.0).abs() < 1e-15);
        assert!((half[1] - 0.5).abs() < 1e-15);
        assert!((half[2] - 0.375).abs() < 1e-15);
        assert!((half[3] - 0.3125).abs() < 1e-15);

        assert!(power_taylor(0.0, 3).is_err());
        assert!(power_taylor(-1.01, 3).is_err());

        let any = power_taylor(-0.37, 40).unwrap();
        assert!(any.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }

    #[test]
    fn power_taylor_tail_bound_at_half() {
        let x = 0.5f64;
        for &pp in &[-1.0, -0.5, -0.1] {
            for &k in &[5usize, 10, 20] {
                let coeffs = power_taylor(pp, k).unwrap();
                let series: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, &a)| a * (1.0 - x).powi(j as i32))
                    .sum();
                let gap = x.powf(pp) - series;
                assert!(
                    gap >= -1e-12,
                    "series overshoots x^p at p'={pp}, k={k}: gap {gap}"
                );
                assert!(
                    gap <= (-(k as f64) * x).exp() / x + 1e-12,
                    "tail bound violated at p'={pp}, k={k}: gap {gap}"
                );
            }
        }
    }

    #[test]
    fn power_polynomial_certifies_on_interval() {
        let q = build_power_polynomial(1.0, 1e-2, 0.25, 0.5).unwrap();
        assert_eq!(q.eval(0.0), 0.0);
        assert!(rel_err(q.eval(0.5), 0.5) <= 1e-2);
        let n = 400;
        let mut prev = 0.0;
        for i in 0..=n {
            let x = 0.25 + 0.25 * i as f64 / n as f64;
            assert!(rel_err(q.eval(x), x) <= 1e-2 + 1e-9);
            let xm = 0.5 * i as f64 / n as f64;
            let v = q.eval(xm);
            assert!(v >= prev - 1e-15, "not monotone at {xm}");
            prev = v;
        }
    }

    #[test]
    fn power_polynomial_integer_exponent_is_exact_monomial() {
        let q = build_power_polynomial(2.0, 1e-3, 0.1, 1.0).unwrap();
        assert_eq!(q.taylor, vec![1.0]);
        for &x in &[0.05, 0.3, 0.77, 1.0] {
            assert!((q.eval(x) - x * x).abs() < 1e-14);
        }
    }

    // -- sums over an existing histogram -------------------------------------

    #[test]
    fn histogram_sum_constant_spectrum_and_zero_counts() {
        let n = 50.0;
        let a1 = 0.93;
        let hist = HistogramResult {
            a1,
            boundaries: vec![1.0, a1, a1 * 0.9, a1 * 0.81],
            counts: vec![n, 0.0, 0.0],
            scale: 2.0,
            t: 2,
        };
        let spec = SumSpec::Schatten { p: 2.0 };
        let v = sum_from_histogram(&hist, &spec).unwrap();
        assert!((v - n * 4.0 * a1).abs() < 1e-12);

        let empty = HistogramResult {
            counts: vec![0.0, 0.0, 0.0],
            ..hist.clone()
        };
        assert_eq!(sum_from_histogram(&empty, &spec).unwrap(), 0.0);
    }

    #[test]
    fn histogram_sum_rejects_unsupported_specs() {
        let hist = HistogramResult {
            a1: 0.9,
            boundaries: vec![1.0, 0.9, 0.45, 0.225],
            counts: vec![1.0, 1.0, 1.0],
            scale: 1.0,
            t: 2,
        };
        assert!(sum_from_histogram(&hist, &SumSpec::KyFan { w: 3 }).is_err());
        assert!(sum_from_histogram(&hist, &SumSpec::Entropy).is_err());
        // alpha = 0.5 recovered from the boundaries is too coarse for p = 4
        assert!(sum_from_histogram(&hist, &SumSpec::Schatten { p: 4.0 }).is_err());
    }

    #[test]
    fn histogram_sum_matches_oracle_on_diagonal() {
        let a = diag(&[2.0, 1.6, 1.2, 0.9, 0.7, 0.5]);
        // eps2 sharp enough that no atom straddles a window sliver
        let mut config = HistogramConfig::new(0.3, 0.05, 0.1, 0.005);
        config.engine = BucketEngine::Quadrature;
        config.probes_override = Some(48);
        config.seed = 3;
        let hist = approximate_histogram(&a, &config).unwrap();
        let v = sum_from_histogram(&hist, &SumSpec::Schatten { p: 1.0 }).unwrap();
        let truth = 2.0 + 1.6 + 1.2 + 0.9 + 0.7 + 0.5;
        assert!(
            rel_err(v, truth) < 0.15,
            "histogram sum {v} vs oracle {truth}"
        );
    }

    // -- spec validation ------------------------------------------------------

    #[test]
    fn spec_validation_envelope_and_smoothness() {
        fn exp_handle(x: f64) -> f64 {
            x.exp() - 1.0
        }
        fn xlog(x: f64) -> f64 {
            x * (1.0 + x).ln()
        }
        fn square(x: f64) -> f64 {
            x * x
        }
        fn depth(e: f64) -> f64 {
            e
        }
        // exponential growth escapes every polynomial envelope
        assert!(SumSpec::Orlicz {
            g: exp_handle,
            p1: 3.0,
            p2: 1.0
        }
        .validate()
        .is_err());
        assert!(SumSpec::Orlicz {
            g: xlog,
            p1: 2.0,
            p2: 1.0
        }
        .validate()
        .is_ok());
        // x^2 is exactly 2-smooth, so delta_f = 1 must fail and 2.5 pass
        assert!(SumSpec::Custom {
            f: square,
            delta_f: 1.0,
            lambda_f: depth
        }
        .validate()
        .is_err());
        assert!(SumSpec::Custom {
            f: square,
            delta_f: 2.5,
            lambda_f: depth
        }
        .validate()
        .is_ok());
    }

    // -- schatten, histogram route -------------------------------------------

    #[test]
    fn schatten_histogram_two_atoms_head_exact() {
        let a = diag(&[3.0, 4.0]);
        let opts = SumOptions::new(0.1, 7);
        let est1 = schatten_histogram(&a, 1.0, &opts).unwrap();
        assert!(
            (est1.value - 7.0).abs() < 1e-6,
            "nuclear norm {}",
            est1.value
        );
        let est2 = schatten_histogram(&a, 2.0, &opts).unwrap();
        assert!(
            (est2.value - 25.0).abs() < 1e-6,
            "frobenius^2 {}",
            est2.value
        );
    }

    #[test]
    fn schatten_histogram_zero_matrix_is_zero() {
        let a = diag(&[0.0, 0.0, 0.0]);
        let est = schatten_histogram(&a, 1.5, &SumOptions::default()).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.windows, 0);
    }

    #[test]
    fn schatten_histogram_matches_oracle_on_sparse() {
        let a = random_sparse(40, 40, 11);
        let oracle = oracle::dense_svd(&a).unwrap();
        for &p in &[0.5, 3.0] {
            let truth = oracle::exact_schatten(&oracle, p);
            let mut opts = SumOptions::new(0.1, 5);
            opts.c = 0.4;
            let est = schatten_histogram(&a, p, &opts).unwrap();
            assert!(
                rel_err(est.value, truth) < 0.1,
                "p = {p}: estimate {} vs oracle {truth}",
                est.value
            );
        }
    }

    #[test]
    fn schatten_histogram_respects_window_budget() {
        let a = random_sparse(30, 30, 2);
        let mut opts = SumOptions::new(0.1, 1);
        opts.budget_windows = Some(2);
        match schatten_histogram(&a, 0.5, &opts) {
            Err(Error::BudgetExhausted { context, lambda }) => {
                assert!(context.contains("schatten"));
                assert!(lambda > 0.0 && lambda < 1.0);
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    // -- schatten, polynomial route -------------------------------------------

    #[test]
    fn schatten_poly_rank_one_and_frobenius() {
        let a = diag(&[0.8, 0.0, 0.0]);
        let est = schatten_poly(&a, 1.0, &PolyOptions::new(0.1, 3)).unwrap();
        assert!(
            (est.value - 0.8).abs() < 0.02,
            "rank-1 nuclear {}",
            est.value
        );

        let b = random_sparse(30, 30, 6);
        let frob: f64 = b.frob_sq;
        let est2 = schatten_poly(&b, 2.0, &PolyOptions::new(0.1, 4)).unwrap();
        assert!(
            rel_err(est2.value, frob) < 0.1,
            "frobenius {} vs {frob}",
            est2.value
        );
    }

    #[test]
    fn schatten_poly_literal_composition_agrees() {
        let a = diag(&[2.0, 1.7, 1.3, 1.0, 0.8, 0.55, 0.4, 0.3]);
        let mut opts = PolyOptions::new(0.1, 9);
        opts.k = Some(2);
        let part = schatten_poly(&a, 1.3, &opts).unwrap();
        opts.literal_composition = true;
        let lit = schatten_poly(&a, 1.3, &opts).unwrap();
        assert!(
            rel_err(lit.value, part.value) < 0.12,
            "literal {} vs partition {}",
            lit.value,
            part.value
        );
        let truth: f64 = [2.0, 1.7, 1.3, 1.0, 0.8, 0.55, 0.4, 0.3]
            .iter()
            .map(|s: &f64| s.powf(1.3))
            .sum();
        assert!(rel_err(part.value, truth) < 0.1);
    }

    #[test]
    fn schatten_paths_agree_and_poly_is_cheaper_on_hard_case() {
        // sqrt(n) heavy values over a bulk of ones
        let mut spectrum = vec![8.0; 8];
        spectrum.extend(vec![1.0; 64]);
        let a = PlantedMatrix::new(spectrum, 21);
        let truth = 8.0 * 8.0 + 64.0;

        let mut hopts = SumOptions::new(0.1, 2);
        hopts.c = 0.4;
        hopts.probes = Some(24);
        let hist = schatten_histogram(&a, 1.0, &hopts).unwrap();
        assert!(
            rel_err(hist.value, truth) < 0.1,
            "histogram path {} vs {truth}",
            hist.value
        );

        let mut popts = PolyOptions::new(0.1, 2);
        popts.probes = Some(24);
        let poly = schatten_poly(&a, 1.0, &popts).unwrap();
        assert!(
            rel_err(poly.value, truth) < 0.1,
            "poly path {} vs {truth}",
            poly.value
        );
        assert!(
            poly.window_evals < hist.window_evals,
            "poly evals {} should undercut histogram evals {}",
            poly.window_evals,
            hist.window_evals
        );
        assert!(
            rel_err(hist.value, poly.value) < 0.15,
            "cross-path disagreement: {} vs {}",
            hist.value,
            poly.value
        );
    }

    // -- orlicz ----------------------------------------------------------------

    #[test]
    fn orlicz_specializes_to_schatten_and_frobenius() {
        fn ident(x: f64) -> f64 {
            x
        }
        fn square(x: f64) -> f64 {
            x * x
        }
        let a = diag(&[2.0, 1.5, 1.0, 0.8, 0.6, 0.4, 0.3, 0.2]);
        let opts = SumOptions::new(0.1, 4);

        let o1 = orlicz_sum(&a, ident, 1.0, 1.0, &opts).unwrap();
        let s1 = schatten_histogram(&a, 1.0, &opts).unwrap();
        assert!(
            rel_err(o1.value, s1.value) < 0.1,
            "orlicz id {} vs schatten {}",
            o1.value,
            s1.value
        );

        let o2 = orlicz_sum(&a, square, 2.0, 2.0, &opts).unwrap();
        let frob: f64 = [2.0f64, 1.5, 1.0, 0.8, 0.6, 0.4, 0.3, 0.2]
            .iter()
            .map(|s| s * s)
            .sum();
        assert!(rel_err(o2.value, frob) < 0.1);
    }

    #[test]
    fn orlicz_xlog_matches_oracle_on_diagonal() {
        fn xlog(x: f64) -> f64 {
            x * (1.0 + x).ln()
        }
        let values = [2.0, 1.5, 1.0, 0.8, 0.6, 0.4, 0.3, 0.2];
        let a = diag(&values);
        let truth: f64 = values.iter().map(|&s| xlog(s)).sum();
        let mut opts = SumOptions::new(0.1, 8);
        opts.c = 0.3;
        let est = orlicz_sum(&a, xlog, 2.0, 1.0, &opts).unwrap();
        assert!(
            rel_err(est.value, truth) < 0.1,
            "orlicz {} vs oracle {truth}",
            est.value
        );
    }

    // -- ky fan ------------------------------------------------------------------

    #[test]
    fn kyfan_small_cases() {
        let a = diag(&[5.0, 3.0, 1.0]);
        let opts = SumOptions::new(0.1, 5);
        // w = 2: head covers everything requested, so the answer is exact
        let est = kyfan(&a, 2, &opts).unwrap();
        assert!((est.value - 8.0).abs() < 1e-6, "top-2 {}", est.value);

        // w = d agrees with the nuclear norm
        let full = kyfan(&a, 3, &opts).unwrap();
        let nuclear = schatten_histogram(&a, 1.0, &opts).unwrap();
        assert!(
            rel_err(full.value, nuclear.value) < 0.07,
            "full ky fan {} vs nuclear {}",
            full.value,
            nuclear.value
        );
        assert!(rel_err(full.value, 9.0) < 0.05);
    }

    #[test]
    fn kyfan_matches_oracle_on_planted_decay() {
        let spectrum: Vec<f64> = (0..60).map(|i| 3.0 * 0.9f64.powi(i)).collect();
        let truth: f64 = spectrum.iter().take(5).sum();
        let a = PlantedMatrix::new(spectrum, 17);
        let est = kyfan(&a, 5, &SumOptions::new(0.1, 6)).unwrap();
        assert!(
            rel_err(est.value, truth) < 0.1,
            "ky fan {} vs oracle {truth}",
            est.value
        );
    }

    #[test]
    fn kyfan_quantiles_monotone_in_w_on_fixed_counts() {
        let counts = vec![2.3, 0.0, 4.1, 1.2, 6.0];
        let boundaries = geometric_boundaries(0.95, 0.25, 4);
        let mut prev = 0.0;
        for w in 1..=12 {
            let (v, _, _) = kyfan_from_counts(&counts, &boundaries, 2.0, 1.02, w);
            assert!(v >= prev - 1e-12, "ky fan not monotone at w = {w}");
            prev = v;
        }
    }

    // -- entropy -------------------------------------------------------------------

    #[test]
    fn entropy_config_exponents_sit_in_band() {
        let cfg = EntropyConfig::new(0.1, 300, EntropyMode::Additive, 1.0).unwrap();
        assert_eq!(cfg.k1, 5);
        assert_eq!(cfg.alphas.len(), 6);
        assert!(cfg.alphas.iter().all(|&a| a < 0.0));
        let lo = -1.0 / (2.0 * cfg.k1 as f64 * (300f64).ln());
        let hi = -1.0 / (16.0 * (cfg.k1 as f64).powi(3) * (300f64).ln());
        for &al in &cfg.alphas {
            assert!(al > lo && al < hi, "alpha {al} outside ({lo}, {hi})");
        }
    }

    #[test]
    fn entropy_interpolation_recovers_oracle_tsallis() {
        // exact Tsallis inputs isolate the extrapolation error
        let sigma_hat = [0.5, 0.3, 0.2];
        let truth: f64 = -sigma_hat.iter().map(|&p: &f64| p * p.ln()).sum::<f64>();
        let cfg = EntropyConfig::new(0.05, 200, EntropyMode::Additive, 1.0).unwrap();
        let tvals: Vec<f64> = cfg
            .alphas
            .iter()
            .map(|&al| {
                let z: f64 = sigma_hat.iter().map(|&p| p.powf(1.0 + al)).sum();
                (1.0 - z) / al
            })
            .collect();
        let h = entropy_from_tsallis(&cfg.alphas, &tvals).unwrap();
        assert!(
            (h - truth).abs() < 1e-3,
            "interpolated {h} vs exact {truth}"
        );
    }

    #[test]
    fn entropy_equal_singular_values_is_log_n() {
        let a = SparseMatrix::identity(12);
        let mut opts = SumOptions::new(0.1, 9);
        opts.c = 0.4;
        let est = svd_entropy(&a, EntropyMode::Additive, &opts).unwrap();
        let truth = (12f64).ln();
        assert!(
            (est.value - truth).abs() < 0.1,
            "entropy {} vs log n {truth}",
            est.value
        );
    }

    #[test]
    fn entropy_rank_one_is_zero() {
        let a = diag(&[0.8, 0.0, 0.0]);
        let est = svd_entropy(&a, EntropyMode::Multiplicative, &SumOptions::new(0.1, 2)).unwrap();
        assert!(est.value.abs() < 1e-9, "rank-1 entropy {}", est.value);
    }

    #[test]
    fn entropy_matches_oracle_on_planted_spectrum() {
        let spectrum: Vec<f64> = (0..40).map(|i| 2.0 * 0.95f64.powi(i)).collect();
        let a = PlantedMatrix::new(spectrum.clone(), 13);
        let z: f64 = spectrum.iter().sum();
        let truth: f64 = -spectrum
            .iter()
            .map(|&s| {
                let p = s / z;
                p * p.ln()
            })
            .sum::<f64>();
        let mut opts = SumOptions::new(0.1, 3);
        opts.c = 0.4;
        let est = svd_entropy(&a, EntropyMode::Additive, &opts).unwrap();
        assert!(
            (est.value - truth).abs() < 0.1,
            "entropy {} vs oracle {truth}",
            est.value
        );
    }

    #[test]
    fn determinism_and_estimate_record_shape() {
        let a = random_sparse(25, 25, 3);
        let opts = SumOptions::new(0.15, 42);
        let e1 = schatten_histogram(&a, 1.0, &opts).unwrap();
        let e2 = schatten_histogram(&a, 1.0, &opts).unwrap();
        assert_eq!(e1.value.to_bits(), e2.value.to_bits());
        assert_eq!(e1.lambda_trace, e2.lambda_trace);
        assert!(e1.windows > 0);
        assert!(e1.window_evals > 0);
        assert!(!e1.lambda_trace.is_empty());
        let json = serde_json::to_string(&e1).unwrap();
        assert!(json.contains("\"lambda_trace\""));
    }
}
