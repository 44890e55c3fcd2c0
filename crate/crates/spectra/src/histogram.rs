//! Randomized approximate histogram of squared singular values.
//!
//! Buckets are geometric intervals R_t = (a_{t+1}, a_t] of the spectrum of
//! A^T A / M^2 with a random upper shift a_1, so no fixed spectrum can park
//! mass on bucket edges with positive probability. Each bucket count is a
//! Hutchinson estimate of tr W_t for a soft window W_t; all T+1 windows for
//! one probe are evaluated from a single shared Lanczos basis of the scaled
//! Gram operator, since every window is a polynomial in the same ridge map.
//! Estimates at or below 1/2 are rounded to exactly zero.

use rand::Rng;
use serde::Serialize;

use crate::deflate::{block_krylov_topk, build_preconditioner, Preconditioner};
use crate::error::{Error, Result};
use crate::linops::{spectral_norm_estimate, LinOp, ScaledGram};
use crate::numeric::dot;
use crate::oracle;
use crate::rng::{fill_rademacher, stream_rng, PROBE_REP_STRIDE, STREAM_PROBE_BASE, STREAM_SHIFT};
use crate::solvers::{LanczosBasis, SolverConfig};
use crate::window::{apply_series_solver, soft_window_value, window_series_cached, WindowSeries};

/// How bucket windows are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketEngine {
    /// One Lanczos basis per probe, shared across all buckets; windows run in
    /// tridiagonal coordinates as certified Chebyshev series. Default.
    Coordinate,
    /// Ambient Clenshaw with a conjugate-gradient ridge solve per term and a
    /// single deflation reused by every bucket's preconditioner.
    Solve,
    /// Full tridiagonalization per probe, windows evaluated exactly on the
    /// Gauss quadrature of the probe's spectral measure. No polynomial fits,
    /// so arbitrarily sharp windows cost nothing; preferred when the small
    /// Gram dimension makes complete Lanczos affordable.
    Quadrature,
}

impl std::str::FromStr for BucketEngine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coordinate" => Ok(BucketEngine::Coordinate),
            "solve" => Ok(BucketEngine::Solve),
            "quadrature" => Ok(BucketEngine::Quadrature),
            other => Err(Error::InvalidArgument(format!(
                "unknown bucket engine '{other}' (expected coordinate|solve|quadrature)"
            ))),
        }
    }
}

/// Gauss quadrature of the spectral measure of (scaled Gram, probe):
/// g^T f(G) g = norm_sq * sum_i weights[i] * f(nodes[i]), exact once the
/// Krylov space is invariant (always reached at full dimension).
pub(crate) struct ProbeQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub norm_sq: f64,
}

pub(crate) fn probe_quadrature(gram: &ScaledGram, g: &[f64]) -> Result<ProbeQuadrature> {
    let mut basis = LanczosBasis::new(gram, g)?;
    basis.grow_to(gram.dim());
    let (d, e) = basis.tridiagonal();
    let (nodes, weights) = crate::numeric::tridiag_quadrature(d, e)?;
    Ok(ProbeQuadrature {
        nodes,
        weights,
        norm_sq: basis.start_norm * basis.start_norm,
    })
}

#[derive(Debug, Clone)]
pub struct HistogramConfig {
    /// Multiplicative accuracy of per-bucket counts.
    pub eps1: f64,
    /// Additive neighbor-leakage accuracy.
    pub eps2: f64,
    /// Geometric bucket ratio: a_{t+1} = (1-alpha) a_t.
    pub alpha: f64,
    /// Floor of the scaled squared spectrum that buckets must reach.
    pub lambda: f64,
    /// Window sharpness constant: gamma = c1 * eps2 * alpha.
    pub c1: f64,
    /// Probe count constant: S = ceil(ln n / (c2 * eps1^2)).
    pub c2: f64,
    /// Window accuracy constant: per-call accuracy c3 * eps1^2 / n.
    pub c3: f64,
    /// Deflation rank for the solver engine's shared preconditioner.
    pub k: usize,
    pub seed: u64,
    /// Fixed probe count instead of the derived S.
    pub probes_override: Option<usize>,
    /// Median of this many independent probe sets (same shift). Amplifies
    /// the 99/100 success probability; 1 disables.
    pub median_r: usize,
    /// Refuse to build more than this many windows.
    pub t_cap: usize,
    pub engine: BucketEngine,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig {
            eps1: 0.1,
            eps2: 0.1,
            alpha: 0.25,
            lambda: 0.01,
            c1: 0.1,
            c2: 0.1,
            c3: 0.1,
            k: 0,
            seed: 0,
            probes_override: None,
            median_r: 1,
            t_cap: 100_000,
            engine: BucketEngine::Coordinate,
        }
    }
}

impl HistogramConfig {
    pub fn new(eps1: f64, eps2: f64, alpha: f64, lambda: f64) -> Self {
        HistogramConfig {
            eps1,
            eps2,
            alpha,
            lambda,
            ..Default::default()
        }
    }

    /// Window transition sharpness gamma = c1 * eps2 * alpha.
    pub fn gamma(&self) -> f64 {
        self.c1 * self.eps2 * self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("alpha", self.alpha),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be in (0,1), got {v}"
                )));
            }
        }
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.gamma() < self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "gamma = c1*eps2*alpha = {} must stay below alpha = {}; lower c1 or eps2",
                self.gamma(),
                self.alpha
            )));
        }
        if self.median_r == 0 || self.median_r > 255 {
            return Err(Error::InvalidArgument(format!(
                "median_r must be in 1..=255, got {}",
                self.median_r
            )));
        }
        if self.probes_override == Some(0) {
            return Err(Error::InvalidArgument(
                "probes_override must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Number of geometric windows below the top bucket: T = ceil(log_{1-alpha}
/// lambda), so a_{T+1} <= lambda.
pub fn window_count(alpha: f64, lambda: f64) -> usize {
    ((lambda.ln() / (1.0 - alpha).ln()).ceil() as usize).max(1)
}

/// Derived probe count S = ceil(ln n / (c2 eps1^2)) unless overridden.
pub fn derived_probe_count(dim: usize, config: &HistogramConfig) -> usize {
    config
        .probes_override
        .unwrap_or_else(|| {
            ((dim.max(2) as f64).ln() / (config.c2 * config.eps1 * config.eps1)).ceil() as usize
        })
        .max(1)
}

/// Random shift, uniform in (1 - alpha/4, 1). The open lower edge is the
/// distribution's own zero-probability boundary; the open upper edge keeps
/// boundaries strictly decreasing.
pub(crate) fn draw_shift(seed: u64, alpha: f64) -> f64 {
    let mut rng = stream_rng(seed, STREAM_SHIFT);
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return 1.0 - 0.25 * alpha * u;
        }
    }
}

pub(crate) fn geometric_boundaries(a1: f64, alpha: f64, t_windows: usize) -> Vec<f64> {
    let mut b = Vec::with_capacity(t_windows + 2);
    b.push(1.0);
    let mut cur = a1;
    for _ in 0..=t_windows {
        b.push(cur);
        cur *= 1.0 - alpha;
    }
    b
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramResult {
    /// The random shift; boundaries[1] = a1.
    pub a1: f64,
    /// a_0 = 1 down to a_{T+1} <= lambda, strictly decreasing, length T+2.
    pub boundaries: Vec<f64>,
    /// Rounded estimates b~_0 ... b~_T of bucket occupancies.
    pub counts: Vec<f64>,
    /// Spectral-norm estimate used to rescale A; counts refer to (A/scale)^T
    /// (A/scale). Zero for an all-zero input.
    pub scale: f64,
    /// Number of windows below the top bucket.
    pub t: usize,
}

/// Run metadata that does not belong in the portable result.
#[derive(Debug, Clone, Serialize)]
pub struct HistogramDiagnostics {
    pub probes_per_repetition: usize,
    pub repetitions: usize,
    pub top_degree: usize,
    pub band_degree: usize,
    /// Work attributed to each bucket (flop-scale proxy; comparable within a
    /// run, not across engines).
    pub bucket_cost: Vec<f64>,
    /// Hutchinson estimates of tr(W_t W_{t+1}) for adjacent windows,
    /// medianed across repetitions; length T.
    pub adjacent_overlap: Vec<f64>,
    /// Largest Lanczos basis grown by the coordinate engine (0 for solve).
    pub max_basis: usize,
}

impl HistogramDiagnostics {
    fn empty(t_windows: usize) -> Self {
        HistogramDiagnostics {
            probes_per_repetition: 0,
            repetitions: 0,
            top_degree: 0,
            band_degree: 0,
            bucket_cost: vec![0.0; t_windows + 1],
            adjacent_overlap: vec![0.0; t_windows],
            max_basis: 0,
        }
    }
}

pub fn approximate_histogram(a: &dyn LinOp, config: &HistogramConfig) -> Result<HistogramResult> {
    approximate_histogram_with_diagnostics(a, config).map(|p| p.0)
}

pub fn approximate_histogram_with_diagnostics(
    a: &dyn LinOp,
    config: &HistogramConfig,
) -> Result<(HistogramResult, HistogramDiagnostics)> {
    config.validate()?;
    let t_windows = window_count(config.alpha, config.lambda);
    if t_windows > config.t_cap {
        return Err(Error::WindowCountExceeded {
            t: t_windows,
            cap: config.t_cap,
        });
    }
    let a1 = draw_shift(config.seed, config.alpha);
    let boundaries = geometric_boundaries(a1, config.alpha, t_windows);
    let m_est = match spectral_norm_estimate(a, config.seed) {
        Ok(m) => m,
        Err(Error::ZeroMatrix(_)) => {
            let result = HistogramResult {
                a1,
                boundaries,
                counts: vec![0.0; t_windows + 1],
                scale: 0.0,
                t: t_windows,
            };
            return Ok((result, HistogramDiagnostics::empty(t_windows)));
        }
        Err(e) => return Err(e),
    };
    let dim = a.n_rows().min(a.n_cols());
    let probes = derived_probe_count(dim, config);
    let gamma = config.gamma();
    let eps_win = (config.c3 * config.eps1 * config.eps1 / dim as f64).min(0.49);
    let mut diagnostics = HistogramDiagnostics::empty(t_windows);
    diagnostics.probes_per_repetition = probes;
    diagnostics.repetitions = config.median_r;
    // the quadrature engine evaluates ideal windows pointwise and never fits
    // a series
    let series = if config.engine == BucketEngine::Quadrature {
        None
    } else {
        let top = window_series_cached(1.0, gamma, eps_win, true)?;
        let band = window_series_cached(1.0 / (1.0 - config.alpha), gamma, eps_win, false)?;
        diagnostics.top_degree = top.degree;
        diagnostics.band_degree = band.degree;
        Some((top, band))
    };

    let mut rep_counts: Vec<Vec<f64>> = Vec::with_capacity(config.median_r);
    let mut rep_overlaps: Vec<Vec<f64>> = Vec::with_capacity(config.median_r);
    match config.engine {
        BucketEngine::Coordinate => {
            let (top, band) = series.as_ref().unwrap();
            let gram = ScaledGram::new(a, m_est);
            for rep in 0..config.median_r {
                let (c, o) = coordinate_repetition(
                    &gram,
                    &boundaries,
                    top,
                    band,
                    eps_win,
                    config.seed,
                    rep as u64,
                    probes,
                    &mut diagnostics,
                )?;
                rep_counts.push(c);
                rep_overlaps.push(o);
            }
        }
        BucketEngine::Quadrature => {
            let gram = ScaledGram::new(a, m_est);
            for rep in 0..config.median_r {
                let (c, o) = quadrature_repetition(
                    &gram,
                    &boundaries,
                    gamma,
                    eps_win,
                    config.seed,
                    rep as u64,
                    probes,
                    &mut diagnostics,
                )?;
                rep_counts.push(c);
                rep_overlaps.push(o);
            }
        }
        BucketEngine::Solve => {
            let (top, band) = series.as_ref().unwrap();
            let preconditioners = shared_preconditioners(a, m_est, &boundaries, config)?;
            for rep in 0..config.median_r {
                let (c, o) = solver_repetition(
                    a,
                    m_est,
                    &boundaries,
                    top,
                    band,
                    eps_win,
                    config,
                    rep as u64,
                    probes,
                    &preconditioners,
                    &mut diagnostics,
                )?;
                rep_counts.push(c);
                rep_overlaps.push(o);
            }
        }
    }

    let mut counts = Vec::with_capacity(t_windows + 1);
    for t in 0..=t_windows {
        let v = median(rep_counts.iter().map(|r| r[t]).collect());
        counts.push(if v <= 0.5 { 0.0 } else { v });
    }
    for t in 0..t_windows {
        diagnostics.adjacent_overlap[t] = median(rep_overlaps.iter().map(|r| r[t]).collect());
    }
    let result = HistogramResult {
        a1,
        boundaries,
        counts,
        scale: m_est,
        t: t_windows,
    };
    Ok((result, diagnostics))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Rademacher probe `s` of repetition `rep`, stream-addressed so neither
/// probe count nor evaluation order perturbs other draws.
pub(crate) fn probe_vector(seed: u64, rep: u64, s: usize, dim: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, STREAM_PROBE_BASE + rep * PROBE_REP_STRIDE + s as u64);
    let mut g = vec![0.0; dim];
    fill_rademacher(&mut rng, &mut g);
    g
}

#[allow(clippy::too_many_arguments)]
fn coordinate_repetition(
    gram: &ScaledGram,
    boundaries: &[f64],
    top: &WindowSeries,
    band: &WindowSeries,
    eps_win: f64,
    seed: u64,
    rep: u64,
    probes: usize,
    diagnostics: &mut HistogramDiagnostics,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = gram.dim();
    let t_windows = boundaries.len() - 2;
    let mut sums = vec![0.0; t_windows + 1];
    let mut overlap_sums = vec![0.0; t_windows];
    for s in 0..probes {
        let g = probe_vector(seed, rep, s, dim);
        let mut basis = LanczosBasis::new(gram, &g)?;
        let budget = 0.25 * eps_win * basis.start_norm;
        let mut prev_out: Option<Vec<f64>> = None;
        for t in 0..=t_windows {
            let series = if t == 0 { top } else { band };
            let lo = boundaries[t + 1];
            let mut m = basis.len().max(dim.min(30)).max(2);
            let out = loop {
                let before = basis.len();
                basis.grow_to(m);
                diagnostics.bucket_cost[t] += (basis.len() - before) as f64 * 4.0 * dim as f64;
                let y0 = basis.start_coords();
                let (out, defect) = basis.clenshaw_ridge_series(&series.coefficients, lo, &y0);
                diagnostics.bucket_cost[t] += ((series.degree + 1) * basis.len()) as f64 * 5.0;
                if basis.is_exact() || defect <= budget || basis.len() >= dim {
                    break out;
                }
                m = (m * 3 / 2 + 10).min(dim);
            };
            sums[t] += basis.start_norm * out[0];
            if let Some(prev) = &prev_out {
                // coordinates are nested across basis growth, so the shorter
                // vector zero-pads exactly
                overlap_sums[t - 1] += prev.iter().zip(&out).map(|(a, b)| a * b).sum::<f64>();
            }
            prev_out = Some(out);
        }
        diagnostics.max_basis = diagnostics.max_basis.max(basis.len());
    }
    let inv = 1.0 / probes as f64;
    Ok((
        sums.into_iter().map(|v| v * inv).collect(),
        overlap_sums.into_iter().map(|v| v * inv).collect(),
    ))
}

#[allow(clippy::too_many_arguments)]
fn quadrature_repetition(
    gram: &ScaledGram,
    boundaries: &[f64],
    gamma: f64,
    eps_win: f64,
    seed: u64,
    rep: u64,
    probes: usize,
    diagnostics: &mut HistogramDiagnostics,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = gram.dim();
    let t_windows = boundaries.len() - 2;
    let mut sums = vec![0.0; t_windows + 1];
    let mut overlap_sums = vec![0.0; t_windows];
    for s in 0..probes {
        let g = probe_vector(seed, rep, s, dim);
        let quad = probe_quadrature(gram, &g)?;
        let m = quad.nodes.len();
        diagnostics.max_basis = diagnostics.max_basis.max(m);
        // only the deepest window demands the fully resolved measure, so the
        // basis construction is booked there
        diagnostics.bucket_cost[t_windows] += (4 * dim * m * m) as f64;
        let mut prev: Vec<f64> = Vec::new();
        for t in 0..=t_windows {
            let (lo, hi) = (boundaries[t + 1], boundaries[t]);
            let vals: Vec<f64> = quad
                .nodes
                .iter()
                .map(|&x| soft_window_value(x, lo, hi, gamma, eps_win))
                .collect();
            diagnostics.bucket_cost[t] += (m * 8) as f64;
            sums[t] += quad.norm_sq
                * vals
                    .iter()
                    .zip(&quad.weights)
                    .map(|(v, w)| v * w)
                    .sum::<f64>();
            if t > 0 {
                overlap_sums[t - 1] += quad.norm_sq
                    * vals
                        .iter()
                        .zip(&prev)
                        .zip(&quad.weights)
                        .map(|((v, p), w)| v * p * w)
                        .sum::<f64>();
            }
            prev = vals;
        }
    }
    let inv = 1.0 / probes as f64;
    Ok((
        sums.into_iter().map(|v| v * inv).collect(),
        overlap_sums.into_iter().map(|v| v * inv).collect(),
    ))
}

/// One deflation (the expensive precomputation), one preconditioner per
/// bucket level from it.
fn shared_preconditioners(
    a: &dyn LinOp,
    m_est: f64,
    boundaries: &[f64],
    config: &HistogramConfig,
) -> Result<Vec<Preconditioner>> {
    let defl = block_krylov_topk(a, config.k, 0.25, config.seed)?;
    let msq = m_est * m_est;
    boundaries[1..]
        .iter()
        .map(|lo| build_preconditioner(defl.clone(), lo * msq))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn solver_repetition(
    a: &dyn LinOp,
    m_est: f64,
    boundaries: &[f64],
    top: &WindowSeries,
    band: &WindowSeries,
    eps_win: f64,
    config: &HistogramConfig,
    rep: u64,
    probes: usize,
    preconditioners: &[Preconditioner],
    diagnostics: &mut HistogramDiagnostics,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = a.n_rows().min(a.n_cols());
    let t_windows = boundaries.len() - 2;
    let solver_cfg = SolverConfig {
        seed: config.seed,
        ..Default::default()
    };
    let mut sums = vec![0.0; t_windows + 1];
    let mut overlap_sums = vec![0.0; t_windows];
    for s in 0..probes {
        let g = probe_vector(config.seed, rep, s, dim);
        let mut prev_out: Option<Vec<f64>> = None;
        for t in 0..=t_windows {
            let series = if t == 0 { top } else { band };
            let lo = boundaries[t + 1];
            let (out, matvecs) = apply_series_solver(
                a,
                m_est,
                &series.coefficients,
                lo,
                &g,
                Some(&preconditioners[t]),
                &solver_cfg,
                eps_win,
            )?;
            diagnostics.bucket_cost[t] += matvecs as f64 * dim as f64;
            sums[t] += dot(&g, &out);
            if let Some(prev) = &prev_out {
                overlap_sums[t - 1] += dot(prev, &out);
            }
            prev_out = Some(out);
        }
    }
    let inv = 1.0 / probes as f64;
    Ok((
        sums.into_iter().map(|v| v * inv).collect(),
        overlap_sums.into_iter().map(|v| v * inv).collect(),
    ))
}

/// Dense-oracle bucket occupancies for the boundaries and scale of `result`.
/// Values above 1 (possible only through norm-estimate slack) count in the
/// top bucket; values below the last boundary are not counted anywhere.
pub fn exact_bucket_counts(a: &dyn LinOp, result: &HistogramResult) -> Result<Vec<f64>> {
    if result.scale == 0.0 {
        return Ok(vec![0.0; result.counts.len()]);
    }
    let svd = oracle::dense_svd(a)?;
    let scaled_sq: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| ((s / result.scale) * (s / result.scale)).min(1.0))
        .collect();
    Ok(oracle::exact_bucket_counts(&scaled_sq, &result.boundaries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{PlantedMatrix, SparseMatrix};

    /// Planted instance with clustered singular values (clusters of >= 4 keep
    /// Hutchinson noise well inside the eps1 slack).
    fn clustered_planted() -> PlantedMatrix {
        let mut spectrum = Vec::new();
        for (v, reps) in [(3.0, 5), (1.9, 4), (1.1, 6), (0.55, 4), (0.28, 5)] {
            spectrum.extend(std::iter::repeat(v).take(reps));
        }
        PlantedMatrix::new(spectrum, 4)
    }

    fn envelope_config(seed: u64) -> HistogramConfig {
        HistogramConfig {
            eps1: 0.3,
            eps2: 0.4,
            alpha: 0.5,
            lambda: 0.02,
            c1: 1.0,
            c3: 3.0,
            probes_override: Some(64),
            seed,
            ..Default::default()
        }
    }

    /// Occupancies including one pseudo-bucket on each side, from raw scaled
    /// squared values.
    fn extended_counts(scaled_sq: &[f64], boundaries: &[f64], alpha: f64) -> Vec<f64> {
        let mut ext = Vec::with_capacity(boundaries.len() + 2);
        ext.push(f64::INFINITY);
        ext.extend_from_slice(boundaries);
        ext.push(boundaries.last().unwrap() * (1.0 - alpha));
        crate::oracle::exact_bucket_counts(scaled_sq, &ext)
    }

    #[test]
    fn count_envelope_on_planted_spectrum() {
        let planted = clustered_planted();
        let truth = crate::oracle::dense_svd(&planted).unwrap();
        for seed in 0..8u64 {
            let config = envelope_config(seed);
            let gamma = config.gamma();
            let result = approximate_histogram(&planted, &config).unwrap();
            let scaled_sq: Vec<f64> = truth
                .singular_values
                .iter()
                .map(|s| (s / result.scale).powi(2).min(1.0))
                .collect();
            let ext = extended_counts(&scaled_sq, &result.boundaries, config.alpha);
            let t_cap = result.t;
            let leak = t_cap as f64 * config.eps2;
            for t in 0..=t_cap {
                let b = ext[t + 1];
                let (bm, bp) = (ext[t], ext[t + 2]);
                let got = result.counts[t];
                assert!(
                    got >= (1.0 - config.eps1) * b - 1e-9,
                    "seed {seed} bucket {t}: {got} below (1-eps1) * {b}"
                );
                let hi = (1.0 + config.eps1) * b + leak * (bm + b + bp);
                assert!(
                    got <= hi + 1e-9,
                    "seed {seed} bucket {t}: {got} above envelope {hi}"
                );
                // any bucket whose widened band is empty must round to zero
                let lo_edge = result.boundaries[t + 1] * (1.0 - gamma);
                let hi_edge = result.boundaries[t] * (1.0 + gamma);
                let band_empty = scaled_sq.iter().all(|&x| x <= lo_edge || x >= hi_edge);
                if band_empty {
                    assert_eq!(got, 0.0, "seed {seed} bucket {t} not rounded off");
                }
            }
        }
    }

    #[test]
    fn single_atom_spectrum_fills_one_bucket() {
        // identity: every scaled squared singular value sits at 1/4 (the
        // norm estimate is exactly 2), so exactly one bucket holds n and
        // only its immediate neighbors may see leakage
        let n = 8;
        let a = SparseMatrix::identity(n);
        for seed in [1u64, 5, 9] {
            let config = HistogramConfig {
                eps1: 0.3,
                eps2: 0.4,
                alpha: 0.5,
                lambda: 0.1,
                c1: 1.0,
                c3: 1.0,
                probes_override: Some(4),
                seed,
                ..Default::default()
            };
            let result = approximate_histogram(&a, &config).unwrap();
            assert!((result.scale - 2.0).abs() < 1e-9);
            let star = (0..=result.t)
                .find(|&t| 0.25 > result.boundaries[t + 1] && 0.25 <= result.boundaries[t])
                .unwrap();
            let got = result.counts[star];
            assert!(
                got >= (1.0 - config.eps1) * n as f64 && got <= (1.0 + config.eps1) * n as f64,
                "seed {seed}: bucket {star} count {got}"
            );
            let leak_cap = result.t as f64 * config.eps2 * n as f64;
            for t in 0..=result.t {
                if t == star {
                    continue;
                }
                if t + 1 == star || t == star + 1 {
                    assert!(result.counts[t] <= leak_cap, "neighbor {t}: {}", result.counts[t]);
                } else {
                    assert_eq!(result.counts[t], 0.0, "distant bucket {t} nonzero");
                }
            }
        }
    }

    #[test]
    fn zero_matrix_returns_zero_counts() {
        let a = SparseMatrix::diag(&[0.0, 0.0, 0.0]);
        let result = approximate_histogram(&a, &HistogramConfig::default()).unwrap();
        assert_eq!(result.scale, 0.0);
        assert!(result.counts.iter().all(|&c| c == 0.0));
        assert_eq!(result.counts.len(), result.t + 1);
        assert_eq!(result.boundaries.len(), result.t + 2);
    }

    #[test]
    fn boundaries_are_geometric_and_reach_lambda() {
        let config = HistogramConfig::default();
        let a = SparseMatrix::diag(&[1.0, 0.5]);
        let result = approximate_histogram(
            &a,
            &HistogramConfig {
                probes_override: Some(1),
                c1: 4.0, // keep the default-lambda window fit cheap
                ..config
            },
        )
        .unwrap();
        assert_eq!(result.t, 17); // ceil(ln 0.01 / ln 0.75)
        assert_eq!(result.boundaries.len(), 19);
        assert_eq!(result.boundaries[0], 1.0);
        assert!(result.a1 > 1.0 - 0.25 * 0.25 && result.a1 < 1.0);
        for w in result.boundaries.windows(2) {
            assert!(w[1] < w[0]);
        }
        for t in 1..result.boundaries.len() - 1 {
            let ratio = result.boundaries[t + 1] / result.boundaries[t];
            assert!((ratio - 0.75).abs() < 1e-12);
        }
        assert!(*result.boundaries.last().unwrap() <= config.lambda);
    }

    #[test]
    fn window_cap_refuses_extreme_lambda() {
        let config = HistogramConfig {
            t_cap: 10,
            ..Default::default()
        };
        let a = SparseMatrix::identity(2);
        match approximate_histogram(&a, &config) {
            Err(Error::WindowCountExceeded { t, cap }) => {
                assert_eq!(t, 17);
                assert_eq!(cap, 10);
            }
            other => panic!("expected window cap error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let a = SparseMatrix::identity(2);
        let bad_eps = HistogramConfig {
            eps1: 0.0,
            ..Default::default()
        };
        assert!(approximate_histogram(&a, &bad_eps).is_err());
        let wide_gamma = HistogramConfig {
            c1: 20.0,
            eps2: 0.5,
            ..Default::default()
        };
        assert!(approximate_histogram(&a, &wide_gamma).is_err());
        let zero_probes = HistogramConfig {
            probes_override: Some(0),
            ..Default::default()
        };
        assert!(approximate_histogram(&a, &zero_probes).is_err());
    }

    #[test]
    fn shift_is_uniform_kolmogorov_smirnov() {
        let alpha = 0.25;
        let n = 10_000;
        let mut shifts: Vec<f64> = (0..n).map(|s| draw_shift(s as u64, alpha)).collect();
        shifts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = 1.0 - 0.25 * alpha;
        let mut dmax: f64 = 0.0;
        for (i, &x) in shifts.iter().enumerate() {
            let cdf = (x - lo) / (0.25 * alpha);
            let hi_emp = (i + 1) as f64 / n as f64;
            let lo_emp = i as f64 / n as f64;
            dmax = dmax.max((cdf - lo_emp).abs()).max((cdf - hi_emp).abs());
        }
        // 1% critical value 1.628 / sqrt(n)
        assert!(dmax <= 1.628 / (n as f64).sqrt(), "KS statistic {dmax}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let planted = clustered_planted();
        let config = HistogramConfig {
            probes_override: Some(8),
            ..envelope_config(3)
        };
        let r1 = approximate_histogram(&planted, &config).unwrap();
        let r2 = approximate_histogram(&planted, &config).unwrap();
        assert_eq!(r1.a1, r2.a1);
        assert_eq!(r1.counts, r2.counts);
    }

    #[test]
    fn median_wrapper_keeps_shift_and_result_shape() {
        let a = SparseMatrix::identity(6);
        let base = HistogramConfig {
            eps1: 0.3,
            eps2: 0.4,
            alpha: 0.5,
            lambda: 0.1,
            c1: 1.0,
            c3: 1.0,
            probes_override: Some(4),
            seed: 2,
            ..Default::default()
        };
        let single = approximate_histogram(&a, &base).unwrap();
        let tripled = approximate_histogram(
            &a,
            &HistogramConfig {
                median_r: 3,
                ..base
            },
        )
        .unwrap();
        assert_eq!(single.a1, tripled.a1);
        assert_eq!(single.boundaries, tripled.boundaries);
        // diagonal input: every probe set gives the identical exact value
        assert_eq!(single.counts, tripled.counts);
    }

    #[test]
    fn quadrature_engine_matches_coordinate_engine() {
        // same probes, same ideal windows; the engines differ only by the
        // certified series error, which is far below this tolerance
        let planted = clustered_planted();
        let config = HistogramConfig {
            probes_override: Some(16),
            ..envelope_config(11)
        };
        let coord = approximate_histogram(&planted, &config).unwrap();
        let quad = approximate_histogram(
            &planted,
            &HistogramConfig {
                engine: BucketEngine::Quadrature,
                ..config
            },
        )
        .unwrap();
        assert_eq!(coord.boundaries, quad.boundaries);
        for (c, q) in coord.counts.iter().zip(&quad.counts) {
            assert!((c - q).abs() <= 0.05, "coordinate {c} vs quadrature {q}");
        }
    }

    #[test]
    fn engines_agree_on_small_diagonal() {
        let a = SparseMatrix::diag(&[2.0, 1.0, 0.7, 0.4, 0.2]);
        let base = HistogramConfig {
            eps1: 0.3,
            eps2: 0.4,
            alpha: 0.5,
            lambda: 0.05,
            c1: 1.0,
            c3: 2.0,
            probes_override: Some(2),
            seed: 4,
            ..Default::default()
        };
        let coord = approximate_histogram(&a, &base).unwrap();
        let solved = approximate_histogram(
            &a,
            &HistogramConfig {
                engine: BucketEngine::Solve,
                ..base
            },
        )
        .unwrap();
        assert_eq!(coord.boundaries, solved.boundaries);
        for (c, s) in coord.counts.iter().zip(&solved.counts) {
            assert!((c - s).abs() <= 0.05, "coordinate {c} vs solve {s}");
        }
    }

    #[test]
    fn deepest_bucket_dominates_solver_cost() {
        // per-term conjugate gradient pays ~sqrt(kappa) iterations, and the
        // effective kappa grows as the shift descends, so the last bucket
        // must carry the largest attributed work
        let spectrum: Vec<f64> = (0..20).map(|i| 2.0 * 0.8f64.powi(i)).collect();
        let planted = PlantedMatrix::new(spectrum, 5);
        let config = HistogramConfig {
            eps1: 0.4,
            eps2: 0.4,
            alpha: 0.5,
            lambda: 0.05,
            c1: 1.0,
            c3: 4.0,
            probes_override: Some(2),
            seed: 6,
            engine: BucketEngine::Solve,
            ..Default::default()
        };
        let (result, diag) = approximate_histogram_with_diagnostics(&planted, &config).unwrap();
        let t = result.t;
        for s in 0..t {
            assert!(
                diag.bucket_cost[t] > diag.bucket_cost[s],
                "bucket {s} cost {} not below deepest {}",
                diag.bucket_cost[s],
                diag.bucket_cost[t]
            );
        }
    }

    #[test]
    fn shared_basis_growth_lands_in_deep_buckets() {
        // the coordinate engine amortizes: whichever bucket first needs the
        // fully resolved basis pays for growing it, and that demand trails
        // the sweep into the deep half of the windows
        let spectrum: Vec<f64> = (0..60).map(|i| 3.0 * 0.93f64.powi(i)).collect();
        let planted = PlantedMatrix::new(spectrum, 5);
        let config = HistogramConfig {
            eps1: 0.4,
            eps2: 0.4,
            alpha: 0.5,
            lambda: 0.005,
            c1: 1.0,
            c3: 4.0,
            probes_override: Some(8),
            seed: 6,
            ..Default::default()
        };
        let (result, diag) = approximate_histogram_with_diagnostics(&planted, &config).unwrap();
        let t = result.t;
        let argmax = (0..=t)
            .max_by(|&a, &b| diag.bucket_cost[a].partial_cmp(&diag.bucket_cost[b]).unwrap())
            .unwrap();
        assert!(argmax > t / 2, "argmax cost at shallow bucket {argmax} of {t}");
        assert!(diag.max_basis > 30, "basis never grew: {}", diag.max_basis);
    }

    #[test]
    fn oracle_counts_sum_and_tie_rule() {
        // value exactly on an interior boundary belongs to the bucket whose
        // upper endpoint it is
        let tie = 4.0 * 0.2375f64.sqrt();
        let a = SparseMatrix::diag(&[2.0, tie, 1.0, 0.1]);
        let result = HistogramResult {
            a1: 0.95,
            boundaries: vec![1.0, 0.95, 0.475, 0.2375, 0.118_75],
            counts: vec![0.0; 4],
            scale: 4.0,
            t: 3,
        };
        let counts = exact_bucket_counts(&a, &result).unwrap();
        // scaled squares: 0.25 -> bucket 2, 0.2375 -> bucket 3 (tie),
        // 0.0625 and 0.000625 below the floor
        assert_eq!(counts, vec![0.0, 0.0, 1.0, 1.0]);
        let floor = *result.boundaries.last().unwrap();
        let expected_total = [2.0f64, tie, 1.0, 0.1]
            .iter()
            .filter(|v| (*v / 4.0) * (*v / 4.0) >= floor)
            .count() as f64;
        assert_eq!(counts.iter().sum::<f64>(), expected_total);
    }
}
