//! Desk-scale constructive reductions between spectral-sum accuracy and
//! graph problems: triangle detection through high-accuracy sums over
//! I - delta*A, effective resistances to trace inverse, incidence and
//! leverage-score construction, and determinant-based detection.
//!
//! The arithmetic runs at small n where the required accuracies (n^-4 to
//! n^-13) are representable in doubles; estimators plug in as handles, with
//! the dense oracle as the default.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linops::SparseMatrix;
use crate::oracle::{dense_svd, exact_effres};
use crate::rng::{stream_rng, STREAM_MISC};

/// Simple undirected graph: symmetric 0/1 adjacency, no self-loops.
#[derive(Debug, Clone)]
pub struct Graph {
    pub n: usize,
    pub adjacency: SparseMatrix,
    /// Normalized (u < v) and sorted.
    pub edge_list: Vec<(usize, usize)>,
}

impl Graph {
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u == v {
                return Err(Error::InvalidArgument(format!(
                    "self-loop at vertex {u} is not allowed"
                )));
            }
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u},{v}) out of range for {n} vertices"
                )));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let edge_list: Vec<(usize, usize)> = set.into_iter().collect();
        let mut triplets = Vec::with_capacity(2 * edge_list.len());
        for &(u, v) in &edge_list {
            triplets.push((u, v, 1.0));
            triplets.push((v, u, 1.0));
        }
        let adjacency = SparseMatrix::from_triplets(n, n, &triplets)?;
        Ok(Graph {
            n,
            adjacency,
            edge_list,
        })
    }

    /// Parse a text edge list: one "u v" pair per line, 0-indexed; blank
    /// lines and lines starting with '#' are skipped. The vertex count is
    /// inferred as max index + 1 (the format cannot express isolated
    /// trailing vertices).
    pub fn load_edge_list(path: &str) -> Result<Graph> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_string(),
            source,
        })?;
        let mut edges = Vec::new();
        let mut n = 0usize;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.ok_or(())
                    .and_then(|t| t.parse::<usize>().map_err(|_| ()))
                    .map_err(|_| Error::Parse {
                        path: path.to_string(),
                        line: idx + 1,
                        msg: format!("expected two vertex indices, got '{line}'"),
                    })
            };
            let u = parse(it.next())?;
            let v = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: idx + 1,
                    msg: format!("trailing tokens after edge '{line}'"),
                });
            }
            n = n.max(u + 1).max(v + 1);
            edges.push((u, v));
        }
        Graph::from_edge_list(n, &edges)
    }

    pub fn complete(n: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                edges.push((u, v));
            }
        }
        Graph::from_edge_list(n, &edges).expect("complete graph edges are valid")
    }

    pub fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Graph::from_edge_list(n, &edges).expect("path edges are valid")
    }

    pub fn complete_bipartite(a: usize, b: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..a {
            for v in 0..b {
                edges.push((u, a + v));
            }
        }
        Graph::from_edge_list(a + b, &edges).expect("bipartite edges are valid")
    }

    /// Erdos-Renyi G(n, p), deterministic per seed.
    pub fn gnp(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = stream_rng(seed, STREAM_MISC + 11);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let x: f64 = rand::Rng::gen(&mut rng);
                if x < p {
                    edges.push((u, v));
                }
            }
        }
        Graph::from_edge_list(n, &edges).expect("sampled edges are valid")
    }

    pub fn edge_count(&self) -> usize {
        self.edge_list.len()
    }

    fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n];
        for &(u, v) in &self.edge_list {
            nb[u].push(v);
            nb[v].push(u);
        }
        for list in &mut nb {
            list.sort_unstable();
        }
        nb
    }
}

/// Exact triangle count by sorted-neighbor intersection over edges; each
/// triangle {a < b < c} is counted once at its (a, b) edge.
pub fn triangle_count_exact(g: &Graph) -> Result<usize> {
    if g.n > 1000 {
        return Err(Error::InvalidArgument(format!(
            "exact triangle count capped at 1000 vertices, got {}",
            g.n
        )));
    }
    let nb = g.neighbor_lists();
    let mut count = 0usize;
    for &(u, v) in &g.edge_list {
        let (mut i, mut j) = (0usize, 0usize);
        let (a, b) = (&nb[u], &nb[v]);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if a[i] > v {
                        count += 1;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    Ok(count)
}

// ---------------------------------------------------------------------------
// reduction specifications

/// Which spectral sum carries the detection signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FKind {
    Schatten(f64),
    LogDet,
    TraceInverse,
    TraceExp,
    Entropy,
    Determinant,
}

/// Detection parameters for one sum kind at one size: the Taylor frame of f
/// about 1, the growth bound h on |c_k/c_3|^(1/(k-3)), the matrix scaling
/// delta, and the estimator accuracy eps1 the detection needs.
#[derive(Debug, Clone, Copy)]
pub struct ReductionSpec {
    pub f_kind: FKind,
    pub n: usize,
    pub h: f64,
    pub delta: f64,
    pub eps1: f64,
}

impl ReductionSpec {
    pub fn new(f_kind: FKind, n: usize) -> Result<ReductionSpec> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph must have vertices".into()));
        }
        let nf = n as f64;
        if let FKind::Determinant = f_kind {
            // separate product expansion; see determinant_triangle_detect
            return Ok(ReductionSpec {
                f_kind,
                n,
                h: 1.0,
                delta: 1.0 / (10.0 * nf.powi(4)),
                eps1: 1e-5 / nf.powi(12),
            });
        }
        let h = match f_kind {
            FKind::Schatten(p) => {
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "exponent must be positive and finite, got {p}"
                    )));
                }
                // the cubic series coefficient vanishes at 1 and 2 and the
                // detection signal with it
                if (p - 1.0).abs() < 1e-9 || (p - 2.0).abs() < 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "exponent {p} has no cubic series term; detection is void"
                    )));
                }
                if (p - 3.0).abs() < 1e-12 {
                    0.0
                } else {
                    // |c_4/c_3| = |p-3|/4 exceeds p for p < 1, so the growth
                    // base is clamped at 1 (each ratio |p-i|/(i+1) < 1 there)
                    p.max(1.0)
                }
            }
            _ => 1.0,
        };
        let delta = if h == 0.0 {
            1.0 / nf
        } else {
            (1.0 / nf).min(1.0 / (10.0 * nf.powi(4) * h))
        };
        let spec = ReductionSpec {
            f_kind,
            n,
            h,
            delta,
            eps1: 1.0,
        };
        let (c0, c2, c3) = (spec.coeff(0), spec.coeff(2), spec.coeff(3));
        debug_assert!(c3 != 0.0);
        let mut eps1 = 1.0f64;
        if c0 != 0.0 {
            eps1 = eps1.min((c3 * delta.powi(3) / (c0 * nf)).abs());
        }
        if c2 != 0.0 {
            eps1 = eps1.min((c3 * delta / (c2 * nf * nf)).abs());
        }
        Ok(ReductionSpec { eps1, ..spec })
    }

    /// Taylor coefficient c_k of f about 1: f(x) = sum c_k (x-1)^k.
    pub fn coeff(&self, k: usize) -> f64 {
        match self.f_kind {
            FKind::Schatten(p) => {
                let mut c = 1.0;
                for i in 0..k {
                    c *= (p - i as f64) / (i + 1) as f64;
                }
                c
            }
            FKind::LogDet => {
                if k == 0 {
                    0.0
                } else if k % 2 == 1 {
                    1.0 / k as f64
                } else {
                    -1.0 / k as f64
                }
            }
            FKind::TraceInverse => {
                if k % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            FKind::TraceExp => {
                let mut fact = 1.0;
                for i in 1..=k {
                    fact *= i as f64;
                }
                std::f64::consts::E / fact
            }
            FKind::Entropy => match k {
                0 => 0.0,
                1 => 1.0,
                _ => {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    sign / (k * (k - 1)) as f64
                }
            },
            FKind::Determinant => f64::NAN,
        }
    }

    /// f itself, for oracle-backed estimation.
    pub fn f_value(&self, x: f64) -> f64 {
        match self.f_kind {
            FKind::Schatten(p) => x.powf(p),
            FKind::LogDet => x.ln(),
            FKind::TraceInverse => 1.0 / x,
            FKind::TraceExp => x.exp(),
            FKind::Entropy => {
                if x == 0.0 {
                    0.0
                } else {
                    x * x.ln()
                }
            }
            FKind::Determinant => f64::NAN,
        }
    }

    fn context(&self) -> &'static str {
        match self.f_kind {
            FKind::Schatten(_) => "schatten-sum triangle detection",
            FKind::LogDet => "log-determinant triangle detection",
            FKind::TraceInverse => "trace-inverse triangle detection",
            FKind::TraceExp => "trace-exponential triangle detection",
            FKind::Entropy => "entropy-sum triangle detection",
            FKind::Determinant => "determinant triangle detection",
        }
    }

    fn check_precision(&self) -> Result<()> {
        if self.eps1 < 1e-14 {
            return Err(Error::PrecisionInfeasible {
                context: self.context(),
                n: self.n,
                required: self.eps1,
            });
        }
        Ok(())
    }
}

/// Detection verdict with the raw statistic and its decision threshold.
#[derive(Debug, Clone, Serialize)]
pub struct TriangleVerdict {
    pub triangle: bool,
    pub statistic: f64,
    pub threshold: f64,
}

/// The detection matrix I - delta*A.
pub fn shifted_adjacency(g: &Graph, delta: f64) -> Result<SparseMatrix> {
    let mut triplets: Vec<(usize, usize, f64)> = (0..g.n).map(|i| (i, i, 1.0)).collect();
    for &(u, v) in &g.edge_list {
        triplets.push((u, v, -delta));
        triplets.push((v, u, -delta));
    }
    SparseMatrix::from_triplets(g.n, g.n, &triplets)
}

/// Triangle detection from one spectral-sum estimate on I - delta*A.
///
/// The estimator must return X within (1 +- eps1/9) of the true sum. The
/// statistic X - c0*n - c2*delta^2*tr(A^2) isolates the cubic trace term
/// (tr(A) = 0 kills the linear one), leaving c3*delta^3*(tr(A^3) +- 1/3 in
/// slack units); |statistic| >= 3|c3|delta^3 separates tr(A^3) = 0 from
/// tr(A^3) >= 6.
pub fn triangle_detect<F>(g: &Graph, spec: &ReductionSpec, estimator: F) -> Result<TriangleVerdict>
where
    F: Fn(&SparseMatrix) -> Result<f64>,
{
    if let FKind::Determinant = spec.f_kind {
        return Err(Error::InvalidArgument(
            "determinant detection uses determinant_triangle_detect".into(),
        ));
    }
    if spec.n != g.n {
        return Err(Error::DimensionMismatch {
            expected: spec.n,
            got: g.n,
        });
    }
    spec.check_precision()?;
    let b = shifted_adjacency(g, spec.delta)?;
    let x = estimator(&b)?;
    let (c0, c2, c3) = (spec.coeff(0), spec.coeff(2), spec.coeff(3));
    let tr_a2 = 2.0 * g.edge_count() as f64;
    let statistic = x - c0 * g.n as f64 - c2 * spec.delta.powi(2) * tr_a2;
    let threshold = 3.0 * c3.abs() * spec.delta.powi(3);
    Ok(TriangleVerdict {
        triangle: statistic.abs() >= threshold,
        statistic,
        threshold,
    })
}

/// Dense-SVD-backed sum estimator: exact up to the dense solver, which is
/// far inside every eps1 at the supported sizes.
pub fn oracle_spectral_sum(spec: &ReductionSpec) -> impl Fn(&SparseMatrix) -> Result<f64> {
    let spec = *spec;
    move |b: &SparseMatrix| {
        let o = dense_svd(b)?;
        Ok(o.singular_values.iter().map(|&s| spec.f_value(s)).sum())
    }
}

/// Triangle detection from a determinant estimate of I + delta*A with
/// delta = 1/(10 n^4): det = 1 - delta^2 ||A||_F^2/2 + delta^3 tr(A^3)/3
/// plus slack below delta^3/30 + delta^3 tr(A^3)/600, so the statistic
/// X - (1 - delta^2 ||A||_F^2 / 2) crosses delta^3 exactly when a triangle
/// exists. The estimator must be (1 +- 1e-5/n^12)-accurate.
pub fn determinant_triangle_detect<F>(g: &Graph, estimator: F) -> Result<TriangleVerdict>
where
    F: Fn(&[f64], usize) -> Result<f64>,
{
    let spec = ReductionSpec::new(FKind::Determinant, g.n)?;
    spec.check_precision()?;
    let n = g.n;
    let delta = spec.delta;
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        b[i * n + i] = 1.0;
    }
    for &(u, v) in &g.edge_list {
        b[u * n + v] = delta;
        b[v * n + u] = delta;
    }
    let x = estimator(&b, n)?;
    let statistic = x - (1.0 - delta * delta * g.edge_count() as f64);
    let threshold = delta.powi(3);
    Ok(TriangleVerdict {
        triangle: statistic >= threshold,
        statistic,
        threshold,
    })
}

// ---------------------------------------------------------------------------
// SDD embedding, effective resistances, leverage scores

fn check_square(m: &[f64], dim: usize) -> Result<()> {
    if m.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            got: m.len(),
        });
    }
    Ok(())
}

/// Embed a strictly SDD matrix with non-positive off-diagonals into the
/// (dim+1)-node Laplacian [[M, -v], [-v^T, alpha]] with v = M*1 and
/// alpha = 1^T M 1; the construction gives L*1 = 0 and connects node dim+1
/// to every node with positive excess, so the graph is connected.
pub fn sdd_to_laplacian(m: &[f64], dim: usize) -> Result<Vec<f64>> {
    check_square(m, dim)?;
    let scale = m
        .iter()
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(1e-300);
    for i in 0..dim {
        let mut off = 0.0;
        for j in 0..dim {
            if i == j {
                continue;
            }
            let mij = m[i * dim + j];
            if (mij - m[j * dim + i]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
            if mij > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!(
                    "off-diagonal ({i},{j}) = {mij} must be non-positive"
                )));
            }
            off += mij.abs();
        }
        if m[i * dim + i] <= off {
            return Err(Error::InvalidArgument(format!(
                "row {i} is not strictly diagonally dominant: diag {} vs off-sum {off}",
                m[i * dim + i]
            )));
        }
    }
    let nd = dim + 1;
    let mut l = vec![0.0; nd * nd];
    let mut alpha = 0.0;
    for i in 0..dim {
        let mut row_sum = 0.0;
        for j in 0..dim {
            l[i * nd + j] = m[i * dim + j];
            row_sum += m[i * dim + j];
        }
        l[i * nd + dim] = -row_sum;
        l[dim * nd + i] = -row_sum;
        alpha += row_sum;
    }
    l[dim * nd + dim] = alpha;
    Ok(l)
}

/// tr(M^-1) as the sum of effective resistances between each node and the
/// added ground node of the Laplacian embedding; the handle receives
/// (laplacian, dim, i, j) and must be (1 +- eps)-accurate per pair.
pub fn trace_inverse_via_effres<F>(m: &[f64], dim: usize, effres: F) -> Result<f64>
where
    F: Fn(&[f64], usize, usize, usize) -> Result<f64>,
{
    let l = sdd_to_laplacian(m, dim)?;
    let mut total = 0.0;
    for i in 0..dim {
        total += effres(&l, dim + 1, i, dim)?;
    }
    Ok(total)
}

fn check_laplacian(l: &[f64], dim: usize) -> Result<()> {
    check_square(l, dim)?;
    let scale = l
        .iter()
        .fold(0.0f64, |acc, &x| acc.max(x.abs()))
        .max(1e-300);
    for i in 0..dim {
        let mut row = 0.0;
        for j in 0..dim {
            let lij = l[i * dim + j];
            if i != j {
                if (lij - l[j * dim + i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "not symmetric at ({i},{j})"
                    )));
                }
                if lij > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "off-diagonal ({i},{j}) = {lij} must be non-positive in a graph Laplacian"
                    )));
                }
            }
            row += lij;
        }
        if row.abs() > 1e-9 * scale {
            return Err(Error::InvalidArgument(format!(
                "row {i} sums to {row}, not zero; input is not a Laplacian"
            )));
        }
    }
    Ok(())
}

/// Edge-incidence factor B with rows +-sqrt(-L_ij), so B^T B = L, together
/// with the leverage score of every edge row, computed as the edge weight
/// times the pseudoinverse quadratic form between its endpoints.
pub fn incidence_and_leverage(l: &[f64], dim: usize) -> Result<(SparseMatrix, Vec<f64>)> {
    check_laplacian(l, dim)?;
    let mut triplets = Vec::new();
    let mut leverages = Vec::new();
    let mut row = 0usize;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let w = -l[i * dim + j];
            if w <= 0.0 {
                continue;
            }
            triplets.push((row, i, w.sqrt()));
            triplets.push((row, j, -w.sqrt()));
            leverages.push(w * exact_effres(l, dim, i, j)?);
            row += 1;
        }
    }
    if row == 0 {
        return Err(Error::InvalidArgument(
            "Laplacian has no edges; incidence factor is empty".into(),
        ));
    }
    let b = SparseMatrix::from_triplets(row, dim, &triplets)?;
    Ok((b, leverages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::LinOp;
    use crate::oracle::{exact_determinant, exact_trace_inverse};

    fn graph_laplacian(g: &Graph) -> Vec<f64> {
        let n = g.n;
        let mut l = vec![0.0; n * n];
        for &(u, v) in &g.edge_list {
            l[u * n + v] = -1.0;
            l[v * n + u] = -1.0;
            l[u * n + u] += 1.0;
            l[v * n + v] += 1.0;
        }
        l
    }

    fn trace_cube(g: &Graph) -> f64 {
        let n = g.n;
        let mut a = vec![0.0; n * n];
        for &(u, v) in &g.edge_list {
            a[u * n + v] = 1.0;
            a[v * n + u] = 1.0;
        }
        let mut tr = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    tr += a[i * n + j] * a[j * n + k] * a[k * n + i];
                }
            }
        }
        tr
    }

    #[test]
    fn graph_construction_and_io() {
        assert!(Graph::from_edge_list(3, &[(0, 0)]).is_err());
        assert!(Graph::from_edge_list(3, &[(0, 5)]).is_err());
        let g = Graph::from_edge_list(3, &[(1, 0), (0, 1), (2, 1)]).unwrap();
        assert_eq!(g.edge_list, vec![(0, 1), (1, 2)]);
        assert_eq!(g.adjacency.frob_sq, 4.0);

        assert_eq!(Graph::complete(4).edge_count(), 6);
        assert_eq!(Graph::path(5).edge_count(), 4);
        assert_eq!(Graph::complete_bipartite(3, 3).edge_count(), 9);

        let path = std::env::temp_dir().join("spectra_edges_test.txt");
        std::fs::write(&path, "# toy\n0 1\n\n1 2\n2 0\n").unwrap();
        let g = Graph::load_edge_list(path.to_str().unwrap()).unwrap();
        assert_eq!(g.n, 3);
        assert_eq!(g.edge_count(), 3);
        std::fs::write(&path, "0 1 9\n").unwrap();
        assert!(Graph::load_edge_list(path.to_str().unwrap()).is_err());
        std::fs::write(&path, "0 x\n").unwrap();
        assert!(Graph::load_edge_list(path.to_str().unwrap()).is_err());
        let _ = std::fs::remove_file(&path);
    }

    #[test]
    fn triangle_count_examples_and_trace_identity() {
        assert_eq!(triangle_count_exact(&Graph::complete(4)).unwrap(), 4);
        assert_eq!(
            triangle_count_exact(&Graph::complete_bipartite(3, 3)).unwrap(),
            0
        );
        for seed in 0..5 {
            let g = Graph::gnp(20, 0.3, seed);
            let count = triangle_count_exact(&g).unwrap() as f64;
            assert_eq!(count, trace_cube(&g) / 6.0, "seed {seed}");
        }
    }

    #[test]
    fn spec_constants_per_kind() {
        let n = 10usize;
        let nf = n as f64;
        let s3 = ReductionSpec::new(FKind::Schatten(3.0), n).unwrap();
        assert_eq!(s3.h, 0.0);
        assert!((s3.delta - 1.0 / nf).abs() < 1e-15);
        assert!((s3.eps1 - nf.powi(-4)).abs() < 1e-18);

        let le = ReductionSpec::new(FKind::LogDet, n).unwrap();
        let delta = 1.0 / (10.0 * nf.powi(4));
        assert!((le.delta - delta).abs() < 1e-20);
        assert!((le.eps1 - 2.0 * delta / (3.0 * nf * nf)).abs() < 1e-20);

        let en = ReductionSpec::new(FKind::Entropy, n).unwrap();
        assert!((en.eps1 - delta / (3.0 * nf * nf)).abs() < 1e-20);

        let ti = ReductionSpec::new(FKind::TraceInverse, 5).unwrap();
        let d5: f64 = 1.0 / (10.0 * 625.0);
        assert!((ti.eps1 - d5.powi(3) / 5.0).abs() < 1e-24);

        let te = ReductionSpec::new(FKind::TraceExp, 5).unwrap();
        assert!((te.eps1 - d5.powi(3) / (6.0 * 5.0)).abs() < 1e-24);

        // growth base for sub-linear exponents is clamped where the paperless
        // ratio |c_4/c_3| = (3-p)/4 exceeds p
        let sp = ReductionSpec::new(FKind::Schatten(0.5), n).unwrap();
        assert_eq!(sp.h, 1.0);
        let c4_over_c3 = (sp.coeff(4) / sp.coeff(3)).abs();
        assert!(c4_over_c3 <= sp.h);

        assert!(ReductionSpec::new(FKind::Schatten(1.0), n).is_err());
        assert!(ReductionSpec::new(FKind::Schatten(2.0), n).is_err());
        assert!(ReductionSpec::new(FKind::Schatten(-1.0), n).is_err());
    }

    #[test]
    fn series_coefficients_match_function_values() {
        // each series must reproduce f near 1
        let kinds = [
            FKind::Schatten(0.5),
            FKind::Schatten(4.7),
            FKind::LogDet,
            FKind::TraceInverse,
            FKind::TraceExp,
            FKind::Entropy,
        ];
        for kind in kinds {
            let spec = ReductionSpec::new(kind, 4).unwrap();
            for &x in &[0.9, 0.97, 1.04, 1.1] {
                let series: f64 = (0..60)
                    .map(|k| spec.coeff(k) * (x - 1.0f64).powi(k as i32))
                    .sum();
                let truth = spec.f_value(x);
                assert!(
                    (series - truth).abs() < 1e-12 * truth.abs().max(1.0),
                    "{kind:?} at {x}: series {series} vs {truth}"
                );
            }
        }
    }

    #[test]
    fn k3_detects_and_p4_does_not() {
        let k3 = Graph::complete(3);
        let p4 = Graph::path(4);
        for kind in [
            FKind::Schatten(3.0),
            FKind::LogDet,
            FKind::Entropy,
            FKind::TraceInverse,
            FKind::TraceExp,
        ] {
            let s3 = ReductionSpec::new(kind, 3).unwrap();
            let v = triangle_detect(&k3, &s3, oracle_spectral_sum(&s3)).unwrap();
            assert!(v.triangle, "{kind:?} missed the triangle in K3");
            let s4 = ReductionSpec::new(kind, 4).unwrap();
            let v = triangle_detect(&p4, &s4, oracle_spectral_sum(&s4)).unwrap();
            assert!(!v.triangle, "{kind:?} hallucinated a triangle in P4");
        }
    }

    #[test]
    fn random_graphs_agree_with_brute_force() {
        for seed in 0..50 {
            let g = Graph::gnp(20, 0.2, seed);
            let spec = ReductionSpec::new(FKind::Schatten(3.0), 20).unwrap();
            let v = triangle_detect(&g, &spec, oracle_spectral_sum(&spec)).unwrap();
            let truth = triangle_count_exact(&g).unwrap() > 0;
            assert_eq!(v.triangle, truth, "seed {seed}");
        }
    }

    #[test]
    fn precision_infeasibility_surfaces() {
        match ReductionSpec::new(FKind::TraceInverse, 8)
            .and_then(|s| triangle_detect(&Graph::complete(8), &s, oracle_spectral_sum(&s)))
        {
            Err(Error::PrecisionInfeasible { n, required, .. }) => {
                assert_eq!(n, 8);
                assert!(required < 1e-14);
            }
            other => panic!("expected precision error, got {other:?}"),
        }
        match determinant_triangle_detect(&Graph::complete(6), |m, d| exact_determinant(m, d)) {
            Err(Error::PrecisionInfeasible { n, .. }) => assert_eq!(n, 6),
            other => panic!("expected precision error, got {other:?}"),
        }
    }

    /// tr(A^k) for k = 0..=kmax by dense powering; entries stay small
    /// integers at n <= 8, so the traces are exact.
    fn trace_powers(g: &Graph, kmax: usize) -> Vec<f64> {
        let n = g.n;
        let mut a = vec![0.0; n * n];
        for &(u, v) in &g.edge_list {
            a[u * n + v] = 1.0;
            a[v * n + u] = 1.0;
        }
        let mut powers = vec![n as f64];
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 1.0;
        }
        for _ in 1..=kmax {
            let mut next = vec![0.0; n * n];
            for i in 0..n {
                for k in 0..n {
                    let pik = p[i * n + k];
                    if pik == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        next[i * n + j] += pik * a[k * n + j];
                    }
                }
            }
            p = next;
            powers.push((0..n).map(|i| p[i * n + i]).sum());
        }
        powers
    }

    #[test]
    fn truncated_series_tail_is_within_budget() {
        let kinds = [
            FKind::Schatten(0.5),
            FKind::Schatten(3.0),
            FKind::LogDet,
            FKind::TraceInverse,
            FKind::TraceExp,
            FKind::Entropy,
        ];
        let graphs = [Graph::complete(8), Graph::path(8), Graph::gnp(8, 0.5, 3)];
        for kind in kinds {
            for g in &graphs {
                let spec = ReductionSpec::new(kind, g.n).unwrap();
                let traces = trace_powers(g, 40);
                // the discarded tail, term by term on exact traces; beyond
                // k = 40 the terms are below (n*delta)^40 ~ 1e-140
                let tail: f64 = (4..=40)
                    .map(|k| spec.coeff(k) * (-spec.delta).powi(k as i32) * traces[k])
                    .sum();
                let budget = spec.coeff(3).abs() * spec.delta.powi(3) / 9.0;
                assert!(
                    tail.abs() <= budget,
                    "{kind:?} on n={} m={}: tail {:.3e} over budget {budget:.3e}",
                    g.n,
                    g.edge_count(),
                    tail.abs()
                );
                // the series must also reproduce the oracle sum; the
                // comparison is capped by float resolution of the sum itself
                let b = shifted_adjacency(g, spec.delta).unwrap();
                let sum: f64 = dense_svd(&b)
                    .unwrap()
                    .singular_values
                    .iter()
                    .map(|&s| spec.f_value(s))
                    .sum();
                let series: f64 = (0..=40)
                    .map(|k| spec.coeff(k) * (-spec.delta).powi(k as i32) * traces[k])
                    .sum();
                assert!(
                    (sum - series).abs() <= 1e-12 * (sum.abs() + g.n as f64),
                    "{kind:?}: oracle {sum} vs series {series}"
                );
            }
        }
    }

    #[test]
    fn shifted_adjacency_is_well_conditioned_sdd() {
        let g = Graph::gnp(12, 0.3, 5);
        let spec = ReductionSpec::new(FKind::Schatten(3.0), 12).unwrap();
        let b = shifted_adjacency(&g, spec.delta).unwrap();
        let o = dense_svd(&b).unwrap();
        for &s in &o.singular_values {
            assert!(s > 0.0 && s < 2.0, "singular value {s} escapes (0,2)");
        }
        // diagonal 1 strictly dominates delta * degree
        let nb = g.neighbor_lists();
        for v in 0..g.n {
            assert!(spec.delta * (nb[v].len() as f64) < 1.0);
        }
    }

    #[test]
    fn determinant_path_agrees_with_brute_force_on_all_4_vertex_graphs() {
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        for mask in 0u32..64 {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &e)| e)
                .collect();
            let g = Graph::from_edge_list(4, &edges).unwrap();
            let v = determinant_triangle_detect(&g, |m, d| exact_determinant(m, d)).unwrap();
            let truth = triangle_count_exact(&g).unwrap() > 0;
            assert_eq!(v.triangle, truth, "mask {mask:#08b}");
        }
        let k3 = determinant_triangle_detect(&Graph::complete(3), |m, d| exact_determinant(m, d))
            .unwrap();
        assert!(k3.triangle);
        let empty = Graph::from_edge_list(3, &[]).unwrap();
        let v = determinant_triangle_detect(&empty, |m, d| exact_determinant(m, d)).unwrap();
        assert!(!v.triangle);
    }

    #[test]
    fn laplacian_embedding_examples() {
        let l = sdd_to_laplacian(&[2.0], 1).unwrap();
        assert_eq!(l, vec![2.0, -2.0, -2.0, 2.0]);

        let l2 = sdd_to_laplacian(&[2.0, 0.0, 0.0, 2.0], 2).unwrap();
        assert_eq!(l2[2], -2.0);
        assert_eq!(l2[5], -2.0);
        assert_eq!(l2[8], 4.0);

        // random strictly-SDD: off-diagonals negative, diagonal dominant
        let dim = 5;
        let mut rng = stream_rng(9, STREAM_MISC + 13);
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in (i + 1)..dim {
                let w: f64 = rand::Rng::gen(&mut rng);
                m[i * dim + j] = -w;
                m[j * dim + i] = -w;
            }
        }
        for i in 0..dim {
            let off: f64 = (0..dim).filter(|&j| j != i).map(|j| -m[i * dim + j]).sum();
            m[i * dim + i] = off + 0.5;
        }
        let l = sdd_to_laplacian(&m, dim).unwrap();
        let nd = dim + 1;
        for i in 0..nd {
            let row: f64 = (0..nd).map(|j| l[i * nd + j]).sum();
            assert!(row.abs() < 1e-12, "row {i} sums to {row}");
            for j in 0..nd {
                if i != j {
                    assert!(l[i * nd + j] <= 0.0);
                }
            }
        }

        // not SDD
        assert!(sdd_to_laplacian(&[1.0, -2.0, -2.0, 1.0], 2).is_err());
        // positive off-diagonal
        assert!(sdd_to_laplacian(&[2.0, 0.5, 0.5, 2.0], 2).is_err());
    }

    #[test]
    fn trace_inverse_through_resistances() {
        let t = trace_inverse_via_effres(&[2.0], 1, exact_effres).unwrap();
        assert!((t - 0.5).abs() < 1e-12);

        let t2 = trace_inverse_via_effres(&[2.0, 0.0, 0.0, 2.0], 2, exact_effres).unwrap();
        assert!((t2 - 1.0).abs() < 1e-12);

        let dim = 6;
        let mut rng = stream_rng(4, STREAM_MISC + 13);
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in (i + 1)..dim {
                let w: f64 = rand::Rng::gen(&mut rng);
                m[i * dim + j] = -w;
                m[j * dim + i] = -w;
            }
        }
        for i in 0..dim {
            let off: f64 = (0..dim).filter(|&j| j != i).map(|j| -m[i * dim + j]).sum();
            m[i * dim + i] = off + 0.3 + 0.1 * i as f64;
        }
        let via = trace_inverse_via_effres(&m, dim, exact_effres).unwrap();
        let direct = exact_trace_inverse(&m, dim).unwrap();
        assert!(
            (via - direct).abs() <= 1e-10 * direct.abs(),
            "via resistances {via} vs direct {direct}"
        );
    }

    #[test]
    fn incidence_factor_and_leverage_scores() {
        // single unit edge
        let l = vec![1.0, -1.0, -1.0, 1.0];
        let (b, lev) = incidence_and_leverage(&l, 2).unwrap();
        assert_eq!(b.n_rows, 1);
        let row = b.apply(&[1.0, 0.0]);
        assert_eq!(row, vec![1.0]);
        assert_eq!(lev, vec![1.0]);

        // unit triangle: every edge leverage 2/3
        let tri = graph_laplacian(&Graph::complete(3));
        let (b, lev) = incidence_and_leverage(&tri, 3).unwrap();
        assert_eq!(lev.len(), 3);
        for &s in &lev {
            assert!((s - 2.0 / 3.0).abs() < 1e-12, "leverage {s}");
        }
        // B^T B = L entrywise
        for j in 0..3 {
            let mut e = vec![0.0; 3];
            e[j] = 1.0;
            let col = b.apply_transpose(&b.apply(&e));
            for i in 0..3 {
                assert!((col[i] - tri[i * 3 + j]).abs() < 1e-12);
            }
        }

        // tree edges all have leverage 1
        let tree = graph_laplacian(&Graph::path(6));
        let (_, lev) = incidence_and_leverage(&tree, 6).unwrap();
        assert_eq!(lev.len(), 5);
        for &s in &lev {
            assert!((s - 1.0).abs() < 1e-10, "tree leverage {s}");
        }

        // non-Laplacian rejected
        assert!(incidence_and_leverage(&[1.0, -0.5, -0.5, 2.0], 2).is_err());
    }
}
