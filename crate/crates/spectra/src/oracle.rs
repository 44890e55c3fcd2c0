//! Dense ground truth: full SVD, exact spectral sums, direct ridge solves,
//! pseudoinverse quadratic forms. Compiled into the artifact so the CLI
//! `compare` command works in the field; size caps keep it safe. This is the
//! only module that touches nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linops::LinOp;

pub const ORACLE_DIM_CAP: usize = 2000;

#[derive(Debug, Clone)]
pub struct SpectrumOracle {
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    pub source_dims: (usize, usize),
}

fn to_dmatrix(a: &dyn LinOp) -> DMatrix<f64> {
    let (n, d) = (a.n_rows(), a.n_cols());
    let mut m = DMatrix::zeros(n, d);
    let mut e = vec![0.0; d];
    let mut col = vec![0.0; n];
    for j in 0..d {
        e[j] = 1.0;
        a.apply_into(&e, &mut col);
        e[j] = 0.0;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

fn check_cap(a: &dyn LinOp) -> Result<()> {
    let dim = a.n_rows().min(a.n_cols());
    if dim > ORACLE_DIM_CAP {
        return Err(Error::OracleSizeCap {
            dim,
            cap: ORACLE_DIM_CAP,
        });
    }
    Ok(())
}

/// Full singular values via symmetric eigendecomposition of the Gram matrix
/// on the smaller side (deterministic dense method).
pub fn dense_svd(a: &dyn LinOp) -> Result<SpectrumOracle> {
    check_cap(a)?;
    let m = to_dmatrix(a);
    let gram = if m.nrows() >= m.ncols() {
        m.transpose() * &m
    } else {
        &m * m.transpose()
    };
    let eig = gram.symmetric_eigen();
    let mut sv: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&ev| ev.max(0.0).sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(SpectrumOracle {
        singular_values: sv,
        source_dims: (a.n_rows(), a.n_cols()),
    })
}

/// Eigenpairs of the scaled Gram operator A^T A / m_sq (ascending scaled
/// eigenvalues in [0,1] with their orthonormal eigenvectors as columns).
pub fn gram_eigen(a: &dyn LinOp, m_sq: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_cap(a)?;
    let m = to_dmatrix(a);
    let gram = if m.nrows() >= m.ncols() {
        m.transpose() * &m
    } else {
        &m * m.transpose()
    };
    let dim = gram.nrows();
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order
        .iter()
        .map(|&i| (eig.eigenvalues[i] / m_sq).max(0.0))
        .collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok((values, vectors))
}

pub fn exact_sum(oracle: &SpectrumOracle, f: impl Fn(f64) -> f64) -> f64 {
    oracle.singular_values.iter().map(|&s| f(s)).sum()
}

pub fn exact_schatten(oracle: &SpectrumOracle, p: f64) -> f64 {
    oracle
        .singular_values
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| s.powf(p))
        .sum()
}

/// Shannon entropy of the normalized singular-value distribution
/// p_i = sigma_i / sum(sigma).
pub fn exact_entropy(oracle: &SpectrumOracle) -> f64 {
    let z: f64 = oracle.singular_values.iter().sum();
    if z <= 0.0 {
        return 0.0;
    }
    -oracle
        .singular_values
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| {
            let p = s / z;
            p * p.ln()
        })
        .sum::<f64>()
}

pub fn exact_kyfan(oracle: &SpectrumOracle, w: usize) -> f64 {
    oracle.singular_values.iter().take(w).sum()
}

/// Direct solve of (A^T A + lambda I) x = b.
pub fn exact_ridge_solve(a: &dyn LinOp, b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_cap(a)?;
    let m = to_dmatrix(a);
    let d = m.ncols();
    if b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: b.len(),
        });
    }
    let mut gram = m.transpose() * &m;
    for i in 0..d {
        gram[(i, i)] += lambda;
    }
    let rhs = DVector::from_column_slice(b);
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Other("ridge system not positive definite".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Pseudoinverse quadratic form (1_i - 1_j)^T L^+ (1_i - 1_j); `l` is dense
/// row-major, symmetric.
pub fn exact_effres(l: &[f64], dim: usize, i: usize, j: usize) -> Result<f64> {
    if l.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            got: l.len(),
        });
    }
    if i >= dim || j >= dim || i == j {
        return Err(Error::InvalidArgument(format!(
            "effective resistance needs distinct node indices < {dim}, got ({i},{j})"
        )));
    }
    let m = DMatrix::from_row_slice(dim, dim, l);
    let pinv = m
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Other(format!("pseudoinverse failed: {e}")))?;
    Ok(pinv[(i, i)] + pinv[(j, j)] - pinv[(i, j)] - pinv[(j, i)])
}

pub fn exact_determinant(m_row_major: &[f64], dim: usize) -> Result<f64> {
    if m_row_major.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            got: m_row_major.len(),
        });
    }
    Ok(DMatrix::from_row_slice(dim, dim, m_row_major).determinant())
}

/// Exact per-bucket singular-value-squared counts for a histogram with the
/// given scaled boundaries (descending, length T+2). Bucket t is
/// (boundaries[t+1], boundaries[t]] except the deepest, which is closed on
/// both ends.
pub fn exact_bucket_counts(scaled_sq: &[f64], boundaries: &[f64]) -> Vec<f64> {
    let t_buckets = boundaries.len() - 1;
    let mut counts = vec![0.0; t_buckets];
    for &x in scaled_sq {
        for t in 0..t_buckets {
            let hi = boundaries[t];
            let lo = boundaries[t + 1];
            let inside = if t + 1 == t_buckets {
                x >= lo && x <= hi
            } else {
                x > lo && x <= hi
            };
            if inside {
                counts[t] += 1.0;
                break;
            }
        }
    }
    counts
}

pub fn exact_trace_inverse(m_row_major: &[f64], dim: usize) -> Result<f64> {
    if m_row_major.len() != dim * dim {
        return Err(Error::DimensionMismatch {
            expected: dim * dim,
            got: m_row_major.len(),
        });
    }
    let m = DMatrix::from_row_slice(dim, dim, m_row_major);
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::Other("matrix not invertible".into()))?;
    Ok((0..dim).map(|i| inv[(i, i)]).sum())
}
