//! Matrix storage and the linear-operator surface the estimators run on.
//!
//! Everything downstream only needs matvecs with A and A^T (the Gram operator
//! A^T A is never materialized), row access for stochastic solvers, and a few
//! cached norms. Matrices are immutable after construction.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{self, stream_rng};

pub trait LinOp {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// out = A v, lengths checked by the caller.
    fn apply_into(&self, v: &[f64], out: &mut [f64]);
    /// out = A^T v.
    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]);

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        self.apply_into(v, &mut out);
        out
    }

    fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols()];
        self.apply_transpose_into(v, &mut out);
        out
    }

    /// (A^T A) v composed exactly as A^T(Av).
    fn gram_apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply_transpose(&self.apply(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
    /// ||a_i||_2^2 per row, cached for sampling distributions.
    pub row_sq_norms: Vec<f64>,
    /// ||A||_F^2.
    pub frob_sq: f64,
    /// d_s(A): maximum number of nonzeros in any row.
    pub max_row_nnz: usize,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Build from (row, col, value) triplets; duplicates are summed, explicit
    /// zeros dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r},{c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut i = 0;
        while i < sorted.len() {
            let (r, c, mut v) = sorted[i];
            i += 1;
            while i < sorted.len() && sorted[i].0 == r && sorted[i].1 == c {
                v += sorted[i].2;
                i += 1;
            }
            if v != 0.0 {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(Self::from_csr_parts(
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    fn from_csr_parts(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let mut row_sq_norms = vec![0.0; n_rows];
        let mut max_row_nnz = 0;
        for r in 0..n_rows {
            let lo = row_offsets[r];
            let hi = row_offsets[r + 1];
            max_row_nnz = max_row_nnz.max(hi - lo);
            row_sq_norms[r] = values[lo..hi].iter().map(|v| v * v).sum();
        }
        let frob_sq = row_sq_norms.iter().sum();
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
            row_sq_norms,
            frob_sq,
            max_row_nnz,
        }
    }

    pub fn from_dense(n_rows: usize, n_cols: usize, row_major: &[f64]) -> Result<Self> {
        if row_major.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: row_major.len(),
            });
        }
        let mut trip = Vec::new();
        for r in 0..n_rows {
            for c in 0..n_cols {
                let v = row_major[r * n_cols + c];
                if v != 0.0 {
                    trip.push((r, c, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, &trip)
    }

    pub fn identity(n: usize) -> Self {
        let trip: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &trip).unwrap()
    }

    pub fn diag(values: &[f64]) -> Self {
        let trip: Vec<_> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (i, i, v))
            .collect();
        Self::from_triplets(values.len(), values.len(), &trip).unwrap()
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.n_cols, self.n_rows, &trip).unwrap()
    }

    pub fn to_dense_row_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[r * self.n_cols + c] += v;
            }
        }
        out
    }
}

impl LinOp for SparseMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }
    fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for r in 0..self.n_rows {
            let lo = self.row_offsets[r];
            let hi = self.row_offsets[r + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * v[self.col_indices[k]];
            }
            out[r] = acc;
        }
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n_rows);
        debug_assert_eq!(out.len(), self.n_cols);
        out.fill(0.0);
        for r in 0..self.n_rows {
            let lo = self.row_offsets[r];
            let hi = self.row_offsets[r + 1];
            let vr = v[r];
            if vr == 0.0 {
                continue;
            }
            for k in lo..hi {
                out[self.col_indices[k]] += self.values[k] * vr;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major.
    pub values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: values.len(),
            });
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            values,
        })
    }
}

impl LinOp for DenseMatrix {
    fn n_rows(&self) -> usize {
        self.n_rows
    }
    fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for r in 0..self.n_rows {
            let row = &self.values[r * self.n_cols..(r + 1) * self.n_cols];
            out[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for r in 0..self.n_rows {
            let row = &self.values[r * self.n_cols..(r + 1) * self.n_cols];
            let vr = v[r];
            if vr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
    }
}

/// Square operator with a planted spectrum: H_u D H_v where H_* are products
/// of Householder reflectors. Singular values are exactly `spectrum` (sorted
/// descending), applies cost O(reflectors * n). Used by test corpora; never
/// materialized.
#[derive(Debug, Clone)]
pub struct PlantedMatrix {
    dim: usize,
    spectrum: Vec<f64>,
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
}

impl PlantedMatrix {
    pub fn new(mut spectrum: Vec<f64>, seed: u64) -> Self {
        spectrum.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let dim = spectrum.len();
        let mut rng = stream_rng(seed, rng::STREAM_MISC + 17);
        let make = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..3)
                .map(|_| {
                    let mut h = vec![0.0; dim];
                    rng::fill_gaussian(rng, &mut h);
                    let nrm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
                    h.iter_mut().for_each(|x| *x /= nrm);
                    h
                })
                .collect()
        };
        let left = make(&mut rng);
        let right = make(&mut rng);
        PlantedMatrix {
            dim,
            spectrum,
            left,
            right,
        }
    }

    /// True singular values, descending.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    fn reflect(h: &[f64], v: &mut [f64]) {
        let dot: f64 = h.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        let two_dot = 2.0 * dot;
        for (x, hi) in v.iter_mut().zip(h) {
            *x -= two_dot * hi;
        }
    }
}

impl LinOp for PlantedMatrix {
    fn n_rows(&self) -> usize {
        self.dim
    }
    fn n_cols(&self) -> usize {
        self.dim
    }

    // A = (H_l0 H_l1 H_l2) D (H_r2 H_r1 H_r0)
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
        for h in self.right.iter().rev() {
            Self::reflect(h, out);
        }
        for (x, s) in out.iter_mut().zip(&self.spectrum) {
            *x *= s;
        }
        for h in self.left.iter().rev() {
            Self::reflect(h, out);
        }
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
        for h in &self.left {
            Self::reflect(h, out);
        }
        for (x, s) in out.iter_mut().zip(&self.spectrum) {
            *x *= s;
        }
        for h in &self.right {
            Self::reflect(h, out);
        }
    }
}

/// Row-norm-squared sampling distribution with an inverse-CDF table.
#[derive(Debug, Clone)]
pub struct RowDistribution {
    pub probabilities: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RowDistribution {
    pub fn sample(&self, u: f64) -> usize {
        // partition_point returns the first index with cumulative > u
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.cumulative.len() - 1)
    }
}

pub fn row_distribution(a: &SparseMatrix) -> Result<RowDistribution> {
    if a.frob_sq <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let probabilities: Vec<f64> = a.row_sq_norms.iter().map(|&s| s / a.frob_sq).collect();
    let mut cumulative = Vec::with_capacity(probabilities.len());
    let mut acc = 0.0;
    for &p in &probabilities {
        acc += p;
        cumulative.push(acc);
    }
    // guard the tail against rounding
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }
    Ok(RowDistribution {
        probabilities,
        cumulative,
    })
}

/// Overestimate of the spectral norm: power iteration on A^T A for
/// ceil(10 ln n) rounds from a seeded Gaussian start, then doubled. Returns M
/// with ||A||_2 <= M <= 2||A||_2 with high probability.
pub fn spectral_norm_estimate(a: &dyn LinOp, seed: u64) -> Result<f64> {
    let (n, d) = (a.n_rows(), a.n_cols());
    if n == 0 || d == 0 {
        return Err(Error::ZeroMatrix("empty dimensions"));
    }
    let iters = ((10.0 * (n.max(d).max(2) as f64).ln()).ceil()) as usize;
    let mut rng = stream_rng(seed, rng::STREAM_MISC + 1);
    let mut v = vec![0.0; d];
    rng::fill_gaussian(&mut rng, &mut v);
    let mut av = vec![0.0; n];
    let mut rho = 0.0;
    for _ in 0..iters {
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Err(Error::ZeroMatrix("power iteration collapsed"));
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        a.apply_into(&v, &mut av);
        rho = av.iter().map(|x| x * x).sum::<f64>();
        if rho == 0.0 {
            return Err(Error::ZeroMatrix("A annihilates the start vector"));
        }
        let w = a.apply_transpose(&av);
        v.copy_from_slice(&w);
    }
    Ok(2.0 * rho.sqrt())
}

/// Gram-side view used by every spectral estimator: the symmetric PSD
/// operator G = A^T A / M^2 (or A A^T / M^2 when rows < cols, so the Gram side
/// is always the smaller dimension), with spectrum in [0, 1].
pub struct ScaledGram<'a> {
    op: &'a dyn LinOp,
    pub m_sq: f64,
    transposed: bool,
    dim: usize,
    other: usize,
}

impl<'a> ScaledGram<'a> {
    pub fn new(op: &'a dyn LinOp, m: f64) -> Self {
        let transposed = op.n_rows() < op.n_cols();
        let (dim, other) = if transposed {
            (op.n_rows(), op.n_cols())
        } else {
            (op.n_cols(), op.n_rows())
        };
        ScaledGram {
            op,
            m_sq: m * m,
            transposed,
            dim,
            other,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// out = G v; `tmp` is scratch of length max(n_rows, n_cols).
    pub fn apply(&self, v: &[f64], out: &mut [f64], tmp: &mut Vec<f64>) {
        tmp.resize(self.other, 0.0);
        if self.transposed {
            self.op.apply_transpose_into(v, tmp);
            self.op.apply_into(tmp, out);
        } else {
            self.op.apply_into(v, tmp);
            self.op.apply_transpose_into(tmp, out);
        }
        let inv = 1.0 / self.m_sq;
        out.iter_mut().for_each(|x| *x *= inv);
    }
}

pub fn load_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let pstr = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::Io {
        path: pstr.clone(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (first_no, first) = lines
        .next()
        .ok_or_else(|| Error::Parse {
            path: pstr.clone(),
            line: 1,
            msg: "empty file".into(),
        })?
        .1
        .map(|l| (1usize, l))
        .map_err(|e| Error::Io {
            path: pstr.clone(),
            source: e,
        })?;
    let header: Vec<String> = first.split_whitespace().map(|s| s.to_lowercase()).collect();
    if header.len() < 4 || header[0] != "%%matrixmarket" || header[1] != "matrix" {
        return Err(Error::Parse {
            path: pstr,
            line: first_no,
            msg: "expected '%%MatrixMarket matrix coordinate real <general|symmetric>'".into(),
        });
    }
    if header[2] != "coordinate" {
        return Err(Error::Parse {
            path: pstr,
            line: first_no,
            msg: format!("unsupported format '{}', only coordinate", header[2]),
        });
    }
    if header[3] != "real" && header[3] != "integer" {
        return Err(Error::Parse {
            path: pstr,
            line: first_no,
            msg: format!("unsupported field '{}', only real", header[3]),
        });
    }
    let symmetric = match header.get(4).map(|s| s.as_str()) {
        None | Some("general") => false,
        Some("symmetric") => true,
        Some(other) => {
            return Err(Error::Parse {
                path: pstr,
                line: first_no,
                msg: format!("unsupported qualifier '{other}'"),
            })
        }
    };

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Io {
            path: pstr.clone(),
            source: e,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        if dims.is_none() {
            if toks.len() != 3 {
                return Err(Error::Parse {
                    path: pstr,
                    line: line_no,
                    msg: "size line must be 'rows cols nnz'".into(),
                });
            }
            let parse = |s: &str, what: &str| -> Result<usize> {
                s.parse().map_err(|_| Error::Parse {
                    path: pstr.clone(),
                    line: line_no,
                    msg: format!("bad {what} '{s}'"),
                })
            };
            dims = Some((
                parse(toks[0], "row count")?,
                parse(toks[1], "col count")?,
                parse(toks[2], "nnz")?,
            ));
            continue;
        }
        let (nr, nc, _) = dims.unwrap();
        if toks.len() != 3 {
            return Err(Error::Parse {
                path: pstr,
                line: line_no,
                msg: "entry must be 'row col value'".into(),
            });
        }
        let r: usize = toks[0].parse().map_err(|_| Error::Parse {
            path: pstr.clone(),
            line: line_no,
            msg: format!("bad row index '{}'", toks[0]),
        })?;
        let c: usize = toks[1].parse().map_err(|_| Error::Parse {
            path: pstr.clone(),
            line: line_no,
            msg: format!("bad col index '{}'", toks[1]),
        })?;
        let v: f64 = toks[2].parse().map_err(|_| Error::Parse {
            path: pstr.clone(),
            line: line_no,
            msg: format!("bad value '{}'", toks[2]),
        })?;
        if r == 0 || c == 0 || r > nr || c > nc {
            return Err(Error::Parse {
                path: pstr,
                line: line_no,
                msg: format!("index ({r},{c}) outside 1..={nr} x 1..={nc}"),
            });
        }
        triplets.push((r - 1, c - 1, v));
        if symmetric && r != c {
            triplets.push((c - 1, r - 1, v));
        }
    }
    let (nr, nc, declared) = dims.ok_or_else(|| Error::Parse {
        path: pstr.clone(),
        line: first_no,
        msg: "missing size line".into(),
    })?;
    let stored = if symmetric {
        triplets.iter().filter(|t| t.0 <= t.1).count()
    } else {
        triplets.len()
    };
    if stored != declared {
        return Err(Error::Parse {
            path: pstr,
            line: first_no,
            msg: format!("declared {declared} entries, found {stored}"),
        });
    }
    SparseMatrix::from_triplets(nr, nc, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::io::Write;

    fn write_tmp(name: &str, contents: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn mm_identity() {
        let p = write_tmp(
            "spectra_id2.mtx",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n2 2 1.0\n",
        );
        let a = load_matrix_market(&p).unwrap();
        assert_eq!(a.nnz(), 2);
        assert!((a.frob_sq - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mm_symmetric_expansion() {
        // one diagonal + two stored lower entries -> 5 after mirroring
        let p = write_tmp(
            "spectra_sym3.mtx",
            "%%MatrixMarket matrix coordinate real symmetric\n3 3 3\n1 1 2.0\n2 1 1.0\n3 2 4.0\n",
        );
        let a = load_matrix_market(&p).unwrap();
        assert_eq!(a.nnz(), 5);
        let d = a.to_dense_row_major();
        assert_eq!(d[0 * 3 + 1], 1.0);
        assert_eq!(d[1 * 3 + 0], 1.0);
        assert_eq!(d[1 * 3 + 2], 4.0);
        assert_eq!(d[2 * 3 + 1], 4.0);
    }

    #[test]
    fn mm_empty_is_zero_matrix() {
        let p = write_tmp(
            "spectra_zero4.mtx",
            "%%MatrixMarket matrix coordinate real general\n4 4 0\n",
        );
        let a = load_matrix_market(&p).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.frob_sq, 0.0);
        assert_eq!(a.n_rows, 4);
    }

    #[test]
    fn mm_error_carries_line_number() {
        let p = write_tmp(
            "spectra_bad.mtx",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n",
        );
        match load_matrix_market(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn apply_identity_and_diag() {
        let id = SparseMatrix::identity(3);
        assert_eq!(id.apply(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        let a = SparseMatrix::diag(&[2.0, 0.0]);
        assert_eq!(a.gram_apply(&[1.0, 1.0]), vec![4.0, 0.0]);
    }

    #[test]
    fn gram_matches_dense_composition() {
        let mut rng = stream_rng(42, rng::STREAM_MISC);
        let mut trip = Vec::new();
        for r in 0..20 {
            for _ in 0..4 {
                let c = (rng.gen::<u64>() % 10) as usize;
                trip.push((r, c, rng::next_gaussian(&mut rng)));
            }
        }
        let a = SparseMatrix::from_triplets(20, 10, &trip).unwrap();
        let dense = a.to_dense_row_major();
        let v: Vec<f64> = (0..10).map(|i| (i as f64) - 4.5).collect();
        let got = a.gram_apply(&v);
        // dense (A^T A) v
        let mut av = vec![0.0; 20];
        for r in 0..20 {
            av[r] = (0..10).map(|c| dense[r * 10 + c] * v[c]).sum();
        }
        let mut want = vec![0.0; 10];
        for c in 0..10 {
            want[c] = (0..20).map(|r| dense[r * 10 + c] * av[r]).sum();
        }
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn gram_bilinear_symmetry() {
        let a = SparseMatrix::from_triplets(
            4,
            3,
            &[
                (0, 0, 1.5),
                (0, 2, -2.0),
                (1, 1, 0.5),
                (2, 0, 3.0),
                (3, 2, 1.0),
            ],
        )
        .unwrap();
        let u = [1.0, -2.0, 0.5];
        let v = [0.3, 0.7, -1.1];
        let gu = a.gram_apply(&u);
        let gv = a.gram_apply(&v);
        let ugv: f64 = u.iter().zip(&gv).map(|(x, y)| x * y).sum();
        let vgu: f64 = v.iter().zip(&gu).map(|(x, y)| x * y).sum();
        assert!((ugv - vgu).abs() <= 1e-10 * ugv.abs().max(1.0));
    }

    #[test]
    fn frob_equals_row_norm_sum() {
        let a = SparseMatrix::from_triplets(3, 3, &[(0, 0, 3.0), (1, 2, 4.0), (2, 1, -1.0)])
            .unwrap();
        let s: f64 = a.row_sq_norms.iter().sum();
        assert!((a.frob_sq - s).abs() <= 1e-12 * s);
        assert_eq!(a.max_row_nnz, 1);
    }

    #[test]
    fn row_distribution_proportional() {
        // rows with squared norms (1, 3)
        let a =
            SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 3.0f64.sqrt())]).unwrap();
        let d = row_distribution(&a).unwrap();
        assert!((d.probabilities[0] - 0.25).abs() < 1e-12);
        assert!((d.probabilities[1] - 0.75).abs() < 1e-12);
        let id = SparseMatrix::identity(4);
        let u = row_distribution(&id).unwrap();
        assert!(u.probabilities.iter().all(|&p| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn row_distribution_empirical() {
        let mut rng = stream_rng(9, rng::STREAM_MISC);
        let mut trip = Vec::new();
        for r in 0..50 {
            for c in 0..50 {
                if rng.gen::<f64>() < 0.1 {
                    trip.push((r, c, rng::next_gaussian(&mut rng)));
                }
            }
        }
        let a = SparseMatrix::from_triplets(50, 50, &trip).unwrap();
        let d = row_distribution(&a).unwrap();
        let n_draws = 100_000;
        let mut counts = vec![0usize; 50];
        for _ in 0..n_draws {
            counts[d.sample(rng.gen::<f64>())] += 1;
        }
        for i in 0..50 {
            let p = d.probabilities[i];
            if p == 0.0 {
                assert_eq!(counts[i], 0);
                continue;
            }
            let se = (p * (1.0 - p) / n_draws as f64).sqrt();
            let freq = counts[i] as f64 / n_draws as f64;
            assert!(
                (freq - p).abs() <= 3.0 * se + 1e-9,
                "row {i}: freq {freq} vs p {p}"
            );
        }
    }

    #[test]
    fn zero_matrix_distribution_errors() {
        let a = SparseMatrix::from_triplets(3, 3, &[]).unwrap();
        assert!(matches!(
            row_distribution(&a),
            Err(Error::DegenerateDistribution)
        ));
    }

    #[test]
    fn norm_estimate_brackets_sigma1() {
        let a = SparseMatrix::diag(&[2.0, 1.0]);
        let m = spectral_norm_estimate(&a, 5).unwrap();
        assert!(m >= 2.0 - 1e-9 && m <= 4.0 + 1e-9, "M = {m}");
        let id = SparseMatrix::identity(5);
        let m = spectral_norm_estimate(&id, 5).unwrap();
        assert!(m >= 1.0 - 1e-9 && m <= 2.0 + 1e-9);
    }

    #[test]
    fn planted_matrix_applies_consistently() {
        let spec: Vec<f64> = (0..30).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let p = PlantedMatrix::new(spec.clone(), 11);
        // transpose-consistency: u^T (A v) == (A^T u)^T v
        let mut rng = stream_rng(2, rng::STREAM_MISC);
        let mut u = vec![0.0; 30];
        let mut v = vec![0.0; 30];
        rng::fill_gaussian(&mut rng, &mut u);
        rng::fill_gaussian(&mut rng, &mut v);
        let av = p.apply(&v);
        let atu = p.apply_transpose(&u);
        let lhs: f64 = u.iter().zip(&av).map(|(a, b)| a * b).sum();
        let rhs: f64 = atu.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        // Frobenius norm is preserved by the orthogonal factors
        let frob_sq: f64 = spec.iter().map(|s| s * s).sum();
        let mut acc = 0.0;
        for i in 0..30 {
            let mut e = vec![0.0; 30];
            e[i] = 1.0;
            acc += p.apply(&e).iter().map(|x| x * x).sum::<f64>();
        }
        assert!((acc - frob_sq).abs() <= 1e-9 * frob_sq);
    }

    #[test]
    fn scaled_gram_transposes_wide_matrices() {
        // 2x4 wide: gram side must be the 2-dimensional one
        let a = SparseMatrix::from_triplets(2, 4, &[(0, 0, 2.0), (1, 3, 1.0)]).unwrap();
        let g = ScaledGram::new(&a, 1.0);
        assert_eq!(g.dim(), 2);
        let mut out = vec![0.0; 2];
        let mut tmp = Vec::new();
        g.apply(&[1.0, 1.0], &mut out, &mut tmp);
        assert!((out[0] - 4.0).abs() < 1e-14);
        assert!((out[1] - 1.0).abs() < 1e-14);
    }
}
