//! Approximate top-k singular subspaces and the factored deflation
//! preconditioner built from them.
//!
//! The default engine is simultaneous (orthogonal) iteration on the Gram
//! operator with a QR step per iteration; a block-Krylov engine is available
//! as an opt-in for spectra with slow decay. Estimates are Rayleigh
//! quotients of the final orthonormal columns, so `sigma_tilde_sq` obeys
//! |sigma_tilde_sq[i] - sigma_i^2| <= 2 sigma_{k+1}^2 under the usual
//! gap-free analysis.

use crate::error::{Error, Result};
use crate::linops::{spectral_norm_estimate, LinOp};
use crate::numeric::{dot, jacobi_eigh, orthonormalize_against};
use crate::rng::{fill_gaussian, stream_rng, STREAM_DEFLATE};

/// Orthonormal block `Z` with squared singular-value estimates.
/// `k = 0` is a valid state meaning "no deflation".
#[derive(Debug, Clone)]
pub struct Deflation {
    /// Orthonormal columns, each of length `dim`.
    pub z: Vec<Vec<f64>>,
    /// Rayleigh quotients z_i^T A^T A z_i, nonincreasing.
    pub sigma_tilde_sq: Vec<f64>,
    pub k: usize,
    pub iterations_used: usize,
    /// Column dimension d of the underlying matrix.
    pub dim: usize,
    /// Squared spectral-norm estimate of A; the tail scale falls back to
    /// this when k = 0.
    pub norm_sq_bound: f64,
}

impl Deflation {
    /// The k = 0 deflation: no subspace, only a norm bound for the tail.
    pub fn empty(dim: usize, norm_sq_bound: f64) -> Self {
        Deflation {
            z: Vec::new(),
            sigma_tilde_sq: Vec::new(),
            k: 0,
            iterations_used: 0,
            dim,
            norm_sq_bound,
        }
    }

    /// Coefficients Z^T v.
    pub fn zt_apply(&self, v: &[f64]) -> Vec<f64> {
        self.z.iter().map(|col| dot(col, v)).collect()
    }

    /// v <- (I - ZZ^T) v in place.
    pub fn project_out(&self, v: &mut [f64]) {
        for col in &self.z {
            let c = dot(col, v);
            for (vi, zi) in v.iter_mut().zip(col) {
                *vi -= c * zi;
            }
        }
    }

    /// Smallest retained squared estimate, or the norm bound when k = 0.
    pub fn tail_base_sq(&self) -> f64 {
        if self.k == 0 {
            self.norm_sq_bound
        } else {
            self.sigma_tilde_sq[self.k - 1]
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeflateOptions {
    /// Use the block-Krylov engine instead of simultaneous iteration.
    pub block_krylov: bool,
    /// Override the derived iteration count.
    pub iters_override: Option<usize>,
}

impl Default for DeflateOptions {
    fn default() -> Self {
        DeflateOptions {
            block_krylov: false,
            iters_override: None,
        }
    }
}

/// Top-k deflation of `A` with default options: simultaneous iteration,
/// ceil(ln d / eps) Gram applications per column.
pub fn block_krylov_topk(a: &dyn LinOp, k: usize, eps: f64, seed: u64) -> Result<Deflation> {
    block_krylov_topk_with(a, k, eps, seed, &DeflateOptions::default())
}

pub fn block_krylov_topk_with(
    a: &dyn LinOp,
    k: usize,
    eps: f64,
    seed: u64,
    opts: &DeflateOptions,
) -> Result<Deflation> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "deflation accuracy must be in (0,1), got {eps}"
        )));
    }
    let d = a.n_cols();
    let n = a.n_rows();
    if k > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "deflation rank k = {k} exceeds min(n,d) = {}",
            n.min(d)
        )));
    }
    if k == 0 {
        let m = spectral_norm_estimate(a, seed)?;
        return Ok(Deflation::empty(d, m * m));
    }
    if opts.block_krylov {
        block_krylov_engine(a, k, eps, seed, opts)
    } else {
        subspace_iteration_engine(a, k, eps, seed, opts)
    }
}

fn random_orthonormal_block(
    dim: usize,
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v = vec![0.0; dim];
        loop {
            fill_gaussian(rng, &mut v);
            if orthonormalize_against(&mut v, &cols) > 1e-8 {
                break;
            }
        }
        cols.push(v.clone());
    }
    cols
}

/// Re-orthonormalize `cols` in order, re-randomizing columns that collapse
/// (rank deficiency of the iterated block).
fn qr_with_rerandomize(cols: &mut [Vec<f64>], rng: &mut rand_chacha::ChaCha8Rng) {
    let dim = cols[0].len();
    for i in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(i);
        let x = &mut rest[0];
        let pre = crate::numeric::norm2(x);
        let left = orthonormalize_against(x, done);
        if left <= 1e-13 * pre.max(1.0) {
            // column vanished under projection: inject a fresh direction
            loop {
                let mut v = vec![0.0; dim];
                fill_gaussian(rng, &mut v);
                if orthonormalize_against(&mut v, done) > 1e-8 {
                    x.copy_from_slice(&v);
                    break;
                }
            }
        }
    }
}

/// Rayleigh-Ritz step: rotate the block onto the eigenvectors of the
/// projected Gram matrix. Exact when the block spans an invariant subspace,
/// strictly sharper than per-column Rayleigh quotients otherwise.
fn ritz_rotate(a: &dyn LinOp, cols: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = cols.len();
    let d = cols[0].len();
    let gcols: Vec<Vec<f64>> = cols.iter().map(|c| a.gram_apply(c)).collect();
    let mut h = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v = dot(&cols[i], &gcols[j]);
            h[i * k + j] = v;
            h[j * k + i] = v;
        }
    }
    let (vals, vecs) = jacobi_eigh(&h, k);
    // descending Ritz pairs
    let mut z = Vec::with_capacity(k);
    let mut sigma = Vec::with_capacity(k);
    for idx in (0..k).rev() {
        let w = &vecs[idx];
        let mut col = vec![0.0; d];
        for (ci, &wi) in cols.iter().zip(w.iter()) {
            for (out, x) in col.iter_mut().zip(ci) {
                *out += wi * x;
            }
        }
        let nrm = crate::numeric::norm2(&col);
        if nrm > 0.0 {
            col.iter_mut().for_each(|x| *x /= nrm);
        }
        z.push(col);
        sigma.push(vals[idx].max(0.0));
    }
    (z, sigma)
}

fn subspace_iteration_engine(
    a: &dyn LinOp,
    k: usize,
    eps: f64,
    seed: u64,
    opts: &DeflateOptions,
) -> Result<Deflation> {
    let d = a.n_cols();
    let iters = opts
        .iters_override
        .unwrap_or(((d.max(2) as f64).ln() / eps).ceil() as usize)
        .max(2);
    let mut rng = stream_rng(seed, STREAM_DEFLATE);
    let mut cols = random_orthonormal_block(d, k, &mut rng);
    for _ in 0..iters {
        for c in cols.iter_mut() {
            let y = a.gram_apply(c);
            c.copy_from_slice(&y);
        }
        qr_with_rerandomize(&mut cols, &mut rng);
    }
    let (z, sigma_tilde_sq) = ritz_rotate(a, cols);
    let norm_sq_bound = sigma_tilde_sq[0] * 4.0;
    Ok(Deflation {
        z,
        sigma_tilde_sq,
        k,
        iterations_used: iters,
        dim: d,
        norm_sq_bound,
    })
}

fn block_krylov_engine(
    a: &dyn LinOp,
    k: usize,
    eps: f64,
    seed: u64,
    opts: &DeflateOptions,
) -> Result<Deflation> {
    let d = a.n_cols();
    let q = opts
        .iters_override
        .unwrap_or(((d.max(2) as f64).ln() / eps.sqrt()).ceil() as usize)
        .max(2);
    // cap the total block width at the ambient dimension
    let q = q.min((d / k).saturating_sub(1).max(1));
    let mut rng = stream_rng(seed, STREAM_DEFLATE);
    let mut basis = random_orthonormal_block(d, k, &mut rng);
    let mut frontier: Vec<Vec<f64>> = basis.clone();
    for _ in 0..q {
        let mut next = Vec::with_capacity(k);
        for f in &frontier {
            let mut y = a.gram_apply(f);
            if orthonormalize_against(&mut y, &basis) > 1e-10 {
                basis.push(y.clone());
                next.push(y);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    // Rayleigh-Ritz on the assembled Krylov space
    let m = basis.len();
    let gb: Vec<Vec<f64>> = basis.iter().map(|b| a.gram_apply(b)).collect();
    let mut h = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let v = dot(&basis[i], &gb[j]);
            h[i * m + j] = v;
            h[j * m + i] = v;
        }
    }
    let (vals, vecs) = jacobi_eigh(&h, m);
    // take the top-k Ritz pairs (jacobi_eigh returns ascending order)
    let mut z = Vec::with_capacity(k);
    let mut sigma_tilde_sq = Vec::with_capacity(k);
    for idx in (m - k.min(m)..m).rev() {
        let w = &vecs[idx];
        let mut col = vec![0.0; d];
        for (bi, &wi) in basis.iter().zip(w.iter()) {
            for (cj, bj) in col.iter_mut().zip(bi) {
                *cj += wi * bj;
            }
        }
        let nrm = crate::numeric::norm2(&col);
        if nrm > 0.0 {
            col.iter_mut().for_each(|x| *x /= nrm);
        }
        z.push(col);
        sigma_tilde_sq.push(vals[idx].max(0.0));
    }
    while z.len() < k {
        // Krylov space collapsed below k (rank deficiency): pad with random
        // orthonormal complement directions, estimates zero
        let mut v = vec![0.0; d];
        loop {
            fill_gaussian(&mut rng, &mut v);
            if orthonormalize_against(&mut v, &z) > 1e-8 {
                break;
            }
        }
        z.push(v.clone());
        sigma_tilde_sq.push(0.0);
    }
    let norm_sq_bound = sigma_tilde_sq[0] * 4.0;
    Ok(Deflation {
        z,
        sigma_tilde_sq,
        k,
        iterations_used: q,
        dim: d,
        norm_sq_bound,
    })
}

/// Factored inverse square root of P = Z diag(sigma_tilde_sq + lambda) Z^T
/// + (tail + lambda)(I - ZZ^T).
#[derive(Debug, Clone)]
pub struct Preconditioner {
    pub deflation: Deflation,
    pub lambda: f64,
    /// delta = 1/sqrt(tail + lambda); multiplies the component outside Z.
    pub tail_scale: f64,
    /// 1/sqrt(sigma_tilde_sq[i] + lambda) per retained direction.
    pub diag_scales: Vec<f64>,
}

pub fn build_preconditioner(defl: Deflation, lambda: f64) -> Result<Preconditioner> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "preconditioner requires lambda > 0, got {lambda}"
        )));
    }
    let tail_scale = 1.0 / (defl.tail_base_sq() + lambda).sqrt();
    let diag_scales = defl
        .sigma_tilde_sq
        .iter()
        .map(|s| 1.0 / (s + lambda).sqrt())
        .collect();
    Ok(Preconditioner {
        deflation: defl,
        lambda,
        tail_scale,
        diag_scales,
    })
}

impl Preconditioner {
    pub fn dim(&self) -> usize {
        self.deflation.dim
    }

    /// P^{-1/2} v = delta v + Z (D - delta I) Z^T v, O(dk).
    pub fn apply_sqrt_inv_into(&self, v: &mut [f64]) {
        let coef = self.deflation.zt_apply(v);
        let delta = self.tail_scale;
        v.iter_mut().for_each(|x| *x *= delta);
        for (i, col) in self.deflation.z.iter().enumerate() {
            let c = (self.diag_scales[i] - delta) * coef[i];
            for (vi, zi) in v.iter_mut().zip(col) {
                *vi += c * zi;
            }
        }
    }

    /// Estimated condition number of the preconditioned Gram operator.
    pub fn kappa_hat(&self) -> f64 {
        (self.deflation.tail_base_sq() + self.lambda) / self.lambda
    }
}

/// P^{-1/2} v as a fresh vector.
pub fn apply_preconditioner(p: &Preconditioner, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: v.len(),
        });
    }
    let mut out = v.to_vec();
    p.apply_sqrt_inv_into(&mut out);
    Ok(out)
}
