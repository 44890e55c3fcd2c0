//! Small numeric kernels shared across modules: special functions, a dense
//! symmetric eigensolver for tiny matrices, Gram-Schmidt, and fixed
//! quadrature nodes. Everything here is classical; kept local to avoid
//! dragging heavyweight dependencies into the hot paths.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Double-precision error function: Maclaurin series for small arguments,
/// Lentz continued fraction for the complement beyond. Accurate to ~1e-15.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 2.0 {
        // erf(x) = 2/sqrt(pi) * sum (-1)^k x^(2k+1) / (k! (2k+1))
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut k = 0usize;
        loop {
            k += 1;
            term *= -x2 / k as f64;
            let add = term / (2 * k + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) || k > 200 {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        1.0 - erfc_large(x)
    }
}

fn erfc_large(x: f64) -> f64 {
    // sqrt(pi) e^{x^2} erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    // evaluated with the modified Lentz algorithm.
    if x > 27.0 {
        return 0.0;
    }
    let tiny = 1e-300;
    let mut f = x.max(tiny);
    let mut c = f;
    let mut d = 0.0;
    let mut j = 1.0;
    loop {
        let a = j / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
        j += 1.0;
        if j > 300.0 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Inverse standard normal CDF (Wichura AS241, double precision).
pub fn inv_norm_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile argument must be in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
            + 6.7265770927008700853e4)
            * r
            + 4.5921953931549871457e4)
            * r
            + 1.3731693765509461125e4)
            * r
            + 1.9715909503065514427e3)
            * r
            + 1.3314166789178437745e2)
            * r
            + 3.3871328727963666080e0)
            * q;
        let den = ((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
            + 3.9307895800092710610e4)
            * r
            + 2.1213794301586595867e4)
            * r
            + 5.3941960214247511077e3)
            * r
            + 6.8718700749205790830e2)
            * r
            + 4.2313330701600911252e1)
            * r
            + 1.0;
        return num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-(r.ln())).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
            + 2.41780725177450611770e-1)
            * r
            + 1.27045825245236838258e0)
            * r
            + 3.64784832476320460504e0)
            * r
            + 5.76949722146069140550e0)
            * r
            + 4.63033784615654529590e0)
            * r
            + 1.42343711074968357734e0;
        let den = ((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
            + 1.51986665636164571966e-2)
            * r
            + 1.48103976427480074590e-1)
            * r
            + 6.89767334985100004550e-1)
            * r
            + 1.67638483018380384940e0)
            * r
            + 2.05319162663775882187e0)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 1.24266094738807843860e-3)
            * r
            + 2.65321895265761230930e-2)
            * r
            + 2.96560571828504891230e-1)
            * r
            + 1.78482653991729133580e0)
            * r
            + 5.46378491116411436990e0)
            * r
            + 6.65790464350110377720e0;
        let den = ((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
            + 1.84631831751005468180e-5)
            * r
            + 7.86869131145613259100e-4)
            * r
            + 1.48753612908506148525e-2)
            * r
            + 1.36929880922735805310e-1)
            * r
            + 5.99832206555887937690e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Cyclic Jacobi eigendecomposition for small dense symmetric matrices.
/// Returns (eigenvalues ascending, eigenvectors as rows of the returned
/// matrix, i.e. vecs[i] is the eigenvector for vals[i]).
pub fn jacobi_eigh(a_in: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(a_in.len(), n * n);
    let mut a = a_in.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let idx = |r: usize, c: usize| r * n + c;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                off += a[idx(r, c)] * a[idx(r, c)];
            }
        }
        if off.sqrt() <= 1e-14 * (1.0 + a.iter().map(|x| x * x).sum::<f64>().sqrt()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[idx(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[idx(p, p)];
                let aqq = a[idx(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[idx(k, p)];
                    let vkq = v[idx(k, q)];
                    v[idx(k, p)] = c * vkp - s * vkq;
                    v[idx(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[idx(i, i)].partial_cmp(&a[idx(j, j)]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[idx(i, i)]).collect();
    let vecs: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..n).map(|k| v[idx(k, i)]).collect())
        .collect();
    (vals, vecs)
}

/// Two-pass modified Gram-Schmidt of `x` against `basis` then itself-so-far.
/// Returns the norm remaining after orthogonalization (caller decides on
/// breakdown), leaving `x` normalized when the norm is meaningful.
pub fn orthonormalize_against(x: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _pass in 0..2 {
        for b in basis {
            let d = dot(x, b);
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi -= d * bi;
            }
        }
    }
    let nrm = norm2(x);
    if nrm > 0.0 {
        let inv = 1.0 / nrm;
        x.iter_mut().for_each(|xi| *xi *= inv);
    }
    nrm
}

/// 8-point Gauss-Legendre nodes/weights on [0,1].
pub const GL8: [(f64, f64); 8] = [
    (0.019855071751231884, 0.05061426814518813),
    (0.10166676129318664, 0.11119051722668724),
    (0.2372337950418355, 0.15685332293894363),
    (0.40828267875217505, 0.18134189168918100),
    (0.591717321247825, 0.18134189168918100),
    (0.7627662049581645, 0.15685332293894363),
    (0.8983332387068134, 0.11119051722668724),
    (0.9801449282487681, 0.05061426814518813),
];

/// Eigenvalues and squared first eigenvector components of a symmetric
/// tridiagonal matrix (implicit-shift QL, accumulating only the first row of
/// the rotation product). For a Jacobi matrix from a Lanczos run this yields
/// the Gauss quadrature of the spectral measure: nodes ascending, weights
/// summing to 1.
pub fn tridiag_quadrature(diag: &[f64], offdiag: &[f64]) -> crate::error::Result<(Vec<f64>, Vec<f64>)> {
    let m = diag.len();
    if m == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if offdiag.len() + 1 != m {
        return Err(crate::error::Error::DimensionMismatch {
            expected: m - 1,
            got: offdiag.len(),
        });
    }
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; m];
    z[0] = 1.0;
    for l in 0..m {
        let mut iter = 0;
        loop {
            let mut split = l;
            while split + 1 < m {
                let dd = d[split].abs() + d[split + 1].abs();
                if e[split].abs() <= f64::EPSILON * dd {
                    break;
                }
                split += 1;
            }
            if split == l {
                break;
            }
            iter += 1;
            if iter > 80 {
                return Err(crate::error::Error::Other(
                    "tridiagonal eigensolver failed to converge".into(),
                ));
            }
            // Wilkinson shift from the leading 2x2, then bulge-chase upward
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[split] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..split).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[split] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[split] = 0.0;
        }
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let nodes = idx.iter().map(|&i| d[i]).collect();
    let weights = idx.iter().map(|&i| z[i] * z[i]).collect();
    Ok((nodes, weights))
}

/// Barycentric interpolation through (x_i, f_i) with precomputed weights w_i,
/// valid at any point (including outside the node hull).
pub fn barycentric_eval(xs: &[f64], fs: &[f64], ws: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..xs.len() {
        let dx = x - xs[i];
        if dx.abs() < 1e-300 {
            return fs[i];
        }
        let t = ws[i] / dx;
        num += t * fs[i];
        den += t;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_reference_values() {
        // reference values from standard tables
        let cases = [
            (0.0, 0.0),
            (0.5, 0.5204998778130465),
            (1.0, 0.8427007929497149),
            (2.0, 0.9953222650189527),
            (3.0, 0.9999779095030014),
            (-1.0, -0.8427007929497149),
        ];
        for (x, want) in cases {
            assert!((erf(x) - want).abs() < 1e-13, "erf({x})");
        }
    }

    #[test]
    fn inv_norm_roundtrip() {
        for &p in &[1e-9, 1e-4, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let x = inv_norm_cdf(p);
            assert!((norm_cdf(x) - p).abs() < 1e-12 * p.max(1.0 - p).max(1e-6), "p={p}");
        }
    }

    #[test]
    fn jacobi_small() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let (vals, vecs) = jacobi_eigh(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // eigenvector check: A v = lambda v
        let v = &vecs[1];
        let av = [2.0 * v[0] + v[1], v[0] + 2.0 * v[1]];
        assert!((av[0] - 3.0 * v[0]).abs() < 1e-10);
        assert!((av[1] - 3.0 * v[1]).abs() < 1e-10);
    }

    #[test]
    fn gl8_integrates_cubics_exactly() {
        // integral of x^3 on [0,1] = 1/4
        let got: f64 = GL8.iter().map(|(x, w)| w * x * x * x).sum();
        assert!((got - 0.25).abs() < 1e-14);
        let total: f64 = GL8.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn barycentric_reproduces_polynomial() {
        // nodes 0,1,2,3 of f(x) = x^2 - 1; weights for equispaced nodes
        let xs = [0.0, 1.0, 2.0, 3.0];
        let fs: Vec<f64> = xs.iter().map(|x| x * x - 1.0).collect();
        // w_i = (-1)^i * C(3,i) for equispaced
        let ws = [1.0, -3.0, 3.0, -1.0];
        for &x in &[0.5, 1.7, -0.3, 4.2] {
            let got = barycentric_eval(&xs, &fs, &ws, x);
            assert!((got - (x * x - 1.0)).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn tridiag_quadrature_matches_dense_eigensolver() {
        use crate::rng::stream_rng;
        use rand::Rng;
        let m = 12;
        let mut rng = stream_rng(7, 0);
        let diag: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let off: Vec<f64> = (0..m - 1).map(|_| rng.gen_range(0.05..1.5)).collect();
        let mut dense = vec![0.0; m * m];
        for i in 0..m {
            dense[i * m + i] = diag[i];
            if i + 1 < m {
                dense[i * m + i + 1] = off[i];
                dense[(i + 1) * m + i] = off[i];
            }
        }
        let (vals, vecs) = jacobi_eigh(&dense, m);
        let (nodes, weights) = tridiag_quadrature(&diag, &off).unwrap();
        assert_eq!(nodes.len(), m);
        for i in 0..m {
            assert!((nodes[i] - vals[i]).abs() < 1e-10, "node {i}");
            let first = vecs[i][0];
            assert!((weights[i] - first * first).abs() < 1e-10, "weight {i}");
        }
        let total: f64 = weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tridiag_quadrature_chebyshev_nodes() {
        // the Jacobi matrix with zero diagonal, first offdiag 1/sqrt(2),
        // rest 1/2, generates Gauss-Chebyshev quadrature: equal weights 1/m
        let m = 9;
        let diag = vec![0.0; m];
        let mut off = vec![0.5; m - 1];
        off[0] = 0.5f64.sqrt();
        let (nodes, weights) = tridiag_quadrature(&diag, &off).unwrap();
        for (i, (&x, &w)) in nodes.iter().zip(&weights).enumerate() {
            let expect = (std::f64::consts::PI * (m - i) as f64 * 2.0 - std::f64::consts::PI)
                / (2.0 * m as f64);
            assert!((x - expect.cos()).abs() < 1e-11, "node {i}: {x}");
            assert!((w - 1.0 / m as f64).abs() < 1e-11, "weight {i}: {w}");
        }
    }
}
