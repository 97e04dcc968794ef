//! Small deterministic numerics toolbox: Gauss-Legendre rules, Legendre
//! polynomial evaluation, composite Simpson quadrature, a symmetric
//! tridiagonal eigensolver, and a fixed-consumption Gaussian sampler.
//!
//! Everything here is hand-rolled so the crate stays `no_std` and every
//! result is bit-reproducible across platforms.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::err::{CoreError, Result};

pub const PI: f64 = core::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1],
/// nodes in ascending order.
///
/// Newton iteration on P_n with the derivative from the standard recurrence;
/// converges to machine precision in a handful of steps for every n used
/// here. Deterministic: no seeds, no tables.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "Gauss-Legendre rule needs at least 2 nodes");
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    for k in 0..n {
        // Chebyshev-like initial guess, descending in k.
        let mut xi = libm::cos(PI * (k as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(xi) and P'_n(xi) by upward recurrence.
            let mut p0 = 1.0f64;
            let mut p1 = xi;
            for m in 2..=n {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * xi * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (xi * p1 - p0) / (xi * xi - 1.0);
            let dx = p1 / dp;
            xi -= dx;
            if libm::fabs(dx) < 1e-15 {
                break;
            }
        }
        x[k] = xi;
        w[k] = 2.0 / ((1.0 - xi * xi) * dp * dp);
    }
    // The guesses above produce descending nodes; reverse to ascending.
    x.reverse();
    w.reverse();
    (x, w)
}

/// P_k(0): zero for odd k, (-1)^{k/2} (k-1)!!/k!! for even k.
pub fn legendre_p_at_zero(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let m = k / 2;
    let mut v = 1.0f64;
    for i in 1..=m {
        v *= (2.0 * i as f64 - 1.0) / (2.0 * i as f64);
    }
    if m % 2 == 0 {
        v
    } else {
        -v
    }
}

/// P'_k(0): zero for even k; for odd k, (1-x^2)P'_k = k(P_{k-1} - x P_k)
/// gives P'_k(0) = k * P_{k-1}(0).
pub fn legendre_dp_at_zero(k: usize) -> f64 {
    if k % 2 == 0 {
        return 0.0;
    }
    k as f64 * legendre_p_at_zero(k - 1)
}

/// Evaluate a Legendre series sum_k coefs[k] * P_k(x) by upward recurrence
/// (stable on |x| <= 1, which is the only place this crate evaluates it).
pub fn legendre_series(coefs: &[f64], x: f64) -> f64 {
    match coefs.len() {
        0 => return 0.0,
        1 => return coefs[0],
        _ => {}
    }
    let mut acc = coefs[0] + coefs[1] * x;
    let mut pkm1 = 1.0f64; // P_0
    let mut pk = x; // P_1
    for (k, &a) in coefs.iter().enumerate().skip(2) {
        let kf = (k - 1) as f64; // recurrence index: P_k from P_{k-1}, P_{k-2}
        let pk1 = ((2.0 * kf + 1.0) * x * pk - kf * pkm1) / (kf + 1.0);
        pkm1 = pk;
        pk = pk1;
        acc += a * pk;
    }
    acc
}

/// Composite Simpson rule over uniformly spaced samples (odd point count).
pub fn simpson(values: &[f64], h: f64) -> Result<f64> {
    let n = values.len();
    if n < 3 || n % 2 == 0 {
        return Err(CoreError::GridTooCoarse {
            points: n,
            needed: if n < 3 { 3 } else { n + 1 },
        });
    }
    let mut s4 = 0.0;
    let mut s2 = 0.0;
    for (i, &v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            s4 += v;
        } else {
            s2 += v;
        }
    }
    Ok(h / 3.0 * (values[0] + values[n - 1] + 4.0 * s4 + 2.0 * s2))
}

/// Check that a grid is uniformly spaced and strictly increasing; returns the
/// spacing.
pub fn uniform_spacing(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(CoreError::GridTooCoarse { points: grid.len(), needed: 2 });
    }
    let h = grid[1] - grid[0];
    if h <= 0.0 {
        return Err(CoreError::InvalidArgument { what: "grid must be strictly increasing" });
    }
    let span = grid[grid.len() - 1] - grid[0];
    let tol = 1e-9 * (1.0 + libm::fabs(span));
    for i in 1..grid.len() {
        let d = grid[i] - grid[i - 1];
        if libm::fabs(d - h) > tol {
            return Err(CoreError::InvalidArgument { what: "grid must be uniformly spaced" });
        }
    }
    Ok(h)
}

/// Uniform grid of `n` points covering [a, b] inclusive; the endpoints are
/// exact (no roundoff drift past b).
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + h * i as f64 })
        .collect()
}

/// Eigen-decomposition of a symmetric tridiagonal matrix, sorted ascending.
pub struct TridiagEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// `vectors[i]` is the (unit-norm) eigenvector paired with `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

/// QL algorithm with implicit shifts for a symmetric tridiagonal matrix
/// (diagonal `diag`, subdiagonal `off`, `off.len() == diag.len() - 1`).
///
/// Accumulates eigenvectors; O(n^3) and fully deterministic. Returns the
/// spectrum sorted ascending.
pub fn tridiag_eigen(diag: &[f64], off: &[f64]) -> Result<TridiagEigen> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(CoreError::InvalidArgument { what: "tridiagonal shape" });
    }
    let mut d: Vec<f64> = diag.to_vec();
    // e[i] couples rows i and i+1; e[n-1] is workspace.
    let mut e: Vec<f64> = off.to_vec();
    e.push(0.0);
    // z[row][col]; columns end up as eigenvectors.
    let mut z: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut row = vec![0.0f64; n];
            row[r] = 1.0;
            row
        })
        .collect();

    for l in 0..n {
        let mut iter = 0usize;
        loop {
            // Look for a negligible subdiagonal element to split the matrix.
            let mut m = l;
            while m + 1 < n {
                let dd = libm::fabs(d[m]) + libm::fabs(d[m + 1]);
                if libm::fabs(e[m]) <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(CoreError::NonConvergence { what: "tridiagonal QL iteration" });
            }
            // Form the implicit shift.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + libm::copysign(r, g));
            let mut s = 1.0f64;
            let mut c = 1.0f64;
            let mut p = 0.0f64;
            let mut underflow_restart = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Recover from underflow: skip this transformation.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow_restart = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for zrow in z.iter_mut() {
                    f = zrow[i + 1];
                    zrow[i + 1] = s * zrow[i] + c * f;
                    zrow[i] = c * zrow[i] - s * f;
                }
            }
            if underflow_restart {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    // Sort eigenpairs ascending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("eigenvalues are finite"));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..n).map(|row| z[row][col]).collect())
        .collect();
    Ok(TridiagEigen { values, vectors })
}

/// One standard-normal pair by the Box-Muller transform.
///
/// Consumes exactly two `u64` draws, mapping each to (0, 1] via
/// `((x >> 11) + 1) * 2^-53`, so the stream layout is fixed and documented:
/// changing downstream consumers never reshuffles earlier draws.
pub fn gaussian_pair<R: RngCore>(rng: &mut R) -> (f64, f64) {
    const SCALE: f64 = 1.0 / 9007199254740992.0; // 2^-53
    let u = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let v = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let m = libm::sqrt(-2.0 * libm::log(u));
    let ang = 2.0 * PI * v;
    (m * libm::cos(ang), m * libm::sin(ang))
}
