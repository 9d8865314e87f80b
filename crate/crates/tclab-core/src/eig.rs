//! Symmetric tridiagonal eigenvalue bounds via Sturm-sequence bisection.
//!
//! Used for discrete Poincare constants, diffusion decay-rate oracles, and
//! accretivity cross-checks.

use crate::tridiag::TridiagonalOperator;

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below
/// `lambda`, by counting negative pivots of the shifted LDL^T recurrence.
pub fn sturm_count(diag: &[f64], off: &[f64], lambda: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - lambda;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let denom = if q == 0.0 { 1e-300 } else { q };
        q = diag[i] - lambda - off[i - 1] * off[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix.
pub fn sym_tridiag_smallest_eig(diag: &[f64], off: &[f64]) -> f64 {
    assert_eq!(diag.len(), off.len() + 1);
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut radius = 0.0;
        if i > 0 {
            radius += off[i - 1].abs();
        }
        if i < n - 1 {
            radius += off[i].abs();
        }
        lo = lo.min(diag[i] - radius);
        hi = hi.max(diag[i] + radius);
    }
    let mut lo = lo - 1.0;
    let mut hi = hi + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Symmetric part of a tridiagonal operator as real (diag, off) bands.
/// Valid when the off-diagonals have negligible imaginary parts, which
/// holds for every assembled diffusion operator here.
pub fn real_symmetric_part(a: &TridiagonalOperator) -> (Vec<f64>, Vec<f64>) {
    let diag = a.diag().iter().map(|c| c.re).collect();
    let off = a
        .lower()
        .iter()
        .zip(a.upper())
        .map(|(l, u)| 0.5 * (l.re + u.re))
        .collect();
    (diag, off)
}

/// Smallest eigenvalue of the discrete Dirichlet Laplacian `-d^2/dx^2` on an
/// interval of length `len` with `n` interior nodes (closed form, used as an
/// independent oracle).
pub fn dirichlet_laplacian_smallest_eig(len: f64, n: usize) -> f64 {
    let h = len / (n as f64 + 1.0);
    2.0 / (h * h) * (1.0 - (std::f64::consts::PI * h / len).cos())
}
