//! Dense Hermitian eigensolver (cyclic Jacobi) and a dense route to weighted
//! smallest singular values.
//!
//! This is the slow reference path: it shares no code with the banded
//! inverse-iteration solver in [`crate::svd`] and is used to cross-check it.

use crate::grid::WeightSpec;
use crate::tridiag::TridiagonalOperator;
use crate::C64;

/// Eigenvalues of a Hermitian matrix by cyclic Jacobi sweeps. The input is
/// consumed. Intended for modest sizes (n <= a few hundred).
pub fn hermitian_eigenvalues(mut m: Vec<Vec<C64>>) -> Vec<f64> {
    let n = m.len();
    if n == 0 {
        return Vec::new();
    }
    let frob: f64 = m
        .iter()
        .flat_map(|row| row.iter().map(|c| c.norm_sqr()))
        .sum::<f64>()
        .sqrt();
    let tol = 1e-14 * frob.max(1e-300);

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p][q].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                let abs_apq = apq.norm();
                if abs_apq <= tol / (n as f64) {
                    continue;
                }
                let app = m[p][p].re;
                let aqq = m[q][q].re;
                let phase = apq / abs_apq;
                // Real rotation angle for the phased-out 2x2 block.
                let tau = (aqq - app) / (2.0 * abs_apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Column update: M <- M U with
                // U[p][p]=c, U[q][p]=-s*conj(phase), U[p][q]=s, U[q][q]=c*conj(phase).
                for i in 0..n {
                    let vp = m[i][p];
                    let vq = m[i][q];
                    m[i][p] = c * vp - s * phase.conj() * vq;
                    m[i][q] = s * vp + c * phase.conj() * vq;
                }
                // Row update: M <- U^H M.
                for j in 0..n {
                    let wp = m[p][j];
                    let wq = m[q][j];
                    m[p][j] = c * wp - s * phase * wq;
                    m[q][j] = s * wp + c * phase * wq;
                }
                m[p][q] = C64::new(0.0, 0.0);
                m[q][p] = C64::new(0.0, 0.0);
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[i][i].re).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eigs
}

/// Dense weighted matrix `B = S_out A S_in^{-1}` with
/// `S[i] = sqrt(w(r_i) h)`.
fn weighted_dense(a: &TridiagonalOperator, w_in: &WeightSpec, w_out: &WeightSpec) -> Vec<Vec<C64>> {
    let grid = a.grid();
    let n = a.n();
    let h = grid.h();
    let s_in: Vec<f64> = (0..n).map(|i| (w_in.at(grid, i) * h).sqrt()).collect();
    let s_out: Vec<f64> = (0..n).map(|i| (w_out.at(grid, i) * h).sqrt()).collect();
    let mut b = vec![vec![C64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        b[i][i] = s_out[i] * a.diag()[i] / s_in[i];
        if i > 0 {
            b[i][i - 1] = s_out[i] * a.lower()[i - 1] / s_in[i - 1];
        }
        if i + 1 < n {
            b[i][i + 1] = s_out[i] * a.upper()[i] / s_in[i + 1];
        }
    }
    b
}

/// Smallest singular value of `A` from `||Ax||_w_out / ||x||_w_in` computed
/// by a full dense eigensolve of the normal matrix.
pub fn sigma_min_dense(a: &TridiagonalOperator, w_in: &WeightSpec, w_out: &WeightSpec) -> f64 {
    let b = weighted_dense(a, w_in, w_out);
    let n = b.len();
    let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
    for j in 0..n {
        for k in j..n {
            let mut acc = C64::new(0.0, 0.0);
            for row in &b {
                acc += row[j].conj() * row[k];
            }
            m[j][k] = acc;
            m[k][j] = acc.conj();
        }
    }
    let eigs = hermitian_eigenvalues(m);
    eigs[0].max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_on_known_hermitian_matrix() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3.
        let m = vec![
            vec![C64::new(2.0, 0.0), C64::new(0.0, 1.0)],
            vec![C64::new(0.0, -1.0), C64::new(2.0, 0.0)],
        ];
        let eigs = hermitian_eigenvalues(m);
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!((eigs[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_matches_sturm_on_real_tridiagonal() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.05 * i as f64).collect();
        let off = vec![-1.0; n - 1];
        let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
        for i in 0..n {
            m[i][i] = C64::new(diag[i], 0.0);
            if i + 1 < n {
                m[i][i + 1] = C64::new(off[i], 0.0);
                m[i + 1][i] = C64::new(off[i], 0.0);
            }
        }
        let eigs = hermitian_eigenvalues(m);
        let smallest = crate::eig::sym_tridiag_smallest_eig(&diag, &off);
        assert!((eigs[0] - smallest).abs() < 1e-10 * smallest.abs().max(1.0));
    }
}
