//! Analytic centering of an optimal `X` within its optimal face.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::SdpProblem;
use crate::linalg::{eig_hermitian, HermitianMatrix, C64};

/// Eigenvalues below this fraction of the trace are treated as outside the support.
const SUPPORT_TOL: f64 = 1e-7;
/// Gram eigenvalues of the constraint map below this fraction of the largest count as zero.
const NULL_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 60;

/// Maximizes `log det` of `X` restricted to its support, holding `tr(A_k X)`
/// for every constraint and `tr(C X)` fixed. Returns `None` when there is
/// nothing to move or the centering problem does not settle.
pub(crate) fn center_on_face(problem: &SdpProblem, x: &HermitianMatrix) -> Option<HermitianMatrix> {
    let eig = eig_hermitian(x).ok()?;
    let scale = x.trace().abs().max(f64::MIN_POSITIVE);
    let support: Vec<usize> = (0..eig.dim())
        .filter(|&k| eig.eigenvalues[k] > SUPPORT_TOL * scale)
        .collect();
    let r = support.len();
    if r == 0 {
        return None;
    }
    let v = DMatrix::from_columns(
        &support
            .iter()
            .map(|&k| eig.eigenvector(k))
            .collect::<Vec<_>>(),
    );
    let restrict = |a: &HermitianMatrix| -> DVector<f64> {
        HermitianMatrix::from_matrix_unchecked(v.adjoint() * a.as_matrix() * &v).svec()
    };

    let mut columns: Vec<DVector<f64>> = problem
        .constraints
        .iter()
        .map(|c| restrict(&c.matrix))
        .collect();
    columns.push(restrict(&problem.objective.matrix));
    let b = DMatrix::from_columns(&columns);
    let gram = &b * b.transpose();
    let ge = SymmetricEigen::new(gram);
    let top = ge.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let cut = NULL_TOL * top;
    let free: Vec<HermitianMatrix> = (0..ge.eigenvalues.len())
        .filter(|&k| ge.eigenvalues[k] <= cut)
        .map(|k| {
            HermitianMatrix::from_svec(r, ge.eigenvectors.column(k).as_slice()).expect("r² entries")
        })
        .collect();
    if free.is_empty() {
        return None;
    }

    let mut w = DMatrix::<C64>::zeros(r, r);
    for (i, &k) in support.iter().enumerate() {
        w[(i, i)] = C64::new(eig.eigenvalues[k], 0.0);
    }
    let mut settled = false;
    for _ in 0..MAX_NEWTON {
        let we = eig_hermitian(&HermitianMatrix::from_matrix_unchecked(w.clone())).ok()?;
        if we.eigenvalues[0] <= 0.0 {
            return None;
        }
        let inv_sqrt = we.recompose(
            &we.eigenvalues
                .iter()
                .map(|l| l.powf(-0.5))
                .collect::<Vec<_>>(),
        );
        let l = inv_sqrt.as_matrix();
        let scaled: Vec<DVector<f64>> = free
            .iter()
            .map(|n| HermitianMatrix::from_matrix_unchecked(l * n.as_matrix() * l).svec())
            .collect();
        let ns = DMatrix::from_columns(&scaled);
        let identity = HermitianMatrix::identity(r).svec();
        let g = ns.transpose() * identity;
        let h = ns.transpose() * &ns;
        let step = h.cholesky()?.solve(&g);
        let decrement = g.dot(&step);
        let t = if decrement.sqrt() > 0.25 {
            1.0 / (1.0 + decrement.sqrt())
        } else {
            1.0
        };
        for (n, s) in free.iter().zip(step.iter()) {
            w += n.as_matrix() * C64::new(t * s, 0.0);
        }
        if decrement < 1e-24 {
            settled = true;
            break;
        }
    }
    if !settled {
        return None;
    }

    let mut rest = eig.eigenvalues.clone();
    for &k in &support {
        rest[k] = 0.0;
    }
    let moved = &v * w * v.adjoint() + eig.recompose(&rest).as_matrix();
    HermitianMatrix::new((&moved + moved.adjoint()) * C64::new(0.5, 0.0)).ok()
}
