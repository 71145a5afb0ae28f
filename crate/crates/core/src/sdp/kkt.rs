use serde::Serialize;

use super::{SdpProblem, SdpSolution, Sense};
use crate::linalg::{eig_hermitian, hs_inner};

pub const KKT_TOL: f64 = 1e-7;

/// Optimality conditions recomputed from `(X, s, y)` alone.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub tol: f64,
    /// Largest constraint violation.
    pub primal_residual: f64,
    /// Constraints violated by more than `tol`.
    pub violated: Vec<usize>,
    /// Smallest eigenvalue of X and smallest slack value.
    pub x_min_eigenvalue: f64,
    pub s_min: f64,
    /// Smallest eigenvalue of `C - Σ y_k A_k`.
    pub dual_slack_min_eigenvalue: f64,
    /// Smallest reduced slack cost `c_j - Σ y_k b_kj`.
    pub dual_scalar_min: f64,
    /// Largest multiplier on an LE row (must be ≤ 0).
    pub le_multiplier_max: f64,
    /// `tr(X S) + s·z + Σ_LE (g_k - lhs_k)(-y_k)`.
    pub complementary_slackness: f64,
    /// |primal objective - dual objective|.
    pub objective_gap: f64,
    pub primal_ok: bool,
    pub dual_ok: bool,
    pub complementarity_ok: bool,
    pub gap_ok: bool,
}

impl KktReport {
    pub fn all_ok(&self) -> bool {
        self.primal_ok && self.dual_ok && self.complementarity_ok && self.gap_ok
    }
}

pub fn check_kkt(problem: &SdpProblem, sol: &SdpSolution) -> KktReport {
    check_kkt_with_tol(problem, sol, KKT_TOL)
}

pub fn check_kkt_with_tol(problem: &SdpProblem, sol: &SdpSolution, tol: f64) -> KktReport {
    let viol = problem.violations(&sol.x, &sol.s);
    let primal_residual = viol.iter().copied().fold(0.0, f64::max);
    let violated: Vec<usize> = viol
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > tol)
        .map(|(i, _)| i)
        .collect();
    let x_min_eigenvalue = eig_hermitian(&sol.x)
        .map(|e| e.eigenvalues[0])
        .unwrap_or(f64::NEG_INFINITY);
    let s_min = sol.s.iter().copied().fold(f64::INFINITY, f64::min);

    let (smat, zs) = problem.dual_slacks(&sol.dual);
    let dual_slack_min_eigenvalue = eig_hermitian(&smat)
        .map(|e| e.eigenvalues[0])
        .unwrap_or(f64::NEG_INFINITY);
    let dual_scalar_min = zs.iter().copied().fold(f64::INFINITY, f64::min);
    let lhs = problem.lhs(&sol.x, &sol.s);
    let mut le_multiplier_max = f64::NEG_INFINITY;
    let mut comp = hs_inner(&sol.x, &smat).unwrap_or(f64::NAN)
        + sol.s.iter().zip(&zs).map(|(a, b)| a * b).sum::<f64>();
    for ((c, &y), &l) in problem.constraints.iter().zip(&sol.dual).zip(&lhs) {
        if c.sense == Sense::Le {
            le_multiplier_max = le_multiplier_max.max(y);
            comp += (c.rhs - l) * (-y);
        }
    }
    let pobj = problem.objective_value(&sol.x, &sol.s);
    let dobj: f64 = problem
        .constraints
        .iter()
        .zip(&sol.dual)
        .map(|(c, y)| c.rhs * y)
        .sum();
    let objective_gap = (pobj - dobj).abs();

    let x_ok = x_min_eigenvalue >= -tol && (sol.s.is_empty() || s_min >= -tol);
    let dual_ok = dual_slack_min_eigenvalue >= -tol
        && (zs.is_empty() || dual_scalar_min >= -tol)
        && le_multiplier_max <= tol;
    KktReport {
        tol,
        primal_residual,
        primal_ok: violated.is_empty() && x_ok,
        violated,
        x_min_eigenvalue,
        s_min,
        dual_slack_min_eigenvalue,
        dual_scalar_min,
        le_multiplier_max,
        complementary_slackness: comp,
        objective_gap,
        dual_ok,
        complementarity_ok: comp.abs() <= tol,
        gap_ok: objective_gap <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::HermitianMatrix;
    use crate::sdp::{solve, SdpStatus, SolverOptions};

    fn min_eig_problem() -> SdpProblem {
        let mut p = SdpProblem::new(2, 0);
        p.set_objective(HermitianMatrix::from_real_diagonal(&[1.0, 2.0]), vec![]);
        p.add(HermitianMatrix::identity(2), vec![], Sense::Eq, 1.0);
        p
    }

    #[test]
    fn solver_output_passes() {
        let p = min_eig_problem();
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        let rep = check_kkt(&p, &sol);
        assert!(rep.all_ok(), "{rep:?}");
        // Dual slack is diag(0, 1) at y = 1; X = diag(1, 0) annihilates it.
        assert!(rep.complementary_slackness.abs() <= 1e-8);
        assert!((sol.dual[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn detects_violated_equality() {
        let p = min_eig_problem();
        let mut sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        sol.x = HermitianMatrix::from_real_diagonal(&[1.001, 0.0]);
        let rep = check_kkt(&p, &sol);
        assert_eq!(rep.violated, vec![0]);
        assert!(!rep.primal_ok);
        assert!(!rep.all_ok());
    }
}
