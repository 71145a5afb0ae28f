//! Linear SDPs over one Hermitian PSD block plus nonnegative scalar slacks.
//!
//! ```text
//! minimize    tr(C X) + c·s
//! subject to  tr(A_k X) + b_k·s  (= | ≤)  g_k
//!             X ⪰ 0,  s ≥ 0
//! ```
//!
//! [`solve`] returns an [`SdpSolution`] whose status is backed by a
//! certificate: residuals for `Optimal`, a Farkas ray for `Infeasible`.
//! Anything that can be certified neither way is reported as `MaxIter`.

mod center;
mod ipm;
mod kkt;

pub use kkt::{check_kkt, check_kkt_with_tol, KktReport, KKT_TOL};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{eig_hermitian, hs_inner, svec, HermitianMatrix, C64};
use ipm::{ConicForm, IpmSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("problem has no constraints")]
    NoConstraints,
    #[error(
        "constraint {index}: matrix dimension {got} differs from problem dimension {expected}"
    )]
    MatrixDim {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("constraint {index}: slack vector has length {got}, expected {expected}")]
    SlackLen {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("objective: {0}")]
    Objective(String),
    #[error("non-finite coefficient in constraint {index}")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "EQ")]
    Eq,
    #[serde(rename = "LE")]
    Le,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constraint {
    pub matrix: HermitianMatrix,
    pub slack: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Objective {
    pub matrix: HermitianMatrix,
    pub slack: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpProblem {
    pub dim: usize,
    pub n_slack: usize,
    pub objective: Objective,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    /// Zero objective and no constraints.
    pub fn new(dim: usize, n_slack: usize) -> Self {
        Self {
            dim,
            n_slack,
            objective: Objective {
                matrix: HermitianMatrix::zeros(dim),
                slack: vec![0.0; n_slack],
            },
            constraints: Vec::new(),
        }
    }

    pub fn set_objective(&mut self, matrix: HermitianMatrix, slack: Vec<f64>) {
        self.objective = Objective { matrix, slack };
    }

    pub fn add(&mut self, matrix: HermitianMatrix, slack: Vec<f64>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint {
            matrix,
            slack,
            sense,
            rhs,
        });
    }

    /// Slack coefficient vector with a single nonzero entry.
    pub fn unit_slack(&self, index: usize, value: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_slack];
        v[index] = value;
        v
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.constraints.is_empty() {
            return Err(SdpError::NoConstraints);
        }
        if self.objective.matrix.dim() != self.dim {
            return Err(SdpError::Objective(format!(
                "matrix dimension {} differs from {}",
                self.objective.matrix.dim(),
                self.dim
            )));
        }
        if self.objective.slack.len() != self.n_slack {
            return Err(SdpError::Objective(format!(
                "slack vector has length {}, expected {}",
                self.objective.slack.len(),
                self.n_slack
            )));
        }
        for (index, c) in self.constraints.iter().enumerate() {
            if c.matrix.dim() != self.dim {
                return Err(SdpError::MatrixDim {
                    index,
                    expected: self.dim,
                    got: c.matrix.dim(),
                });
            }
            if c.slack.len() != self.n_slack {
                return Err(SdpError::SlackLen {
                    index,
                    expected: self.n_slack,
                    got: c.slack.len(),
                });
            }
            let finite = c.rhs.is_finite()
                && c.slack.iter().all(|v| v.is_finite())
                && c.matrix
                    .as_matrix()
                    .iter()
                    .all(|z| z.re.is_finite() && z.im.is_finite());
            if !finite {
                return Err(SdpError::NonFinite { index });
            }
        }
        Ok(())
    }

    /// `tr(A_k X) + b_k·s` for every constraint.
    pub fn lhs(&self, x: &HermitianMatrix, s: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                hs_inner(&c.matrix, x).expect("validated dims")
                    + c.slack.iter().zip(s).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn objective_value(&self, x: &HermitianMatrix, s: &[f64]) -> f64 {
        hs_inner(&self.objective.matrix, x).expect("validated dims")
            + self
                .objective
                .slack
                .iter()
                .zip(s)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Per-constraint violation: `|lhs - g|` for EQ, `max(lhs - g, 0)` for LE.
    pub fn violations(&self, x: &HermitianMatrix, s: &[f64]) -> Vec<f64> {
        self.lhs(x, s)
            .into_iter()
            .zip(&self.constraints)
            .map(|(v, c)| match c.sense {
                Sense::Eq => (v - c.rhs).abs(),
                Sense::Le => (v - c.rhs).max(0.0),
            })
            .collect()
    }

    /// Dual slack matrix `C - Σ y_k A_k` and reduced slack costs `c - Σ y_k b_k`.
    pub fn dual_slacks(&self, y: &[f64]) -> (HermitianMatrix, Vec<f64>) {
        let mut s = self.objective.matrix.clone();
        let mut zs = self.objective.slack.clone();
        for (c, &yk) in self.constraints.iter().zip(y) {
            s = &s - &c.matrix.scale(yk);
            for (z, b) in zs.iter_mut().zip(&c.slack) {
                *z -= yk * b;
            }
        }
        (s, zs)
    }

    fn conic_form(&self) -> ConicForm {
        let d = self.dim;
        let m = self.constraints.len();
        let mut ax = DMatrix::zeros(m, d * d);
        let mut lp_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_slack];
        let mut b = DVector::zeros(m);
        for (k, c) in self.constraints.iter().enumerate() {
            ax.set_row(k, &c.matrix.svec().transpose());
            for (j, &v) in c.slack.iter().enumerate() {
                if v != 0.0 {
                    lp_cols[j].push((k, v));
                }
            }
            if c.sense == Sense::Le {
                lp_cols.push(vec![(k, 1.0)]);
            }
            b[k] = c.rhs;
        }
        let mut cs = DVector::zeros(lp_cols.len());
        for (j, &v) in self.objective.slack.iter().enumerate() {
            cs[j] = v;
        }
        ConicForm {
            d,
            ax,
            lp_cols,
            cx: self.objective.matrix.svec(),
            cs,
            b,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    #[serde(rename = "OPTIMAL")]
    Optimal,
    #[serde(rename = "INFEASIBLE")]
    Infeasible,
    #[serde(rename = "MAX_ITER")]
    MaxIter,
}

/// Farkas ray `w`: `Σ w_k A_k ⪰ 0`, `Σ w_k b_k ≥ 0`, `w_k ≥ 0` on LE rows and
/// `Σ w_k g_k = -1`. Any feasible point would give `0 ≤ ... = -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    pub multipliers: Vec<f64>,
}

/// Numerical check of the certificate's defining inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    /// Smallest eigenvalue of `Σ w_k A_k` (should be ≥ 0).
    pub matrix_min_eigenvalue: f64,
    /// Smallest entry of `Σ w_k b_k` (should be ≥ 0).
    pub slack_min: f64,
    /// Most negative multiplier on an LE row (should be ≥ 0).
    pub le_min: f64,
    /// `Σ w_k g_k` (should be -1).
    pub rhs_value: f64,
}

impl CertificateCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.matrix_min_eigenvalue >= -tol
            && self.slack_min >= -tol
            && self.le_min >= -tol
            && (self.rhs_value + 1.0).abs() <= tol
    }
}

impl InfeasibilityCertificate {
    pub fn verify(&self, problem: &SdpProblem) -> CertificateCheck {
        let mut mat = HermitianMatrix::zeros(problem.dim);
        let mut slack = vec![0.0; problem.n_slack];
        let mut le_min = f64::INFINITY;
        let mut rhs_value = 0.0;
        for (c, &w) in problem.constraints.iter().zip(&self.multipliers) {
            mat = &mat + &c.matrix.scale(w);
            for (acc, b) in slack.iter_mut().zip(&c.slack) {
                *acc += w * b;
            }
            if c.sense == Sense::Le {
                le_min = le_min.min(w);
            }
            rhs_value += w * c.rhs;
        }
        let matrix_min_eigenvalue = eig_hermitian(&mat)
            .map(|e| e.eigenvalues[0])
            .unwrap_or(f64::NEG_INFINITY);
        CertificateCheck {
            matrix_min_eigenvalue,
            slack_min: slack.iter().copied().fold(f64::INFINITY, f64::min),
            le_min,
            rhs_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Max constraint violation accepted for `Optimal`.
    pub eps_primal: f64,
    /// Max dual cone violation accepted for `Optimal`.
    pub eps_dual: f64,
    /// Max |primal - dual objective| accepted for `Optimal`.
    pub eps_gap: f64,
    /// Tolerance used to verify an infeasibility certificate.
    pub eps_infeasible: f64,
    /// Relative accuracy the iteration aims for before stopping.
    pub target_accuracy: f64,
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            eps_primal: 1e-8,
            eps_dual: 1e-8,
            eps_gap: 1e-7,
            eps_infeasible: 1e-7,
            target_accuracy: 1e-11,
            step_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SdpSolution {
    pub x: HermitianMatrix,
    pub s: Vec<f64>,
    /// Multipliers `y_k`, one per constraint (`y_k ≤ 0` on LE rows).
    pub dual: Vec<f64>,
    pub objective_value: f64,
    pub dual_objective: f64,
    pub status: SdpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub certificate: Option<InfeasibilityCertificate>,
}

/// Max dual cone violation of `y` for `problem`.
pub(crate) fn dual_violation(problem: &SdpProblem, y: &[f64]) -> f64 {
    let (s, zs) = problem.dual_slacks(y);
    let smin = eig_hermitian(&s)
        .map(|e| e.eigenvalues[0])
        .unwrap_or(f64::NEG_INFINITY);
    let mut v = (-smin).max(0.0);
    for z in zs {
        v = v.max(-z);
    }
    for (c, &yk) in problem.constraints.iter().zip(y) {
        if c.sense == Sense::Le {
            v = v.max(yk);
        }
    }
    v
}

/// Lowers each positively priced slack to the smallest value its LE rows
/// allow with `X` held fixed. Slacks tied to an equality row are left alone.
fn tighten_slacks(problem: &SdpProblem, x: &HermitianMatrix, s: &mut [f64]) {
    let traces: Vec<f64> = problem
        .constraints
        .iter()
        .map(|c| hs_inner(&c.matrix, x).expect("validated dims"))
        .collect();
    for j in 0..problem.n_slack {
        if problem.objective.slack[j] <= 0.0
            || problem
                .constraints
                .iter()
                .any(|c| c.sense == Sense::Eq && c.slack[j] != 0.0)
        {
            continue;
        }
        let mut lower = 0.0_f64;
        for (c, t) in problem.constraints.iter().zip(&traces) {
            let b = c.slack[j];
            if b < 0.0 {
                let rest: f64 = c
                    .slack
                    .iter()
                    .zip(s.iter())
                    .enumerate()
                    .filter(|&(l, _)| l != j)
                    .map(|(_, (a, v))| a * v)
                    .sum();
                lower = lower.max((t + rest - c.rhs) / -b);
            }
        }
        if lower < s[j] {
            s[j] = lower;
        }
    }
}

fn settings(opts: &SolverOptions) -> IpmSettings {
    IpmSettings {
        max_iter: opts.max_iter,
        target: opts.target_accuracy,
        step_fraction: opts.step_fraction,
        stall_window: 12,
    }
}

pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    let form = problem.conic_form();
    let out = ipm::run(&form, &settings(opts));

    let x = HermitianMatrix::new(out.best.x.clone()).expect("square iterate");
    let mut s: Vec<f64> = out.best.xs.iter().take(problem.n_slack).copied().collect();
    tighten_slacks(problem, &x, &mut s);
    let dual: Vec<f64> = out.best.y.iter().copied().collect();
    let objective_value = problem.objective_value(&x, &s);
    let dual_objective: f64 = problem
        .constraints
        .iter()
        .zip(&dual)
        .map(|(c, y)| c.rhs * y)
        .sum();
    let primal_residual = problem.violations(&x, &s).into_iter().fold(0.0, f64::max);
    let dual_residual = dual_violation(problem, &dual);
    let duality_gap = (objective_value - dual_objective).abs();

    let mut sol = SdpSolution {
        x,
        s,
        dual,
        objective_value,
        dual_objective,
        status: SdpStatus::MaxIter,
        primal_residual,
        dual_residual,
        duality_gap,
        iterations: out.iterations,
        certificate: None,
    };
    if primal_residual <= opts.eps_primal
        && dual_residual <= opts.eps_dual
        && duality_gap <= opts.eps_gap
    {
        sol.status = SdpStatus::Optimal;
        if let Some(x) = center::center_on_face(problem, &sol.x) {
            let residual = problem
                .violations(&x, &sol.s)
                .into_iter()
                .fold(0.0, f64::max);
            if residual <= opts.eps_primal.max(sol.primal_residual) {
                sol.objective_value = problem.objective_value(&x, &sol.s);
                sol.duality_gap = (sol.objective_value - sol.dual_objective).abs();
                sol.primal_residual = residual;
                sol.x = x;
            }
        }
        return Ok(sol);
    }
    if primal_residual > opts.eps_primal {
        let (cert, iters) = phase_one(problem, &form, opts);
        sol.iterations += iters;
        if let Some(cert) = cert {
            sol.status = SdpStatus::Infeasible;
            sol.certificate = Some(cert);
        }
    }
    Ok(sol)
}

/// Solves `min τ  s.t.  A(X) + B x + τ r = b` with `r = b - A(I) - B·1`.
/// A strictly positive optimum is dual to a Farkas ray for the original
/// constraints; the ray is returned only if it verifies.
fn phase_one(
    problem: &SdpProblem,
    form: &ConicForm,
    opts: &SolverOptions,
) -> (Option<InfeasibilityCertificate>, usize) {
    let d = form.d;
    let ones = DVector::from_element(form.p(), 1.0);
    let eye = DMatrix::<C64>::identity(d, d);
    let r = &form.b - &form.ax * svec(&eye) - form.lp_apply(&ones);
    let mut lp_cols = form.lp_cols.clone();
    lp_cols.push(
        r.iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect(),
    );
    let mut cs = DVector::zeros(lp_cols.len());
    cs[lp_cols.len() - 1] = 1.0;
    let aux = ConicForm {
        d,
        ax: form.ax.clone(),
        lp_cols,
        cx: DVector::zeros(d * d),
        cs,
        b: form.b.clone(),
    };
    let out = ipm::run(&aux, &settings(opts));
    let y = &out.best.y;
    let by = form.b.dot(y);
    if !(by > opts.eps_infeasible) {
        return (None, out.iterations);
    }
    let cert = InfeasibilityCertificate {
        multipliers: y.iter().map(|v| -v / by).collect(),
    };
    if cert.verify(problem).holds(opts.eps_infeasible) {
        (Some(cert), out.iterations)
    } else {
        (None, out.iterations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(v: &[f64]) -> HermitianMatrix {
        HermitianMatrix::from_real_diagonal(v)
    }

    #[test]
    fn minimum_eigenvalue_projector() {
        let mut p = SdpProblem::new(2, 0);
        p.set_objective(diag(&[1.0, 2.0]), vec![]);
        p.add(HermitianMatrix::identity(2), vec![], Sense::Eq, 1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, 1.0, epsilon = 1e-8);
        assert!((&sol.x - &diag(&[1.0, 0.0])).frobenius_norm() < 1e-7);
        assert!(sol.x.min_eigenvalue().unwrap() >= -1e-9);
    }

    #[test]
    fn tightening_lowers_priced_slacks_only() {
        let mut p = SdpProblem::new(2, 3);
        p.set_objective(HermitianMatrix::zeros(2), vec![1.0, 1.0, 0.0]);
        p.add(
            HermitianMatrix::identity(2),
            vec![0.0, 0.0, 0.0],
            Sense::Eq,
            1.0,
        );
        p.add(diag(&[1.0, 0.0]), vec![-2.0, 0.0, -1.0], Sense::Le, 0.0);
        p.add(diag(&[0.0, 1.0]), vec![0.0, -1.0, 0.0], Sense::Le, 0.1);
        let x = diag(&[0.6, 0.4]);
        let mut s = vec![1.0, 1.0, 0.2];
        tighten_slacks(&p, &x, &mut s);
        // 0.6 - 2 s0 - 0.2 ≤ 0 and 0.4 - s1 ≤ 0.1.
        assert_abs_diff_eq!(s[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 0.3, epsilon = 1e-15);
        assert_eq!(s[2], 0.2);
        assert!(p.violations(&x, &s).iter().all(|&v| v <= 1e-15));
    }

    #[test]
    fn centering_removes_free_coherences() {
        let mut p = SdpProblem::new(3, 0);
        p.add(HermitianMatrix::identity(3), vec![], Sense::Eq, 1.0);
        p.add(diag(&[1.0, 0.0, 0.0]), vec![], Sense::Eq, 0.5);
        let mut m = diag(&[0.5, 0.3, 0.2]).into_matrix();
        m[(0, 1)] = C64::new(0.05, -0.02);
        m[(1, 0)] = m[(0, 1)].conj();
        m[(1, 2)] = C64::new(0.0, 0.03);
        m[(2, 1)] = m[(1, 2)].conj();
        let x = HermitianMatrix::new(m).unwrap();
        let c = center::center_on_face(&p, &x).unwrap();
        // Only X_00 and the trace are pinned, so the center is 0.5 ⊕ (0.25, 0.25).
        assert!((&c - &diag(&[0.5, 0.25, 0.25])).frobenius_norm() < 1e-10);
    }

    #[test]
    fn slack_pushed_to_zero() {
        let mut p = SdpProblem::new(2, 1);
        p.set_objective(HermitianMatrix::zeros(2), vec![1.0]);
        p.add(HermitianMatrix::identity(2), vec![0.0], Sense::Eq, 1.0);
        p.add(diag(&[1.0, 0.0]), vec![-1.0], Sense::Le, 0.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective_value, 0.0, epsilon = 1e-8);
        assert!((&sol.x - &diag(&[0.0, 1.0])).frobenius_norm() < 1e-6);
        assert!(sol.s[0] >= -1e-12);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let mut p = SdpProblem::new(2, 0);
        p.add(HermitianMatrix::identity(2), vec![], Sense::Eq, 1.0);
        p.add(HermitianMatrix::identity(2), vec![], Sense::Eq, 2.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        let check = sol.certificate.as_ref().unwrap().verify(&p);
        assert!(check.holds(1e-7), "{check:?}");
    }

    #[test]
    fn psd_infeasibility_is_certified() {
        // tr X = 1 and X_00 ≤ -0.1 cannot both hold for X ⪰ 0.
        let mut p = SdpProblem::new(2, 0);
        p.add(HermitianMatrix::identity(2), vec![], Sense::Eq, 1.0);
        p.add(diag(&[1.0, 0.0]), vec![], Sense::Le, -0.1);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        assert!(sol.certificate.unwrap().verify(&p).holds(1e-7));
    }

    #[test]
    fn validation_errors() {
        let p = SdpProblem::new(2, 0);
        assert_eq!(
            solve(&p, &SolverOptions::default()).unwrap_err(),
            SdpError::NoConstraints
        );
        let mut q = SdpProblem::new(2, 1);
        q.add(HermitianMatrix::identity(3), vec![0.0], Sense::Eq, 1.0);
        assert!(matches!(q.validate(), Err(SdpError::MatrixDim { .. })));
        let mut r = SdpProblem::new(2, 1);
        r.add(HermitianMatrix::identity(2), vec![], Sense::Eq, 1.0);
        assert!(matches!(r.validate(), Err(SdpError::SlackLen { .. })));
    }

    #[test]
    fn json_round_trip() {
        let mut p = SdpProblem::new(2, 1);
        p.set_objective(diag(&[1.0, 2.0]), vec![0.5]);
        p.add(HermitianMatrix::identity(2), vec![0.0], Sense::Eq, 1.0);
        p.add(diag(&[0.0, 1.0]), vec![-1.0], Sense::Le, 0.25);
        let back = SdpProblem::from_json(&p.to_json()).unwrap();
        assert_eq!(back.constraints.len(), 2);
        assert_eq!(back.constraints[1].sense, Sense::Le);
        assert_eq!(back.objective.matrix, p.objective.matrix);
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["constraints"][0]["sense"], "EQ");
        assert_eq!(
            v["objective"]["matrix"]["entries"][3],
            serde_json::json!([2.0, 0.0])
        );
    }
}
