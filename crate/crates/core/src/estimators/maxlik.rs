use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{
    maxent, prepare, unmeasured_probabilities, EstimatorConfig, EstimatorError, EstimatorReport,
    Method, StageReport,
};
use crate::linalg::{eig_hermitian, hs_inner, HermitianMatrix, LinalgError};
use crate::quantum::{DensityMatrix, MeasurementRecord, Povm};

/// Nearest density matrix in Frobenius norm: the spectrum is projected onto
/// the probability simplex.
pub fn project_to_density(a: &HermitianMatrix) -> Result<HermitianMatrix, LinalgError> {
    let eig = eig_hermitian(a)?;
    Ok(eig.recompose(&simplex_projection(&eig.eigenvalues)))
}

fn simplex_projection(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            shift = t;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Weighted least-squares surrogate of the log-likelihood,
/// `-½ Σ (tr(E_j ρ) - f_j)² / max(f_j, ε_f)`.
pub fn gaussian_log_likelihood(
    rho: &DensityMatrix,
    povm: &Povm,
    record: &MeasurementRecord,
    noise_floor: f64,
) -> f64 {
    let x = rho.matrix().svec();
    let frame = povm.frame();
    -record
        .measured()
        .iter()
        .zip(record.frequencies())
        .map(|(&i, &f)| {
            let p = frame.row(i).dot(&x.transpose());
            0.5 * (p - f).powi(2) / f.max(noise_floor)
        })
        .sum::<f64>()
}

/// `F(x) = ½ Σ w_j (a_j·x - f_j)²` over svec coordinates.
struct Objective {
    rows: DMatrix<f64>,
    weights: DVector<f64>,
    targets: DVector<f64>,
}

impl Objective {
    fn new(record: &MeasurementRecord, povm: &Povm, noise_floor: f64) -> Self {
        let frame = povm.frame();
        let rows = frame.select_rows(record.measured());
        let targets = DVector::from_column_slice(record.frequencies());
        let weights = targets.map(|f| 1.0 / f.max(noise_floor));
        Self {
            rows,
            weights,
            targets,
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let resid = &self.rows * x - &self.targets;
        self.rows.tr_mul(&resid.component_mul(&self.weights))
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let resid = &self.rows * x - &self.targets;
        0.5 * resid.dot(&resid.component_mul(&self.weights))
    }

    /// `Σ w_j (a_j·v)²`, the exact second-order term along `v`.
    fn curvature(&self, v: &DVector<f64>) -> f64 {
        let av = &self.rows * v;
        av.dot(&av.component_mul(&self.weights))
    }
}

fn project_svec(d: usize, x: &DVector<f64>) -> Result<DVector<f64>, EstimatorError> {
    let m = HermitianMatrix::from_svec(d, x.as_slice())?;
    Ok(project_to_density(&m)?.svec())
}

struct MaxLikOutcome {
    estimate: DensityMatrix,
    objective: f64,
    iterations: usize,
}

/// Accelerated projected gradient with backtracking and adaptive restart.
fn fista(
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<MaxLikOutcome, EstimatorError> {
    let d = povm.dim();
    let start = DensityMatrix::maximally_mixed(d);
    if record.is_empty() {
        return Ok(MaxLikOutcome {
            estimate: start,
            objective: 0.0,
            iterations: 0,
        });
    }
    let obj = Objective::new(record, povm, cfg.noise_floor);
    let mut x = start.matrix().svec();
    let mut fx = obj.value(&x);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut step = 1.0_f64;
    let mut gradient_norm = f64::INFINITY;

    for iteration in 1..=cfg.maxlik_max_iter {
        let g = obj.gradient(&y);
        let (x_new, f_new) = loop {
            let cand = project_svec(d, &(&y - &g * step))?;
            let diff = &cand - &y;
            // F is quadratic, so the upper-bound test reduces to comparing
            // curvatures; this form does not cancel near the optimum.
            if obj.curvature(&diff) * step <= diff.norm_squared() {
                let f_cand = obj.value(&cand);
                break (cand, f_cand);
            }
            step *= 0.5;
        };
        gradient_norm = (&x_new - &y).norm() / step;
        if gradient_norm <= cfg.maxlik_tol {
            let estimate =
                DensityMatrix::normalized(HermitianMatrix::from_svec(d, x_new.as_slice())?)?;
            return Ok(MaxLikOutcome {
                estimate,
                objective: -f_new,
                iterations: iteration,
            });
        }
        if f_new > fx && t > 1.0 {
            // Momentum overshot: restart from the last iterate.
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_new + (&x_new - &x) * ((t - 1.0) / t_next);
        x = x_new;
        fx = f_new;
        t = t_next;
    }
    Err(EstimatorError::MaxLikMaxIter {
        iterations: cfg.maxlik_max_iter,
        gradient_norm,
    })
}

/// Likelihood maximization over density matrices (Gaussian-variant likelihood).
pub fn maxlik(
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let start = Instant::now();
    prepare(record, povm, cfg)?;
    let out = fista(record, povm, cfg)?;
    Ok(EstimatorReport {
        method: Method::MaxLik,
        deltas: Vec::new(),
        objective_value: out.objective,
        unmeasured_bound: None,
        unmeasured_probs: unmeasured_probabilities(&out.estimate, povm, record),
        estimate: out.estimate,
        iterations: out.iterations,
        wall_time: start.elapsed(),
        maxent_state: None,
        stages: Vec::new(),
    })
}

/// Maximum-likelihood fit of the measured probabilities, then the
/// maximum-entropy state reproducing those fitted probabilities.
pub fn maxlik_maxent(
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let start = Instant::now();
    let ml = maxlik(record, povm, cfg).map_err(|e| EstimatorError::Stage {
        stage: "maxlik",
        source: Box::new(e),
    })?;
    let fitted: Vec<f64> = record
        .measured()
        .iter()
        .map(|&i| {
            hs_inner(povm.effect(i), ml.estimate.matrix())
                .expect("dims checked")
                .max(0.0)
        })
        .collect();
    let projected = record.with_frequencies(fitted)?;
    let me = maxent(&projected, povm, cfg).map_err(|e| EstimatorError::Stage {
        stage: "maxent",
        source: Box::new(e),
    })?;
    let stages = vec![
        StageReport {
            stage: "maxlik",
            iterations: ml.iterations,
            objective_value: ml.objective_value,
            wall_time_s: ml.wall_time.as_secs_f64(),
        },
        StageReport {
            stage: "maxent",
            iterations: me.iterations,
            objective_value: me.objective_value,
            wall_time_s: me.wall_time.as_secs_f64(),
        },
    ];
    Ok(EstimatorReport {
        method: Method::MaxLikMaxEnt,
        iterations: ml.iterations + me.iterations,
        wall_time: start.elapsed(),
        stages,
        ..me
    })
}
