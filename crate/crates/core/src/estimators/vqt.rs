use std::time::Instant;

use super::{
    prepare, unmeasured_probabilities, EstimatorConfig, EstimatorError, EstimatorReport, Method,
};
use crate::linalg::HermitianMatrix;
use crate::quantum::{DensityMatrix, MeasurementRecord, Povm};
use crate::sdp::{solve, SdpProblem, SdpStatus, Sense};

/// The SDP behind the variational estimators.
///
/// Variables are `ρ` plus one slack Δ_i per measured index, and for
/// [`Method::VqtInf`] one trailing slack δ bounding every unmeasured
/// probability. `|tr(E_i ρ) - f_i| ≤ Δ_i max(f_i, ε_f)` is split into two LE
/// rows; `tr ρ = 1` is the first row.
pub fn vqt_problem(
    method: Method,
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<SdpProblem, EstimatorError> {
    let inf = match method {
        Method::VqtL1 => false,
        Method::VqtInf => true,
        other => {
            return Err(EstimatorError::InvalidConfig(format!(
                "{other} is not an SDP estimator"
            )))
        }
    };
    prepare(record, povm, cfg)?;
    let d = povm.dim();
    let k = record.len();
    let n_slack = if inf { k + 1 } else { k };
    let mut p = SdpProblem::new(d, n_slack);

    if inf {
        p.set_objective(HermitianMatrix::zeros(d), vec![1.0; n_slack]);
    } else {
        p.set_objective(povm.complement_sum(record.measured()), vec![1.0; k]);
    }
    p.add(
        HermitianMatrix::identity(d),
        vec![0.0; n_slack],
        Sense::Eq,
        1.0,
    );

    for (slot, (&i, &f)) in record
        .measured()
        .iter()
        .zip(record.frequencies())
        .enumerate()
    {
        let w = f.max(cfg.noise_floor);
        let e = povm.effect(i);
        p.add(e.clone(), p.unit_slack(slot, -w), Sense::Le, f);
        p.add(e.scale(-1.0), p.unit_slack(slot, -w), Sense::Le, -f);
        if let Some(cap) = cfg.delta_max {
            p.add(
                HermitianMatrix::zeros(d),
                p.unit_slack(slot, 1.0),
                Sense::Le,
                cap,
            );
        }
    }
    if inf {
        for i in record.unmeasured() {
            p.add(
                povm.effect(i).clone(),
                p.unit_slack(k, -1.0),
                Sense::Le,
                0.0,
            );
        }
    }
    Ok(p)
}

pub fn vqt_l1(
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<EstimatorReport, EstimatorError> {
    run(Method::VqtL1, record, povm, cfg)
}

pub fn vqt_inf(
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<EstimatorReport, EstimatorError> {
    run(Method::VqtInf, record, povm, cfg)
}

fn run(
    method: Method,
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let start = Instant::now();
    let problem = vqt_problem(method, record, povm, cfg)?;
    let sol = solve(&problem, &cfg.solver)?;
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => {
            return Err(EstimatorError::IncompatibleData {
                certificate: sol
                    .certificate
                    .expect("infeasible status carries a certificate"),
            })
        }
        SdpStatus::MaxIter => {
            return Err(EstimatorError::SolverMaxIter {
                iterations: sol.iterations,
                primal_residual: sol.primal_residual,
                duality_gap: sol.duality_gap,
            })
        }
    }
    let k = record.len();
    let estimate = DensityMatrix::normalized(sol.x.clone())?;
    Ok(EstimatorReport {
        method,
        deltas: sol.s[..k].to_vec(),
        objective_value: sol.objective_value,
        unmeasured_bound: (method == Method::VqtInf).then(|| sol.s[k]),
        unmeasured_probs: unmeasured_probabilities(&estimate, povm, record),
        estimate,
        iterations: sol.iterations,
        wall_time: start.elapsed(),
        maxent_state: None,
        stages: Vec::new(),
    })
}
