use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::{
    prepare, unmeasured_probabilities, EstimatorConfig, EstimatorError, EstimatorReport, Method,
};
use crate::linalg::{eig_hermitian, HermitianMatrix, C64};
use crate::quantum::{DensityMatrix, MeasurementRecord, Povm};

/// Multipliers of the exponential-family solution `ρ = exp(-Σ λ_i E_i) / N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxEntState {
    pub lambdas: Vec<f64>,
    pub normalization: f64,
    pub residual_norm: f64,
}

/// `exp(-Σ λ_i E_i)` evaluated through one eigendecomposition.
struct ExpFamily {
    exponents: Vec<f64>,
    shift: f64,
    // exp(a_p - shift); the largest weight is exactly 1.
    weights: Vec<f64>,
    weight_sum: f64,
    vectors: DMatrix<C64>,
}

impl ExpFamily {
    fn new(povm: &Povm, measured: &[usize], lambdas: &[f64]) -> Result<Self, EstimatorError> {
        assert_eq!(measured.len(), lambdas.len());
        let d = povm.dim();
        let mut a = DMatrix::<C64>::zeros(d, d);
        for (&i, &l) in measured.iter().zip(lambdas) {
            a -= povm.effect(i).as_matrix() * C64::new(l, 0.0);
        }
        let eig = eig_hermitian(&HermitianMatrix::new(a)?)?;
        let shift = eig.eigenvalues[d - 1];
        let weights: Vec<f64> = eig.eigenvalues.iter().map(|a| (a - shift).exp()).collect();
        let weight_sum = weights.iter().sum();
        Ok(Self {
            exponents: eig.eigenvalues,
            shift,
            weights,
            weight_sum,
            vectors: eig.eigenvectors,
        })
    }

    fn normalization(&self) -> f64 {
        self.shift.exp() * self.weight_sum
    }

    fn state(&self) -> Result<DensityMatrix, EstimatorError> {
        let d = self.weights.len();
        let mut scaled = self.vectors.clone();
        for (p, w) in self.weights.iter().enumerate() {
            scaled.column_mut(p).scale_mut(w / self.weight_sum);
        }
        let m = HermitianMatrix::new(&scaled * self.vectors.adjoint())?;
        debug_assert_eq!(m.dim(), d);
        Ok(DensityMatrix::normalized(m)?)
    }

    fn entropy(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w / self.weight_sum)
            .filter(|&q| q > 0.0)
            .map(|q| -q * q.ln())
            .sum()
    }

    /// Effects in the eigenbasis, `V† E_j V`.
    fn rotated(&self, povm: &Povm, measured: &[usize]) -> Vec<DMatrix<C64>> {
        let vh = self.vectors.adjoint();
        measured
            .iter()
            .map(|&i| &vh * povm.effect(i).as_matrix() * &self.vectors)
            .collect()
    }

    fn probabilities(&self, rotated: &[DMatrix<C64>]) -> Vec<f64> {
        rotated
            .iter()
            .map(|e| {
                let t: f64 = self
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(p, w)| w * e[(p, p)].re)
                    .sum();
                t / self.weight_sum
            })
            .collect()
    }

    /// Divided differences of exp on the shifted spectrum.
    fn gamma(&self, p: usize, q: usize) -> f64 {
        let (lo, hi) = if self.exponents[p] <= self.exponents[q] {
            (p, q)
        } else {
            (q, p)
        };
        let delta = self.exponents[hi] - self.exponents[lo];
        if delta == 0.0 {
            self.weights[lo]
        } else if delta <= 1.0 {
            self.weights[lo] * delta.exp_m1() / delta
        } else {
            (self.weights[hi] - self.weights[lo]) / delta
        }
    }

    /// `G_jk = tr(Ẽ_j (Γ ∘ Ẽ_k))` with Γ on the shifted spectrum.
    fn kubo_gram(&self, rotated: &[DMatrix<C64>]) -> DMatrix<f64> {
        let d = self.weights.len();
        let k = rotated.len();
        let mut root = DMatrix::<f64>::zeros(d, d);
        for p in 0..d {
            for q in 0..d {
                root[(p, q)] = self.gamma(p, q).sqrt();
            }
        }
        let mut r = DMatrix::<f64>::zeros(k, 2 * d * d);
        for (j, e) in rotated.iter().enumerate() {
            for q in 0..d {
                for p in 0..d {
                    let idx = q * d + p;
                    let z = e[(p, q)] * root[(p, q)];
                    r[(j, idx)] = z.re;
                    r[(j, d * d + idx)] = z.im;
                }
            }
        }
        &r * r.transpose()
    }
}

struct Evaluation {
    family: ExpFamily,
    probs: Vec<f64>,
    rotated: Vec<DMatrix<C64>>,
}

fn evaluate(
    povm: &Povm,
    measured: &[usize],
    lambdas: &[f64],
) -> Result<Evaluation, EstimatorError> {
    let family = ExpFamily::new(povm, measured, lambdas)?;
    let rotated = family.rotated(povm, measured);
    let probs = family.probabilities(&rotated);
    Ok(Evaluation {
        family,
        probs,
        rotated,
    })
}

fn normalized_jacobian(ev: &Evaluation) -> DMatrix<f64> {
    let g = ev.family.kubo_gram(&ev.rotated);
    let k = ev.probs.len();
    DMatrix::from_fn(k, k, |j, l| {
        -g[(j, l)] / ev.family.weight_sum + ev.probs[j] * ev.probs[l]
    })
}

fn check_lambdas(record: &MeasurementRecord, lambdas: &[f64]) -> Result<(), EstimatorError> {
    if lambdas.len() != record.len() {
        return Err(EstimatorError::InvalidConfig(format!(
            "{} multipliers for {} measured outcomes",
            lambdas.len(),
            record.len()
        )));
    }
    Ok(())
}

/// `ρ(λ)` and its normalization `N = tr exp(-Σ λ_i E_i)`.
pub fn exponential_family_state(
    povm: &Povm,
    measured: &[usize],
    lambdas: &[f64],
) -> Result<(DensityMatrix, f64), EstimatorError> {
    let family = ExpFamily::new(povm, measured, lambdas)?;
    Ok((family.state()?, family.normalization()))
}

/// `tr(E_j ρ(λ)) - f_j` for each measured j.
pub fn maxent_residuals(
    povm: &Povm,
    record: &MeasurementRecord,
    lambdas: &[f64],
) -> Result<Vec<f64>, EstimatorError> {
    check_lambdas(record, lambdas)?;
    let ev = evaluate(povm, record.measured(), lambdas)?;
    Ok(ev
        .probs
        .iter()
        .zip(record.frequencies())
        .map(|(p, f)| p - f)
        .collect())
}

/// Analytic `∂ tr(E_j ρ(λ)) / ∂λ_k`; symmetric negative semidefinite.
pub fn maxent_jacobian(
    povm: &Povm,
    record: &MeasurementRecord,
    lambdas: &[f64],
) -> Result<DMatrix<f64>, EstimatorError> {
    check_lambdas(record, lambdas)?;
    Ok(normalized_jacobian(&evaluate(
        povm,
        record.measured(),
        lambdas,
    )?))
}

/// Unnormalized form `tr(E_j exp(A)) - N f_j`.
pub fn raw_residuals(
    povm: &Povm,
    record: &MeasurementRecord,
    lambdas: &[f64],
) -> Result<Vec<f64>, EstimatorError> {
    check_lambdas(record, lambdas)?;
    let ev = evaluate(povm, record.measured(), lambdas)?;
    let n = ev.family.normalization();
    Ok(ev
        .probs
        .iter()
        .zip(record.frequencies())
        .map(|(p, f)| n * (p - f))
        .collect())
}

/// Jacobian of [`raw_residuals`].
pub fn raw_jacobian(
    povm: &Povm,
    record: &MeasurementRecord,
    lambdas: &[f64],
) -> Result<DMatrix<f64>, EstimatorError> {
    check_lambdas(record, lambdas)?;
    let ev = evaluate(povm, record.measured(), lambdas)?;
    let g = ev.family.kubo_gram(&ev.rotated);
    let n = ev.family.normalization();
    let s = ev.family.weight_sum;
    let f = record.frequencies();
    let k = f.len();
    Ok(DMatrix::from_fn(k, k, |j, l| {
        n * (-g[(j, l)] / s + f[j] * ev.probs[l])
    }))
}

const STALL_WINDOW: usize = 50;
const MAX_DAMPING: f64 = 1e20;
const MAX_STRETCH: f64 = 1e6;

/// Maximum-entropy state reproducing the measured frequencies exactly.
///
/// Solves `tr(E_j ρ(λ)) = f_j` by Levenberg-Marquardt with damping
/// `θ ‖r‖²`, starting from λ = 0 (the maximally mixed state).
pub fn maxent(
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<EstimatorReport, EstimatorError> {
    let start = Instant::now();
    prepare(record, povm, cfg)?;
    let k = record.len();
    let f = DVector::from_column_slice(record.frequencies());
    let tol = cfg.maxent_tol * k as f64;

    let mut lambdas = DVector::<f64>::zeros(k);
    let mut ev = evaluate(povm, record.measured(), lambdas.as_slice())?;
    let mut r = DVector::from_vec(ev.probs.clone()) - &f;
    let mut norm = r.norm();
    let mut history = vec![norm];
    let mut theta = 1e-3;
    let mut iterations = 0;

    while norm > tol {
        if iterations >= cfg.maxent_max_iter || stalled(&history) {
            return Err(EstimatorError::MaxEntNonConvergence {
                iterations,
                final_residual: norm,
                residual_history: history,
            });
        }
        iterations += 1;
        let jac = normalized_jacobian(&ev);
        let jac = (&jac + jac.transpose()) * 0.5;
        let eig = SymmetricEigen::new(jac);
        let smax = eig.eigenvalues.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        let proj = eig.eigenvectors.transpose() * &r;
        let floor = (1e-14 * smax).powi(2);

        loop {
            let mu = (theta * norm * norm).max(floor);
            let coeffs = DVector::from_fn(k, |i, _| {
                let s = eig.eigenvalues[i];
                -s / (s * s + mu) * proj[i]
            });
            let step = &eig.eigenvectors * &coeffs;
            let trial = &lambdas + &step;
            let trial_ev = evaluate(povm, record.measured(), trial.as_slice())?;
            let trial_r = DVector::from_vec(trial_ev.probs.clone()) - &f;
            let trial_norm = trial_r.norm();
            // Predicted decrease of ½‖r‖² under the linear model.
            let predicted: f64 = (0..k)
                .map(|i| {
                    let s = eig.eigenvalues[i];
                    let lin = proj[i] + s * coeffs[i];
                    0.5 * (proj[i] * proj[i] - lin * lin)
                })
                .sum();
            let actual = 0.5 * (norm * norm - trial_norm * trial_norm);
            let gain = if predicted > 0.0 {
                actual / predicted
            } else {
                -1.0
            };
            if trial_norm.is_finite() && actual > 0.0 && gain > 1e-4 {
                if gain > 0.75 {
                    theta = (theta / 4.0).max(1e-12);
                } else if gain < 0.25 {
                    theta *= 4.0;
                }
                let (mut best, mut best_ev, mut best_r, mut best_norm) =
                    (trial, trial_ev, trial_r, trial_norm);
                // Near boundary solutions the residual falls slowly; push
                // further along the accepted direction while that helps.
                if trial_norm > 0.25 * norm {
                    let mut alpha = 2.0;
                    while alpha <= MAX_STRETCH {
                        let cand = &lambdas + &step * alpha;
                        let cand_ev = evaluate(povm, record.measured(), cand.as_slice())?;
                        let cand_r = DVector::from_vec(cand_ev.probs.clone()) - &f;
                        let cand_norm = cand_r.norm();
                        if !(cand_norm < best_norm) {
                            break;
                        }
                        (best, best_ev, best_r, best_norm) = (cand, cand_ev, cand_r, cand_norm);
                        alpha *= 2.0;
                    }
                }
                lambdas = best;
                ev = best_ev;
                r = best_r;
                norm = best_norm;
                break;
            }
            theta *= 4.0;
            if theta * norm * norm > MAX_DAMPING || predicted <= 0.0 {
                history.push(norm);
                return Err(EstimatorError::MaxEntNonConvergence {
                    iterations,
                    final_residual: norm,
                    residual_history: history,
                });
            }
        }
        history.push(norm);
    }

    let estimate = ev.family.state()?;
    Ok(EstimatorReport {
        method: Method::MaxEnt,
        deltas: Vec::new(),
        objective_value: ev.family.entropy(),
        unmeasured_bound: None,
        unmeasured_probs: unmeasured_probabilities(&estimate, povm, record),
        estimate,
        iterations,
        wall_time: start.elapsed(),
        maxent_state: Some(MaxEntState {
            lambdas: lambdas.as_slice().to_vec(),
            normalization: ev.family.normalization(),
            residual_norm: norm,
        }),
        stages: Vec::new(),
    })
}

/// No meaningful progress over the last window of accepted steps.
fn stalled(history: &[f64]) -> bool {
    history.len() > STALL_WINDOW
        && history[history.len() - 1] > 0.999 * history[history.len() - 1 - STALL_WINDOW]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm, hs_inner, logm};
    use crate::quantum::{
        born_probabilities, eigenbasis_projectors, qubit_sic_povm, sample_ginibre_state,
        tensor_povm,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn full_record(p: &[f64]) -> MeasurementRecord {
        MeasurementRecord::new(p.len(), p.iter().copied().enumerate().collect()).unwrap()
    }

    #[test]
    fn empty_record_gives_maximally_mixed() {
        let povm = qubit_sic_povm();
        let rep = maxent(
            &MeasurementRecord::empty(4),
            &povm,
            &EstimatorConfig::default(),
        )
        .unwrap();
        let diff =
            (rep.estimate.matrix() - DensityMatrix::maximally_mixed(2).matrix()).frobenius_norm();
        assert!(diff < 1e-14);
        assert_eq!(rep.iterations, 0);
        assert!((rep.objective_value - 2f64.ln()).abs() < 1e-14);
        assert!((rep.maxent_state.unwrap().normalization - 2.0).abs() < 1e-14);
    }

    #[test]
    fn state_matches_direct_matrix_exponential() {
        let povm = qubit_sic_povm();
        let lambdas = [0.3, -1.2, 2.0];
        let measured = [0, 1, 3];
        let (rho, n) = exponential_family_state(&povm, &measured, &lambdas).unwrap();
        let mut a = HermitianMatrix::zeros(2);
        for (&i, &l) in measured.iter().zip(&lambdas) {
            a = &a - &povm.effect(i).scale(l);
        }
        let e = expm(&a).unwrap();
        assert!((e.trace() - n).abs() < 1e-12);
        assert!((&e.scale(1.0 / n) - rho.matrix()).frobenius_norm() < 1e-12);
    }

    #[test]
    fn single_outcome_example() {
        // f_0 = 0.7 on a Z-basis POVM: ρ = diag(0.7, 0.3), λ = -ln(7/3).
        let povm = Povm::new(
            vec![
                HermitianMatrix::from_real_diagonal(&[1.0, 0.0]),
                HermitianMatrix::from_real_diagonal(&[0.0, 1.0]),
            ],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let rec = MeasurementRecord::new(2, vec![(0, 0.7)]).unwrap();
        let rep = maxent(&rec, &povm, &EstimatorConfig::default()).unwrap();
        let rho = rep.estimate.matrix();
        assert!((rho.get(0, 0).re - 0.7).abs() < 1e-10);
        assert!(rho.max_off_diagonal() < 1e-12);
        let lambda = rep.maxent_state.unwrap().lambdas[0];
        assert!((lambda + (0.7f64 / 0.3).ln()).abs() < 1e-8, "{lambda}");
    }

    #[test]
    fn log_of_estimate_lies_in_span_of_measured_effects() {
        let povm = tensor_povm(&qubit_sic_povm(), 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let rho = sample_ginibre_state(4, 2, &mut rng).unwrap();
        let p = born_probabilities(&rho, &povm).unwrap();
        let measured = [0usize, 2, 5, 7, 9, 12];
        let rec =
            MeasurementRecord::new(16, measured.iter().map(|&i| (i, p[i])).collect()).unwrap();
        let rep = maxent(&rec, &povm, &EstimatorConfig::default()).unwrap();
        let log = logm(rep.estimate.matrix()).unwrap();
        // Least-squares fit of log ρ onto {I, E_i : i ∈ I} in svec coordinates.
        let mut basis = vec![HermitianMatrix::identity(4).svec()];
        basis.extend(measured.iter().map(|&i| povm.effect(i).svec()));
        let b = DMatrix::from_columns(&basis);
        let target = log.svec();
        let coef = b.clone().svd(true, true).solve(&target, 1e-14).unwrap();
        let resid = (&b * coef - target).norm();
        assert!(resid < 1e-6, "{resid}");
        for (&i, &fi) in measured.iter().zip(rec.frequencies()) {
            let pi = hs_inner(povm.effect(i), rep.estimate.matrix()).unwrap();
            assert!((pi - fi).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let povm = qubit_sic_povm();
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let rho = sample_ginibre_state(2, 2, &mut rng).unwrap();
        let p = born_probabilities(&rho, &povm).unwrap();
        let rec = MeasurementRecord::new(4, vec![(0, p[0]), (1, p[1]), (3, p[3])]).unwrap();
        let lambdas = [0.4, -0.7, 1.1];
        let h = 1e-6;
        for (jac, res) in [
            (
                maxent_jacobian(&povm, &rec, &lambdas).unwrap(),
                maxent_residuals as fn(&Povm, &MeasurementRecord, &[f64]) -> _,
            ),
            (raw_jacobian(&povm, &rec, &lambdas).unwrap(), raw_residuals),
        ] {
            for k in 0..3 {
                let mut up = lambdas;
                let mut dn = lambdas;
                up[k] += h;
                dn[k] -= h;
                let ru = res(&povm, &rec, &up).unwrap();
                let rd = res(&povm, &rec, &dn).unwrap();
                for j in 0..3 {
                    let fd = (ru[j] - rd[j]) / (2.0 * h);
                    let rel = (fd - jac[(j, k)]).abs() / jac[(j, k)].abs().max(1e-8);
                    assert!(rel < 1e-5, "({j},{k}): fd {fd} analytic {}", jac[(j, k)]);
                }
            }
        }
    }

    #[test]
    fn eigenbasis_subset_spreads_missing_mass_uniformly() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let rho = sample_ginibre_state(4, 4, &mut rng).unwrap();
        let povm = eigenbasis_projectors(&rho).unwrap();
        let p = born_probabilities(&rho, &povm).unwrap();
        let rec = MeasurementRecord::new(4, vec![(0, p[0]), (2, p[2])]).unwrap();
        let rep = maxent(&rec, &povm, &EstimatorConfig::default()).unwrap();
        let expected = (1.0 - p[0] - p[2]) / 2.0;
        for c in &rep.unmeasured_probs {
            assert!((c - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_state_full_data_converges() {
        let povm = tensor_povm(&qubit_sic_povm(), 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let rho = sample_ginibre_state(4, 1, &mut rng).unwrap();
        let rec = full_record(&born_probabilities(&rho, &povm).unwrap());
        let rep = maxent(&rec, &povm, &EstimatorConfig::default()).unwrap();
        let diff = (rep.estimate.matrix() - rho.matrix()).frobenius_norm();
        assert!(diff < 1e-7, "{diff} after {} iterations", rep.iterations);
    }

    #[test]
    fn unattainable_data_reports_history() {
        let povm = Povm::new(
            vec![
                HermitianMatrix::from_real_diagonal(&[1.0, 0.0]),
                HermitianMatrix::from_real_diagonal(&[0.0, 1.0]),
            ],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let rec = MeasurementRecord::new_noisy(2, vec![(0, 0.9), (1, 0.9)]).unwrap();
        let cfg = EstimatorConfig {
            maxent_max_iter: 40,
            ..Default::default()
        };
        match maxent(&rec, &povm, &cfg) {
            Err(EstimatorError::MaxEntNonConvergence {
                final_residual,
                residual_history,
                ..
            }) => {
                assert!(final_residual > 0.5);
                assert_eq!(*residual_history.last().unwrap(), final_residual);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
