//! Noise models for synthetic frequencies and figures of merit for estimates.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{eig_hermitian, hs_inner, HermitianMatrix, LinalgError};
use crate::quantum::{DensityMatrix, MeasurementRecord, Povm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("count vector has length {got}, expected {expected}")]
    CountLength { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Additive `N(0, σ²)` per outcome.
    Gaussian { sigma: f64 },
    /// Multiplicative `1 + U(-η, η)` per outcome.
    UniformPct { eta: f64 },
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self, MetricsError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(MetricsError::InvalidNoise(format!(
                "sigma must be > 0, got {sigma}"
            )));
        }
        Ok(NoiseModel::Gaussian { sigma })
    }

    pub fn uniform(eta: f64) -> Result<Self, MetricsError> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(MetricsError::InvalidNoise(format!(
                "eta must lie in (0, 1), got {eta}"
            )));
        }
        Ok(NoiseModel::UniformPct { eta })
    }

    /// One noisy draw per probability, clamped at zero and not renormalized.
    pub fn perturb<R: Rng + ?Sized>(&self, probs: &[f64], rng: &mut R) -> Vec<f64> {
        match *self {
            NoiseModel::Gaussian { sigma } => {
                let n = Normal::new(0.0, sigma).expect("sigma validated");
                probs.iter().map(|p| (p + n.sample(rng)).max(0.0)).collect()
            }
            NoiseModel::UniformPct { eta } => {
                let u = Uniform::new(-eta, eta).expect("eta validated");
                probs
                    .iter()
                    .map(|p| (p * (1.0 + u.sample(rng))).max(0.0))
                    .collect()
            }
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            NoiseModel::UniformPct { eta } => write!(f, "uniform:{}", eta * 100.0),
        }
    }
}

/// `gaussian:SIGMA` or `uniform:PCT` (percent, so `uniform:5` is η = 0.05).
impl FromStr for NoiseModel {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| MetricsError::InvalidNoise(format!("expected KIND:VALUE, got '{s}'")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| MetricsError::InvalidNoise(format!("bad number '{value}'")))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "gaussian" => NoiseModel::gaussian(v),
            "uniform" => NoiseModel::uniform(v / 100.0),
            other => Err(MetricsError::InvalidNoise(format!(
                "unknown kind '{other}'"
            ))),
        }
    }
}

/// `½ Σ |eig(a - b)|`.
pub fn trace_distance(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64, LinalgError> {
    if a.dim() != b.dim() {
        return Err(LinalgError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let eig = eig_hermitian(&(a - b))?;
    Ok(0.5 * eig.eigenvalues.iter().map(|w| w.abs()).sum::<f64>())
}

/// `-Σ w ln w` over the spectrum, with `0 ln 0 = 0` and round-off negatives dropped.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64, LinalgError> {
    Ok(rho
        .eigenvalues()?
        .into_iter()
        .filter(|&w| w > 0.0)
        .map(|w| -w * w.ln())
        .sum())
}

/// KL divergence of the normalized vector `c / Σ c` from the uniform
/// distribution on `c.len()` outcomes. Zero when there is no mass.
pub fn kl_to_uniform(c: &[f64]) -> f64 {
    let clipped: Vec<f64> = c.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 1e-14 {
        return 0.0;
    }
    let m = c.len() as f64;
    clipped
        .iter()
        .map(|x| x / total)
        .filter(|&q| q > 0.0)
        .map(|q| q * (q * m).ln())
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LikelihoodModel {
    /// Raw counts per measured outcome, in record order.
    Multinomial { counts: Vec<f64> },
    /// `-½ Σ (p_j - f_j)² / max(f_j, ε_f)`.
    GaussianVariant { noise_floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    /// Some outcome with positive count has zero probability.
    pub zero_probability: bool,
}

pub fn log_likelihood(
    rho: &DensityMatrix,
    povm: &Povm,
    record: &MeasurementRecord,
    model: &LikelihoodModel,
) -> Result<LogLikelihood, MetricsError> {
    let probs = record
        .measured()
        .iter()
        .map(|&i| hs_inner(povm.effect(i), rho.matrix()))
        .collect::<Result<Vec<f64>, _>>()?;
    match model {
        LikelihoodModel::Multinomial { counts } => {
            if counts.len() != probs.len() {
                return Err(MetricsError::CountLength {
                    expected: probs.len(),
                    got: counts.len(),
                });
            }
            let mut value = 0.0;
            let mut zero_probability = false;
            for (&n, &p) in counts.iter().zip(&probs) {
                if n == 0.0 {
                    continue;
                }
                if p <= 0.0 {
                    zero_probability = true;
                    value = f64::NEG_INFINITY;
                } else {
                    value += n * p.ln();
                }
            }
            Ok(LogLikelihood {
                value,
                zero_probability,
            })
        }
        LikelihoodModel::GaussianVariant { noise_floor } => {
            let value = -probs
                .iter()
                .zip(record.frequencies())
                .map(|(p, f)| 0.5 * (p - f).powi(2) / f.max(*noise_floor))
                .sum::<f64>();
            Ok(LogLikelihood {
                value,
                zero_probability: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::quantum::{born_probabilities, qubit_sic_povm, sample_ginibre_state};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn parses_noise_specs() {
        assert_eq!(
            "gaussian:1e-6".parse::<NoiseModel>().unwrap(),
            NoiseModel::Gaussian { sigma: 1e-6 }
        );
        assert_eq!(
            "uniform:5".parse::<NoiseModel>().unwrap(),
            NoiseModel::UniformPct { eta: 0.05 }
        );
        assert!("uniform:150".parse::<NoiseModel>().is_err());
        assert!("gaussian:0".parse::<NoiseModel>().is_err());
        assert!("poisson:1".parse::<NoiseModel>().is_err());
        assert!("gaussian".parse::<NoiseModel>().is_err());
    }

    #[test]
    fn gaussian_noise_has_requested_spread() {
        let model = NoiseModel::gaussian(0.01).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let p = vec![0.5; 20_000];
        let f = model.perturb(&p, &mut rng);
        let n = f.len() as f64;
        let mean = f.iter().sum::<f64>() / n;
        let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.5).abs() < 3.0 * 0.01 / n.sqrt() * 2.0);
        assert!((var.sqrt() - 0.01).abs() < 2e-4, "{}", var.sqrt());
    }

    #[test]
    fn uniform_noise_stays_in_band_and_clamps() {
        let model = NoiseModel::uniform(0.05).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let p = [0.2, 0.0, 0.8];
        for _ in 0..1000 {
            let f = model.perturb(&p, &mut rng);
            assert!(f[0] >= 0.19 && f[0] <= 0.21);
            assert_eq!(f[1], 0.0);
        }
        let g = NoiseModel::gaussian(1.0)
            .unwrap()
            .perturb(&[0.0; 100], &mut rng);
        assert!(g.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn trace_distance_examples() {
        let a = HermitianMatrix::from_real_diagonal(&[0.7, 0.3]);
        let b = HermitianMatrix::from_real_diagonal(&[0.5, 0.5]);
        assert_abs_diff_eq!(trace_distance(&a, &b).unwrap(), 0.2, epsilon = 1e-15);
        let up = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]);
        let down = HermitianMatrix::from_real_diagonal(&[0.0, 1.0]);
        assert_abs_diff_eq!(trace_distance(&up, &down).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
        assert!(trace_distance(&a, &HermitianMatrix::identity(3)).is_err());
    }

    #[test]
    fn entropy_examples() {
        let mixed = DensityMatrix::maximally_mixed(4);
        assert_abs_diff_eq!(
            von_neumann_entropy(&mixed).unwrap(),
            4f64.ln(),
            epsilon = 1e-14
        );
        let pure = DensityMatrix::new(HermitianMatrix::from_real_diagonal(&[1.0, 0.0])).unwrap();
        assert_eq!(von_neumann_entropy(&pure).unwrap(), 0.0);
        let rho = DensityMatrix::new(HermitianMatrix::from_real_diagonal(&[0.7, 0.3])).unwrap();
        let expected = -0.7 * 0.7f64.ln() - 0.3 * 0.3f64.ln();
        assert_abs_diff_eq!(
            von_neumann_entropy(&rho).unwrap(),
            expected,
            epsilon = 1e-14
        );
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_to_uniform(&[0.25, 0.25, 0.25]), 0.0);
        let expected = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert_abs_diff_eq!(kl_to_uniform(&[0.3, 0.1]), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_to_uniform(&[1.0, 0.0, 0.0]), 3f64.ln(), epsilon = 1e-15);
        assert_eq!(kl_to_uniform(&[]), 0.0);
        assert_eq!(kl_to_uniform(&[0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(kl_to_uniform(&[0.2, -1e-12]), 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn multinomial_likelihood_prefers_true_state() {
        let povm = qubit_sic_povm();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let truth = sample_ginibre_state(2, 1, &mut rng).unwrap();
        let p = born_probabilities(&truth, &povm).unwrap();
        let rec = MeasurementRecord::new(4, p.iter().copied().enumerate().collect()).unwrap();
        let counts: Vec<f64> = p.iter().map(|x| (x * 1000.0).round()).collect();
        let model = LikelihoodModel::Multinomial {
            counts: counts.clone(),
        };
        let total: f64 = counts.iter().sum();
        // Brute-force value Σ n ln p at the empirical distribution is the maximum
        // over probability vectors; the true state gets close to it.
        let best: f64 = counts
            .iter()
            .map(|n| if *n > 0.0 { n * (n / total).ln() } else { 0.0 })
            .sum();
        let ll_truth = log_likelihood(&truth, &povm, &rec, &model).unwrap().value;
        let ll_mixed = log_likelihood(&DensityMatrix::maximally_mixed(2), &povm, &rec, &model)
            .unwrap()
            .value;
        assert!(ll_truth <= best + 1e-9);
        assert!(ll_truth > ll_mixed);
    }

    #[test]
    fn zero_probability_is_flagged() {
        let povm = Povm::new(
            vec![
                HermitianMatrix::from_real_diagonal(&[1.0, 0.0]),
                HermitianMatrix::from_real_diagonal(&[0.0, 1.0]),
            ],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let rho = DensityMatrix::new(HermitianMatrix::from_real_diagonal(&[1.0, 0.0])).unwrap();
        let rec = MeasurementRecord::new(2, vec![(0, 0.5), (1, 0.5)]).unwrap();
        let ll = log_likelihood(
            &rho,
            &povm,
            &rec,
            &LikelihoodModel::Multinomial {
                counts: vec![5.0, 5.0],
            },
        )
        .unwrap();
        assert!(ll.zero_probability);
        assert_eq!(ll.value, f64::NEG_INFINITY);
        let g = log_likelihood(
            &rho,
            &povm,
            &rec,
            &LikelihoodModel::GaussianVariant { noise_floor: 1e-12 },
        )
        .unwrap();
        assert_abs_diff_eq!(g.value, -0.5, epsilon = 1e-14);
    }

    fn hermitian_strategy(d: usize) -> impl Strategy<Value = HermitianMatrix> {
        prop::collection::vec(-1.0..1.0f64, 2 * d * d).prop_map(move |v| {
            let m = DMatrix::from_fn(d, d, |i, j| C64::new(v[i * d + j], v[d * d + i * d + j]));
            HermitianMatrix::new((&m + m.adjoint()) * C64::new(0.5, 0.0)).unwrap()
        })
    }

    fn unitary_strategy(d: usize) -> impl Strategy<Value = DMatrix<C64>> {
        prop::collection::vec(-1.0..1.0f64, 2 * d * d).prop_map(move |v| {
            let m = DMatrix::from_fn(d, d, |i, j| C64::new(v[i * d + j], v[d * d + i * d + j]));
            m.qr().q()
        })
    }

    proptest! {
        #[test]
        fn trace_distance_triangle_inequality(
            a in hermitian_strategy(3), b in hermitian_strategy(3), c in hermitian_strategy(3)
        ) {
            let ab = trace_distance(&a, &b).unwrap();
            let bc = trace_distance(&b, &c).unwrap();
            let ac = trace_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!((ab - trace_distance(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn trace_distance_unitarily_invariant(
            a in hermitian_strategy(3), b in hermitian_strategy(3), u in unitary_strategy(3)
        ) {
            let rot = |h: &HermitianMatrix| HermitianMatrix::new(&u * h.as_matrix() * u.adjoint()).unwrap();
            let before = trace_distance(&a, &b).unwrap();
            let after = trace_distance(&rot(&a), &rot(&b)).unwrap();
            prop_assert!((before - after).abs() < 1e-10);
        }

        #[test]
        fn kl_is_nonnegative(c in prop::collection::vec(0.0..1.0f64, 1..8)) {
            prop_assert!(kl_to_uniform(&c) >= -1e-15);
            prop_assert!(kl_to_uniform(&c) <= (c.len() as f64).ln() + 1e-12);
        }
    }
}
