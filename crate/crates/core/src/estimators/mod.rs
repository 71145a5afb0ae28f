//! The four reconstruction methods plus the standalone likelihood stage.
//!
//! Every estimator maps a [`MeasurementRecord`] and the [`Povm`] it refers to
//! onto an [`EstimatorReport`].

mod maxent;
mod maxlik;
mod vqt;

pub use maxent::{
    exponential_family_state, maxent, maxent_jacobian, maxent_residuals, raw_jacobian,
    raw_residuals, MaxEntState,
};
pub use maxlik::{gaussian_log_likelihood, maxlik, maxlik_maxent, project_to_density};
pub use vqt::{vqt_inf, vqt_l1, vqt_problem};

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{hs_inner, LinalgError};
use crate::quantum::{DensityMatrix, MeasurementRecord, Povm, QuantumError};
use crate::sdp::{InfeasibilityCertificate, SdpError, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    VqtL1,
    VqtInf,
    MaxEnt,
    MaxLik,
    MaxLikMaxEnt,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::VqtL1,
        Method::VqtInf,
        Method::MaxEnt,
        Method::MaxLik,
        Method::MaxLikMaxEnt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::VqtL1 => "VQT_L1",
            Method::VqtInf => "VQT_INF",
            Method::MaxEnt => "MAXENT",
            Method::MaxLik => "MAXLIK",
            Method::MaxLikMaxEnt => "MAXLIK_MAXENT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| format!("unknown estimator '{s}'"))
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Optional upper bound on every Δ_i.
    pub delta_max: Option<f64>,
    /// Success when the MaxEnt residual norm is ≤ `maxent_tol · |I|`.
    pub maxent_tol: f64,
    pub maxent_max_iter: usize,
    /// Success when the projected-gradient norm is ≤ `maxlik_tol`.
    pub maxlik_tol: f64,
    pub maxlik_max_iter: usize,
    /// Floor ε_f applied to frequencies used as relative scales or weights.
    pub noise_floor: f64,
    pub solver: SolverOptions,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            delta_max: None,
            maxent_tol: 1e-10,
            maxent_max_iter: 500,
            maxlik_tol: 1e-9,
            maxlik_max_iter: 50_000,
            noise_floor: 1e-12,
            solver: SolverOptions::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let positive = [
            ("maxent_tol", self.maxent_tol),
            ("maxlik_tol", self.maxlik_tol),
            ("noise_floor", self.noise_floor),
            ("delta_max", self.delta_max.unwrap_or(1.0)),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(EstimatorError::InvalidConfig(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if self.maxent_max_iter == 0 || self.maxlik_max_iter == 0 {
            return Err(EstimatorError::InvalidConfig(
                "iteration caps must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("incompatible data: the SDP is infeasible")]
    IncompatibleData {
        certificate: InfeasibilityCertificate,
    },
    #[error(
        "SDP solver stopped without a certificate after {iterations} iterations \
         (primal residual {primal_residual:.3e}, gap {duality_gap:.3e})"
    )]
    SolverMaxIter {
        iterations: usize,
        primal_residual: f64,
        duality_gap: f64,
    },
    #[error(
        "MaxEnt did not converge after {iterations} iterations (residual {final_residual:.3e})"
    )]
    MaxEntNonConvergence {
        iterations: usize,
        final_residual: f64,
        residual_history: Vec<f64>,
    },
    #[error(
        "MaxLik hit the iteration cap {iterations} (projected-gradient norm {gradient_norm:.3e})"
    )]
    MaxLikMaxIter {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<EstimatorError>,
    },
}

/// Diagnostics of one stage of a multi-stage estimator.
#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: &'static str,
    pub iterations: usize,
    pub objective_value: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorReport {
    pub method: Method,
    pub estimate: DensityMatrix,
    /// Δ_i per measured index (SDP methods only).
    pub deltas: Vec<f64>,
    pub objective_value: f64,
    /// The auxiliary bound δ on unmeasured probabilities (VQT_INF only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unmeasured_bound: Option<f64>,
    /// `tr(E_i ρ̂)` for every unmeasured index, ascending.
    pub unmeasured_probs: Vec<f64>,
    pub iterations: usize,
    #[serde(rename = "wall_time_s", serialize_with = "seconds")]
    pub wall_time: Duration,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maxent_state: Option<MaxEntState>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageReport>,
}

fn seconds<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl EstimatorReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `tr(E_i ρ)` for the indices the record does not measure.
pub fn unmeasured_probabilities(
    rho: &DensityMatrix,
    povm: &Povm,
    record: &MeasurementRecord,
) -> Vec<f64> {
    record
        .unmeasured()
        .into_iter()
        .map(|i| hs_inner(povm.effect(i), rho.matrix()).expect("dims checked"))
        .collect()
}

pub fn estimate(
    method: Method,
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<EstimatorReport, EstimatorError> {
    match method {
        Method::VqtL1 => vqt_l1(record, povm, cfg),
        Method::VqtInf => vqt_inf(record, povm, cfg),
        Method::MaxEnt => maxent(record, povm, cfg),
        Method::MaxLik => maxlik(record, povm, cfg),
        Method::MaxLikMaxEnt => maxlik_maxent(record, povm, cfg),
    }
}

fn prepare(
    record: &MeasurementRecord,
    povm: &Povm,
    cfg: &EstimatorConfig,
) -> Result<(), EstimatorError> {
    cfg.validate()?;
    record.check_povm(povm)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("vqt-inf".parse::<Method>().unwrap(), Method::VqtInf);
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let bad = EstimatorConfig {
            maxent_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EstimatorConfig {
            delta_max: Some(-1.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
