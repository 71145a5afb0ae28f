//! States, POVMs, random state sampling and measurement records.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{eig_hermitian, hs_inner, HermitianMatrix, LinalgError, C64, TOLERANCES};

/// Largest Hilbert-space dimension `tensor_povm` builds by default.
pub const MAX_TENSOR_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("trace {trace} is not 1")]
    Trace { trace: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("rank {rank} out of range for dimension {dim}")]
    RankOutOfRange { rank: usize, dim: usize },
    #[error("POVM needs at least one effect")]
    EmptyPovm,
    #[error("effect {index} is not PSD (min eigenvalue {min_eigenvalue})")]
    EffectNotPsd { index: usize, min_eigenvalue: f64 },
    #[error("effects do not sum to the identity (Frobenius error {error})")]
    Incomplete { error: f64 },
    #[error("{effects} effects but {labels} labels")]
    LabelCount { effects: usize, labels: usize },
    #[error("tensor power needs n >= 1")]
    ZeroQubits,
    #[error("tensor POVM dimension {dim} exceeds cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("measured index {index} out of range for POVM of size {povm_size}")]
    IndexOutOfRange { index: usize, povm_size: usize },
    #[error("measured index {index} appears more than once")]
    DuplicateIndex { index: usize },
    #[error("frequency {frequency} at index {index} is negative or not finite")]
    BadFrequency { index: usize, frequency: f64 },
    #[error("measured frequencies sum to {total}, exceeding 1")]
    MassExceeded { total: f64 },
    #[error("subset size {k} out of range 1..={povm_size}")]
    SubsetSize { k: usize, povm_size: usize },
    #[error("record refers to a POVM of size {record}, but the POVM has {povm} effects")]
    PovmSizeMismatch { record: usize, povm: usize },
}

/// Hermitian, PSD, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: HermitianMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: HermitianMatrix) -> Result<Self, QuantumError> {
        let trace = matrix.trace();
        if (trace - 1.0).abs() > TOLERANCES.trace {
            return Err(QuantumError::Trace { trace });
        }
        let min_eigenvalue = matrix.min_eigenvalue()?;
        if min_eigenvalue < -TOLERANCES.psd {
            return Err(QuantumError::NotPsd { min_eigenvalue });
        }
        Ok(Self { matrix })
    }

    /// Divides by the trace, then validates.
    pub fn normalized(matrix: HermitianMatrix) -> Result<Self, QuantumError> {
        let trace = matrix.trace();
        if !(trace > 0.0) || !trace.is_finite() {
            return Err(QuantumError::Trace { trace });
        }
        Self::new(matrix.scale(1.0 / trace))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: HermitianMatrix::identity(d).scale(1.0 / d as f64),
        }
    }

    pub fn pure(psi: &DVector<C64>) -> Result<Self, QuantumError> {
        Self::normalized(HermitianMatrix::outer(psi))
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>, LinalgError> {
        Ok(eig_hermitian(&self.matrix)?.eigenvalues)
    }

    /// Number of eigenvalues above the rank threshold.
    pub fn rank(&self) -> Result<usize, LinalgError> {
        Ok(self
            .eigenvalues()?
            .into_iter()
            .filter(|&w| w > TOLERANCES.rank_threshold)
            .count())
    }
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.matrix.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let m = HermitianMatrix::deserialize(deserializer)?;
        DensityMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

/// Ordered PSD effects summing to the identity.
#[derive(Debug, Clone)]
pub struct Povm {
    effects: Vec<HermitianMatrix>,
    labels: Vec<String>,
    // Row i is svec(E_i); Born probabilities become a single mat-vec.
    frame: DMatrix<f64>,
}

impl Povm {
    pub fn new(effects: Vec<HermitianMatrix>, labels: Vec<String>) -> Result<Self, QuantumError> {
        if effects.is_empty() {
            return Err(QuantumError::EmptyPovm);
        }
        if labels.len() != effects.len() {
            return Err(QuantumError::LabelCount {
                effects: effects.len(),
                labels: labels.len(),
            });
        }
        let d = effects[0].dim();
        let mut total = HermitianMatrix::zeros(d);
        for (index, e) in effects.iter().enumerate() {
            if e.dim() != d {
                return Err(LinalgError::DimensionMismatch {
                    left: d,
                    right: e.dim(),
                }
                .into());
            }
            let min_eigenvalue = e.min_eigenvalue()?;
            if min_eigenvalue < -TOLERANCES.psd {
                return Err(QuantumError::EffectNotPsd {
                    index,
                    min_eigenvalue,
                });
            }
            total = &total + e;
        }
        let error = (&total - &HermitianMatrix::identity(d)).frobenius_norm();
        if error > TOLERANCES.povm_completeness {
            return Err(QuantumError::Incomplete { error });
        }
        let mut frame = DMatrix::zeros(effects.len(), d * d);
        for (i, e) in effects.iter().enumerate() {
            frame.set_row(i, &e.svec().transpose());
        }
        Ok(Self {
            effects,
            labels,
            frame,
        })
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn effects(&self) -> &[HermitianMatrix] {
        &self.effects
    }

    pub fn effect(&self, i: usize) -> &HermitianMatrix {
        &self.effects[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// `M × d²` matrix whose rows are the effects in svec coordinates.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Sum of the effects not listed in `measured`.
    pub fn complement_sum(&self, measured: &[usize]) -> HermitianMatrix {
        let mut mask = vec![false; self.len()];
        for &i in measured {
            mask[i] = true;
        }
        let mut h = HermitianMatrix::zeros(self.dim());
        for (i, e) in self.effects.iter().enumerate() {
            if !mask[i] {
                h = &h + e;
            }
        }
        h
    }
}

#[derive(Serialize, Deserialize)]
struct PovmRepr {
    effects: Vec<HermitianMatrix>,
    #[serde(default)]
    labels: Vec<String>,
}

impl Serialize for Povm {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PovmRepr {
            effects: self.effects.clone(),
            labels: self.labels.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PovmRepr::deserialize(deserializer)?;
        let labels = if repr.labels.is_empty() {
            (0..repr.effects.len()).map(|i| i.to_string()).collect()
        } else {
            repr.labels
        };
        Povm::new(repr.effects, labels).map_err(serde::de::Error::custom)
    }
}

/// Measured indices and their observed frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    povm_size: usize,
    measured: Vec<usize>,
    frequencies: Vec<f64>,
}

impl MeasurementRecord {
    /// Entries may come in any order; they are sorted by index.
    pub fn new(povm_size: usize, entries: Vec<(usize, f64)>) -> Result<Self, QuantumError> {
        let rec = Self::new_noisy(povm_size, entries)?;
        let total = rec.total_frequency();
        if total > 1.0 + TOLERANCES.frequency_mass_slack {
            return Err(QuantumError::MassExceeded { total });
        }
        Ok(rec)
    }

    /// Like [`MeasurementRecord::new`] but without the `Σ f ≤ 1` check, for
    /// perturbed data whose total may drift above one.
    pub fn new_noisy(
        povm_size: usize,
        mut entries: Vec<(usize, f64)>,
    ) -> Result<Self, QuantumError> {
        entries.sort_by_key(|&(i, _)| i);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(QuantumError::DuplicateIndex { index: w[0].0 });
            }
        }
        for &(index, frequency) in &entries {
            if index >= povm_size {
                return Err(QuantumError::IndexOutOfRange { index, povm_size });
            }
            if !(frequency >= 0.0) || !frequency.is_finite() {
                return Err(QuantumError::BadFrequency { index, frequency });
            }
        }
        let (measured, frequencies) = entries.into_iter().unzip();
        Ok(Self {
            povm_size,
            measured,
            frequencies,
        })
    }

    pub fn empty(povm_size: usize) -> Self {
        Self {
            povm_size,
            measured: Vec::new(),
            frequencies: Vec::new(),
        }
    }

    pub fn povm_size(&self) -> usize {
        self.povm_size
    }

    pub fn measured(&self) -> &[usize] {
        &self.measured
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.measured.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measured.is_empty()
    }

    pub fn total_frequency(&self) -> f64 {
        self.frequencies.iter().sum()
    }

    /// Indices not in the record, ascending.
    pub fn unmeasured(&self) -> Vec<usize> {
        let mut mask = vec![false; self.povm_size];
        for &i in &self.measured {
            mask[i] = true;
        }
        (0..self.povm_size).filter(|&i| !mask[i]).collect()
    }

    /// Same indices, new frequencies (in index order).
    pub fn with_frequencies(&self, frequencies: Vec<f64>) -> Result<Self, QuantumError> {
        assert_eq!(frequencies.len(), self.measured.len());
        Self::new_noisy(
            self.povm_size,
            self.measured.iter().copied().zip(frequencies).collect(),
        )
    }

    pub fn check_povm(&self, povm: &Povm) -> Result<(), QuantumError> {
        if self.povm_size != povm.len() {
            return Err(QuantumError::PovmSizeMismatch {
                record: self.povm_size,
                povm: povm.len(),
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RecordEntry {
    index: usize,
    frequency: f64,
}

#[derive(Serialize, Deserialize)]
struct RecordRepr {
    povm_size: usize,
    entries: Vec<RecordEntry>,
}

impl Serialize for MeasurementRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RecordRepr {
            povm_size: self.povm_size,
            entries: self
                .measured
                .iter()
                .zip(&self.frequencies)
                .map(|(&index, &frequency)| RecordEntry { index, frequency })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MeasurementRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = RecordRepr::deserialize(deserializer)?;
        MeasurementRecord::new_noisy(
            repr.povm_size,
            repr.entries
                .into_iter()
                .map(|e| (e.index, e.frequency))
                .collect(),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Random rank-`r` state `GG†/tr(GG†)` with `G` a d×r complex Ginibre matrix.
/// For `r = d` this is the Hilbert–Schmidt measure; for `r = 1` a Haar-random
/// pure state.
pub fn sample_ginibre_state<R: Rng + ?Sized>(
    d: usize,
    rank: usize,
    rng: &mut R,
) -> Result<DensityMatrix, QuantumError> {
    if rank == 0 || rank > d {
        return Err(QuantumError::RankOutOfRange { rank, dim: d });
    }
    let mut g = DMatrix::<C64>::zeros(d, rank);
    // Column-major fill order is part of the reproducibility contract.
    for c in 0..rank {
        for r in 0..d {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[(r, c)] = C64::new(re, im);
        }
    }
    let m = HermitianMatrix::new(&g * g.adjoint())?;
    DensityMatrix::normalized(m)
}

/// The tetrahedral qubit SIC-POVM: `E_k = (I + n_k·σ)/4`.
pub fn qubit_sic_povm() -> Povm {
    let s = 1.0 / 3f64.sqrt();
    let bloch = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
    let effects = bloch
        .iter()
        .map(|&[x, y, z]| {
            let m = DMatrix::from_row_slice(
                2,
                2,
                &[
                    C64::new(1.0 + z, 0.0),
                    C64::new(x, -y),
                    C64::new(x, y),
                    C64::new(1.0 - z, 0.0),
                ],
            );
            HermitianMatrix::from_matrix_unchecked(m * C64::new(0.25, 0.0))
        })
        .collect();
    let labels = (0..4).map(|i| i.to_string()).collect();
    Povm::new(effects, labels).expect("tetrahedral SIC is a valid POVM")
}

/// n-fold tensor power of `base` with lexicographic effect order.
pub fn tensor_povm(base: &Povm, n: usize) -> Result<Povm, QuantumError> {
    tensor_povm_with_cap(base, n, MAX_TENSOR_DIM)
}

pub fn tensor_povm_with_cap(base: &Povm, n: usize, cap: usize) -> Result<Povm, QuantumError> {
    if n == 0 {
        return Err(QuantumError::ZeroQubits);
    }
    let dim = base
        .dim()
        .checked_pow(n as u32)
        .filter(|&d| d <= cap)
        .ok_or(QuantumError::TooLarge {
            dim: base.dim().saturating_pow(n as u32),
            cap,
        })?;
    debug_assert!(dim <= cap);
    let mut effects = base.effects().to_vec();
    let mut labels = base.labels().to_vec();
    for _ in 1..n {
        let mut next_e = Vec::with_capacity(effects.len() * base.len());
        let mut next_l = Vec::with_capacity(effects.len() * base.len());
        for (e, l) in effects.iter().zip(&labels) {
            for (b, bl) in base.effects().iter().zip(base.labels()) {
                next_e.push(e.kron(b));
                next_l.push(format!("{l}{bl}"));
            }
        }
        effects = next_e;
        labels = next_l;
    }
    Povm::new(effects, labels)
}

/// Rank-one projectors onto the eigenvectors of `rho`, descending eigenvalue
/// order (stable for ties).
pub fn eigenbasis_projectors(rho: &DensityMatrix) -> Result<Povm, QuantumError> {
    let eig = eig_hermitian(rho.matrix())?;
    let d = eig.dim();
    // Ascending order reversed; ties keep ascending-index order among equals.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let effects = order
        .iter()
        .map(|&k| HermitianMatrix::outer(&eig.eigenvector(k)))
        .collect();
    let labels = (0..d).map(|i| format!("P{i}")).collect();
    Povm::new(effects, labels)
}

/// Born-rule probabilities `tr(E_i ρ)`, clipped to `[0, 1]`.
pub fn born_probabilities(rho: &DensityMatrix, povm: &Povm) -> Result<Vec<f64>, QuantumError> {
    if rho.dim() != povm.dim() {
        return Err(LinalgError::DimensionMismatch {
            left: rho.dim(),
            right: povm.dim(),
        }
        .into());
    }
    povm.effects()
        .iter()
        .map(|e| Ok(hs_inner(e, rho.matrix())?.clamp(0.0, 1.0)))
        .collect()
}

/// A uniformly random ordering of `0..povm_size`. Its prefixes are the nested
/// measurement subsets used by the experiments.
pub fn measurement_order<R: Rng + ?Sized>(povm_size: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..povm_size).collect();
    order.shuffle(rng);
    order
}

/// Record over the first `k` indices of `order` with frequencies from `freqs`.
/// `k = 0` gives the empty record.
pub fn record_from_order(
    freqs: &[f64],
    order: &[usize],
    k: usize,
) -> Result<MeasurementRecord, QuantumError> {
    if k > order.len() {
        return Err(QuantumError::SubsetSize {
            k,
            povm_size: order.len(),
        });
    }
    MeasurementRecord::new_noisy(
        freqs.len(),
        order[..k].iter().map(|&i| (i, freqs[i])).collect(),
    )
}

/// `k` indices drawn uniformly without replacement, with `f_i = p_i`.
/// Calls with the same RNG state and growing `k` give nested subsets.
pub fn subset_record<R: Rng + ?Sized>(
    p: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<MeasurementRecord, QuantumError> {
    if k == 0 || k > p.len() {
        return Err(QuantumError::SubsetSize {
            k,
            povm_size: p.len(),
        });
    }
    let order = measurement_order(p.len(), rng);
    let rec = record_from_order(p, &order, k)?;
    MeasurementRecord::new(
        rec.povm_size,
        rec.measured.into_iter().zip(rec.frequencies).collect(),
    )
}
