//! Batch experiments: seeded random states, nested measurement subsets,
//! estimator sweeps, CSV and JSON outputs.
//!
//! Randomness for trial `t` of rank `r` comes from a ChaCha20 stream keyed by
//! `SHA-256("tomoscope-trial" ‖ seed ‖ r ‖ t)` (integers as little-endian
//! u64). Each trial draws, in order: the state, the measurement order, then
//! the noise. Trials are therefore independent of scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::estimators::{estimate, EstimatorConfig, EstimatorReport, Method};
use crate::metrics::{kl_to_uniform, trace_distance, von_neumann_entropy, NoiseModel};
use crate::quantum::{
    born_probabilities, eigenbasis_projectors, measurement_order, qubit_sic_povm,
    record_from_order, sample_ginibre_state, tensor_povm, DensityMatrix, Povm, QuantumError,
};

pub const CSV_HEADER: &str =
    "rank,trial,k,estimator,trace_distance,entropy,kl_uniform,converged,iterations,wall_time_ms";
pub const VERSION: &str = env!("TOMOSCOPE_GIT_DESCRIBE");
pub const THREADS_ENV: &str = "TOMOSCOPE_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Convergence,
    Distance,
    Kl,
    Noisy,
}

impl RunKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunKind::Convergence => "convergence",
            RunKind::Distance => "distance",
            RunKind::Kl => "kl",
            RunKind::Noisy => "noisy",
        }
    }
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which POVM each trial measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PovmKind {
    /// n-fold tensor power of the qubit SIC-POVM.
    TensorSic,
    /// Projectors onto the eigenbasis of the trial's own state.
    Eigenbasis,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub qubits: usize,
    pub ranks: Vec<usize>,
    pub trials: usize,
    pub grid: Vec<usize>,
    pub estimators: Vec<Method>,
    pub noise: Option<NoiseModel>,
    pub threshold: f64,
    pub seed: u64,
    pub povm: PovmKind,
    /// Record per-row wall time. Off by default so outputs are reproducible.
    pub timings: bool,
    #[serde(skip)]
    pub estimator: EstimatorConfig,
}

impl ExperimentConfig {
    /// Two qubits, 100 trials, every k from 1 to 16.
    pub fn new(ranks: Vec<usize>, estimators: Vec<Method>) -> Self {
        Self {
            qubits: 2,
            ranks,
            trials: 100,
            grid: (1..=16).collect(),
            estimators,
            noise: None,
            threshold: 1e-4,
            seed: 0,
            povm: PovmKind::TensorSic,
            timings: false,
            estimator: EstimatorConfig::default(),
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    pub fn povm_size(&self) -> usize {
        match self.povm {
            PovmKind::TensorSic => 1 << (2 * self.qubits),
            PovmKind::Eigenbasis => self.dim(),
        }
    }

    pub fn validate(&self, kind: RunKind) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(1..=4).contains(&self.qubits) {
            return bad(format!("qubits must be in 1..=4, got {}", self.qubits));
        }
        if self.trials == 0 {
            return bad("trials must be ≥ 1".into());
        }
        if self.ranks.is_empty() || self.grid.is_empty() || self.estimators.is_empty() {
            return bad("ranks, grid and estimators must be non-empty".into());
        }
        let d = self.dim();
        if let Some(&r) = self.ranks.iter().find(|&&r| r == 0 || r > d) {
            return bad(format!("rank {r} outside 1..={d}"));
        }
        let m = self.povm_size();
        if let Some(&k) = self.grid.iter().find(|&&k| k > m) {
            return bad(format!("grid value {k} exceeds the POVM size {m}"));
        }
        if !(self.threshold > 0.0) {
            return bad("threshold must be > 0".into());
        }
        match kind {
            RunKind::Convergence if self.noise.is_some() => {
                return bad("the convergence run is noise-free".into())
            }
            RunKind::Noisy if self.noise.is_none() => {
                return bad("the noisy run needs a noise model".into())
            }
            _ => {}
        }
        self.estimator
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Seed of the per-trial ChaCha20 stream.
pub fn trial_seed(master_seed: u64, rank: usize, trial: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"tomoscope-trial");
    h.update(master_seed.to_le_bytes());
    h.update((rank as u64).to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub rank: usize,
    pub trial: usize,
    pub k: usize,
    pub estimator: Method,
    pub trace_distance: f64,
    pub entropy: f64,
    pub kl_uniform: f64,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_ms: Option<f64>,
    #[serde(skip)]
    pub error: Option<String>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Everything one trial needs: truth, POVM, frequencies, subset order.
pub struct TrialData {
    pub state: DensityMatrix,
    pub povm: Povm,
    pub frequencies: Vec<f64>,
    pub order: Vec<usize>,
}

pub fn trial_data(
    config: &ExperimentConfig,
    sic: Option<&Povm>,
    rank: usize,
    trial: usize,
) -> Result<TrialData, HarnessError> {
    let mut rng = ChaCha20Rng::from_seed(trial_seed(config.seed, rank, trial));
    let state = sample_ginibre_state(config.dim(), rank, &mut rng)?;
    let povm = match config.povm {
        PovmKind::TensorSic => sic.expect("tensor POVM prepared").clone(),
        PovmKind::Eigenbasis => eigenbasis_projectors(&state)?,
    };
    let probs = born_probabilities(&state, &povm)?;
    let order = measurement_order(povm.len(), &mut rng);
    let frequencies = match &config.noise {
        Some(noise) => noise.perturb(&probs, &mut rng),
        None => probs,
    };
    Ok(TrialData {
        state,
        povm,
        frequencies,
        order,
    })
}

fn evaluate(
    config: &ExperimentConfig,
    data: &TrialData,
    rank: usize,
    trial: usize,
    k: usize,
    method: Method,
) -> TrialResult {
    let start = Instant::now();
    let outcome = record_from_order(&data.frequencies, &data.order, k)
        .map_err(|e| e.to_string())
        .and_then(|rec| {
            estimate(method, &rec, &data.povm, &config.estimator).map_err(|e| e.to_string())
        })
        .and_then(|rep: EstimatorReport| {
            let td = trace_distance(rep.estimate.matrix(), data.state.matrix())
                .map_err(|e| e.to_string())?;
            let entropy = von_neumann_entropy(&rep.estimate).map_err(|e| e.to_string())?;
            Ok((
                td,
                entropy,
                kl_to_uniform(&rep.unmeasured_probs),
                rep.iterations,
            ))
        });
    let wall_time_ms = config.timings.then(|| start.elapsed().as_secs_f64() * 1e3);
    match outcome {
        Ok((td, entropy, kl, iterations)) => TrialResult {
            rank,
            trial,
            k,
            estimator: method,
            trace_distance: td,
            entropy,
            kl_uniform: kl,
            converged: td < config.threshold,
            iterations,
            wall_time_ms,
            error: None,
        },
        Err(e) => TrialResult {
            rank,
            trial,
            k,
            estimator: method,
            trace_distance: f64::NAN,
            entropy: f64::NAN,
            kl_uniform: f64::NAN,
            converged: false,
            iterations: 0,
            wall_time_ms,
            error: Some(e),
        },
    }
}

fn run_trial(
    config: &ExperimentConfig,
    kind: RunKind,
    sic: Option<&Povm>,
    rank: usize,
    trial: usize,
) -> Result<Vec<TrialResult>, HarnessError> {
    let data = trial_data(config, sic, rank, trial)?;
    let mut grid = config.grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let mut rows = Vec::new();
    for &method in &config.estimators {
        for &k in &grid {
            let row = evaluate(config, &data, rank, trial, k, method);
            let stop = kind == RunKind::Convergence && row.converged;
            rows.push(row);
            if stop {
                break;
            }
        }
    }
    Ok(rows)
}

fn thread_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config(format!("{THREADS_ENV}={v} is not a count")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))
}

/// Rows of one experiment, sorted by (rank, trial, k, estimator).
pub fn run_experiment(
    config: &ExperimentConfig,
    kind: RunKind,
) -> Result<Vec<TrialResult>, HarnessError> {
    config.validate(kind)?;
    let sic = match config.povm {
        PovmKind::TensorSic => Some(tensor_povm(&qubit_sic_povm(), config.qubits)?),
        PovmKind::Eigenbasis => None,
    };
    let jobs: Vec<(usize, usize)> = config
        .ranks
        .iter()
        .flat_map(|&r| (0..config.trials).map(move |t| (r, t)))
        .collect();
    let pool = thread_pool()?;
    let chunks = pool.install(|| {
        jobs.par_iter()
            .map(|&(r, t)| run_trial(config, kind, sic.as_ref(), r, t))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut rows: Vec<TrialResult> = chunks.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.rank, r.trial, r.k, r.estimator));
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

/// Per (rank, k, estimator) statistics over the successful trials.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub rank: usize,
    pub k: usize,
    pub estimator: Method,
    pub trials: usize,
    pub failures: usize,
    pub trace_distance: MeanSe,
    pub entropy: MeanSe,
    pub kl_uniform: MeanSe,
}

pub fn sweep_summary(rows: &[TrialResult]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(usize, usize, Method), Vec<&TrialResult>> = BTreeMap::new();
    for r in rows {
        cells.entry((r.rank, r.k, r.estimator)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((rank, k, estimator), rs)| {
            let ok: Vec<&TrialResult> = rs.iter().copied().filter(|r| !r.failed()).collect();
            let col = |f: fn(&TrialResult) -> f64| {
                MeanSe::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            CellSummary {
                rank,
                k,
                estimator,
                trials: ok.len(),
                failures: rs.len() - ok.len(),
                trace_distance: col(|r| r.trace_distance),
                entropy: col(|r| r.entropy),
                kl_uniform: col(|r| r.kl_uniform),
            }
        })
        .collect()
}

/// Minimal converging k per trial, and its worst / mean / best over trials.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceSummary {
    pub rank: usize,
    pub estimator: Method,
    pub trials: usize,
    pub converged_trials: usize,
    pub failures: usize,
    pub worst_k: Option<usize>,
    pub mean_k: Option<f64>,
    pub best_k: Option<usize>,
    /// `None` for trials that never reached the threshold on the grid.
    pub per_trial_k: Vec<Option<usize>>,
}

pub fn convergence_summary(rows: &[TrialResult]) -> Vec<ConvergenceSummary> {
    let mut groups: BTreeMap<(usize, Method), BTreeMap<usize, Vec<&TrialResult>>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.rank, r.estimator))
            .or_default()
            .entry(r.trial)
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((rank, estimator), trials)| {
            let mut failures = 0;
            let per_trial_k: Vec<Option<usize>> = trials
                .values()
                .map(|rs| {
                    failures += rs.iter().filter(|r| r.failed()).count();
                    rs.iter().filter(|r| r.converged).map(|r| r.k).min()
                })
                .collect();
            let ks: Vec<usize> = per_trial_k.iter().flatten().copied().collect();
            ConvergenceSummary {
                rank,
                estimator,
                trials: per_trial_k.len(),
                converged_trials: ks.len(),
                failures,
                worst_k: ks.iter().copied().max(),
                mean_k: (!ks.is_empty()).then(|| ks.iter().sum::<usize>() as f64 / ks.len() as f64),
                best_k: ks.iter().copied().min(),
                per_trial_k,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spearman {
    pub rho: f64,
    pub p_value: f64,
}

fn ranks_of(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            out[t] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with a two-sided t-approximation p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Spearman {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let (rx, ry) = (ranks_of(x), ranks_of(y));
    let mx = rx.iter().sum::<f64>() / n as f64;
    let my = ry.iter().sum::<f64>() / n as f64;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    let rho = cov / (vx * vy).sqrt();
    if n < 3 || !rho.is_finite() {
        return Spearman {
            rho,
            p_value: f64::NAN,
        };
    }
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Spearman { rho, p_value }
}

/// Trend of the mean trace distance over the grid, per (rank, estimator).
#[derive(Debug, Clone, Serialize)]
pub struct TrendSummary {
    pub rank: usize,
    pub estimator: Method,
    pub spearman: Spearman,
    pub full_data_trace_distance: Option<f64>,
}

pub fn trend_summary(cells: &[CellSummary], povm_size: usize) -> Vec<TrendSummary> {
    let mut groups: BTreeMap<(usize, Method), Vec<&CellSummary>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.rank, c.estimator)).or_default().push(c);
    }
    groups
        .into_iter()
        .map(|((rank, estimator), cs)| {
            let ks: Vec<f64> = cs.iter().map(|c| c.k as f64).collect();
            let td: Vec<f64> = cs.iter().map(|c| c.trace_distance.mean).collect();
            TrendSummary {
                rank,
                estimator,
                spearman: spearman(&ks, &td),
                full_data_trace_distance: cs
                    .iter()
                    .find(|c| c.k == povm_size)
                    .map(|c| c.trace_distance.mean),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub kind: RunKind,
    pub rows: usize,
    pub failures: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub convergence: Vec<ConvergenceSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<CellSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trends: Vec<TrendSummary>,
}

pub fn summarize(config: &ExperimentConfig, kind: RunKind, rows: &[TrialResult]) -> RunSummary {
    let failures = rows.iter().filter(|r| r.failed()).count();
    let mut s = RunSummary {
        kind,
        rows: rows.len(),
        failures,
        convergence: Vec::new(),
        cells: Vec::new(),
        trends: Vec::new(),
    };
    if kind == RunKind::Convergence {
        s.convergence = convergence_summary(rows);
    } else {
        s.cells = sweep_summary(rows);
        if kind == RunKind::Noisy {
            s.trends = trend_summary(&s.cells, config.povm_size());
        }
    }
    s
}

pub fn write_csv<W: std::io::Write>(rows: &[TrialResult], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: PathBuf::from("<csv>"),
        source,
    })?;
    Ok(())
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    version: &'static str,
    kind: RunKind,
    seed_derivation: &'static str,
    #[serde(flatten)]
    config: &'a ExperimentConfig,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `config.json` with the version stamp and seed derivation.
pub fn write_config(
    config: &ExperimentConfig,
    kind: RunKind,
    dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let echo = ConfigEcho {
        version: VERSION,
        kind,
        seed_derivation: "sha256(\"tomoscope-trial\" || seed || rank || trial), little-endian u64",
        config,
    };
    write_file(
        &dir.join("config.json"),
        serde_json::to_string_pretty(&echo)
            .expect("config serializes")
            .as_bytes(),
    )
}

/// Writes one `<kind>_rank<r>.csv` per rank plus `summary.json`; returns
/// the CSV paths.
pub fn write_results(
    config: &ExperimentConfig,
    kind: RunKind,
    rows: &[TrialResult],
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut paths = Vec::new();
    for &rank in &config.ranks {
        let path = dir.join(format!("{kind}_rank{rank}.csv"));
        let mut buf = Vec::new();
        let subset: Vec<TrialResult> = rows.iter().filter(|r| r.rank == rank).cloned().collect();
        write_csv(&subset, &mut buf)?;
        if subset.is_empty() {
            buf = format!("{CSV_HEADER}\n").into_bytes();
        }
        write_file(&path, &buf)?;
        paths.push(path);
    }
    let summary = summarize(config, kind, rows);
    write_file(
        &dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)
            .expect("summary serializes")
            .as_bytes(),
    )?;
    Ok(paths)
}
