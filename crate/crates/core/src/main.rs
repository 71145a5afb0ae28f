use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use tomoscope::estimators::{estimate, EstimatorConfig, Method};
use tomoscope::harness::{
    run_experiment, summarize, write_config, write_results, ExperimentConfig, PovmKind, RunKind,
    VERSION,
};
use tomoscope::metrics::{trace_distance, NoiseModel};
use tomoscope::quantum::{qubit_sic_povm, tensor_povm, DensityMatrix, MeasurementRecord, Povm};

const LARGE_GRID: [usize; 10] = [1, 16, 32, 64, 96, 128, 160, 192, 224, 256];
const LARGE_TRIALS: usize = 20;

#[derive(Parser)]
#[command(name = "tomoscope", version = VERSION, about = "Quantum state tomography from incomplete SIC-POVM data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smallest k at which each estimate falls under the threshold.
    Convergence(RunArgs),
    /// Trace distance and entropy against k.
    Distance(RunArgs),
    /// KL divergence of the unmeasured distribution to uniform against k.
    Kl(RunArgs),
    /// Trace distance against k with perturbed probabilities.
    Noisy(RunArgs),
    /// Reconstruct one state from a measurement record.
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    qubits: Option<usize>,
    /// Comma-separated ranks; `a-b` ranges are allowed.
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated k values; `a-b` ranges are allowed.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated estimator names, e.g. vqt_inf,maxent.
    #[arg(long)]
    estimators: Option<String>,
    /// gaussian:SIGMA or uniform:PCT
    #[arg(long)]
    noise: Option<NoiseModel>,
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to results/<subcommand>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Four qubits, 20 trials per rank and a sparse k grid.
    #[arg(long)]
    large: bool,
    /// Measure the tensor SIC-POVM or each state's own eigenbasis.
    #[arg(long, default_value = "sic", value_parser = parse_povm_kind)]
    povm: PovmKind,
    /// Fill the wall_time_ms column (makes CSVs run-dependent).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Measurement record JSON: {"povm_size": M, "entries": [{"index", "frequency"}, ...]}.
    #[arg(long)]
    record: PathBuf,
    #[arg(long, default_value = "maxent")]
    estimator: Method,
    /// Use the n-qubit tensor SIC-POVM.
    #[arg(
        long,
        conflicts_with = "povm_file",
        required_unless_present = "povm_file"
    )]
    qubits: Option<usize>,
    /// POVM JSON: {"effects": [{"dim", "entries"}, ...], "labels": [...]}.
    #[arg(long)]
    povm_file: Option<PathBuf>,
    /// Density matrix JSON to report the trace distance against.
    #[arg(long)]
    reference: Option<PathBuf>,
}

fn parse_povm_kind(s: &str) -> Result<PovmKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "sic" => Ok(PovmKind::TensorSic),
        "eigenbasis" => Ok(PovmKind::Eigenbasis),
        _ => Err(format!("unknown POVM {s:?} (expected sic or eigenbasis)")),
    }
}

fn parse_list(s: &str) -> anyhow::Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
                anyhow::ensure!(a <= b, "empty range {item}");
                out.extend(a..=b);
            }
            None => out.push(item.parse()?),
        }
    }
    anyhow::ensure!(!out.is_empty(), "empty list");
    Ok(out)
}

fn default_estimators(kind: RunKind) -> Vec<Method> {
    match kind {
        RunKind::Convergence | RunKind::Distance => vec![Method::VqtInf, Method::MaxEnt],
        RunKind::Kl => vec![
            Method::VqtL1,
            Method::VqtInf,
            Method::MaxEnt,
            Method::MaxLikMaxEnt,
        ],
        RunKind::Noisy => vec![Method::VqtInf, Method::MaxLikMaxEnt],
    }
}

fn default_ranks(kind: RunKind, d: usize) -> Vec<usize> {
    match kind {
        RunKind::Convergence => (1..=d.min(4)).collect(),
        RunKind::Kl => vec![1, 3.min(d)],
        RunKind::Distance | RunKind::Noisy => vec![1],
    }
}

fn build_config(kind: RunKind, args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let estimators = match &args.estimators {
        Some(list) => list
            .split(',')
            .map(|m| m.trim().parse::<Method>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(anyhow::Error::msg)?,
        None => default_estimators(kind),
    };
    let mut cfg = ExperimentConfig::new(Vec::new(), estimators);
    if args.large {
        cfg.qubits = 4;
        cfg.trials = LARGE_TRIALS;
        cfg.grid = LARGE_GRID.to_vec();
    }
    if let Some(n) = args.qubits {
        cfg.qubits = n;
        if !args.large {
            cfg.grid = (1..=(1usize << (2 * n.min(4)))).collect();
        }
    }
    cfg.povm = args.povm;
    if cfg.povm == PovmKind::Eigenbasis && args.grid.is_none() {
        cfg.grid = (1..=cfg.dim()).collect();
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(g) = &args.grid {
        cfg.grid = parse_list(g).context("--grid")?;
    }
    cfg.ranks = match &args.ranks {
        Some(r) => parse_list(r).context("--ranks")?,
        None => default_ranks(kind, cfg.dim()),
    };
    cfg.ranks.dedup();
    cfg.noise = args.noise;
    cfg.threshold = args.threshold;
    cfg.seed = args.seed;
    cfg.timings = args.timings;
    cfg.validate(kind)?;
    Ok(cfg)
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn run(kind: RunKind, args: &RunArgs) -> Result<(), Failure> {
    let cfg = build_config(kind, args).map_err(Failure::Config)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| Path::new("results").join(kind.as_str()));
    write_config(&cfg, kind, &out).map_err(|e| Failure::Run(e.into()))?;
    let rows = run_experiment(&cfg, kind).map_err(|e| Failure::Run(e.into()))?;
    let paths = write_results(&cfg, kind, &rows, &out).map_err(|e| Failure::Run(e.into()))?;
    let summary = summarize(&cfg, kind, &rows);
    for p in &paths {
        println!("wrote {}", p.display());
    }
    if summary.failures > 0 {
        eprintln!("{} of {} estimates failed", summary.failures, summary.rows);
    }
    if !rows.is_empty() && summary.failures == summary.rows {
        return Err(Failure::Run(anyhow::anyhow!("every estimate failed")));
    }
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_estimate(args: &EstimateArgs) -> Result<(), Failure> {
    let load = || -> anyhow::Result<(MeasurementRecord, Povm, Option<DensityMatrix>)> {
        let record: MeasurementRecord = read_json(&args.record)?;
        let povm = match (&args.povm_file, args.qubits) {
            (Some(path), _) => read_json(path)?,
            (None, Some(n)) => {
                anyhow::ensure!((1..=4).contains(&n), "--qubits must be in 1..=4");
                tensor_povm(&qubit_sic_povm(), n)?
            }
            (None, None) => anyhow::bail!("either --qubits or --povm-file is required"),
        };
        let reference = args.reference.as_deref().map(read_json).transpose()?;
        Ok((record, povm, reference))
    };
    let (record, povm, reference) = load().map_err(Failure::Config)?;
    let report = estimate(args.estimator, &record, &povm, &EstimatorConfig::default())
        .map_err(|e| Failure::Run(e.into()))?;
    let mut json = serde_json::to_value(&report).expect("report serializes");
    if let Some(reference) = reference {
        let td = trace_distance(report.estimate.matrix(), reference.matrix())
            .context("comparing with the reference")
            .map_err(Failure::Config)?;
        json["reference_trace_distance"] = td.into();
    }
    println!("{}", serde_json::to_string_pretty(&json).expect("json"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Convergence(a) => run(RunKind::Convergence, a),
        Command::Distance(a) => run(RunKind::Distance, a),
        Command::Kl(a) => run(RunKind::Kl, a),
        Command::Noisy(a) => run(RunKind::Noisy, a),
        Command::Estimate(a) => run_estimate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
