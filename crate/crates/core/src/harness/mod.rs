//! Multi-seed experiment runner and artifact writer.

mod output;
mod plot;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::{run, Algorithm, GroundTruth, LearnerConfig, LearnerError, RunLedger};
use crate::mdp::{load_mdp, Mdp, MdpError};

pub use output::{read_averaged_csv, read_ledger, write_averaged_csv, write_ledger};
pub use plot::{plot_curves, PlotSeries};

/// True safety of the baseline reported for the example MDP in the paper.
pub const PAPER_BASELINE_SAFETY: f64 = 0.116;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("output directory {path} is not writable: {source}")]
    Unwritable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("plot error: {0}")]
    Plot(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProxyMode {
    /// Proxy set as declared in the model file.
    #[serde(rename = "declared")]
    Declared,
    /// Every living state is treated as a proxy state.
    #[serde(rename = "all-living")]
    AllLiving,
}

impl ProxyMode {
    pub fn tag(self) -> &'static str {
        match self {
            ProxyMode::Declared => "declared",
            ProxyMode::AllLiving => "all-living",
        }
    }

    pub fn other(self) -> Self {
        match self {
            ProxyMode::Declared => ProxyMode::AllLiving,
            ProxyMode::AllLiving => ProxyMode::Declared,
        }
    }

    pub fn apply(self, mdp: &Mdp) -> Mdp {
        match self {
            ProxyMode::Declared => mdp.clone(),
            ProxyMode::AllLiving => mdp.with_proxy(Vec::new()),
        }
    }
}

impl std::str::FromStr for ProxyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "declared" => Ok(ProxyMode::Declared),
            "all-living" => Ok(ProxyMode::AllLiving),
            other => Err(format!("unknown proxy mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp_path: PathBuf,
    pub algos: Vec<Algorithm>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub p: f64,
    pub delta: f64,
    pub eta: f64,
    pub proxy_mode: ProxyMode,
    pub output_dir: PathBuf,
    pub plot: bool,
    /// Multiplier on the confidence radii; 1 reproduces the algorithms as
    /// stated.
    pub radius_scale: f64,
}

impl ExperimentConfig {
    /// Example-MDP defaults: p = 0.5, δ = 0.01, η = 0.1, 2000 episodes,
    /// five seeds, both algorithms.
    pub fn new(mdp_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            mdp_path: mdp_path.into(),
            algos: vec![Algorithm::Psrl, Algorithm::ErPsrl],
            episodes: 2000,
            seeds: vec![1, 2, 3, 4, 5],
            p: 0.5,
            delta: 0.01,
            eta: 0.1,
            proxy_mode: ProxyMode::Declared,
            output_dir: output_dir.into(),
            plot: false,
            radius_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.episodes < 1 {
            return bad("episodes must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return bad("delta must lie in (0, 0.5)");
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad("eta must lie in (0, 1)");
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p must lie in (0, 1]");
        }
        if !(self.radius_scale.is_finite() && self.radius_scale >= 0.0) {
            return bad("radius scale must be finite and non-negative");
        }
        if self.algos.is_empty() {
            return bad("at least one algorithm is required");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        Ok(())
    }
}

/// Known-model optimum and baseline for the model's declared proxy set.
pub fn compute_ground_truth(mdp: &Mdp, p: f64, x0: usize) -> Result<GroundTruth, HarnessError> {
    Ok(GroundTruth::compute(mdp, p, x0)?)
}

/// One row of a seed-averaged curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedRow {
    pub k: usize,
    pub mean_objective_regret: f64,
    pub mean_constraint_regret: f64,
    pub mean_cumulative_regret: f64,
    pub std_cumulative_regret: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for a single value.
fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Averages ledgers of equal length episode by episode.
pub fn average(ledgers: &[RunLedger]) -> Vec<AveragedRow> {
    let len = ledgers.iter().map(RunLedger::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let r: Vec<f64> = ledgers.iter().map(|l| l.records[i].objective_regret).collect();
            let c: Vec<f64> = ledgers.iter().map(|l| l.records[i].constraint_regret).collect();
            let cum: Vec<f64> = ledgers.iter().map(|l| l.cumulative_regret[i]).collect();
            AveragedRow {
                k: ledgers[0].records[i].k,
                mean_objective_regret: mean(&r),
                mean_constraint_regret: mean(&c),
                mean_cumulative_regret: mean(&cum),
                std_cumulative_regret: std_dev(&cum),
            }
        })
        .collect()
}

/// All seeds of one algorithm under one proxy mode.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub proxy_mode: ProxyMode,
    pub truth: GroundTruth,
    pub ledgers: Vec<RunLedger>,
    pub averaged: Vec<AveragedRow>,
}

impl AlgorithmRun {
    pub fn final_cumulative_regret(&self) -> f64 {
        self.averaged.last().map_or(0.0, |r| r.mean_cumulative_regret)
    }

    /// Seed-averaged cumulative regret after `k` episodes.
    pub fn cumulative_regret_at(&self, k: usize) -> f64 {
        self.averaged[k - 1].mean_cumulative_regret
    }

    /// Largest true safety of any deployed policy.
    pub fn max_deployed_safety(&self) -> f64 {
        self.ledgers
            .iter()
            .flat_map(|l| l.records.iter().map(|r| r.true_safety))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of deployed policies whose true safety exceeds `p + tol`.
    pub fn safety_violations(&self, tol: f64) -> usize {
        self.ledgers
            .iter()
            .flat_map(|l| &l.records)
            .filter(|r| r.true_safety > self.truth.p + tol)
            .count()
    }

    /// Fraction of episodes in which the program produced the policy.
    pub fn feasible_fraction(&self) -> f64 {
        let total: usize = self.ledgers.iter().map(RunLedger::len).sum();
        let feasible = self
            .ledgers
            .iter()
            .flat_map(|l| &l.records)
            .filter(|r| r.feasible)
            .count();
        if total == 0 {
            0.0
        } else {
            feasible as f64 / total as f64
        }
    }
}

/// Runs one algorithm for every configured seed under the given proxy mode.
pub fn run_algorithm(
    mdp: &Mdp,
    algorithm: Algorithm,
    proxy_mode: ProxyMode,
    config: &ExperimentConfig,
) -> Result<AlgorithmRun, HarnessError> {
    let model = proxy_mode.apply(mdp);
    let truth = compute_ground_truth(&model, config.p, model.initial_state())?;
    let mut learner = LearnerConfig::new(
        algorithm,
        &truth,
        model.t_max(),
        config.delta,
        config.eta,
        config.episodes,
    )?;
    learner.radius_scale = config.radius_scale;
    let ledgers = run(&model, &truth, learner, config.episodes, &config.seeds)?;
    let averaged = average(&ledgers);
    Ok(AlgorithmRun {
        algorithm,
        proxy_mode,
        truth,
        ledgers,
        averaged,
    })
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub truth: GroundTruth,
    pub runs: Vec<AlgorithmRun>,
    /// ER-pSRL under the other proxy mode, present when plotting.
    pub ablation: Option<AlgorithmRun>,
}

impl ExperimentResults {
    pub fn run_for(&self, algorithm: Algorithm) -> Option<&AlgorithmRun> {
        self.runs.iter().find(|r| r.algorithm == algorithm)
    }
}

fn check_writable(dir: &Path) -> Result<(), HarnessError> {
    let unwritable = |source| HarnessError::Unwritable {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(unwritable)?;
    let probe = dir.join(".write-probe");
    std::fs::write(&probe, b"").map_err(unwritable)?;
    std::fs::remove_file(&probe).map_err(unwritable)
}

/// Loads the model, runs every configured algorithm and writes ledgers,
/// averaged CSVs, `summary.json` and (optionally) plots to the output
/// directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults, HarnessError> {
    config.validate()?;
    check_writable(&config.output_dir)?;
    let mdp = load_mdp(&config.mdp_path)?;
    let results = execute(config, &mdp)?;
    output::write_results(&results)?;
    if config.plot {
        plot::write_figures(&results)?;
    }
    Ok(results)
}

/// Runs the experiment in memory without touching the file system.
pub fn execute(config: &ExperimentConfig, mdp: &Mdp) -> Result<ExperimentResults, HarnessError> {
    config.validate()?;
    let model = config.proxy_mode.apply(mdp);
    let truth = compute_ground_truth(&model, config.p, model.initial_state())?;
    let mut algos = config.algos.clone();
    algos.dedup();
    let mut runs = Vec::with_capacity(algos.len());
    for &algorithm in &algos {
        log::info!("running {algorithm} ({} proxy)", config.proxy_mode.tag());
        runs.push(run_algorithm(mdp, algorithm, config.proxy_mode, config)?);
    }
    let ablation = if config.plot {
        let mode = config.proxy_mode.other();
        log::info!("running er-psrl ({} proxy) for the ablation", mode.tag());
        Some(run_algorithm(mdp, Algorithm::ErPsrl, mode, config)?)
    } else {
        None
    };
    Ok(ExperimentResults {
        config: config.clone(),
        truth,
        runs,
        ablation,
    })
}
