use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AlgorithmRun, AveragedRow, ExperimentResults, HarnessError, PAPER_BASELINE_SAFETY};
use crate::learner::{Algorithm, EpisodeRecord, GroundTruth, RunLedger};

#[derive(Serialize, Deserialize)]
struct LedgerLine {
    seed: u64,
    algo: Algorithm,
    #[serde(flatten)]
    record: EpisodeRecord,
    cumulative_regret: f64,
    episode_length: usize,
    hit_unsafe: bool,
}

/// Writes a ledger as newline-delimited JSON, one episode per line.
pub fn write_ledger(path: &Path, ledger: &RunLedger) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (record, &cum) in ledger.records.iter().zip(&ledger.cumulative_regret) {
        let line = LedgerLine {
            seed: ledger.seed,
            algo: ledger.algorithm,
            record: record.clone(),
            cumulative_regret: cum,
            episode_length: record.trajectory.len(),
            hit_unsafe: record.trajectory.hit_unsafe,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    }
    out.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads the episode records and cumulative regrets of a ledger file.
pub fn read_ledger(path: &Path) -> Result<Vec<(EpisodeRecord, f64)>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LedgerLine = serde_json::from_str(&line)?;
        rows.push((parsed.record, parsed.cumulative_regret));
    }
    Ok(rows)
}

pub fn write_averaged_csv(path: &Path, rows: &[AveragedRow]) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_averaged_csv(path: &Path) -> Result<Vec<AveragedRow>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<Result<Vec<AveragedRow>, _>>()?;
    Ok(rows)
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn write_run(dir: &Path, csv_path: &Path, run: &AlgorithmRun) -> Result<(), HarnessError> {
    create_dir(dir)?;
    for ledger in &run.ledgers {
        write_ledger(&dir.join(format!("seed_{}.jsonl", ledger.seed)), ledger)?;
    }
    write_averaged_csv(csv_path, &run.averaged)
}

/// Directory holding the per-seed ledgers of a run, relative to the output
/// directory.
pub(crate) fn ledger_dir(run: &AlgorithmRun, ablation: bool) -> PathBuf {
    if ablation {
        PathBuf::from("ablation").join(format!("{}_{}", run.algorithm, run.proxy_mode.tag()))
    } else {
        PathBuf::from(run.algorithm.tag())
    }
}

pub(crate) fn averaged_csv(run: &AlgorithmRun, ablation: bool) -> PathBuf {
    if ablation {
        PathBuf::from("ablation").join(format!("{}_{}_averaged.csv", run.algorithm, run.proxy_mode.tag()))
    } else {
        PathBuf::from(format!("{}_averaged.csv", run.algorithm))
    }
}

#[derive(Serialize)]
struct PolicyRow {
    state: String,
    probs: Vec<f64>,
}

#[derive(Serialize)]
struct TruthSummary {
    x0: String,
    lp_objective: f64,
    v_star: f64,
    s_star: f64,
    optimal_policy: Vec<PolicyRow>,
    baseline_policy: Vec<PolicyRow>,
    safe_actions: Vec<(String, String)>,
    h_bound: f64,
    q_min: f64,
    p_s: f64,
    p_s_paper: f64,
    p_s_note: String,
    baseline_value: f64,
}

#[derive(Serialize)]
struct RunSummary {
    algorithm: String,
    proxy_mode: String,
    p_s: f64,
    final_mean_cumulative_regret: f64,
    final_std_cumulative_regret: f64,
    mean_regret_per_episode: f64,
    final_cumulative_regret_per_seed: Vec<(u64, f64)>,
    feasible_fraction: f64,
    max_deployed_safety: f64,
    safety_violations: usize,
    averaged_csv: String,
    ledgers: String,
}

#[derive(Serialize)]
struct Summary {
    mdp: String,
    episodes: usize,
    episodes_note: &'static str,
    seeds: Vec<u64>,
    p: f64,
    delta: f64,
    eta: f64,
    t_max: usize,
    radius_scale: f64,
    proxy_mode: String,
    ground_truth: TruthSummary,
    runs: Vec<RunSummary>,
    ablation: Option<RunSummary>,
}

fn policy_rows(policy: &crate::mdp::Policy, names: &[String]) -> Vec<PolicyRow> {
    (0..policy.n_states())
        .map(|x| PolicyRow {
            state: names[x].clone(),
            probs: policy.row(x).to_vec(),
        })
        .collect()
}

fn truth_summary(truth: &GroundTruth, states: &[String], actions: &[String]) -> TruthSummary {
    let spec = &truth.baseline_spec;
    let rel = (truth.p_s - PAPER_BASELINE_SAFETY) / PAPER_BASELINE_SAFETY;
    TruthSummary {
        x0: states[truth.x0].clone(),
        lp_objective: truth.lp_objective,
        v_star: truth.v_star,
        s_star: truth.s_star,
        optimal_policy: policy_rows(&truth.optimal_policy, states),
        baseline_policy: policy_rows(&truth.baseline, states),
        safe_actions: spec
            .safe_actions
            .iter()
            .map(|&(x, a)| (states[x].clone(), actions[a].clone()))
            .collect(),
        h_bound: spec.h_bound,
        q_min: spec.q,
        p_s: truth.p_s,
        p_s_paper: PAPER_BASELINE_SAFETY,
        p_s_note: format!(
            "p_s is the exact baseline safety from the initial state; it differs from the paper's reported {} by {:+.1}%",
            PAPER_BASELINE_SAFETY,
            100.0 * rel
        ),
        baseline_value: truth.baseline_value,
    }
}

fn run_summary(run: &AlgorithmRun, ablation: bool) -> RunSummary {
    let last = run.averaged.last();
    let episodes = run.averaged.len().max(1) as f64;
    RunSummary {
        algorithm: run.algorithm.tag().to_string(),
        proxy_mode: run.proxy_mode.tag().to_string(),
        p_s: run.truth.p_s,
        final_mean_cumulative_regret: last.map_or(0.0, |r| r.mean_cumulative_regret),
        final_std_cumulative_regret: last.map_or(0.0, |r| r.std_cumulative_regret),
        mean_regret_per_episode: last.map_or(0.0, |r| r.mean_cumulative_regret) / episodes,
        final_cumulative_regret_per_seed: run.ledgers.iter().map(|l| (l.seed, l.final_regret())).collect(),
        feasible_fraction: run.feasible_fraction(),
        max_deployed_safety: run.max_deployed_safety(),
        safety_violations: run.safety_violations(1e-9),
        averaged_csv: averaged_csv(run, ablation).display().to_string(),
        ledgers: ledger_dir(run, ablation).display().to_string(),
    }
}

pub(crate) fn write_results(results: &ExperimentResults) -> Result<(), HarnessError> {
    let out = &results.config.output_dir;
    for run in &results.runs {
        write_run(&out.join(ledger_dir(run, false)), &out.join(averaged_csv(run, false)), run)?;
    }
    if let Some(run) = &results.ablation {
        write_run(&out.join(ledger_dir(run, true)), &out.join(averaged_csv(run, true)), run)?;
    }

    let mdp = crate::mdp::load_mdp(&results.config.mdp_path)?;
    let states: Vec<String> = mdp.states().map(|x| mdp.state_id(x).to_string()).collect();
    let actions: Vec<String> = mdp.actions().map(|a| mdp.action_id(a).to_string()).collect();
    let c = &results.config;
    let summary = Summary {
        mdp: c.mdp_path.display().to_string(),
        episodes: c.episodes,
        episodes_note: "the episode count is a harness setting; the paper does not state K for its figures",
        seeds: c.seeds.clone(),
        p: c.p,
        delta: c.delta,
        eta: c.eta,
        t_max: mdp.t_max(),
        radius_scale: c.radius_scale,
        proxy_mode: c.proxy_mode.tag().to_string(),
        ground_truth: truth_summary(&results.truth, &states, &actions),
        runs: results.runs.iter().map(|r| run_summary(r, false)).collect(),
        ablation: results.ablation.as_ref().map(|r| run_summary(r, true)),
    };
    let path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)?;
    std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))
}
