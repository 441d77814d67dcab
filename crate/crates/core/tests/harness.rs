mod common;

use std::path::Path;
use std::process::Command;

use common::data_path;
use safe_reach::harness::{
    read_averaged_csv, read_ledger, run_experiment, ExperimentConfig, HarnessError, ProxyMode,
};
use safe_reach::learner::Algorithm;

fn small_config(out: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(data_path(), out);
    config.episodes = 40;
    config.seeds = vec![3, 4, 5];
    config.radius_scale = 0.03;
    config
}

#[test]
fn averaged_csv_is_the_mean_of_the_ledgers() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let results = run_experiment(&config).unwrap();
    assert_eq!(results.runs.len(), 2);

    for algo in ["psrl", "er-psrl"] {
        let rows = read_averaged_csv(&dir.path().join(format!("{algo}_averaged.csv"))).unwrap();
        assert_eq!(rows.len(), 40);
        let ledgers: Vec<_> = config
            .seeds
            .iter()
            .map(|s| read_ledger(&dir.path().join(algo).join(format!("seed_{s}.jsonl"))).unwrap())
            .collect();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.k, i + 1);
            let n = ledgers.len() as f64;
            let r: f64 = ledgers.iter().map(|l| l[i].0.objective_regret).sum::<f64>() / n;
            let c: f64 = ledgers.iter().map(|l| l[i].0.constraint_regret).sum::<f64>() / n;
            let cum: f64 = ledgers.iter().map(|l| l[i].1).sum::<f64>() / n;
            assert!((row.mean_objective_regret - r).abs() <= 1e-12);
            assert!((row.mean_constraint_regret - c).abs() <= 1e-12);
            assert!((row.mean_cumulative_regret - cum).abs() <= 1e-12);
        }
        for ledger in &ledgers {
            let mut sum = 0.0;
            for (record, cum) in ledger {
                sum += record.objective_regret;
                assert!((sum - cum).abs() <= 1e-9);
            }
        }
    }
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn ledger_lines_carry_the_checkpoint_fields() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path());
    config.algos = vec![Algorithm::ErPsrl];
    config.episodes = 3;
    run_experiment(&config).unwrap();
    let text = std::fs::read_to_string(dir.path().join("er-psrl/seed_3.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for (i, line) in lines.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["seed"], 3);
        assert_eq!(v["algo"], "er-psrl");
        assert_eq!(v["k"], i + 1);
        for key in ["feasible", "R_k", "C_k", "cumulative_regret", "episode_length", "hit_unsafe"] {
            assert!(!v[key].is_null(), "missing {key}");
        }
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for entry in walk(dir) {
        files.push((
            entry.strip_prefix(dir).unwrap().display().to_string(),
            std::fs::read(&entry).unwrap(),
        ));
    }
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn reruns_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut config = small_config(a.path());
    config.episodes = 15;
    run_experiment(&config).unwrap();
    config.output_dir = b.path().to_path_buf();
    run_experiment(&config).unwrap();

    let (fa, fb) = (read_all(a.path()), read_all(b.path()));
    assert_eq!(fa.len(), fb.len());
    for ((na, da), (nb, db)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na == "summary.json" {
            continue;
        }
        assert!(da == db, "{na} differs between runs");
    }
}

#[test]
fn single_seed_single_episode() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::new(data_path(), dir.path());
    config.algos = vec![Algorithm::Psrl];
    config.seeds = vec![7];
    config.episodes = 1;
    let results = run_experiment(&config).unwrap();
    let rows = read_averaged_csv(&dir.path().join("psrl_averaged.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    let record = &results.runs[0].ledgers[0].records[0];
    assert_eq!(rows[0].mean_cumulative_regret, record.objective_regret);
    assert_eq!(rows[0].std_cumulative_regret, 0.0);
    assert!(!record.feasible);
}

#[test]
fn unwritable_output_fails_before_loading() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"").unwrap();
    let config = ExperimentConfig::new(dir.path().join("missing.json"), blocker.join("out"));
    match run_experiment(&config) {
        Err(HarnessError::Unwritable { .. }) => {}
        other => panic!("expected an unwritable-directory error, got {other:?}"),
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let base = ExperimentConfig::new(data_path(), "unused");
    type Mutation = Box<dyn Fn(&mut ExperimentConfig)>;
    let cases: Vec<Mutation> = vec![
        Box::new(|c| c.episodes = 0),
        Box::new(|c| c.delta = 0.5),
        Box::new(|c| c.delta = 0.0),
        Box::new(|c| c.eta = 1.0),
        Box::new(|c| c.p = 0.0),
        Box::new(|c| c.seeds.clear()),
        Box::new(|c| c.seeds = vec![1, 1]),
        Box::new(|c| c.algos.clear()),
        Box::new(|c| c.radius_scale = -1.0),
    ];
    assert!(base.validate().is_ok());
    for (i, mutate) in cases.iter().enumerate() {
        let mut config = base.clone();
        mutate(&mut config);
        assert!(matches!(config.validate(), Err(HarnessError::Config(_))), "case {i}");
    }
}

#[test]
fn plots_and_ablation_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path());
    config.episodes = 10;
    config.seeds = vec![1];
    config.plot = true;
    let results = run_experiment(&config).unwrap();
    let ablation = results.ablation.as_ref().unwrap();
    assert_eq!(ablation.proxy_mode, ProxyMode::AllLiving);
    assert_eq!(ablation.algorithm, Algorithm::ErPsrl);
    for name in [
        "fig1_objective_regret.svg",
        "fig2_cumulative_regret.svg",
        "fig3_constraint_regret.svg",
        "fig4_proxy_ablation.svg",
        "ablation/er-psrl_all-living_averaged.csv",
        "ablation/er-psrl_all-living/seed_1.jsonl",
    ] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    let svg = std::fs::read_to_string(dir.path().join("fig4_proxy_ablation.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let truth = &summary["ground_truth"];
    assert!((truth["v_star"].as_f64().unwrap() + 0.396875).abs() < 1e-6);
    assert!((truth["p_s"].as_f64().unwrap() - 0.0872).abs() < 1e-9);
    assert_eq!(truth["p_s_paper"], 0.116);
    assert!(truth["p_s_note"].as_str().unwrap().contains("0.116"));
}

#[test]
fn mode_and_algorithm_names_parse() {
    assert_eq!("declared".parse::<ProxyMode>().unwrap(), ProxyMode::Declared);
    assert_eq!("all-living".parse::<ProxyMode>().unwrap(), ProxyMode::AllLiving);
    assert!("none".parse::<ProxyMode>().is_err());
    assert_eq!("psrl".parse::<Algorithm>().unwrap(), Algorithm::Psrl);
    assert_eq!("er-psrl".parse::<Algorithm>().unwrap(), Algorithm::ErPsrl);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_safe-reach"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn cli_ground_truth_and_validate() {
    let path = data_path();
    let path = path.to_str().unwrap();
    let out = cli(&["ground-truth", "--mdp", path]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("-0.396875"), "{text}");
    assert!(text.contains("0.087200"), "{text}");

    let out = cli(&["validate", "--mdp", path]);
    assert!(out.status.success());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, common::PAPER_EXAMPLE.replace("\"p\": 1.0", "\"p\": 0.9")).unwrap();
    let out = cli(&["validate", "--mdp", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("stochasticity"));
}

#[test]
fn cli_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&[
        "run",
        "--mdp",
        data_path().to_str().unwrap(),
        "--algo",
        "er-psrl",
        "--episodes",
        "3",
        "--seeds",
        "1,2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("er-psrl/seed_2.jsonl").exists());
    assert!(dir.path().join("er-psrl_averaged.csv").exists());
    assert!(!dir.path().join("psrl_averaged.csv").exists());
}
