use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use safe_reach::harness::{compute_ground_truth, run_experiment, ExperimentConfig, ProxyMode};
use safe_reach::mdp::{parse_mdp, validate_mdp};
use safe_reach::{load_mdp, safety_function, value_function, Algorithm};

#[derive(Parser)]
#[command(name = "safe-reach", version, about = "p-safe reinforcement learning on reach-avoid MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Psrl,
    ErPsrl,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProxyArg {
    Declared,
    AllLiving,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed learning experiment and write its artifacts.
    Run {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        algo: AlgoArg,
        #[arg(long, default_value_t = 2000)]
        episodes: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value = "declared")]
        proxy: ProxyArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write SVG figures (runs the proxy ablation as well).
        #[arg(long)]
        plot: bool,
        /// Multiplier on the confidence radii. Values below 1 void the
        /// coverage guarantee but let learning start within short horizons.
        #[arg(long, default_value_t = 1.0)]
        radius_scale: f64,
    },
    /// Solve the known-model problem and print the optimum and the baseline.
    GroundTruth {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
    },
    /// Check a model file against every structural invariant.
    Validate {
        #[arg(long)]
        mdp: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            mdp,
            algo,
            episodes,
            p,
            delta,
            eta,
            seeds,
            proxy,
            out,
            plot,
            radius_scale,
        } => {
            let mut config = ExperimentConfig::new(mdp, out);
            config.algos = match algo {
                AlgoArg::Psrl => vec![Algorithm::Psrl],
                AlgoArg::ErPsrl => vec![Algorithm::ErPsrl],
                AlgoArg::Both => vec![Algorithm::Psrl, Algorithm::ErPsrl],
            };
            config.episodes = episodes;
            config.p = p;
            config.delta = delta;
            config.eta = eta;
            config.seeds = seeds;
            config.proxy_mode = match proxy {
                ProxyArg::Declared => ProxyMode::Declared,
                ProxyArg::AllLiving => ProxyMode::AllLiving,
            };
            config.plot = plot;
            config.radius_scale = radius_scale;
            let results = run_experiment(&config)?;
            println!("V* = {:.6}, p_s = {:.6}", results.truth.v_star, results.truth.p_s);
            for run in &results.runs {
                println!(
                    "{:<8} cumulative regret {:.4} (feasible {:.1}%, max safety {:.4})",
                    run.algorithm.tag(),
                    run.final_cumulative_regret(),
                    100.0 * run.feasible_fraction(),
                    run.max_deployed_safety()
                );
            }
            println!("artifacts written to {}", config.output_dir.display());
        }
        Command::GroundTruth { mdp, p } => {
            let model = load_mdp(&mdp).with_context(|| format!("loading {}", mdp.display()))?;
            let truth = compute_ground_truth(&model, p, model.initial_state())?;
            println!("LP objective  {:.6}", truth.lp_objective);
            println!("V*(x0)        {:.6}", truth.v_star);
            println!("S*(x0)        {:.6}", truth.s_star);
            println!("optimal policy");
            for x in model.states().filter(|&x| !model.is_terminal(x)) {
                let row: Vec<String> = model
                    .actions()
                    .map(|a| format!("{}:{:.6}", model.action_id(a), truth.optimal_policy.prob(x, a)))
                    .collect();
                println!("  {:<6} {}", model.state_id(x), row.join("  "));
            }
            println!("baseline q_min {:.6}, h {:.6}", truth.baseline_spec.q, truth.baseline_spec.h_bound);
            println!("baseline p_s   {:.6}", truth.p_s);
            let v = value_function(&model, &truth.baseline)?;
            let s = safety_function(&model, &truth.baseline)?;
            println!("baseline V(x0) {:.6}, S(x0) {:.6}", v[truth.x0], s[truth.x0]);
        }
        Command::Validate { mdp } => {
            let text = std::fs::read_to_string(&mdp).with_context(|| format!("reading {}", mdp.display()))?;
            let model = match parse_mdp(&text) {
                Ok(m) => m,
                Err(safe_reach::mdp::MdpError::Invalid(report)) => {
                    println!("{report}");
                    bail!("{} violates model invariants", mdp.display());
                }
                Err(e) => return Err(e).context(format!("parsing {}", mdp.display())),
            };
            let report = validate_mdp(&model);
            println!("{report}");
            if !report.passed() {
                bail!("{} violates model invariants", mdp.display());
            }
        }
    }
    Ok(())
}
