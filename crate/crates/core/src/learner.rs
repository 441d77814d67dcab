//! Safe baseline synthesis and the two episodic learners.
//!
//! Both learners plan on a [`ConfidenceModel`] built only from observed
//! transitions. The true model is used to simulate episodes and to score
//! each deployed policy exactly against the constrained optimum.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{ConfidenceModel, LearnerParams, ParamError};
use crate::mdp::{
    safety_function, simulate_episode, value_function, Mdp, MdpError, Policy, Skeleton, Trajectory,
};
use crate::opt::{
    build_entropy_objective, build_extended_lp, build_known_lp, extract_policy, solve_entropy_program,
    solve_lp, FrankWolfeOptions, LpStatus,
};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("mixing parameter q = {q} is below the safety floor {floor}")]
    MixingBelowFloor { q: f64, floor: f64 },
    #[error("mixing parameter q = {0} exceeds one")]
    MixingAboveOne(f64),
    #[error("safe-action bound h = {h} exceeds p / T_max = {limit}")]
    SafeActionBound { h: f64, limit: f64 },
    #[error("no safe action declared for proxy state {0}")]
    MissingSafeAction(usize),
    #[error("no p-safe policy exists: the known-model program is {0:?}")]
    NoSafePolicy(LpStatus),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "psrl")]
    Psrl,
    #[serde(rename = "er-psrl")]
    ErPsrl,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Psrl => "psrl",
            Algorithm::ErPsrl => "er-psrl",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psrl" => Ok(Algorithm::Psrl),
            "er-psrl" => Ok(Algorithm::ErPsrl),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Safe actions on proxy states together with the mixing parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeBaselineSpec {
    /// `(proxy state, safe action)` pairs.
    pub safe_actions: Vec<(usize, usize)>,
    /// Upper bound on the one-step unsafe probability of every safe action.
    pub h_bound: f64,
    pub q: f64,
}

/// Smallest admissible mixing weight `(1 - p / T_max) / (1 - h)`.
pub fn q_min(p: f64, t_max: usize, h: f64) -> f64 {
    (1.0 - p / t_max as f64) / (1.0 - h)
}

/// Mixture baseline: on proxy states play the safe action with probability
/// `q` and spread the rest evenly; elsewhere play uniformly. An empty proxy
/// list means every living state is a proxy state.
pub fn make_safe_baseline(
    skeleton: &Skeleton,
    proxy: &[usize],
    spec: &SafeBaselineSpec,
    p: f64,
) -> Result<Policy, LearnerError> {
    let limit = p / skeleton.t_max as f64;
    if spec.h_bound < 0.0 || spec.h_bound > limit {
        return Err(LearnerError::SafeActionBound {
            h: spec.h_bound,
            limit,
        });
    }
    let floor = q_min(p, skeleton.t_max, spec.h_bound);
    if spec.q > 1.0 {
        return Err(LearnerError::MixingAboveOne(spec.q));
    }
    if spec.q < floor - 1e-12 {
        return Err(LearnerError::MixingBelowFloor { q: spec.q, floor });
    }

    let m = skeleton.n_actions;
    let mut policy = Policy::uniform(skeleton.n_states, m);
    let proxy: Vec<usize> = if proxy.is_empty() {
        (0..skeleton.n_states).filter(|&x| skeleton.is_living(x)).collect()
    } else {
        proxy.to_vec()
    };
    for &x in &proxy {
        let &(_, safe) = spec
            .safe_actions
            .iter()
            .find(|(s, _)| *s == x)
            .ok_or(LearnerError::MissingSafeAction(x))?;
        let row = policy.row_mut(x);
        if m == 1 {
            row[0] = 1.0;
            continue;
        }
        let rest = (1.0 - spec.q) / (m - 1) as f64;
        for (a, v) in row.iter_mut().enumerate() {
            *v = if a == safe { spec.q } else { rest };
        }
    }
    Ok(policy)
}

/// Picks, for each proxy state, the action with the smallest one-step unsafe
/// probability under `mdp` (ties go to the later action), and sets `q` to
/// its floor.
pub fn derive_baseline_spec(mdp: &Mdp, proxy: &[usize], p: f64) -> Result<SafeBaselineSpec, LearnerError> {
    let proxy: Vec<usize> = if proxy.is_empty() {
        mdp.states().filter(|&x| mdp.is_living(x)).collect()
    } else {
        proxy.to_vec()
    };
    let mut safe_actions = Vec::with_capacity(proxy.len());
    let mut h_bound = 0.0f64;
    for &x in &proxy {
        let mut best = (0, f64::INFINITY);
        for a in mdp.actions() {
            let k = mdp.kappa(x, a)?;
            if k <= best.1 {
                best = (a, k);
            }
        }
        safe_actions.push((x, best.0));
        h_bound = h_bound.max(best.1);
    }
    let limit = p / mdp.t_max() as f64;
    if h_bound > limit {
        return Err(LearnerError::SafeActionBound { h: h_bound, limit });
    }
    Ok(SafeBaselineSpec {
        safe_actions,
        h_bound,
        q: q_min(p, mdp.t_max(), h_bound).min(1.0),
    })
}

/// Reference quantities for regret accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub x0: usize,
    pub p: f64,
    pub optimal_policy: Policy,
    /// Optimal value of the known-model program.
    pub lp_objective: f64,
    /// `V*(x0)` from exact evaluation of the extracted policy.
    pub v_star: f64,
    /// `S*(x0)`.
    pub s_star: f64,
    pub baseline_spec: SafeBaselineSpec,
    pub baseline: Policy,
    /// True safety of the baseline from `x0`.
    pub p_s: f64,
    pub baseline_value: f64,
}

impl GroundTruth {
    /// Solves the known-model program, extracts the optimal policy and
    /// synthesizes the baseline for the model's effective proxy set.
    pub fn compute(mdp: &Mdp, p: f64, x0: usize) -> Result<Self, LearnerError> {
        let solution = solve_lp(&build_known_lp(mdp, p, x0));
        if !solution.is_optimal() {
            return Err(LearnerError::NoSafePolicy(solution.status));
        }
        let spec = derive_baseline_spec(mdp, mdp.declared_proxy(), p)?;
        let baseline = make_safe_baseline(&mdp.skeleton(), mdp.declared_proxy(), &spec, p)?;
        let optimal_policy = extract_policy(&solution, &baseline);
        let v_star = value_function(mdp, &optimal_policy)?[x0];
        let s_star = safety_function(mdp, &optimal_policy)?[x0];
        let p_s = safety_function(mdp, &baseline)?[x0];
        let baseline_value = value_function(mdp, &baseline)?[x0];
        Ok(Self {
            x0,
            p,
            optimal_policy,
            lp_objective: solution.objective,
            v_star,
            s_star,
            baseline_spec: spec,
            baseline,
            p_s,
            baseline_value,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub params: LearnerParams,
    pub delta: f64,
    /// Planned number of episodes, used inside the confidence radii.
    pub horizon_k: usize,
    pub fw: FrankWolfeOptions,
    /// Multiplier on the confidence radii; 1 runs the algorithms as stated.
    pub radius_scale: f64,
}

impl LearnerConfig {
    pub fn new(
        algorithm: Algorithm,
        truth: &GroundTruth,
        t_max: usize,
        delta: f64,
        eta: f64,
        horizon_k: usize,
    ) -> Result<Self, LearnerError> {
        Ok(Self {
            algorithm,
            params: LearnerParams::new(truth.p, truth.p_s, t_max, eta)?,
            delta,
            horizon_k,
            fw: FrankWolfeOptions::for_horizon(t_max),
            radius_scale: 1.0,
        })
    }
}

/// Everything recorded about one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub k: usize,
    /// The program yielded the deployed policy (otherwise the baseline ran).
    pub feasible: bool,
    pub status: LpStatus,
    pub policy: Policy,
    pub trajectory: Trajectory,
    pub true_value: f64,
    pub true_safety: f64,
    /// `V(π_k) - V(π*)` at the initial state.
    #[serde(rename = "R_k")]
    pub objective_regret: f64,
    /// `S(π_k) - S(π*)` at the initial state.
    #[serde(rename = "C_k")]
    pub constraint_regret: f64,
}

/// Per-seed history of one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    /// Prefix sums of the objective regret.
    pub cumulative_regret: Vec<f64>,
}

impl RunLedger {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        Self {
            algorithm,
            seed,
            records: Vec::new(),
            cumulative_regret: Vec::new(),
        }
    }

    pub fn push(&mut self, record: EpisodeRecord) {
        let prev = self.cumulative_regret.last().copied().unwrap_or(0.0);
        self.cumulative_regret.push(prev + record.objective_regret);
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }
}

/// Learner state for one seed.
pub struct Learner<'a> {
    mdp: &'a Mdp,
    truth: &'a GroundTruth,
    skeleton: Skeleton,
    model: ConfidenceModel,
    config: LearnerConfig,
}

impl<'a> Learner<'a> {
    pub fn new(mdp: &'a Mdp, truth: &'a GroundTruth, config: LearnerConfig) -> Result<Self, LearnerError> {
        let skeleton = mdp.skeleton();
        let mut model = ConfidenceModel::new(&skeleton, config.horizon_k, config.delta)?;
        if config.radius_scale != 1.0 {
            model.set_radius_scale(config.radius_scale)?;
        }
        Ok(Self {
            mdp,
            truth,
            skeleton,
            model,
            config,
        })
    }

    pub fn model(&self) -> &ConfidenceModel {
        &self.model
    }

    /// Computes the policy for the next episode from the current estimates.
    /// Returns the policy, whether the program produced it, and the solver
    /// status.
    pub fn plan(&self) -> (Policy, bool, LpStatus) {
        let problem = build_extended_lp(&self.skeleton, &self.model, &self.config.params, self.truth.x0);
        let solution = match self.config.algorithm {
            Algorithm::Psrl => solve_lp(&problem),
            Algorithm::ErPsrl => {
                let objective = build_entropy_objective(&self.config.params, &self.model);
                solve_entropy_program(&problem, &objective, self.config.fw)
            }
        };
        let usable = solution.status == LpStatus::Optimal && solution.has_point();
        if !usable {
            if matches!(solution.status, LpStatus::IterationLimit | LpStatus::Unbounded) {
                log::warn!(
                    "{} planner returned {:?}; deploying the baseline",
                    self.config.algorithm,
                    solution.status
                );
            }
            return (self.truth.baseline.clone(), false, solution.status);
        }
        (extract_policy(&solution, &self.truth.baseline), true, solution.status)
    }

    /// Plans, simulates one episode, scores it, then updates the estimates.
    pub fn run_episode(&mut self, k: usize, rng_seed: u64) -> Result<EpisodeRecord, LearnerError> {
        let (policy, feasible, status) = self.plan();
        let trajectory = simulate_episode(self.mdp, &policy, self.truth.x0, rng_seed);
        let true_value = value_function(self.mdp, &policy)?[self.truth.x0];
        let true_safety = safety_function(self.mdp, &policy)?[self.truth.x0];
        self.model.update_counts(&trajectory);
        Ok(EpisodeRecord {
            k,
            feasible,
            status,
            objective_regret: true_value - self.truth.v_star,
            constraint_regret: true_safety - self.truth.s_star,
            policy,
            trajectory,
            true_value,
            true_safety,
        })
    }
}

/// Runs `episodes` episodes for one seed.
pub fn run_seed(
    mdp: &Mdp,
    truth: &GroundTruth,
    config: LearnerConfig,
    episodes: usize,
    seed: u64,
) -> Result<RunLedger, LearnerError> {
    let mut learner = Learner::new(mdp, truth, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = RunLedger::new(config.algorithm, seed);
    for k in 1..=episodes {
        let episode_seed = rng.next_u64();
        ledger.push(learner.run_episode(k, episode_seed)?);
    }
    Ok(ledger)
}

/// Runs every seed independently (in parallel); the output order follows
/// `seeds`.
pub fn run(
    mdp: &Mdp,
    truth: &GroundTruth,
    config: LearnerConfig,
    episodes: usize,
    seeds: &[u64],
) -> Result<Vec<RunLedger>, LearnerError> {
    seeds
        .par_iter()
        .map(|&seed| run_seed(mdp, truth, config, episodes, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::parse_mdp;
    use approx::assert_relative_eq;

    const PAPER_EXAMPLE: &str = include_str!("../data/paper_example.json");

    fn paper_mdp() -> Mdp {
        parse_mdp(PAPER_EXAMPLE).unwrap()
    }

    #[test]
    fn floor_of_paper_baseline() {
        assert_eq!(q_min(0.5, 5, 0.0), 0.9);
    }

    #[test]
    fn floor_at_boundary_is_one() {
        assert_relative_eq!(q_min(0.5, 5, 0.1), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn floor_with_probabilistic_safe_action() {
        assert!((q_min(0.8, 5, 0.09) - 0.923077).abs() < 1e-6);
        assert_relative_eq!(q_min(0.8, 5, 0.09), 0.84 / 0.91, max_relative = 1e-15);
    }

    #[test]
    fn paper_baseline_rows() {
        let mdp = paper_mdp();
        let spec = derive_baseline_spec(&mdp, mdp.declared_proxy(), 0.5).unwrap();
        assert_eq!(spec.h_bound, 0.0);
        assert_eq!(spec.q, 0.9);
        let pi = make_safe_baseline(&mdp.skeleton(), mdp.declared_proxy(), &spec, 0.5).unwrap();
        assert_eq!(pi.row(0), &[0.5, 0.5]);
        assert_eq!(pi.prob(1, 1), 0.9);
        assert_eq!(pi.prob(2, 1), 0.9);
        assert_relative_eq!(pi.prob(1, 0), 0.1, max_relative = 1e-12);
        assert_relative_eq!(pi.prob(2, 0), 0.1, max_relative = 1e-12);
    }

    #[test]
    fn undeclared_proxy_covers_every_living_state() {
        let mdp = paper_mdp().with_proxy(Vec::new());
        let spec = derive_baseline_spec(&mdp, &[], 0.5).unwrap();
        let pi = make_safe_baseline(&mdp.skeleton(), &[], &spec, 0.5).unwrap();
        for x in 0..3 {
            assert_eq!(pi.prob(x, 1), 0.9);
        }
    }

    #[test]
    fn deterministic_baseline_at_boundary() {
        let mdp = paper_mdp();
        let spec = SafeBaselineSpec {
            safe_actions: vec![(1, 1), (2, 1)],
            h_bound: 0.1,
            q: 1.0,
        };
        let pi = make_safe_baseline(&mdp.skeleton(), mdp.declared_proxy(), &spec, 0.5).unwrap();
        assert_eq!(pi.row(1), &[0.0, 1.0]);
        assert_eq!(pi.row(2), &[0.0, 1.0]);
    }

    #[test]
    fn mixing_below_floor_is_rejected() {
        let mdp = paper_mdp();
        let spec = SafeBaselineSpec {
            safe_actions: vec![(1, 1), (2, 1)],
            h_bound: 0.0,
            q: 0.85,
        };
        let err = make_safe_baseline(&mdp.skeleton(), mdp.declared_proxy(), &spec, 0.5).unwrap_err();
        assert!(matches!(err, LearnerError::MixingBelowFloor { .. }));
    }

    #[test]
    fn missing_safe_action_is_rejected() {
        let mdp = paper_mdp();
        let spec = SafeBaselineSpec {
            safe_actions: vec![(1, 1)],
            h_bound: 0.0,
            q: 0.9,
        };
        let err = make_safe_baseline(&mdp.skeleton(), mdp.declared_proxy(), &spec, 0.5).unwrap_err();
        assert!(matches!(err, LearnerError::MissingSafeAction(2)));
    }

    #[test]
    fn ledger_prefix_sums() {
        let mdp = paper_mdp();
        let truth = GroundTruth::compute(&mdp, 0.5, 0).unwrap();
        let config = LearnerConfig::new(Algorithm::Psrl, &truth, 5, 0.01, 0.1, 20).unwrap();
        let ledger = run_seed(&mdp, &truth, config, 20, 3).unwrap();
        let mut acc = 0.0;
        for (r, c) in ledger.records.iter().zip(&ledger.cumulative_regret) {
            acc += r.objective_regret;
            assert!((acc - c).abs() < 1e-12);
            if !r.feasible {
                assert_eq!(r.policy, truth.baseline);
            }
        }
    }

    #[test]
    fn first_episode_falls_back_to_baseline() {
        let mdp = paper_mdp();
        let truth = GroundTruth::compute(&mdp, 0.5, 0).unwrap();
        for algorithm in [Algorithm::Psrl, Algorithm::ErPsrl] {
            let config = LearnerConfig::new(algorithm, &truth, 5, 0.01, 0.1, 2000).unwrap();
            let mut learner = Learner::new(&mdp, &truth, config).unwrap();
            let record = learner.run_episode(1, 99).unwrap();
            assert!(!record.feasible);
            assert_eq!(record.status, LpStatus::Infeasible);
            assert_eq!(record.policy, truth.baseline);
        }
    }

    #[test]
    fn zero_episodes_give_empty_ledgers() {
        let mdp = paper_mdp();
        let truth = GroundTruth::compute(&mdp, 0.5, 0).unwrap();
        let config = LearnerConfig::new(Algorithm::ErPsrl, &truth, 5, 0.01, 0.1, 10).unwrap();
        let ledgers = run(&mdp, &truth, config, 0, &[1, 2]).unwrap();
        assert!(ledgers.iter().all(RunLedger::is_empty));
    }

    #[test]
    fn same_seed_same_ledger() {
        let mdp = paper_mdp();
        let truth = GroundTruth::compute(&mdp, 0.5, 0).unwrap();
        let config = LearnerConfig::new(Algorithm::ErPsrl, &truth, 5, 0.01, 0.1, 30).unwrap();
        let a = run_seed(&mdp, &truth, config, 30, 11).unwrap();
        let b = run_seed(&mdp, &truth, config, 30, 11).unwrap();
        assert_eq!(a, b);
    }
}
