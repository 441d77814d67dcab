//! Provably p-safe reinforcement learning for finite stochastic reach-avoid
//! MDPs.
//!
//! The crate provides exact evaluation of safety and value functions,
//! occupation-measure linear programs for the known-model problem, an
//! optimistic extended LP over empirical-Bernstein confidence sets, its
//! entropy-regularized counterpart solved by Frank-Wolfe, the two episodic
//! learners built on them, and an experiment harness that writes CSV ledgers,
//! summaries and SVG plots.

pub mod estimation;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod opt;

pub use estimation::{bernstein_radius, modified_cost, ConfidenceModel, LearnerParams};
pub use learner::{Algorithm, RunLedger};
pub use mdp::{load_mdp, safety_function, simulate_episode, validate_mdp, value_function, Mdp, Policy, Trajectory};
pub use opt::{build_extended_lp, build_known_lp, extract_policy, solve_entropy_program, solve_lp, LpStatus, OccupationSolution};
