//! Visit counts, empirical kernel and empirical-Bernstein confidence radii.
//!
//! The model is rebuilt between episodes only; a snapshot is read-only while
//! an episode's policy is being computed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Skeleton, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("safety threshold p = {0} must lie in (0, 1)")]
    Threshold(f64),
    #[error("baseline safety p_s = {p_s} must lie in [0, p = {p})")]
    BaselineSafety { p: f64, p_s: f64 },
    #[error("eta = {0} must lie in (0, 1)")]
    Eta(f64),
    #[error("delta = {0} must lie in (0, 1/2)")]
    Delta(f64),
    #[error("episode budget K must be positive")]
    Horizon,
    #[error("t_max must be positive")]
    TMax,
    #[error("radius scale {0} must be finite and non-negative")]
    RadiusScale(f64),
}

/// Parameters shared by both learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub p: f64,
    pub p_s: f64,
    pub t_max: usize,
    pub eta: f64,
    /// Entropy weight, derived from the other fields.
    pub alpha: f64,
}

impl LearnerParams {
    pub fn new(p: f64, p_s: f64, t_max: usize, eta: f64) -> Result<Self, ParamError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ParamError::Threshold(p));
        }
        if !(p_s >= 0.0 && p_s < p) {
            return Err(ParamError::BaselineSafety { p, p_s });
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(ParamError::Eta(eta));
        }
        if t_max == 0 {
            return Err(ParamError::TMax);
        }
        let t = t_max as f64;
        let alpha = 8.0 * t * t / ((2.0 * t / (t + eta)).ln() * (p - p_s));
        Ok(Self {
            p,
            p_s,
            t_max,
            eta,
            alpha,
        })
    }

    /// Weight `4 T_max / (p - p_s)` of the optimism bonus in the modified cost.
    pub fn bonus_weight(&self) -> f64 {
        4.0 * self.t_max as f64 / (self.p - self.p_s)
    }
}

/// Empirical-Bernstein radius for one kernel coordinate.
///
/// `sqrt(4 p̂ (1 - p̂) L / (N ∨ 1)) + 14 L / (3 (N ∨ 1))`.
pub fn bernstein(p_hat: f64, n: u64, log_term: f64) -> f64 {
    let n = n.max(1) as f64;
    let var = (p_hat * (1.0 - p_hat)).max(0.0);
    (4.0 * var * log_term / n).sqrt() + 14.0 * log_term / (3.0 * n)
}

/// Online estimate of the transition kernel with per-coordinate confidence
/// radii.
///
/// Unvisited pairs have an all-zero empirical kernel row.
/// Only non-terminal states carry statistics; rows of terminal states stay
/// at zero counts and are never consulted by the planners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    n_states: usize,
    n_actions: usize,
    is_unsafe: Vec<bool>,
    cost: Vec<f64>,
    horizon_k: usize,
    delta: f64,
    log_term: f64,
    radius_scale: f64,
    counts: Vec<u64>,
    transition_counts: Vec<u64>,
    p_hat: Vec<f64>,
    eps: Vec<f64>,
    eps_hat: Vec<f64>,
    kappa_hat: Vec<f64>,
}

impl ConfidenceModel {
    pub fn new(skeleton: &Skeleton, horizon_k: usize, delta: f64) -> Result<Self, ParamError> {
        if horizon_k == 0 {
            return Err(ParamError::Horizon);
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(ParamError::Delta(delta));
        }
        let (n, m) = (skeleton.n_states, skeleton.n_actions);
        let log_term = (2.0 * n as f64 * m as f64 * horizon_k as f64 / delta).ln();
        let mut model = Self {
            n_states: n,
            n_actions: m,
            is_unsafe: (0..n).map(|x| skeleton.is_unsafe(x)).collect(),
            cost: skeleton.cost.clone(),
            horizon_k,
            delta,
            log_term,
            radius_scale: 1.0,
            counts: vec![0; n * m],
            transition_counts: vec![0; n * m * n],
            p_hat: vec![0.0; n * m * n],
            eps: vec![0.0; n * m * n],
            eps_hat: vec![0.0; n * m],
            kappa_hat: vec![0.0; n * m],
        };
        for pair in 0..n * m {
            model.refresh(pair);
        }
        Ok(model)
    }

    /// Builds a model directly from transition counts; used to pin the
    /// estimator to a chosen state in tests and experiments.
    pub fn from_transition_counts(
        skeleton: &Skeleton,
        horizon_k: usize,
        delta: f64,
        transition_counts: Vec<u64>,
    ) -> Result<Self, ParamError> {
        let mut model = Self::new(skeleton, horizon_k, delta)?;
        assert_eq!(transition_counts.len(), model.transition_counts.len());
        let n = model.n_states;
        for pair in 0..model.counts.len() {
            model.counts[pair] = transition_counts[pair * n..(pair + 1) * n].iter().sum();
        }
        model.transition_counts = transition_counts;
        for pair in 0..model.counts.len() {
            model.refresh(pair);
        }
        Ok(model)
    }

    /// Records every transition of an episode and refreshes the affected
    /// estimates.
    pub fn update_counts(&mut self, traj: &Trajectory) {
        let mut touched = Vec::with_capacity(traj.steps.len());
        for step in &traj.steps {
            let pair = step.state * self.n_actions + step.action;
            self.counts[pair] += 1;
            self.transition_counts[pair * self.n_states + step.next_state] += 1;
            touched.push(pair);
        }
        touched.sort_unstable();
        touched.dedup();
        for pair in touched {
            self.refresh(pair);
        }
    }

    fn refresh(&mut self, pair: usize) {
        let n = self.n_states;
        let visits = self.counts[pair];
        let range = pair * n..(pair + 1) * n;
        for y in 0..n {
            let idx = range.start + y;
            self.p_hat[idx] = self.transition_counts[idx] as f64 / visits.max(1) as f64;
            self.eps[idx] = self.radius_scale * bernstein(self.p_hat[idx], visits, self.log_term);
        }
        self.eps_hat[pair] = self.eps[range.clone()].iter().sum();
        self.kappa_hat[pair] = (0..n)
            .filter(|&y| self.is_unsafe[y])
            .map(|y| self.p_hat[range.start + y])
            .sum();
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon_k(&self) -> usize {
        self.horizon_k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `L = log(2 |X| |A| K / δ)`.
    pub fn log_term(&self) -> f64 {
        self.log_term
    }

    pub fn count(&self, x: usize, a: usize) -> u64 {
        self.counts[x * self.n_actions + a]
    }

    pub fn transition_count(&self, x: usize, a: usize, y: usize) -> u64 {
        self.transition_counts[(x * self.n_actions + a) * self.n_states + y]
    }

    pub fn p_hat(&self, x: usize, a: usize, y: usize) -> f64 {
        self.p_hat[(x * self.n_actions + a) * self.n_states + y]
    }

    pub fn p_hat_row(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.n_actions + a) * self.n_states;
        &self.p_hat[start..start + self.n_states]
    }

    pub fn eps(&self, x: usize, a: usize, y: usize) -> f64 {
        self.eps[(x * self.n_actions + a) * self.n_states + y]
    }

    pub fn eps_row(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.n_actions + a) * self.n_states;
        &self.eps[start..start + self.n_states]
    }

    pub fn eps_hat(&self, x: usize, a: usize) -> f64 {
        self.eps_hat[x * self.n_actions + a]
    }

    pub fn kappa_hat(&self, x: usize, a: usize) -> f64 {
        self.kappa_hat[x * self.n_actions + a]
    }

    pub fn cost(&self, x: usize, a: usize) -> f64 {
        self.cost[x * self.n_actions + a]
    }

    /// Multiplier applied to every Bernstein radius (1 by default).
    pub fn radius_scale(&self) -> f64 {
        self.radius_scale
    }

    /// Rescales all confidence radii. Values below one shrink the confidence
    /// sets and void the coverage guarantee.
    pub fn set_radius_scale(&mut self, scale: f64) -> Result<(), ParamError> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(ParamError::RadiusScale(scale));
        }
        self.radius_scale = scale;
        for pair in 0..self.counts.len() {
            self.refresh(pair);
        }
        Ok(())
    }

    /// Overrides every radius with zero, collapsing the confidence set onto
    /// the empirical kernel.
    pub fn zero_radii(&mut self) {
        self.eps.iter_mut().for_each(|e| *e = 0.0);
        self.eps_hat.iter_mut().for_each(|e| *e = 0.0);
    }

    /// Replaces the empirical kernel of every pair; radii are left as-is.
    pub fn set_p_hat(&mut self, kernel: &[f64]) {
        assert_eq!(kernel.len(), self.p_hat.len());
        self.p_hat.copy_from_slice(kernel);
        let n = self.n_states;
        for pair in 0..self.counts.len() {
            self.kappa_hat[pair] = (0..n)
                .filter(|&y| self.is_unsafe[y])
                .map(|y| self.p_hat[pair * n + y])
                .sum();
        }
    }
}

/// Radius of the confidence interval on `P(x, a, y)`.
pub fn bernstein_radius(model: &ConfidenceModel, x: usize, a: usize, y: usize) -> f64 {
    model.radius_scale * bernstein(model.p_hat(x, a, y), model.count(x, a), model.log_term())
}

/// Optimistic cost `c(x,a) - 4 T_max / (p - p_s) · ε̂(x,a)`.
pub fn modified_cost(model: &ConfidenceModel, params: &LearnerParams, x: usize, a: usize) -> f64 {
    model.cost(x, a) - params.bonus_weight() * model.eps_hat(x, a)
}
