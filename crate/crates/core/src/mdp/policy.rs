use serde::{Deserialize, Serialize};

use super::{Mdp, MdpError};

/// Stationary randomized policy `π(a | x)`, stored row-major over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn from_probs(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), n_states * n_actions, "policy table shape");
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self::from_probs(n_states, n_actions, vec![p; n_states * n_actions])
    }

    /// Plays `actions[x]` with probability one in every state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (x, &a) in actions.iter().enumerate() {
            probs[x * n_actions + a] = 1.0;
        }
        Self::from_probs(actions.len(), n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, x: usize, a: usize) -> f64 {
        self.probs[x * self.n_actions + a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, x: usize) -> &mut [f64] {
        &mut self.probs[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Checks shape and that every non-terminal row is a distribution.
    pub fn check(&self, mdp: &Mdp) -> Result<(), MdpError> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(MdpError::InvalidPolicy(format!(
                "policy is {}x{}, model is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        for x in mdp.states().filter(|&x| !mdp.is_terminal(x)) {
            let row = self.row(x);
            if row.iter().any(|&p| !(p >= 0.0) || p > 1.0 + 1e-12) {
                return Err(MdpError::InvalidPolicy(format!(
                    "row {} has entries outside [0, 1]",
                    mdp.state_id(x)
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(MdpError::InvalidPolicy(format!(
                    "row {} sums to {total}",
                    mdp.state_id(x)
                )));
            }
        }
        Ok(())
    }
}
