use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mdp, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub cost: f64,
    pub next_state: usize,
}

/// One episode of interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// The `t_max` cap ended the episode in a non-terminal state.
    pub truncated: bool,
    /// An unsafe state was visited before any goal state.
    pub hit_unsafe: bool,
    pub terminal_state: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }
}

/// Draws an index from a discrete distribution by inversion.
pub(crate) fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Simulates one episode from `x0`; identical seeds give identical
/// trajectories.
pub fn simulate_episode(mdp: &Mdp, policy: &Policy, x0: usize, rng_seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    simulate_with(mdp, policy, x0, &mut rng)
}

pub fn simulate_with<R: Rng + ?Sized>(
    mdp: &Mdp,
    policy: &Policy,
    x0: usize,
    rng: &mut R,
) -> Trajectory {
    let mut steps = Vec::new();
    let mut state = x0;
    let mut hit_unsafe = mdp.is_unsafe(x0);
    let mut reached_goal = mdp.is_goal(x0);
    while !mdp.is_terminal(state) && steps.len() < mdp.t_max() {
        let action = sample_index(rng, policy.row(state));
        let next_state = sample_index(rng, mdp.row(state, action));
        steps.push(Step {
            state,
            action,
            cost: mdp.cost(state, action),
            next_state,
        });
        if mdp.is_goal(next_state) {
            reached_goal = true;
        } else if mdp.is_unsafe(next_state) && !reached_goal {
            hit_unsafe = true;
        }
        state = next_state;
    }
    Trajectory {
        truncated: !mdp.is_terminal(state),
        hit_unsafe,
        terminal_state: state,
        steps,
    }
}
