use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MdpError;

/// Partition cell a state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Living,
    Unsafe,
    Goal,
}

/// On-disk representation of a reach-avoid MDP.
///
/// Transition triples that are omitted have probability zero. States and
/// actions are referenced by their string ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub living: Vec<String>,
    #[serde(rename = "unsafe")]
    pub unsafe_states: Vec<String>,
    pub goal: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy: Option<Vec<String>>,
    /// Initial state of every episode. Defaults to the first living state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    pub unsafe_terminal: bool,
    pub t_max: usize,
    pub transitions: Vec<TransitionEntry>,
    pub costs: Vec<CostEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: String,
    pub action: String,
    pub to: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostEntry {
    pub state: String,
    pub action: String,
    pub c: f64,
}

/// A finite reach-avoid MDP with states partitioned into living (H),
/// unsafe (U) and goal (E) sets.
///
/// States and actions are addressed by dense indices in declaration order.
/// The kernel is stored densely as `kernel[(x * |A| + a) * |X| + y]`;
/// terminal states carry all-zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    state_ids: Vec<String>,
    action_ids: Vec<String>,
    kinds: Vec<StateKind>,
    proxy: Vec<usize>,
    initial: usize,
    unsafe_terminal: bool,
    t_max: usize,
    kernel: Vec<f64>,
    cost: Vec<f64>,
}

impl Mdp {
    /// Builds an MDP from index-based tables.
    ///
    /// Only shape and partition-label errors are reported here; probabilistic
    /// invariants are left to [`super::validate_mdp`].
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_ids: Vec<String>,
        action_ids: Vec<String>,
        kinds: Vec<StateKind>,
        proxy: Vec<usize>,
        initial: usize,
        unsafe_terminal: bool,
        t_max: usize,
        kernel: Vec<f64>,
        cost: Vec<f64>,
    ) -> Result<Self, MdpError> {
        let n = state_ids.len();
        let m = action_ids.len();
        if n == 0 || m == 0 {
            return Err(MdpError::Schema("state and action sets must be non-empty".into()));
        }
        if kinds.len() != n {
            return Err(MdpError::Schema(format!(
                "expected {n} state kinds, got {}",
                kinds.len()
            )));
        }
        if kernel.len() != n * m * n {
            return Err(MdpError::Schema(format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                n * m * n
            )));
        }
        if cost.len() != n * m {
            return Err(MdpError::Schema(format!(
                "cost table has {} entries, expected {}",
                cost.len(),
                n * m
            )));
        }
        if initial >= n || proxy.iter().any(|&x| x >= n) {
            return Err(MdpError::Schema("state index out of range".into()));
        }
        if t_max == 0 {
            return Err(MdpError::Schema("t_max must be positive".into()));
        }
        let mut proxy = proxy;
        proxy.sort_unstable();
        proxy.dedup();
        Ok(Self {
            state_ids,
            action_ids,
            kinds,
            proxy,
            initial,
            unsafe_terminal,
            t_max,
            kernel,
            cost,
        })
    }

    pub fn from_file(file: &MdpFile) -> Result<Self, MdpError> {
        let state_index = index_ids(&file.states, "state")?;
        let action_index = index_ids(&file.actions, "action")?;
        let n = file.states.len();
        let m = file.actions.len();

        let lookup_state = |id: &str, field: &str| {
            state_index
                .get(id)
                .copied()
                .ok_or_else(|| MdpError::UnknownId {
                    field: field.to_string(),
                    id: id.to_string(),
                })
        };
        let lookup_action = |id: &str, field: &str| {
            action_index
                .get(id)
                .copied()
                .ok_or_else(|| MdpError::UnknownId {
                    field: field.to_string(),
                    id: id.to_string(),
                })
        };

        let mut kinds: Vec<Option<StateKind>> = vec![None; n];
        for (ids, kind, field) in [
            (&file.living, StateKind::Living, "living"),
            (&file.unsafe_states, StateKind::Unsafe, "unsafe"),
            (&file.goal, StateKind::Goal, "goal"),
        ] {
            for id in ids {
                let x = lookup_state(id, field)?;
                if let Some(prev) = kinds[x] {
                    return Err(MdpError::Schema(format!(
                        "state {id} is listed as both {prev:?} and {kind:?}"
                    )));
                }
                kinds[x] = Some(kind);
            }
        }
        let kinds = kinds
            .into_iter()
            .enumerate()
            .map(|(x, k)| {
                k.ok_or_else(|| {
                    MdpError::Schema(format!(
                        "state {} belongs to none of living/unsafe/goal",
                        file.states[x]
                    ))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let proxy = match &file.proxy {
            Some(ids) => ids
                .iter()
                .map(|id| lookup_state(id, "proxy"))
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        let initial = match &file.initial {
            Some(id) => lookup_state(id, "initial")?,
            None => kinds
                .iter()
                .position(|&k| k == StateKind::Living)
                .ok_or_else(|| MdpError::Schema("no living state to start from".into()))?,
        };

        let mut kernel = vec![0.0; n * m * n];
        let mut seen = vec![false; n * m * n];
        for t in &file.transitions {
            let x = lookup_state(&t.from, "transitions.from")?;
            let a = lookup_action(&t.action, "transitions.action")?;
            let y = lookup_state(&t.to, "transitions.to")?;
            let idx = (x * m + a) * n + y;
            if seen[idx] {
                return Err(MdpError::Schema(format!(
                    "duplicate transition ({}, {}, {})",
                    t.from, t.action, t.to
                )));
            }
            seen[idx] = true;
            kernel[idx] = t.p;
        }

        let mut cost = vec![0.0; n * m];
        let mut seen = vec![false; n * m];
        for c in &file.costs {
            let x = lookup_state(&c.state, "costs.state")?;
            let a = lookup_action(&c.action, "costs.action")?;
            if seen[x * m + a] {
                return Err(MdpError::Schema(format!(
                    "duplicate cost ({}, {})",
                    c.state, c.action
                )));
            }
            seen[x * m + a] = true;
            cost[x * m + a] = c.c;
        }

        Self::new(
            file.states.clone(),
            file.actions.clone(),
            kinds,
            proxy,
            initial,
            file.unsafe_terminal,
            file.t_max,
            kernel,
            cost,
        )
    }

    /// Inverse of [`Mdp::from_file`]; zero transitions and zero costs are omitted.
    pub fn to_file(&self) -> MdpFile {
        let ids_of = |kind: StateKind| {
            self.states_of(kind)
                .map(|x| self.state_ids[x].clone())
                .collect::<Vec<_>>()
        };
        let mut transitions = Vec::new();
        let mut costs = Vec::new();
        for x in self.states() {
            for a in self.actions() {
                for y in self.states() {
                    let p = self.p(x, a, y);
                    if p != 0.0 {
                        transitions.push(TransitionEntry {
                            from: self.state_ids[x].clone(),
                            action: self.action_ids[a].clone(),
                            to: self.state_ids[y].clone(),
                            p,
                        });
                    }
                }
                let c = self.cost(x, a);
                if c != 0.0 {
                    costs.push(CostEntry {
                        state: self.state_ids[x].clone(),
                        action: self.action_ids[a].clone(),
                        c,
                    });
                }
            }
        }
        MdpFile {
            states: self.state_ids.clone(),
            actions: self.action_ids.clone(),
            living: ids_of(StateKind::Living),
            unsafe_states: ids_of(StateKind::Unsafe),
            goal: ids_of(StateKind::Goal),
            proxy: (!self.proxy.is_empty())
                .then(|| self.proxy.iter().map(|&x| self.state_ids[x].clone()).collect()),
            initial: Some(self.state_ids[self.initial].clone()),
            unsafe_terminal: self.unsafe_terminal,
            t_max: self.t_max,
            transitions,
            costs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_ids.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_ids.len()
    }

    pub fn states(&self) -> std::ops::Range<usize> {
        0..self.n_states()
    }

    pub fn actions(&self) -> std::ops::Range<usize> {
        0..self.n_actions()
    }

    pub fn state_id(&self, x: usize) -> &str {
        &self.state_ids[x]
    }

    pub fn action_id(&self, a: usize) -> &str {
        &self.action_ids[a]
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.state_ids.iter().position(|s| s == id)
    }

    pub fn action_index(&self, id: &str) -> Option<usize> {
        self.action_ids.iter().position(|s| s == id)
    }

    pub fn kind(&self, x: usize) -> StateKind {
        self.kinds[x]
    }

    pub fn is_living(&self, x: usize) -> bool {
        self.kinds[x] == StateKind::Living
    }

    pub fn is_unsafe(&self, x: usize) -> bool {
        self.kinds[x] == StateKind::Unsafe
    }

    pub fn is_goal(&self, x: usize) -> bool {
        self.kinds[x] == StateKind::Goal
    }

    /// Goal states always stop an episode; unsafe states only when flagged.
    pub fn is_terminal(&self, x: usize) -> bool {
        match self.kinds[x] {
            StateKind::Goal => true,
            StateKind::Unsafe => self.unsafe_terminal,
            StateKind::Living => false,
        }
    }

    pub fn states_of(&self, kind: StateKind) -> impl Iterator<Item = usize> + '_ {
        self.states().filter(move |&x| self.kinds[x] == kind)
    }

    pub fn unsafe_terminal(&self) -> bool {
        self.unsafe_terminal
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// The declared proxy set (may be empty).
    pub fn declared_proxy(&self) -> &[usize] {
        &self.proxy
    }

    /// Proxy states used for baseline synthesis: the declared set, or all
    /// living states when none is declared.
    pub fn effective_proxy(&self) -> Vec<usize> {
        if self.proxy.is_empty() {
            self.states_of(StateKind::Living).collect()
        } else {
            self.proxy.clone()
        }
    }

    /// Copy of the model with a different declared proxy set.
    pub fn with_proxy(&self, proxy: Vec<usize>) -> Self {
        let mut out = self.clone();
        out.proxy = proxy;
        out.proxy.sort_unstable();
        out.proxy.dedup();
        out
    }

    #[inline]
    pub fn p(&self, x: usize, a: usize, y: usize) -> f64 {
        self.kernel[(x * self.n_actions() + a) * self.n_states() + y]
    }

    /// Transition row `P(x, a, ·)`.
    #[inline]
    pub fn row(&self, x: usize, a: usize) -> &[f64] {
        let n = self.n_states();
        let start = (x * self.n_actions() + a) * n;
        &self.kernel[start..start + n]
    }

    #[inline]
    pub fn cost(&self, x: usize, a: usize) -> f64 {
        self.cost[x * self.n_actions() + a]
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    /// One-step probability of entering the unsafe set from a living
    /// state-action pair.
    pub fn kappa(&self, x: usize, a: usize) -> Result<f64, MdpError> {
        if self.is_terminal(x) || self.is_unsafe(x) {
            return Err(MdpError::Domain(format!(
                "kappa is defined only on living states, got {}",
                self.state_ids[x]
            )));
        }
        Ok(self.kappa_unchecked(x, a))
    }

    pub(crate) fn kappa_unchecked(&self, x: usize, a: usize) -> f64 {
        self.row(x, a)
            .iter()
            .enumerate()
            .filter(|&(y, _)| self.is_unsafe(y))
            .map(|(_, p)| p)
            .sum()
    }
}

fn index_ids(ids: &[String], what: &str) -> Result<HashMap<String, usize>, MdpError> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(MdpError::Schema(format!("duplicate {what} id {id}")));
        }
    }
    Ok(map)
}

/// What a learner knows about the model: partitions, costs and the stopping
/// bound, but not the transition kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub n_states: usize,
    pub n_actions: usize,
    pub kinds: Vec<StateKind>,
    pub unsafe_terminal: bool,
    pub initial: usize,
    pub t_max: usize,
    pub cost: Vec<f64>,
}

impl Skeleton {
    pub fn is_living(&self, x: usize) -> bool {
        self.kinds[x] == StateKind::Living
    }

    pub fn is_unsafe(&self, x: usize) -> bool {
        self.kinds[x] == StateKind::Unsafe
    }

    pub fn is_goal(&self, x: usize) -> bool {
        self.kinds[x] == StateKind::Goal
    }

    pub fn is_terminal(&self, x: usize) -> bool {
        match self.kinds[x] {
            StateKind::Goal => true,
            StateKind::Unsafe => self.unsafe_terminal,
            StateKind::Living => false,
        }
    }

    pub fn cost(&self, x: usize, a: usize) -> f64 {
        self.cost[x * self.n_actions + a]
    }
}

impl Mdp {
    pub fn skeleton(&self) -> Skeleton {
        Skeleton {
            n_states: self.n_states(),
            n_actions: self.n_actions(),
            kinds: self.kinds.clone(),
            unsafe_terminal: self.unsafe_terminal,
            initial: self.initial,
            t_max: self.t_max,
            cost: self.cost.clone(),
        }
    }
}
