use std::collections::VecDeque;
use std::fmt;

use super::{Mdp, StateKind};

const STOCHASTIC_TOL: f64 = 1e-9;

/// Named invariant a model can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    Partition,
    Stochasticity,
    TerminalRows,
    CostBounds,
    GoalCost,
    ProxySubset,
    InitialState,
    Accessibility,
    Transience,
}

impl Invariant {
    pub fn name(self) -> &'static str {
        match self {
            Invariant::Partition => "partition",
            Invariant::Stochasticity => "stochasticity",
            Invariant::TerminalRows => "terminal-rows",
            Invariant::CostBounds => "cost-bounds",
            Invariant::GoalCost => "goal-cost",
            Invariant::ProxySubset => "proxy-subset",
            Invariant::InitialState => "initial-state",
            Invariant::Accessibility => "accessibility",
            Invariant::Transience => "transience",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: Invariant,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.invariant.name(), self.detail)
    }
}

/// Outcome of [`validate_mdp`]. Warnings never make a model invalid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, invariant: Invariant) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }

    fn fail(&mut self, invariant: Invariant, detail: String) {
        self.violations.push(Violation { invariant, detail });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            write!(f, "valid")?;
        } else {
            write!(f, "invalid:")?;
            for v in &self.violations {
                write!(f, "\n  - {v}")?;
            }
        }
        for w in &self.warnings {
            write!(f, "\n  warning: {w}")?;
        }
        Ok(())
    }
}

/// Checks the structural and probabilistic invariants of a reach-avoid MDP.
///
/// Accessibility and transience are decided on the support graph of the
/// uniform policy: every living or unsafe state must reach the goal set, and
/// every non-terminal state must reach some terminal state.
pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = mdp.n_states();

    if mdp.states_of(StateKind::Living).next().is_none() {
        report.fail(Invariant::Partition, "living set is empty".into());
    }
    if mdp.states_of(StateKind::Goal).next().is_none() {
        report.fail(Invariant::Partition, "goal set is empty".into());
    }
    if !mdp.is_living(mdp.initial_state()) {
        report.fail(
            Invariant::InitialState,
            format!("initial state {} is not living", mdp.state_id(mdp.initial_state())),
        );
    }

    for x in mdp.states() {
        for a in mdp.actions() {
            let row = mdp.row(x, a);
            let (sx, sa) = (mdp.state_id(x), mdp.action_id(a));
            if mdp.is_terminal(x) {
                if row.iter().any(|&p| p != 0.0) {
                    report.fail(
                        Invariant::TerminalRows,
                        format!("terminal state {sx} has transitions under action {sa}"),
                    );
                }
            } else {
                if let Some(y) = row.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
                    report.fail(
                        Invariant::Stochasticity,
                        format!(
                            "P({sx}, {sa}, {}) = {} is not a probability",
                            mdp.state_id(y),
                            row[y]
                        ),
                    );
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    report.fail(
                        Invariant::Stochasticity,
                        format!("row ({sx}, {sa}) sums to {total}"),
                    );
                }
            }

            let c = mdp.cost(x, a);
            if mdp.is_goal(x) {
                if c != 0.0 {
                    report.fail(
                        Invariant::GoalCost,
                        format!("goal state {sx} has nonzero cost {c} under {sa}"),
                    );
                }
            } else if !(c.abs() <= 1.0) {
                report.fail(
                    Invariant::CostBounds,
                    format!("|c({sx}, {sa})| = {} exceeds 1", c.abs()),
                );
            }
        }
    }

    for &x in mdp.declared_proxy() {
        if !mdp.is_living(x) {
            report.fail(
                Invariant::ProxySubset,
                format!("proxy state {} is not living", mdp.state_id(x)),
            );
            continue;
        }
        let bad: Vec<&str> = mdp
            .actions()
            .filter(|&a| (mdp.kappa_unchecked(x, a) - 1.0).abs() > STOCHASTIC_TOL)
            .map(|a| mdp.action_id(a))
            .collect();
        if !bad.is_empty() {
            report.warnings.push(format!(
                "proxy state {} does not enter the unsafe set in one step with probability one under action(s) {}",
                mdp.state_id(x),
                bad.join(", ")
            ));
        }
    }

    // Reachability is only meaningful on a well-formed kernel.
    if report.violates(Invariant::Stochasticity) || report.violates(Invariant::TerminalRows) {
        return report;
    }

    let reaches_goal = backward_reachable(mdp, |y| mdp.is_goal(y));
    let reaches_terminal = backward_reachable(mdp, |y| mdp.is_terminal(y));
    for x in 0..n {
        if mdp.is_terminal(x) {
            continue;
        }
        if !reaches_goal[x] {
            report.fail(
                Invariant::Accessibility,
                format!("goal set is not accessible from {}", mdp.state_id(x)),
            );
        }
        if !reaches_terminal[x] {
            report.fail(
                Invariant::Transience,
                format!("{} lies in a recurrent class", mdp.state_id(x)),
            );
        }
    }
    report
}

/// States from which `target` is reached with positive probability under the
/// uniform policy. Terminal states do not propagate.
fn backward_reachable(mdp: &Mdp, target: impl Fn(usize) -> bool) -> Vec<bool> {
    let n = mdp.n_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for x in mdp.states().filter(|&x| !mdp.is_terminal(x)) {
        for y in mdp.states() {
            if mdp.actions().any(|a| mdp.p(x, a, y) > 0.0) {
                preds[y].push(x);
            }
        }
    }
    let mut seen: Vec<bool> = (0..n).map(&target).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&x| seen[x]).collect();
    while let Some(y) = queue.pop_front() {
        for &x in &preds[y] {
            if !seen[x] {
                seen[x] = true;
                queue.push_back(x);
            }
        }
    }
    seen
}
