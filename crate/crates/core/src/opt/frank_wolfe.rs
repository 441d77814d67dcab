//! Conditional-gradient minimization of a separable convex objective in the
//! total occupation over an occupation-measure polytope.

use super::entropy::EntropyObjective;
use super::problem::LpProblem;
use super::simplex::{LpOutcome, LpSolver, LpStatus, SimplexOptions};

const LINE_SEARCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrankWolfeOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl FrankWolfeOptions {
    /// Gap tolerance `1e-6 · T_max`, at most 5000 iterations.
    pub fn for_horizon(t_max: usize) -> Self {
        Self {
            tol: 1e-6 * t_max as f64,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrankWolfeTrace {
    pub iterations: usize,
    /// Duality gap observed at each iteration.
    pub gaps: Vec<f64>,
    /// Objective after each iteration.
    pub objectives: Vec<f64>,
    pub lp_pivots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrankWolfeOutcome {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub trace: FrankWolfeTrace,
}

fn failed(status: LpStatus, outcome: Option<&LpOutcome>) -> FrankWolfeOutcome {
    FrankWolfeOutcome {
        status,
        x: Vec::new(),
        objective: f64::NAN,
        gap: f64::INFINITY,
        trace: FrankWolfeTrace {
            iterations: 0,
            gaps: Vec::new(),
            objectives: Vec::new(),
            lp_pivots: outcome.map_or(0, |o| o.stats.phase1_pivots + o.stats.phase2_pivots),
        },
    }
}

/// Minimizes `objective(ξ(x))` over the feasible set of `problem`, using the
/// simplex as linear-minimization oracle and an exact line search.
///
/// Steps are pairwise: weight moves from the worst vertex of the active set
/// to the oracle's vertex, which keeps convergence linear on polytopes.
/// Every iterate is a convex combination of polytope vertices, so the
/// returned point is feasible whatever the termination reason.
pub fn minimize(
    problem: &LpProblem,
    objective: &EntropyObjective,
    options: FrankWolfeOptions,
) -> FrankWolfeOutcome {
    let mut solver = match LpSolver::new(problem, SimplexOptions::default()) {
        Ok(s) => s,
        Err(outcome) => return failed(outcome.status, Some(&outcome)),
    };
    let m = problem.n_actions;
    let pair_of: Vec<usize> = problem
        .vars
        .iter()
        .map(|v| {
            let (x, a) = v.state_action();
            x * m + a
        })
        .collect();
    let var_cost = |xi: &[f64]| -> Vec<f64> {
        let grad = objective.gradient(xi);
        pair_of.iter().map(|&p| grad[p]).collect()
    };

    let zero_xi = vec![0.0; objective.cost.len()];
    let start = solver.minimize(&var_cost(&zero_xi));
    if start.status != LpStatus::Optimal {
        return failed(start.status, Some(&start));
    }
    let mut lp_pivots = start.stats.phase1_pivots + start.stats.phase2_pivots;
    let mut active = vec![Vertex {
        xi: problem.total_occupation(&start.x),
        x: start.x,
        weight: 1.0,
    }];
    let mut x = active[0].x.clone();
    let mut xi = active[0].xi.clone();
    let mut value = objective.value(&xi);

    let mut gaps = Vec::new();
    let mut objectives = Vec::new();
    let mut gap = f64::INFINITY;
    let mut status = LpStatus::IterationLimit;

    for _ in 0..options.max_iter {
        let cost = var_cost(&xi);
        let vertex = solver.minimize(&cost);
        lp_pivots += vertex.stats.phase2_pivots;
        if vertex.status != LpStatus::Optimal {
            // Keep the current feasible iterate; the oracle could not improve.
            status = vertex.status;
            break;
        }
        let s = vertex.x;
        gap = (dot(&cost, &x) - dot(&cost, &s)).max(0.0);
        gaps.push(gap);
        if gap <= options.tol {
            objectives.push(value);
            status = LpStatus::Optimal;
            break;
        }

        let s_index = match active.iter().position(|v| same_point(&v.x, &s)) {
            Some(i) => i,
            None => {
                active.push(Vertex {
                    xi: problem.total_occupation(&s),
                    x: s,
                    weight: 0.0,
                });
                active.len() - 1
            }
        };
        let away = extreme_vertices(&active, &objective.gradient(&xi)).1;
        pairwise_step(objective, &mut active, &mut xi, s_index, away);

        // Corrective steps inside the current active set need no oracle call.
        for _ in 0..CORRECTIVE_STEPS {
            let grad = objective.gradient(&xi);
            let (best, away) = extreme_vertices(&active, &grad);
            let local_gap = dot(&grad, &active[away].xi) - dot(&grad, &active[best].xi);
            if best == away || local_gap <= 0.5 * options.tol {
                break;
            }
            pairwise_step(objective, &mut active, &mut xi, best, away);
        }

        x.iter_mut().for_each(|e| *e = 0.0);
        for v in &active {
            for (xv, vv) in x.iter_mut().zip(&v.x) {
                *xv += v.weight * vv;
            }
        }
        xi = problem.total_occupation(&x);
        let next = objective.value(&xi);
        value = value.min(next);
        objectives.push(value);
    }

    FrankWolfeOutcome {
        status,
        objective: objective.value(&xi),
        x,
        gap,
        trace: FrankWolfeTrace {
            iterations: gaps.len(),
            gaps,
            objectives,
            lp_pivots,
        },
    }
}

const DROP_WEIGHT: f64 = 1e-14;
const CORRECTIVE_STEPS: usize = 200;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Indices of the active vertices with the smallest and largest linearized
/// objective.
fn extreme_vertices(active: &[Vertex], grad: &[f64]) -> (usize, usize) {
    let (mut best, mut away) = ((0, f64::INFINITY), (0, f64::NEG_INFINITY));
    for (i, v) in active.iter().enumerate() {
        let d = dot(grad, &v.xi);
        if d < best.1 {
            best = (i, d);
        }
        if d > away.1 {
            away = (i, d);
        }
    }
    (best.0, away.0)
}

/// Moves weight from `away` to `toward` with an exact line search, dropping
/// the away vertex once it is emptied, and renormalizes.
fn pairwise_step(objective: &EntropyObjective, active: &mut Vec<Vertex>, xi: &mut [f64], toward: usize, away: usize) {
    if toward == away {
        return;
    }
    let max_step = active[away].weight;
    let dir: Vec<f64> = active[toward]
        .xi
        .iter()
        .zip(&active[away].xi)
        .map(|(a, b)| a - b)
        .collect();
    let step = line_search(objective, xi, &dir, max_step);
    active[toward].weight += step;
    active[away].weight -= step;
    if step >= max_step || active[away].weight <= DROP_WEIGHT {
        active.swap_remove(away);
    }
    let total: f64 = active.iter().map(|v| v.weight).sum();
    xi.iter_mut().for_each(|e| *e = 0.0);
    for v in active.iter_mut() {
        v.weight /= total;
        for (e, vx) in xi.iter_mut().zip(&v.xi) {
            *e += v.weight * vx;
        }
    }
}

struct Vertex {
    x: Vec<f64>,
    xi: Vec<f64>,
    weight: f64,
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-12 * (1.0 + u.abs()))
}

/// Exact minimization of the convex restriction on `[0, max_step]` by
/// bisection on its derivative.
fn line_search(objective: &EntropyObjective, xi: &[f64], dir: &[f64], max_step: f64) -> f64 {
    let d0 = objective.directional(xi, dir, 0.0);
    if d0 >= 0.0 {
        return 0.0;
    }
    if objective.directional(xi, dir, max_step) <= 0.0 {
        return max_step;
    }
    let (mut lo, mut hi) = (0.0, max_step);
    while hi - lo > LINE_SEARCH_TOL {
        let mid = 0.5 * (lo + hi);
        if objective.directional(xi, dir, mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
