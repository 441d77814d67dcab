//! Occupation-measure programs: the known-model LP, the optimistic extended
//! LP, the entropy-regularized program, and policy extraction.

mod entropy;
mod frank_wolfe;
mod problem;
mod simplex;

use serde::{Deserialize, Serialize};

use crate::mdp::Policy;

pub use entropy::{build_entropy_objective, occupation_entropy, EntropyObjective};
pub use frank_wolfe::{FrankWolfeOptions, FrankWolfeOutcome, FrankWolfeTrace};
pub use problem::{
    build_extended_lp, build_known_lp, post_index, pre_index, Layout, LpProblem, Row, RowKind,
    Sense, Var,
};
pub use simplex::{solve_lp_raw, LpOutcome, LpSolver, LpStatus, SimplexOptions, SimplexStats};

/// Zero-mass threshold below which a state's row comes from the fallback.
pub const ZERO_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub lp: SimplexStats,
    pub fw_iterations: usize,
    pub fw_gap: f64,
}

/// Optimal (or best available) occupation measures of a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub n_states: usize,
    pub n_actions: usize,
    /// Primal values in the problem's own variable order.
    pub primal: Vec<f64>,
    /// Pre-absorption measure `h(x,a,y)`, indexed `(x |A| + a) |X| + y`.
    pub h: Vec<f64>,
    /// Post-absorption measure `g(x,a,y)`.
    pub g: Vec<f64>,
    /// Total state-action occupation `ξ(x,a)`, indexed `x |A| + a`.
    pub xi: Vec<f64>,
    pub stats: SolverStats,
}

impl OccupationSolution {
    fn empty(problem: &LpProblem, status: LpStatus, stats: SolverStats) -> Self {
        Self {
            status,
            objective: f64::NAN,
            n_states: problem.n_states,
            n_actions: problem.n_actions,
            primal: Vec::new(),
            h: Vec::new(),
            g: Vec::new(),
            xi: Vec::new(),
            stats,
        }
    }

    fn from_primal(problem: &LpProblem, status: LpStatus, objective: f64, x: Vec<f64>, stats: SolverStats) -> Self {
        let (h, g) = problem.split_measures(&x);
        let xi = problem.total_occupation(&x);
        Self {
            status,
            objective,
            n_states: problem.n_states,
            n_actions: problem.n_actions,
            primal: x,
            h,
            g,
            xi,
            stats,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Whether a usable feasible point is attached.
    pub fn has_point(&self) -> bool {
        !self.primal.is_empty()
    }

    pub fn xi(&self, x: usize, a: usize) -> f64 {
        self.xi[x * self.n_actions + a]
    }

    /// Pre-absorption state-action measure `Σ_y h(x, a, y)`.
    pub fn pre_mass(&self, x: usize, a: usize) -> f64 {
        let n = self.n_states;
        let start = (x * self.n_actions + a) * n;
        self.h[start..start + n].iter().sum()
    }

    /// Post-absorption state-action measure `Σ_y g(x, a, y)`.
    pub fn post_mass(&self, x: usize, a: usize) -> f64 {
        let n = self.n_states;
        let start = (x * self.n_actions + a) * n;
        self.g[start..start + n].iter().sum()
    }
}

/// Solves a program with the dense simplex.
pub fn solve_lp(problem: &LpProblem) -> OccupationSolution {
    let out = solve_lp_raw(problem, SimplexOptions::default());
    let stats = SolverStats {
        lp: out.stats,
        fw_iterations: 0,
        fw_gap: 0.0,
    };
    if out.status == LpStatus::Optimal {
        OccupationSolution::from_primal(problem, out.status, out.objective, out.x, stats)
    } else {
        OccupationSolution::empty(problem, out.status, stats)
    }
}

/// Minimizes an entropy-regularized objective over the feasible set of
/// `problem` (its linear objective is ignored).
///
/// An iteration-limited run still carries its feasible iterate.
pub fn solve_entropy_program(
    problem: &LpProblem,
    objective: &EntropyObjective,
    options: FrankWolfeOptions,
) -> OccupationSolution {
    let out = frank_wolfe::minimize(problem, objective, options);
    let stats = SolverStats {
        lp: SimplexStats {
            phase2_pivots: out.trace.lp_pivots,
            primal_residual: if out.x.is_empty() {
                0.0
            } else {
                problem.max_violation(&out.x)
            },
            ..Default::default()
        },
        fw_iterations: out.trace.iterations,
        fw_gap: out.gap,
    };
    if out.x.is_empty() {
        OccupationSolution::empty(problem, out.status, stats)
    } else {
        OccupationSolution::from_primal(problem, out.status, out.objective, out.x, stats)
    }
}

/// Same as [`solve_entropy_program`] but also returns the iteration trace.
pub fn solve_entropy_program_traced(
    problem: &LpProblem,
    objective: &EntropyObjective,
    options: FrankWolfeOptions,
) -> (OccupationSolution, FrankWolfeTrace) {
    let out = frank_wolfe::minimize(problem, objective, options);
    let trace = out.trace.clone();
    let stats = SolverStats {
        lp: SimplexStats {
            phase2_pivots: out.trace.lp_pivots,
            ..Default::default()
        },
        fw_iterations: out.trace.iterations,
        fw_gap: out.gap,
    };
    let sol = if out.x.is_empty() {
        OccupationSolution::empty(problem, out.status, stats)
    } else {
        OccupationSolution::from_primal(problem, out.status, out.objective, out.x, stats)
    };
    (sol, trace)
}

/// Normalizes total occupation per state into a policy; states without mass
/// take the fallback's row.
pub fn extract_policy(solution: &OccupationSolution, fallback: &Policy) -> Policy {
    let (n, m) = (solution.n_states, solution.n_actions);
    let mut policy = fallback.clone();
    if solution.xi.is_empty() {
        return policy;
    }
    for x in 0..n {
        let row = &solution.xi[x * m..(x + 1) * m];
        let total: f64 = row.iter().map(|v| v.max(0.0)).sum();
        if total <= ZERO_MASS {
            continue;
        }
        let out = policy.row_mut(x);
        for a in 0..m {
            out[a] = row[a].max(0.0) / total;
        }
    }
    policy
}
