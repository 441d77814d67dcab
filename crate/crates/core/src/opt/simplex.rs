//! Dense two-phase primal simplex.
//!
//! Entering columns follow Dantzig's rule; after a run of degenerate pivots
//! the solver switches to Bland's rule until the objective moves again, which
//! rules out cycling. A solver instance keeps its tableau after phase one so
//! the same polytope can be re-optimized under new costs from the last basis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::{LpProblem, Sense};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-8;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimplexStats {
    pub phase1_pivots: usize,
    pub phase2_pivots: usize,
    /// Phase-one optimum (sum of artificials); positive certifies infeasibility.
    pub phase1_objective: f64,
    /// Largest row or bound violation of the returned point.
    pub primal_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_pivots: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_pivots: 50_000 }
    }
}

/// Result of one optimization over the polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Primal point in the original variable space (empty unless optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    pub stats: SimplexStats,
}

/// Equality-form data after presolve: `A x = b`, `x >= 0`, `b >= 0`.
#[derive(Debug, Clone)]
struct StandardForm {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    /// Original variable behind each structural column.
    var_of_col: Vec<usize>,
    /// Values of variables fixed during presolve.
    fixed: Vec<Option<f64>>,
    n_structural: usize,
}

enum Presolved {
    Form(StandardForm),
    Infeasible(f64),
}

fn presolve(problem: &LpProblem) -> Presolved {
    let nv = problem.n_vars();
    let mut fixed: Vec<Option<f64>> = vec![None; nv];

    // Singleton equalities fix their variable.
    let mut dropped = vec![false; problem.rows.len()];
    for (i, row) in problem.rows.iter().enumerate() {
        if row.sense != Sense::Eq {
            continue;
        }
        let nz: Vec<&(usize, f64)> = row.coeffs.iter().filter(|(_, v)| *v != 0.0).collect();
        if nz.len() == 1 {
            let (j, v) = *nz[0];
            let val = row.rhs / v;
            if val < -PHASE1_TOL {
                return Presolved::Infeasible(-val);
            }
            let val = val.max(0.0);
            if let Some(prev) = fixed[j] {
                if (prev - val).abs() > PHASE1_TOL {
                    return Presolved::Infeasible((prev - val).abs());
                }
            }
            fixed[j] = Some(val);
            dropped[i] = true;
        }
    }

    let mut col_of_var = vec![usize::MAX; nv];
    let mut var_of_col = Vec::new();
    for j in 0..nv {
        if fixed[j].is_none() {
            col_of_var[j] = var_of_col.len();
            var_of_col.push(j);
        }
    }
    let n_structural = var_of_col.len();

    struct Dense {
        coeffs: Vec<f64>,
        sense: Sense,
        rhs: f64,
    }
    let mut dense_rows = Vec::new();
    for (i, row) in problem.rows.iter().enumerate() {
        if dropped[i] {
            continue;
        }
        let mut coeffs = vec![0.0; n_structural];
        let mut rhs = row.rhs;
        for &(j, v) in &row.coeffs {
            match fixed[j] {
                Some(val) => rhs -= v * val,
                None => coeffs[col_of_var[j]] += v,
            }
        }
        if coeffs.iter().all(|&v| v == 0.0) {
            let violated = match row.sense {
                Sense::Le => rhs < -PHASE1_TOL,
                Sense::Ge => rhs > PHASE1_TOL,
                Sense::Eq => rhs.abs() > PHASE1_TOL,
            };
            if violated {
                return Presolved::Infeasible(rhs.abs());
            }
            continue;
        }
        // Normalize so that rhs >= 0.
        let (coeffs, sense, rhs) = if rhs < 0.0 {
            let flipped = match row.sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
            (coeffs.iter().map(|v| -v).collect(), flipped, -rhs)
        } else {
            (coeffs, row.sense, rhs)
        };
        dense_rows.push(Dense { coeffs, sense, rhs });
    }

    let n_slack = dense_rows.iter().filter(|r| r.sense != Sense::Eq).count();
    let rows = dense_rows.len();
    let cols = n_structural + n_slack;
    let mut a = vec![0.0; rows * cols];
    let mut b = vec![0.0; rows];
    let mut slack = n_structural;
    for (i, r) in dense_rows.iter().enumerate() {
        a[i * cols..i * cols + n_structural].copy_from_slice(&r.coeffs);
        b[i] = r.rhs;
        match r.sense {
            Sense::Le => {
                a[i * cols + slack] = 1.0;
                slack += 1;
            }
            Sense::Ge => {
                a[i * cols + slack] = -1.0;
                slack += 1;
            }
            Sense::Eq => {}
        }
    }
    Presolved::Form(StandardForm {
        rows,
        cols,
        a,
        b,
        var_of_col,
        fixed,
        n_structural,
    })
}

/// Reusable solver over a fixed polytope.
#[derive(Debug, Clone)]
pub struct LpSolver {
    form: StandardForm,
    /// Rows still active after removing redundant equalities.
    live_rows: Vec<usize>,
    /// `B⁻¹ [A | b]` over live rows; width `cols + 1`.
    tab: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs and objective for the current cost vector.
    reduced: Vec<f64>,
    options: SimplexOptions,
    n_vars: usize,
    phase1_pivots: usize,
    phase1_objective: f64,
    reoptimizations: usize,
}

impl LpSolver {
    /// Presolves and runs phase one. Returns the infeasibility certificate
    /// (phase-one optimum) when the polytope is empty.
    pub fn new(problem: &LpProblem, options: SimplexOptions) -> Result<Self, LpOutcome> {
        let form = match presolve(problem) {
            Presolved::Form(f) => f,
            Presolved::Infeasible(gap) => {
                return Err(LpOutcome {
                    status: LpStatus::Infeasible,
                    x: Vec::new(),
                    objective: f64::NAN,
                    stats: SimplexStats {
                        phase1_objective: gap,
                        ..Default::default()
                    },
                })
            }
        };
        let rows = form.rows;
        let cols = form.cols;

        // Slack columns with +1 on a row give an initial basic variable;
        // other rows need an artificial.
        let mut basis = vec![usize::MAX; rows];
        for i in 0..rows {
            for j in form.n_structural..cols {
                if form.a[i * cols + j] == 1.0 {
                    basis[i] = j;
                    break;
                }
            }
        }
        let art_rows: Vec<usize> = (0..rows).filter(|&i| basis[i] == usize::MAX).collect();
        let width = cols + art_rows.len();
        let stride = width + 1;
        let mut tab = vec![0.0; rows * stride];
        for i in 0..rows {
            tab[i * stride..i * stride + cols].copy_from_slice(&form.a[i * cols..(i + 1) * cols]);
            tab[i * stride + width] = form.b[i];
        }
        for (k, &i) in art_rows.iter().enumerate() {
            tab[i * stride + cols + k] = 1.0;
            basis[i] = cols + k;
        }

        let mut phase = Tableau {
            rows,
            width,
            tab,
            basis,
            reduced: vec![0.0; stride],
            active_cols: width,
            live: vec![true; rows],
        };
        // Phase-one costs: one per artificial.
        let mut cost = vec![0.0; width];
        for c in cost.iter_mut().skip(cols) {
            *c = 1.0;
        }
        phase.set_costs(&cost);
        let (status, pivots) = phase.run(options.max_pivots);
        let phase1_objective = phase.objective();
        if status == LpStatus::IterationLimit {
            return Err(LpOutcome {
                status,
                x: Vec::new(),
                objective: f64::NAN,
                stats: SimplexStats {
                    phase1_pivots: pivots,
                    phase1_objective,
                    ..Default::default()
                },
            });
        }
        if phase1_objective > PHASE1_TOL {
            return Err(LpOutcome {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::NAN,
                stats: SimplexStats {
                    phase1_pivots: pivots,
                    phase1_objective,
                    ..Default::default()
                },
            });
        }

        // Drive artificials out of the basis; rows where that is impossible
        // are redundant.
        for i in 0..rows {
            if phase.basis[i] < cols {
                continue;
            }
            let entering = (0..cols)
                .filter(|&j| phase.tab[i * stride + j].abs() > PIVOT_TOL)
                .max_by(|&p, &q| {
                    phase.tab[i * stride + p]
                        .abs()
                        .total_cmp(&phase.tab[i * stride + q].abs())
                });
            match entering {
                Some(j) => phase.pivot(i, j),
                None => phase.live[i] = false,
            }
        }

        // Compact to live rows and structural+slack columns.
        let live_rows: Vec<usize> = (0..rows).filter(|&i| phase.live[i]).collect();
        let new_stride = cols + 1;
        let mut tab = vec![0.0; live_rows.len() * new_stride];
        let mut basis = Vec::with_capacity(live_rows.len());
        for (r, &i) in live_rows.iter().enumerate() {
            tab[r * new_stride..r * new_stride + cols]
                .copy_from_slice(&phase.tab[i * stride..i * stride + cols]);
            tab[r * new_stride + cols] = phase.tab[i * stride + width];
            basis.push(phase.basis[i]);
        }

        Ok(Self {
            form,
            live_rows,
            tab,
            basis,
            reduced: vec![0.0; new_stride],
            options,
            n_vars: problem.n_vars(),
            phase1_pivots: pivots,
            phase1_objective,
            reoptimizations: 0,
        })
    }

    /// Minimizes `costᵀx` (original variable space) from the current basis.
    pub fn minimize(&mut self, cost: &[f64]) -> LpOutcome {
        assert_eq!(cost.len(), self.n_vars);
        self.reoptimizations += 1;
        if self.reoptimizations.is_multiple_of(64) {
            self.refactor();
        }
        let cols = self.form.cols;
        let mut col_cost = vec![0.0; cols];
        for (c, &j) in self.form.var_of_col.iter().enumerate() {
            col_cost[c] = cost[j];
        }

        let mut tableau = Tableau {
            rows: self.basis.len(),
            width: cols,
            tab: std::mem::take(&mut self.tab),
            basis: std::mem::take(&mut self.basis),
            reduced: std::mem::take(&mut self.reduced),
            active_cols: cols,
            live: vec![true; self.live_rows.len()],
        };
        tableau.set_costs(&col_cost);
        let (status, pivots) = tableau.run(self.options.max_pivots);
        self.tab = tableau.tab;
        self.basis = tableau.basis;
        self.reduced = tableau.reduced;

        let mut stats = SimplexStats {
            phase1_pivots: self.phase1_pivots,
            phase2_pivots: pivots,
            phase1_objective: self.phase1_objective,
            primal_residual: 0.0,
        };
        if status != LpStatus::Optimal {
            return LpOutcome {
                status,
                x: Vec::new(),
                objective: f64::NAN,
                stats,
            };
        }
        let x = self.primal();
        let objective = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        stats.primal_residual = self.residual(&x);
        LpOutcome {
            status,
            x,
            objective,
            stats,
        }
    }

    /// Current basic solution mapped back to the original variables, with the
    /// basic values recomputed from the original matrix.
    fn primal(&self) -> Vec<f64> {
        let cols = self.form.cols;
        let stride = cols + 1;
        let mut col_val = vec![0.0; cols];
        let refined = self.solve_basis();
        for (r, &j) in self.basis.iter().enumerate() {
            let v = match &refined {
                Some(v) => v[r],
                None => self.tab[r * stride + cols],
            };
            col_val[j] = v.max(0.0);
        }
        let mut x = vec![0.0; self.n_vars];
        for (j, f) in self.form.fixed.iter().enumerate() {
            if let Some(v) = f {
                x[j] = *v;
            }
        }
        for (c, &j) in self.form.var_of_col.iter().enumerate() {
            x[j] = col_val[c];
        }
        x
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let k = self.basis.len();
        let cols = self.form.cols;
        DMatrix::from_fn(k, k, |r, c| {
            self.form.a[self.live_rows[r] * cols + self.basis[c]]
        })
    }

    fn solve_basis(&self) -> Option<Vec<f64>> {
        let b = DVector::from_iterator(
            self.live_rows.len(),
            self.live_rows.iter().map(|&i| self.form.b[i]),
        );
        let lu = self.basis_matrix().lu();
        lu.solve(&b).map(|v| v.iter().copied().collect())
    }

    /// Rebuilds the tableau from the original matrix for the current basis.
    fn refactor(&mut self) {
        let k = self.basis.len();
        if k == 0 {
            return;
        }
        let cols = self.form.cols;
        let stride = cols + 1;
        let lu = self.basis_matrix().lu();
        let rhs = DMatrix::from_fn(k, stride, |r, c| {
            let i = self.live_rows[r];
            if c < cols {
                self.form.a[i * cols + c]
            } else {
                self.form.b[i]
            }
        });
        if let Some(sol) = lu.solve(&rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                for r in 0..k {
                    for c in 0..stride {
                        self.tab[r * stride + c] = sol[(r, c)];
                    }
                }
            }
        }
    }

    fn residual(&self, x: &[f64]) -> f64 {
        let cols = self.form.cols;
        let mut col_val = vec![0.0; cols];
        for (c, &j) in self.form.var_of_col.iter().enumerate() {
            col_val[c] = x[j];
        }
        // Slack values follow from the structural ones row by row.
        let mut worst = 0.0f64;
        for i in 0..self.form.rows {
            let row = &self.form.a[i * cols..(i + 1) * cols];
            let mut lhs = 0.0;
            let mut slack_coef = 0.0;
            for j in 0..self.form.n_structural {
                lhs += row[j] * col_val[j];
            }
            for &v in &row[self.form.n_structural..] {
                if v != 0.0 {
                    slack_coef = v;
                }
            }
            let b = self.form.b[i];
            let viol = if slack_coef > 0.0 {
                (lhs - b).max(0.0)
            } else if slack_coef < 0.0 {
                (b - lhs).max(0.0)
            } else {
                (lhs - b).abs()
            };
            worst = worst.max(viol);
        }
        worst
    }
}

/// Working tableau: `rows × (width + 1)`, last column holds the rhs.
struct Tableau {
    rows: usize,
    width: usize,
    tab: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs, with the negated objective in the last slot.
    reduced: Vec<f64>,
    active_cols: usize,
    live: Vec<bool>,
}

impl Tableau {
    fn stride(&self) -> usize {
        self.width + 1
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let stride = self.stride();
        self.reduced.clear();
        self.reduced.extend_from_slice(cost);
        self.reduced.resize(stride, 0.0);
        for i in 0..self.rows {
            if !self.live[i] {
                continue;
            }
            let cb = cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.tab[i * stride..(i + 1) * stride];
            for (d, &t) in self.reduced.iter_mut().zip(row) {
                *d -= cb * t;
            }
        }
    }

    fn objective(&self) -> f64 {
        -self.reduced[self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let stride = self.stride();
        let piv = self.tab[r * stride + c];
        {
            let row = &mut self.tab[r * stride..(r + 1) * stride];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[c] = 1.0;
        }
        let pivot_row: Vec<f64> = self.tab[r * stride..(r + 1) * stride].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.tab[i * stride + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * stride..(i + 1) * stride];
            for (v, &p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[c] = 0.0;
        }
        let f = self.reduced[c];
        if f != 0.0 {
            for (v, &p) in self.reduced.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.reduced[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn run(&mut self, max_pivots: usize) -> (LpStatus, usize) {
        let stride = self.stride();
        let mut pivots = 0;
        let mut degenerate = 0;
        let mut is_basic = vec![false; self.width];
        for (i, &b) in self.basis.iter().enumerate() {
            if self.live[i] {
                is_basic[b] = true;
            }
        }
        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = -OPT_TOL;
            for j in 0..self.active_cols {
                if is_basic[j] {
                    continue;
                }
                let d = self.reduced[j];
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = entering else {
                return (LpStatus::Optimal, pivots);
            };
            if pivots >= max_pivots {
                return (LpStatus::IterationLimit, pivots);
            }

            let mut leave: Option<(usize, f64, f64)> = None;
            for i in 0..self.rows {
                if !self.live[i] {
                    continue;
                }
                let a = self.tab[i * stride + c];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.tab[i * stride + self.width].max(0.0) / a;
                match leave {
                    None => leave = Some((i, ratio, a)),
                    Some((bi, br, ba)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                        let better = if tie {
                            if bland {
                                self.basis[i] < self.basis[bi]
                            } else {
                                a > ba
                            }
                        } else {
                            ratio < br
                        };
                        if better {
                            leave = Some((i, ratio, a));
                        }
                    }
                }
            }
            let Some((r, ratio, _)) = leave else {
                return (LpStatus::Unbounded, pivots);
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            is_basic[self.basis[r]] = false;
            self.pivot(r, c);
            is_basic[c] = true;
            pivots += 1;
        }
    }
}

/// One-shot solve of an LP.
pub fn solve_lp_raw(problem: &LpProblem, options: SimplexOptions) -> LpOutcome {
    match LpSolver::new(problem, options) {
        Ok(mut solver) => {
            let mut out = solver.minimize(&problem.objective);
            if out.status == LpStatus::Optimal {
                out.stats.primal_residual = problem.max_violation(&out.x);
            }
            out
        }
        Err(outcome) => outcome,
    }
}
