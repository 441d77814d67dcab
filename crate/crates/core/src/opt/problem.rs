use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::estimation::{modified_cost, ConfidenceModel, LearnerParams};
use crate::mdp::{Mdp, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// Which block of the occupation-measure program a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowKind {
    /// Measure forced to zero on terminal or unsafe states.
    ZeroFix,
    /// Flow conservation of the pre-absorption measure over living states.
    PreFlow,
    /// Flow conservation of the post-absorption measure over living states.
    PostFlow,
    /// Flow balance at unsafe states (non-terminal unsafe sets only).
    UnsafeFlow,
    /// `h(x,a,y) <= (p̂ + ε) Σ_z h(x,a,z)`.
    PreUpper,
    /// `h(x,a,y) >= (p̂ - ε) Σ_z h(x,a,z)`.
    PreLower,
    PostUpper,
    PostLower,
    /// Safety budget.
    Safety,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: RowKind,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Decision variable of an occupation-measure program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Var {
    /// Pre-absorption state-action measure γ(x, a).
    Gamma { x: usize, a: usize },
    /// Post-absorption state-action measure β(x, a).
    Beta { x: usize, a: usize },
    /// Pre-absorption state-action-state measure h(x, a, y).
    Pre { x: usize, a: usize, y: usize },
    /// Post-absorption state-action-state measure g(x, a, y).
    Post { x: usize, a: usize, y: usize },
}

impl Var {
    pub fn state_action(&self) -> (usize, usize) {
        match *self {
            Var::Gamma { x, a } | Var::Beta { x, a } => (x, a),
            Var::Pre { x, a, .. } | Var::Post { x, a, .. } => (x, a),
        }
    }

    fn label(&self) -> String {
        match *self {
            Var::Gamma { x, a } => format!("gamma_{x}_{a}"),
            Var::Beta { x, a } => format!("beta_{x}_{a}"),
            Var::Pre { x, a, y } => format!("h_{x}_{a}_{y}"),
            Var::Post { x, a, y } => format!("g_{x}_{a}_{y}"),
        }
    }
}

/// How primal values map back to state-action-state measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layout {
    /// Variables are `(γ, β)`; `h = γ P` and `g = β P` use the stored kernel.
    StateAction { kernel: Vec<f64> },
    /// Variables are `(h, g)` directly.
    StateActionState,
}

/// A linear program `min cᵀx` over `x ≥ 0` subject to labelled rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub n_states: usize,
    pub n_actions: usize,
    pub t_max: usize,
    pub vars: Vec<Var>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub layout: Layout,
}

impl LpProblem {
    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn count_rows(&self, kind: RowKind) -> usize {
        self.rows.iter().filter(|r| r.kind == kind).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = x.iter().fold(0.0f64, |m, &v| m.max(-v));
        self.rows
            .iter()
            .map(|r| r.violation(x))
            .fold(bounds, f64::max)
    }

    /// Largest violation among rows of one kind.
    pub fn max_violation_of(&self, kind: RowKind, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.violation(x))
            .fold(0.0, f64::max)
    }

    /// Total state-action occupation `ξ(x, a)`, indexed `x * |A| + a`.
    pub fn total_occupation(&self, x: &[f64]) -> Vec<f64> {
        let mut xi = vec![0.0; self.n_states * self.n_actions];
        for (v, &val) in self.vars.iter().zip(x) {
            let (s, a) = v.state_action();
            xi[s * self.n_actions + a] += val;
        }
        xi
    }

    /// Pre- and post-absorption state-action-state measures, each indexed
    /// `(x * |A| + a) * |X| + y`.
    pub fn split_measures(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n_states, self.n_actions);
        let mut h = vec![0.0; n * m * n];
        let mut g = vec![0.0; n * m * n];
        for (v, &val) in self.vars.iter().zip(x) {
            match (*v, &self.layout) {
                (Var::Gamma { x: s, a }, Layout::StateAction { kernel }) => {
                    for y in 0..n {
                        h[(s * m + a) * n + y] += val * kernel[(s * m + a) * n + y];
                    }
                }
                (Var::Beta { x: s, a }, Layout::StateAction { kernel }) => {
                    for y in 0..n {
                        g[(s * m + a) * n + y] += val * kernel[(s * m + a) * n + y];
                    }
                }
                (Var::Pre { x: s, a, y }, _) => h[(s * m + a) * n + y] += val,
                (Var::Post { x: s, a, y }, _) => g[(s * m + a) * n + y] += val,
                _ => unreachable!("variable kind does not match layout"),
            }
        }
        (h, g)
    }

    /// Writes the problem in CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let term = |out: &mut String, first: &mut bool, coef: f64, name: &str| {
            if coef == 0.0 {
                return;
            }
            let sign = if coef < 0.0 { "-" } else if *first { "" } else { "+" };
            let _ = write!(out, " {sign} {:.17e} {name}", coef.abs());
            *first = false;
        };
        let names: Vec<String> = self.vars.iter().map(Var::label).collect();

        out.push_str("\\ occupation-measure program\nMinimize\n obj:");
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            term(&mut out, &mut first, c, &names[j]);
        }
        if first {
            let _ = write!(out, " 0 {}", names[0]);
        }
        out.push_str("\nSubject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " r{i}_{:?}:", row.kind);
            let mut first = true;
            for &(j, v) in &row.coeffs {
                term(&mut out, &mut first, v, &names[j]);
            }
            if first {
                let _ = write!(out, " 0 {}", names[0]);
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {:.17e}", row.rhs);
        }
        out.push_str("End\n");
        out
    }
}

struct Partition<'a> {
    n: usize,
    m: usize,
    kinds: &'a [crate::mdp::StateKind],
    unsafe_terminal: bool,
}

impl Partition<'_> {
    fn living(&self, x: usize) -> bool {
        self.kinds[x] == crate::mdp::StateKind::Living
    }
    fn unsafe_(&self, x: usize) -> bool {
        self.kinds[x] == crate::mdp::StateKind::Unsafe
    }
    fn goal(&self, x: usize) -> bool {
        self.kinds[x] == crate::mdp::StateKind::Goal
    }
    fn post_active(&self, x: usize) -> bool {
        self.living(x) || (self.unsafe_(x) && !self.unsafe_terminal)
    }
}

impl Skeleton {
    fn partition(&self) -> Partition<'_> {
        Partition {
            n: self.n_states,
            m: self.n_actions,
            kinds: &self.kinds,
            unsafe_terminal: self.unsafe_terminal,
        }
    }
}

/// Occupation-measure LP for a known kernel.
///
/// Variables are `γ(x,a)` at indices `x * |A| + a` followed by `β(x,a)` at
/// `|X||A| + x * |A| + a`.
pub fn build_known_lp(mdp: &Mdp, p: f64, x0: usize) -> LpProblem {
    let sk = mdp.skeleton();
    let part = sk.partition();
    let (n, m) = (part.n, part.m);
    let gamma = |x: usize, a: usize| x * m + a;
    let beta = |x: usize, a: usize| n * m + x * m + a;

    let mut vars = Vec::with_capacity(2 * n * m);
    for x in 0..n {
        for a in 0..m {
            vars.push(Var::Gamma { x, a });
        }
    }
    for x in 0..n {
        for a in 0..m {
            vars.push(Var::Beta { x, a });
        }
    }
    let mut objective = vec![0.0; 2 * n * m];
    for x in 0..n {
        for a in 0..m {
            objective[gamma(x, a)] = mdp.cost(x, a);
            objective[beta(x, a)] = mdp.cost(x, a);
        }
    }

    let mut rows = Vec::new();
    let zero = |j: usize| Row {
        kind: RowKind::ZeroFix,
        coeffs: vec![(j, 1.0)],
        sense: Sense::Eq,
        rhs: 0.0,
    };
    for x in 0..n {
        for a in 0..m {
            if !part.living(x) {
                rows.push(zero(gamma(x, a)));
            }
            if !part.post_active(x) {
                rows.push(zero(beta(x, a)));
            }
        }
    }

    let flow_coef = |x: usize, a: usize, y: usize| mdp.p(x, a, y) - if x == y { 1.0 } else { 0.0 };
    for y in (0..n).filter(|&y| part.living(y)) {
        let mut coeffs = Vec::new();
        for x in (0..n).filter(|&x| part.living(x)) {
            for a in 0..m {
                let v = flow_coef(x, a, y);
                if v != 0.0 {
                    coeffs.push((gamma(x, a), v));
                }
            }
        }
        rows.push(Row {
            kind: RowKind::PreFlow,
            coeffs,
            sense: Sense::Eq,
            rhs: if y == x0 { -1.0 } else { 0.0 },
        });
    }
    for y in (0..n).filter(|&y| part.living(y)) {
        let mut coeffs = Vec::new();
        for x in (0..n).filter(|&x| part.post_active(x)) {
            for a in 0..m {
                let v = flow_coef(x, a, y);
                if v != 0.0 {
                    coeffs.push((beta(x, a), v));
                }
            }
        }
        rows.push(Row {
            kind: RowKind::PostFlow,
            coeffs,
            sense: Sense::Eq,
            rhs: 0.0,
        });
    }
    if !part.unsafe_terminal {
        for y in (0..n).filter(|&y| part.unsafe_(y)) {
            let mut coeffs = Vec::new();
            for x in (0..n).filter(|&x| part.living(x)) {
                for a in 0..m {
                    let v = flow_coef(x, a, y);
                    if v != 0.0 {
                        coeffs.push((gamma(x, a), v));
                        coeffs.push((beta(x, a), v));
                    }
                }
            }
            for x in (0..n).filter(|&x| part.unsafe_(x)) {
                for a in 0..m {
                    let v = flow_coef(x, a, y);
                    if v != 0.0 {
                        coeffs.push((beta(x, a), v));
                    }
                }
            }
            rows.push(Row {
                kind: RowKind::UnsafeFlow,
                coeffs,
                sense: Sense::Eq,
                rhs: 0.0,
            });
        }
    }

    let mut coeffs = Vec::new();
    for x in (0..n).filter(|&x| part.living(x)) {
        for a in 0..m {
            let k = mdp.kappa_unchecked(x, a);
            if k != 0.0 {
                coeffs.push((gamma(x, a), k));
            }
        }
    }
    rows.push(Row {
        kind: RowKind::Safety,
        coeffs,
        sense: Sense::Le,
        rhs: p,
    });

    LpProblem {
        n_states: n,
        n_actions: m,
        t_max: mdp.t_max(),
        vars,
        objective,
        rows,
        layout: Layout::StateAction {
            kernel: mdp.kernel().to_vec(),
        },
    }
}

/// Index of `h(x, a, y)` in an extended program.
pub fn pre_index(n: usize, m: usize, x: usize, a: usize, y: usize) -> usize {
    (x * m + a) * n + y
}

/// Index of `g(x, a, y)` in an extended program.
pub fn post_index(n: usize, m: usize, x: usize, a: usize, y: usize) -> usize {
    n * m * n + (x * m + a) * n + y
}

/// Optimistic extended LP over state-action-state measures `(h, g)` whose
/// implied kernels range over the confidence set of `model`.
///
/// Rows, in order: zero-fixing, pre-absorption flow over living states,
/// post-absorption flow over living states, unsafe-state balance (only when
/// unsafe states are not terminal), the four confidence-box families, and the
/// tightened safety budget `Σ h (κ̂ + 3ε̂) <= p`. The objective uses the
/// optimistic cost.
pub fn build_extended_lp(
    skeleton: &Skeleton,
    model: &ConfidenceModel,
    params: &LearnerParams,
    x0: usize,
) -> LpProblem {
    let part = skeleton.partition();
    let (n, m) = (part.n, part.m);
    let pre = |x, a, y| pre_index(n, m, x, a, y);
    let post = |x, a, y| post_index(n, m, x, a, y);

    let mut vars = Vec::with_capacity(2 * n * m * n);
    for x in 0..n {
        for a in 0..m {
            for y in 0..n {
                vars.push(Var::Pre { x, a, y });
            }
        }
    }
    for x in 0..n {
        for a in 0..m {
            for y in 0..n {
                vars.push(Var::Post { x, a, y });
            }
        }
    }

    let mut objective = vec![0.0; 2 * n * m * n];
    for x in 0..n {
        for a in 0..m {
            let c = if part.goal(x) {
                0.0
            } else {
                modified_cost(model, params, x, a)
            };
            for y in 0..n {
                objective[pre(x, a, y)] = c;
                objective[post(x, a, y)] = c;
            }
        }
    }

    let mut rows = Vec::new();
    for x in 0..n {
        for a in 0..m {
            for y in 0..n {
                if !part.living(x) {
                    rows.push(Row {
                        kind: RowKind::ZeroFix,
                        coeffs: vec![(pre(x, a, y), 1.0)],
                        sense: Sense::Eq,
                        rhs: 0.0,
                    });
                }
            }
        }
    }
    for x in 0..n {
        for a in 0..m {
            for y in 0..n {
                if !part.post_active(x) {
                    rows.push(Row {
                        kind: RowKind::ZeroFix,
                        coeffs: vec![(post(x, a, y), 1.0)],
                        sense: Sense::Eq,
                        rhs: 0.0,
                    });
                }
            }
        }
    }

    // Inflow minus outflow; self-loops cancel and are left out.
    let balance = |coeffs: &mut Vec<(usize, f64)>,
                   y: usize,
                   sources: &dyn Fn(usize) -> bool,
                   var: &dyn Fn(usize, usize, usize) -> usize| {
        for x in (0..n).filter(|&x| sources(x) && x != y) {
            for a in 0..m {
                coeffs.push((var(x, a, y), 1.0));
            }
        }
        for a in 0..m {
            for z in (0..n).filter(|&z| z != y || !sources(y)) {
                coeffs.push((var(y, a, z), -1.0));
            }
        }
    };

    for y in (0..n).filter(|&y| part.living(y)) {
        let mut coeffs = Vec::new();
        balance(&mut coeffs, y, &|x| part.living(x), &pre);
        rows.push(Row {
            kind: RowKind::PreFlow,
            coeffs,
            sense: Sense::Eq,
            rhs: if y == x0 { -1.0 } else { 0.0 },
        });
    }
    for y in (0..n).filter(|&y| part.living(y)) {
        let mut coeffs = Vec::new();
        balance(&mut coeffs, y, &|x| part.post_active(x), &post);
        rows.push(Row {
            kind: RowKind::PostFlow,
            coeffs,
            sense: Sense::Eq,
            rhs: 0.0,
        });
    }
    if !part.unsafe_terminal {
        for y in (0..n).filter(|&y| part.unsafe_(y)) {
            let mut coeffs = Vec::new();
            for x in (0..n).filter(|&x| part.living(x)) {
                for a in 0..m {
                    coeffs.push((pre(x, a, y), 1.0));
                    coeffs.push((post(x, a, y), 1.0));
                }
            }
            balance(&mut coeffs, y, &|x| part.unsafe_(x), &post);
            rows.push(Row {
                kind: RowKind::UnsafeFlow,
                coeffs,
                sense: Sense::Eq,
                rhs: 0.0,
            });
        }
    }

    let boxed = |rows: &mut Vec<Row>,
                 var: &dyn Fn(usize, usize, usize) -> usize,
                 upper: RowKind,
                 lower: RowKind,
                 x: usize,
                 a: usize| {
        for y in 0..n {
            let p_hat = model.p_hat(x, a, y);
            let eps = model.eps(x, a, y);
            let hi = p_hat + eps;
            let lo = p_hat - eps;
            let mut up = Vec::with_capacity(n);
            let mut dn = Vec::with_capacity(n);
            for z in 0..n {
                let d = if z == y { 1.0 } else { 0.0 };
                let cu = d - hi;
                let cl = -d + lo;
                if cu != 0.0 {
                    up.push((var(x, a, z), cu));
                }
                if cl != 0.0 {
                    dn.push((var(x, a, z), cl));
                }
            }
            rows.push(Row {
                kind: upper,
                coeffs: up,
                sense: Sense::Le,
                rhs: 0.0,
            });
            rows.push(Row {
                kind: lower,
                coeffs: dn,
                sense: Sense::Le,
                rhs: 0.0,
            });
        }
    };
    for x in (0..n).filter(|&x| part.post_active(x)) {
        for a in 0..m {
            boxed(&mut rows, &pre, RowKind::PreUpper, RowKind::PreLower, x, a);
        }
    }
    for x in (0..n).filter(|&x| part.post_active(x)) {
        for a in 0..m {
            boxed(&mut rows, &post, RowKind::PostUpper, RowKind::PostLower, x, a);
        }
    }

    let mut coeffs = Vec::new();
    for x in (0..n).filter(|&x| part.living(x)) {
        for a in 0..m {
            let w = model.kappa_hat(x, a) + 3.0 * model.eps_hat(x, a);
            for y in 0..n {
                coeffs.push((pre(x, a, y), w));
            }
        }
    }
    rows.push(Row {
        kind: RowKind::Safety,
        coeffs,
        sense: Sense::Le,
        rhs: params.p,
    });

    LpProblem {
        n_states: n,
        n_actions: m,
        t_max: skeleton.t_max,
        vars,
        objective,
        rows,
        layout: Layout::StateActionState,
    }
}
