use nalgebra::{DMatrix, DVector};

use super::{Mdp, MdpError, Policy};

const RESIDUAL_TOL: f64 = 1e-10;

/// Probability of hitting the unsafe set before the goal set, for every
/// starting state.
///
/// Solves `S = κ_π + P_π^{HH} S` over the living states with `S = 1` on the
/// unsafe set and `S = 0` on the goal set.
pub fn safety_function(mdp: &Mdp, policy: &Policy) -> Result<Vec<f64>, MdpError> {
    policy.check(mdp)?;
    let living: Vec<usize> = mdp.states().filter(|&x| mdp.is_living(x)).collect();
    let rhs = |x: usize| {
        mdp.actions()
            .map(|a| policy.prob(x, a) * mdp.kappa_unchecked(x, a))
            .sum::<f64>()
    };
    let solved = solve_absorption(mdp, policy, &living, rhs)?;

    let mut out = vec![0.0; mdp.n_states()];
    for x in mdp.states() {
        if mdp.is_unsafe(x) {
            out[x] = 1.0;
        }
    }
    for (i, &x) in living.iter().enumerate() {
        out[x] = solved[i].clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Expected cumulative cost until the goal set (or a terminal unsafe state)
/// is reached.
pub fn value_function(mdp: &Mdp, policy: &Policy) -> Result<Vec<f64>, MdpError> {
    policy.check(mdp)?;
    let active: Vec<usize> = mdp.states().filter(|&x| !mdp.is_terminal(x)).collect();
    let rhs = |x: usize| {
        mdp.actions()
            .map(|a| policy.prob(x, a) * mdp.cost(x, a))
            .sum::<f64>()
    };
    let solved = solve_absorption(mdp, policy, &active, rhs)?;
    let mut out = vec![0.0; mdp.n_states()];
    for (i, &x) in active.iter().enumerate() {
        out[x] = solved[i];
    }
    Ok(out)
}

/// Solves `(I - P_π restricted to `block`) v = r` by LU with a residual check.
fn solve_absorption(
    mdp: &Mdp,
    policy: &Policy,
    block: &[usize],
    rhs: impl Fn(usize) -> f64,
) -> Result<Vec<f64>, MdpError> {
    let k = block.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut pos = vec![usize::MAX; mdp.n_states()];
    for (i, &x) in block.iter().enumerate() {
        pos[x] = i;
    }
    let mut a = DMatrix::<f64>::identity(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for (i, &x) in block.iter().enumerate() {
        b[i] = rhs(x);
        for act in mdp.actions() {
            let w = policy.prob(x, act);
            if w == 0.0 {
                continue;
            }
            for (y, &p) in mdp.row(x, act).iter().enumerate() {
                if p != 0.0 && pos[y] != usize::MAX {
                    a[(i, pos[y])] -= w * p;
                }
            }
        }
    }
    let sol = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| MdpError::Singular("absorption system is singular".into()))?;
    let residual = (&a * &sol - &b).amax();
    if !residual.is_finite() || residual > RESIDUAL_TOL * (1.0 + b.amax()) {
        return Err(MdpError::Singular(format!(
            "absorption solve residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(sol.iter().copied().collect())
}
