#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use safe_reach::estimation::{ConfidenceModel, LearnerParams};
use safe_reach::mdp::{parse_mdp, simulate_with, Mdp, Policy, StateKind};

pub const PAPER_EXAMPLE: &str = include_str!("../../data/paper_example.json");

pub fn paper_mdp() -> Mdp {
    parse_mdp(PAPER_EXAMPLE).unwrap()
}

pub fn data_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/paper_example.json")
}

/// Sample mean and standard error of the mean.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mu = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0);
    (mu, (var / n).sqrt())
}

/// Uniformly random stochastic policy (rows of terminal states included).
pub fn random_policy(mdp: &Mdp, rng: &mut impl Rng) -> Policy {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut probs = Vec::with_capacity(n * m);
    for _ in 0..n {
        let w: Vec<f64> = (0..m).map(|_| -rng.gen::<f64>().ln()).collect();
        let s: f64 = w.iter().sum();
        probs.extend(w.iter().map(|v| v / s));
    }
    Policy::from_probs(n, m, probs)
}

pub struct McEstimate {
    pub safety: (f64, f64),
    pub value: (f64, f64),
    /// Mean and standard error of visit counts per pair `x * |A| + a`.
    pub visits: Vec<(f64, f64)>,
    pub truncated: usize,
}

/// Monte-Carlo estimates of safety, value and state-action visit counts.
pub fn monte_carlo(mdp: &Mdp, policy: &Policy, x0: usize, episodes: usize, seed: u64) -> McEstimate {
    let (n, m) = (mdp.n_states(), mdp.n_actions());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = Vec::with_capacity(episodes);
    let mut costs = Vec::with_capacity(episodes);
    let mut counts = vec![Vec::with_capacity(episodes); n * m];
    let mut truncated = 0;
    for _ in 0..episodes {
        let traj = simulate_with(mdp, policy, x0, &mut rng);
        hits.push(if traj.hit_unsafe { 1.0 } else { 0.0 });
        costs.push(traj.total_cost());
        let mut c = vec![0.0; n * m];
        for s in &traj.steps {
            c[s.state * m + s.action] += 1.0;
        }
        for (dst, v) in counts.iter_mut().zip(c) {
            dst.push(v);
        }
        truncated += traj.truncated as usize;
    }
    McEstimate {
        safety: mean_se(&hits),
        value: mean_se(&costs),
        visits: counts.iter().map(|c| mean_se(c)).collect(),
        truncated,
    }
}

/// Within `k` standard errors, with a small absolute floor for
/// zero-variance estimates.
pub fn within(estimate: (f64, f64), exact: f64, k: f64) -> bool {
    (estimate.0 - exact).abs() <= k * estimate.1 + 1e-12
}

/// Instance for the entropy-program oracle: two living states, one goal.
pub struct EntropyInstance {
    /// `p̂(x, a, y)` for x in {0,1}, a in {0,1}, y in {0,1,2}.
    pub p_hat: [[[f64; 3]; 2]; 2],
    pub eps: [[[f64; 3]; 2]; 2],
    pub cost: [[f64; 2]; 2],
    pub p: f64,
    pub alpha: f64,
    pub t_max: usize,
    pub eta: f64,
}

impl EntropyInstance {
    fn eps_hat(&self, x: usize, a: usize) -> f64 {
        self.eps[x][a].iter().sum()
    }

    fn entropy(&self, xi: f64) -> f64 {
        let tt = 2.0 * self.t_max as f64;
        -(xi / tt) * ((xi + self.eta) / tt).ln()
    }

    fn entropy_prime(&self, xi: f64) -> f64 {
        let tt = 2.0 * self.t_max as f64;
        -(1.0 / tt) * (((xi + self.eta) / tt).ln() + xi / (xi + self.eta))
    }

    fn var(x: usize, a: usize, y: usize) -> usize {
        (x * 2 + a) * 3 + y
    }

    pub fn objective(&self, h: &[f64]) -> f64 {
        let mut f = 0.0;
        for x in 0..2 {
            for a in 0..2 {
                let xi: f64 = (0..3).map(|y| h[Self::var(x, a, y)]).sum();
                f += self.cost[x][a] * xi - self.alpha * self.eps_hat(x, a) * self.entropy(xi);
            }
        }
        f
    }

    /// Constraints as `(coefficients, rhs, is_equality)` meaning
    /// `a·h = rhs` or `a·h <= rhs`, with the start state fixed at 0.
    fn constraints(&self) -> Vec<([f64; 12], f64, bool)> {
        let mut out = Vec::new();
        for y in 0..2 {
            let mut a = [0.0; 12];
            for x in 0..2 {
                for b in 0..2 {
                    a[Self::var(x, b, y)] += 1.0;
                }
            }
            for b in 0..2 {
                for z in 0..3 {
                    a[Self::var(y, b, z)] -= 1.0;
                }
            }
            out.push((a, if y == 0 { -1.0 } else { 0.0 }, true));
        }
        for x in 0..2 {
            for b in 0..2 {
                for y in 0..3 {
                    let hi = self.p_hat[x][b][y] + self.eps[x][b][y];
                    let lo = self.p_hat[x][b][y] - self.eps[x][b][y];
                    let mut up = [0.0; 12];
                    let mut dn = [0.0; 12];
                    for z in 0..3 {
                        up[Self::var(x, b, z)] -= hi;
                        dn[Self::var(x, b, z)] += lo;
                    }
                    up[Self::var(x, b, y)] += 1.0;
                    dn[Self::var(x, b, y)] -= 1.0;
                    out.push((up, 0.0, false));
                    out.push((dn, 0.0, false));
                }
            }
        }
        let mut s = [0.0; 12];
        for x in 0..2 {
            for b in 0..2 {
                for y in 0..3 {
                    s[Self::var(x, b, y)] = 3.0 * self.eps_hat(x, b);
                }
            }
        }
        out.push((s, self.p, false));
        out
    }

    fn gradient(&self, h: &[f64]) -> [f64; 12] {
        let mut g = [0.0; 12];
        for x in 0..2 {
            for a in 0..2 {
                let xi: f64 = (0..3).map(|y| h[Self::var(x, a, y)]).sum();
                let d = self.cost[x][a] - self.alpha * self.eps_hat(x, a) * self.entropy_prime(xi);
                for y in 0..3 {
                    g[Self::var(x, a, y)] = d;
                }
            }
        }
        g
    }

    /// Augmented-Lagrangian method with projected-gradient inner solves on
    /// `h >= 0`. Returns the minimizer and its largest constraint violation.
    pub fn solve_oracle(&self) -> ([f64; 12], f64) {
        let cons = self.constraints();
        let dot = |a: &[f64; 12], h: &[f64; 12]| a.iter().zip(h).map(|(u, v)| u * v).sum::<f64>();
        let violation = |h: &[f64; 12]| {
            cons.iter()
                .map(|(a, b, eq)| {
                    let r = dot(a, h) - b;
                    if *eq {
                        r.abs()
                    } else {
                        r.max(0.0)
                    }
                })
                .fold(0.0, f64::max)
        };
        let mut h = [0.3; 12];
        let mut lambda = vec![0.0; cons.len()];
        let mut rho = 10.0;
        let mut prev_viol = f64::INFINITY;
        for outer in 0..200 {
            let lagrangian = |h: &[f64; 12]| {
                let mut v = self.objective(h);
                for ((a, b, eq), &l) in cons.iter().zip(&lambda) {
                    let r = dot(a, h) - b;
                    if *eq {
                        v += l * r + 0.5 * rho * r * r;
                    } else {
                        let t = (l + rho * r).max(0.0);
                        v += (t * t - l * l) / (2.0 * rho);
                    }
                }
                v
            };
            let grad = |h: &[f64; 12]| {
                let mut g = self.gradient(h);
                for ((a, b, eq), &l) in cons.iter().zip(&lambda) {
                    let r = dot(a, h) - b;
                    let w = if *eq { l + rho * r } else { (l + rho * r).max(0.0) };
                    for j in 0..12 {
                        g[j] += w * a[j];
                    }
                }
                g
            };
            let mut step = 1.0;
            for _inner in 0..20000 {
                let g = grad(&h);
                let f0 = lagrangian(&h);
                let mut moved = false;
                let mut t = step;
                while t > 1e-16 {
                    let mut trial = h;
                    for j in 0..12 {
                        trial[j] = (h[j] - t * g[j]).max(0.0);
                    }
                    let d2: f64 = trial.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum();
                    if lagrangian(&trial) <= f0 - 0.5 / t * d2 * 1e-4 {
                        let done = d2.sqrt() < 1e-13;
                        h = trial;
                        moved = !done;
                        step = (t * 2.0).min(1e3);
                        break;
                    }
                    t *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            for ((a, b, eq), l) in cons.iter().zip(lambda.iter_mut()) {
                let r = dot(a, &h) - b;
                *l = if *eq { *l + rho * r } else { (*l + rho * r).max(0.0) };
            }
            let viol = violation(&h);
            if viol < 1e-9 && outer > 5 {
                break;
            }
            if viol > 0.25 * prev_viol {
                rho = (rho * 4.0).min(1e8);
            }
            prev_viol = viol;
        }
        (h, violation(&h))
    }
}

/// Fraction of trials in which every coordinate of a row estimated from `n`
/// samples lies within its Bernstein radius of the truth.
pub fn bernstein_coverage(row: &[f64], n: u64, log_term: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = 0;
    for _ in 0..trials {
        let mut counts = vec![0u64; row.len()];
        for _ in 0..n {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = row.len() - 1;
            for (y, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = y;
                    break;
                }
            }
            counts[pick] += 1;
        }
        let ok = row.iter().zip(&counts).all(|(&p, &c)| {
            let p_hat = c as f64 / n as f64;
            (p_hat - p).abs() <= safe_reach::estimation::bernstein(p_hat, n, log_term)
        });
        covered += ok as usize;
    }
    covered as f64 / trials as f64
}

/// Known-LP optimum of the bundled model against Monte-Carlo visit counts
/// of its extracted policy: `(pair, exact, (mean, se))` per non-terminal pair.
pub fn occupation_round_trip(episodes: usize, seed: u64) -> Vec<(usize, f64, (f64, f64))> {
    use safe_reach::opt::{build_known_lp, extract_policy, solve_lp};
    let mdp = paper_mdp();
    let sol = solve_lp(&build_known_lp(&mdp, 0.5, 0));
    let pi = extract_policy(&sol, &Policy::uniform(mdp.n_states(), mdp.n_actions()));
    let mc = monte_carlo(&mdp, &pi, 0, episodes, seed);
    let m = mdp.n_actions();
    mdp.states()
        .filter(|&x| !mdp.is_terminal(x))
        .flat_map(|x| (0..m).map(move |a| x * m + a))
        .map(|pair| (pair, sol.xi[pair], mc.visits[pair]))
        .collect()
}

/// Exact safety and value of random policies against Monte-Carlo estimates:
/// `(exact safety, mc safety, exact value, mc value)` per policy.
#[allow(clippy::type_complexity)]
pub fn random_policy_checks(
    policies: usize,
    episodes: usize,
    seed: u64,
) -> Vec<(f64, (f64, f64), f64, (f64, f64))> {
    use safe_reach::mdp::{safety_function, value_function};
    let mdp = paper_mdp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..policies)
        .map(|i| {
            let pi = random_policy(&mdp, &mut rng);
            let s = safety_function(&mdp, &pi).unwrap()[0];
            let v = value_function(&mdp, &pi).unwrap()[0];
            let mc = monte_carlo(&mdp, &pi, 0, episodes, seed.wrapping_add(1 + i as u64));
            (s, mc.safety, v, mc.value)
        })
        .collect()
}

/// Random two-living-state instance whose confidence boxes force leakage
/// into the goal, so the post-absorption measure vanishes.
pub fn random_instance(seed: u64) -> (Mdp, ConfidenceModel, LearnerParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (3, 2);
    let mut kernel = vec![0.0; n * m * n];
    let mut cost = vec![0.0; n * m];
    for x in 0..2 {
        for a in 0..m {
            let goal = rng.gen_range(0.4..0.8);
            let stay = rng.gen_range(0.0..1.0) * (1.0 - goal);
            let row = &mut kernel[(x * m + a) * n..(x * m + a + 1) * n];
            row[x] = stay;
            row[1 - x] = 1.0 - goal - stay;
            row[2] = goal;
            cost[x * m + a] = rng.gen_range(0.1..1.0);
        }
    }
    let mdp = Mdp::new(
        vec!["u".into(), "v".into(), "goal".into()],
        vec!["a".into(), "b".into()],
        vec![StateKind::Living, StateKind::Living, StateKind::Goal],
        vec![],
        0,
        true,
        5,
        kernel.clone(),
        cost,
    )
    .unwrap();
    let counts: Vec<u64> = (0..n * m)
        .flat_map(|pair| {
            let total = rng.gen_range(20_000..60_000) as f64;
            let row = kernel[pair * n..(pair + 1) * n].to_vec();
            row.into_iter().map(move |p| (p * total).round() as u64)
        })
        .collect();
    let model = ConfidenceModel::from_transition_counts(&mdp.skeleton(), 2000, 0.01, counts).unwrap();
    let params = LearnerParams::new(0.6, 0.0, 5, 0.1).unwrap();
    (mdp, model, params)
}

pub fn instance_for_oracle(model: &ConfidenceModel, params: &LearnerParams) -> EntropyInstance {
    let mut inst = EntropyInstance {
        p_hat: [[[0.0; 3]; 2]; 2],
        eps: [[[0.0; 3]; 2]; 2],
        cost: [[0.0; 2]; 2],
        p: params.p,
        alpha: params.alpha,
        t_max: params.t_max,
        eta: params.eta,
    };
    for x in 0..2 {
        for a in 0..2 {
            inst.cost[x][a] = model.cost(x, a);
            for y in 0..3 {
                inst.p_hat[x][a][y] = model.p_hat(x, a, y);
                inst.eps[x][a][y] = model.eps(x, a, y);
            }
        }
    }
    inst
}
