use crate::estimation::{ConfidenceModel, LearnerParams};

/// Normalized entropy of a total occupation value,
/// `H(ξ) = -(ξ / 2T) log((ξ + η) / 2T)`.
pub fn occupation_entropy(xi: f64, t_max: usize, eta: f64) -> f64 {
    let two_t = 2.0 * t_max as f64;
    if xi == 0.0 {
        return 0.0;
    }
    -(xi / two_t) * ((xi + eta) / two_t).ln()
}

/// Separable convex objective `Σ ξ c - α ε̂ H(ξ)` over state-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyObjective {
    /// Linear cost per pair, indexed `x * |A| + a`.
    pub cost: Vec<f64>,
    /// Entropy weight `α ε̂(x, a)` per pair.
    pub weight: Vec<f64>,
    pub t_max: usize,
    pub eta: f64,
}

pub fn build_entropy_objective(params: &LearnerParams, model: &ConfidenceModel) -> EntropyObjective {
    let (n, m) = (model.n_states(), model.n_actions());
    let mut cost = Vec::with_capacity(n * m);
    let mut weight = Vec::with_capacity(n * m);
    for x in 0..n {
        for a in 0..m {
            cost.push(model.cost(x, a));
            weight.push(params.alpha * model.eps_hat(x, a));
        }
    }
    EntropyObjective {
        cost,
        weight,
        t_max: params.t_max,
        eta: params.eta,
    }
}

impl EntropyObjective {
    fn two_t(&self) -> f64 {
        2.0 * self.t_max as f64
    }

    pub fn value(&self, xi: &[f64]) -> f64 {
        xi.iter()
            .enumerate()
            .map(|(i, &v)| {
                v * self.cost[i] - self.weight[i] * occupation_entropy(v, self.t_max, self.eta)
            })
            .sum()
    }

    /// Linear part `Σ ξ c` alone.
    pub fn linear_part(&self, xi: &[f64]) -> f64 {
        xi.iter().zip(&self.cost).map(|(v, c)| v * c).sum()
    }

    /// Partial derivative with respect to `ξ[i]`.
    pub fn derivative(&self, i: usize, xi: f64) -> f64 {
        let two_t = self.two_t();
        let xi = xi.max(0.0);
        let s = xi + self.eta;
        self.cost[i] + self.weight[i] / two_t * ((s / two_t).ln() + xi / s)
    }

    pub fn gradient(&self, xi: &[f64]) -> Vec<f64> {
        xi.iter()
            .enumerate()
            .map(|(i, &v)| self.derivative(i, v))
            .collect()
    }

    /// Second derivative with respect to `ξ[i]`; non-negative for any
    /// non-negative weight.
    pub fn curvature(&self, i: usize, xi: f64) -> f64 {
        let s = xi.max(0.0) + self.eta;
        self.weight[i] / self.two_t() * (1.0 / s + self.eta / (s * s))
    }

    /// Directional derivative of `γ ↦ f(ξ + γ d)`.
    pub fn directional(&self, xi: &[f64], dir: &[f64], step: f64) -> f64 {
        xi.iter()
            .zip(dir)
            .enumerate()
            .filter(|(_, (_, &d))| d != 0.0)
            .map(|(i, (&v, &d))| d * self.derivative(i, v + step * d))
            .sum()
    }
}
