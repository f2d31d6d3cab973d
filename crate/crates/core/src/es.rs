//! Population-based REINFORCE over a factored Gaussian.
//!
//! Each coordinate `w_j ~ N(mu_j, sigma_j^2)`. For a sampled population the
//! gradient of the expected fitness with respect to `(mu, sigma)` is estimated
//! as the population mean of `shaped(R(w^i)) * grad log N(w^i)`, with the
//! closed-form per-coordinate score functions
//!
//! ```text
//! d/dmu_j    log N = (w_j - mu_j) / sigma_j^2
//! d/dsigma_j log N = ((w_j - mu_j)^2 - sigma_j^2) / sigma_j^3
//! ```
//!
//! and then `(mu, sigma)` take one plain gradient-ascent step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub population_size: usize,
    pub lr_mu: f64,
    pub lr_sigma: f64,
    pub sigma_init: f64,
    pub sigma_floor: f64,
    /// Subtract the population mean fitness before weighting.
    pub use_baseline: bool,
    /// Replace fitnesses by centered ranks in `[-0.5, 0.5]`. Takes precedence
    /// over `use_baseline`.
    pub rank_shaping: bool,
    /// Sample `n/2` perturbations and mirror them around the mean.
    pub antithetic: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            population_size: 192,
            lr_mu: 0.05,
            lr_sigma: 0.01,
            sigma_init: 0.1,
            sigma_floor: 0.01,
            use_baseline: true,
            rank_shaping: false,
            antithetic: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("optimizer.{msg}")));
        if self.population_size < 2 {
            return bad("population_size must be >= 2");
        }
        if self.antithetic && !self.population_size.is_multiple_of(2) {
            return bad("population_size must be even when antithetic sampling is on");
        }
        if !(self.lr_mu > 0.0 && self.lr_mu.is_finite()) {
            return bad("lr_mu must be a positive finite number");
        }
        if !(self.lr_sigma > 0.0 && self.lr_sigma.is_finite()) {
            return bad("lr_sigma must be a positive finite number");
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return bad("sigma_floor must be a positive finite number");
        }
        if !(self.sigma_init >= self.sigma_floor && self.sigma_init.is_finite()) {
            return bad("sigma_init must be finite and >= sigma_floor");
        }
        Ok(())
    }
}

/// Per-coordinate mean and standard deviation of the search Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchDistribution {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl SearchDistribution {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::dim("search distribution sigma", mu.len(), sigma.len()));
        }
        Ok(SearchDistribution { mu, sigma })
    }

    /// Isotropic start at `mu` with every `sigma_j = sigma`.
    pub fn isotropic(mu: Vec<f64>, sigma: f64) -> Self {
        let sigma = vec![sigma; mu.len()];
        SearchDistribution { mu, sigma }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().chain(&self.sigma).all(|v| v.is_finite())
    }

    pub fn sigma_mean(&self) -> f64 {
        if self.sigma.is_empty() {
            return 0.0;
        }
        self.sigma.iter().sum::<f64>() / self.sigma.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub candidates: Vec<Vec<f64>>,
    /// `NaN` until evaluated.
    pub fitnesses: Vec<f64>,
    /// Base seed handed to the evaluator for each candidate.
    pub seeds: Vec<u64>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Index of the highest fitness; ties go to the lowest index.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, f) in self.fitnesses.iter().enumerate() {
            match best {
                Some(b) if self.fitnesses[b] >= *f => {}
                _ if f.is_nan() => {}
                _ => best = Some(i),
            }
        }
        best
    }
}

/// Draws `n` candidates. Identical `(dist, n, rng_seed, antithetic)` give
/// bitwise-identical populations.
pub fn sample_population(
    dist: &SearchDistribution,
    n: usize,
    rng_seed: u64,
    antithetic: bool,
) -> Population {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let dim = dist.dim();
    let mut candidates = Vec::with_capacity(n);
    if antithetic {
        for _ in 0..n / 2 {
            let eps: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            for sign in [1.0, -1.0] {
                candidates.push(
                    (0..dim)
                        .map(|j| dist.mu[j] + sign * dist.sigma[j] * eps[j])
                        .collect(),
                );
            }
        }
    }
    while candidates.len() < n {
        candidates.push(
            (0..dim)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    dist.mu[j] + dist.sigma[j] * z
                })
                .collect(),
        );
    }
    let seeds = (0..n).map(|i| seed::mix(&[rng_seed, i as u64])).collect();
    Population {
        candidates,
        fitnesses: vec![f64::NAN; n],
        seeds,
    }
}

/// Score functions of one candidate: `(d log N / d mu, d log N / d sigma)`.
pub fn log_prob_grads(dist: &SearchDistribution, candidate: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(candidate.len(), dist.dim(), "candidate length");
    let mut grad_mu = Vec::with_capacity(candidate.len());
    let mut grad_sigma = Vec::with_capacity(candidate.len());
    for ((w, mu), sigma) in candidate.iter().zip(&dist.mu).zip(&dist.sigma) {
        let d = w - mu;
        let s2 = sigma * sigma;
        grad_mu.push(d / s2);
        grad_sigma.push((d * d - s2) / (s2 * sigma));
    }
    (grad_mu, grad_sigma)
}

/// Centered ranks in `[-0.5, 0.5]`; tied fitnesses share their average rank.
pub fn centered_ranks(fitnesses: &[f64]) -> Vec<f64> {
    let n = fitnesses.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitnesses[a].total_cmp(&fitnesses[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && fitnesses[order[end]] == fitnesses[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg / (n - 1) as f64 - 0.5;
        }
        start = end;
    }
    ranks
}

/// Fitness shaping selected by `cfg`.
pub fn shape_fitnesses(fitnesses: &[f64], cfg: &OptimizerConfig) -> Vec<f64> {
    if cfg.rank_shaping {
        centered_ranks(fitnesses)
    } else if cfg.use_baseline {
        let mean = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
        fitnesses.iter().map(|f| f - mean).collect()
    } else {
        fitnesses.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Population estimate of the gradient of expected fitness.
pub fn estimate_gradient(
    dist: &SearchDistribution,
    pop: &Population,
    cfg: &OptimizerConfig,
) -> Result<Gradient> {
    if let Some((index, &value)) = pop
        .fitnesses
        .iter()
        .enumerate()
        .find(|(_, f)| !f.is_finite())
    {
        return Err(Error::NonFiniteFitness { index, value });
    }
    let dim = dist.dim();
    for c in &pop.candidates {
        if c.len() != dim {
            return Err(Error::dim("candidate", dim, c.len()));
        }
    }
    let shaped = shape_fitnesses(&pop.fitnesses, cfg);
    let n = pop.len() as f64;
    let mut g_mu = vec![0.0; dim];
    let mut g_sigma = vec![0.0; dim];
    for (cand, r) in pop.candidates.iter().zip(&shaped) {
        let (gm, gs) = log_prob_grads(dist, cand);
        for j in 0..dim {
            g_mu[j] += r * gm[j];
            g_sigma[j] += r * gs[j];
        }
    }
    for v in g_mu.iter_mut().chain(g_sigma.iter_mut()) {
        *v /= n;
    }
    Ok(Gradient {
        mu: g_mu,
        sigma: g_sigma,
    })
}

/// One gradient-ascent step on `(mu, sigma)` with `sigma` clamped at the floor.
pub fn update(
    dist: &SearchDistribution,
    grad: &Gradient,
    cfg: &OptimizerConfig,
) -> Result<SearchDistribution> {
    let dim = dist.dim();
    if grad.mu.len() != dim {
        return Err(Error::dim("gradient mu", dim, grad.mu.len()));
    }
    if grad.sigma.len() != dim {
        return Err(Error::dim("gradient sigma", dim, grad.sigma.len()));
    }
    if let Some(index) = grad
        .mu
        .iter()
        .chain(&grad.sigma)
        .position(|v| !v.is_finite())
    {
        return Err(Error::NonFiniteGradient { index: index % dim.max(1) });
    }
    let mu = dist
        .mu
        .iter()
        .zip(&grad.mu)
        .map(|(m, g)| m + cfg.lr_mu * g)
        .collect();
    let sigma = dist
        .sigma
        .iter()
        .zip(&grad.sigma)
        .map(|(s, g)| (s + cfg.lr_sigma * g).max(cfg.sigma_floor))
        .collect();
    Ok(SearchDistribution { mu, sigma })
}
