//! The generation loop.
//!
//! Each generation samples a population from the search distribution,
//! evaluates every candidate as the mean of `rollouts_per_candidate` seeded
//! episodes, estimates the gradient and updates the distribution. Every
//! `eval_every` generations the generation's fittest candidate is re-scored on
//! a fixed held-out seed set using the unaugmented task score, and kept if it
//! beats the best agent so far.
//!
//! All randomness is keyed by `(master_seed, generation, candidate, rollout)`,
//! so the result is bitwise identical for any number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env_core::{Augmentation, Environment, MorphologySpec, ParamPartition};
use crate::envs::{BenchmarkEnv, BenchmarkKind};
use crate::error::{Error, Result};
use crate::es::{self, OptimizerConfig, SearchDistribution};
use crate::policy_net::{NetworkShape, TanhMlp};
use crate::seed;

/// Scores of one episode of a candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Unaugmented score, used for reporting and best-agent tracking.
    pub task_score: f64,
    /// Training signal, possibly augmented.
    pub fitness: f64,
}

/// Something a joint parameter vector can be scored on.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, w: &[f64], seed: u64) -> Evaluation;

    /// `(name, original, learned)` for each morphology parameter, if any.
    fn morphology_rows(&self, _w: &[f64]) -> Option<Vec<(String, f64, f64)>> {
        None
    }
}

/// A benchmark function scored directly on `w`.
#[derive(Debug, Clone)]
pub struct BenchmarkObjective(pub BenchmarkEnv);

impl BenchmarkObjective {
    pub fn new(kind: BenchmarkKind, dim: usize) -> Self {
        BenchmarkObjective(BenchmarkEnv { kind, dim })
    }
}

impl Objective for BenchmarkObjective {
    fn dim(&self) -> usize {
        self.0.dim
    }

    fn evaluate(&self, w: &[f64], _seed: u64) -> Evaluation {
        let f = self.0.fitness(w);
        Evaluation {
            task_score: f,
            fitness: f,
        }
    }
}

/// Where the policy weights of a rollout come from.
#[derive(Debug, Clone)]
pub enum PolicySource {
    /// The policy prefix of `w`.
    Learned(NetworkShape),
    /// A fixed network; `w` then holds only morphology.
    Fixed(NetworkShape, Vec<f64>),
}

/// An environment driven by a policy network, with optional learnable body.
pub struct AgentObjective<E> {
    pub env: E,
    pub policy: PolicySource,
    pub partition: ParamPartition,
    pub morphology: MorphologySpec,
    pub augmentation: Augmentation,
}

impl<E: Environment> AgentObjective<E> {
    /// Builds the objective. `learn_morphology = false` gives the
    /// fixed-morphology baseline where `w` holds policy weights only.
    pub fn new(
        env: E,
        policy: PolicySource,
        morphology: MorphologySpec,
        learn_morphology: bool,
        augment: bool,
    ) -> Result<Self> {
        morphology.validate()?;
        let shape = match &policy {
            PolicySource::Learned(s) => s,
            PolicySource::Fixed(s, w) => {
                if w.len() != s.parameter_count() {
                    return Err(Error::dim("fixed policy weights", s.parameter_count(), w.len()));
                }
                s
            }
        };
        shape.validate()?;
        if shape.input_dim != env.obs_dim() {
            return Err(Error::dim("policy input", env.obs_dim(), shape.input_dim));
        }
        if shape.output_dim != env.act_dim() {
            return Err(Error::dim("policy output", env.act_dim(), shape.output_dim));
        }
        let policy_len = match &policy {
            PolicySource::Learned(s) => s.parameter_count(),
            PolicySource::Fixed(..) => 0,
        };
        let morph_len = if learn_morphology { morphology.len() } else { 0 };
        let augmentation = Augmentation::for_design(augment, &morphology, env.leg_area())?;
        Ok(AgentObjective {
            env,
            policy,
            partition: ParamPartition::new(policy_len, morph_len),
            morphology,
            augmentation,
        })
    }

    /// Physical body dimensions encoded by `w`.
    pub fn physical_morphology(&self, w: &[f64]) -> Result<Vec<f64>> {
        let (_, morph_raw) = self.partition.split(w)?;
        if self.partition.morph_len == 0 {
            Ok(self.morphology.originals())
        } else {
            self.morphology.decode(morph_raw)
        }
    }

    fn network(&self, policy_raw: &[f64]) -> TanhMlp {
        let built = match &self.policy {
            PolicySource::Learned(shape) => TanhMlp::new(shape.clone(), policy_raw.to_vec()),
            PolicySource::Fixed(shape, w) => TanhMlp::new(shape.clone(), w.clone()),
        };
        built.expect("policy shape checked at construction")
    }
}

impl<E: Environment> Objective for AgentObjective<E> {
    fn dim(&self) -> usize {
        self.partition.total()
    }

    fn evaluate(&self, w: &[f64], seed: u64) -> Evaluation {
        let (policy_raw, _) = self
            .partition
            .split(w)
            .expect("candidate length matches partition");
        let physical = self
            .physical_morphology(w)
            .expect("candidate length matches partition");
        let mut net = self.network(policy_raw);
        let rollout = self.env.rollout(&physical, &mut net, seed);
        Evaluation {
            task_score: rollout.task_score,
            fitness: self.augmentation.augment(rollout.task_score, &physical),
        }
    }

    fn morphology_rows(&self, w: &[f64]) -> Option<Vec<(String, f64, f64)>> {
        if self.partition.morph_len == 0 {
            return None;
        }
        let physical = self.physical_morphology(w).ok()?;
        Some(
            self.morphology
                .params
                .iter()
                .zip(physical)
                .map(|(p, v)| (p.name.clone(), p.original, v))
                .collect(),
        )
    }
}

/// Mean that returns exactly `x` when every sample equals `x`.
pub fn mean(xs: &[f64]) -> f64 {
    match xs.split_first() {
        None => f64::NAN,
        Some((first, rest)) => {
            first + rest.iter().map(|x| x - first).sum::<f64>() / xs.len() as f64
        }
    }
}

/// Population standard deviation; zero for a single sample.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub generations: usize,
    pub rollouts_per_candidate: usize,
    pub master_seed: u64,
    pub eval_every: usize,
    pub eval_rollouts: usize,
    /// Write a checkpoint every this many generations; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Worker threads for candidate evaluation; 0 uses every core.
    pub workers: usize,
    /// Initial mean drawn uniformly from `[-r, r]`; 0 starts at the origin.
    pub init_mu_range: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            generations: 100,
            rollouts_per_candidate: 16,
            master_seed: 0,
            eval_every: 10,
            eval_rollouts: 100,
            checkpoint_every: 0,
            workers: 0,
            init_mu_range: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("train.{msg}")));
        if self.rollouts_per_candidate == 0 {
            return bad("rollouts_per_candidate must be >= 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1");
        }
        if self.eval_rollouts == 0 {
            return bad("eval_rollouts must be >= 1");
        }
        if !(self.init_mu_range >= 0.0 && self.init_mu_range.is_finite()) {
            return bad("init_mu_range must be a non-negative number");
        }
        Ok(())
    }
}

/// One row of training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub generation: usize,
    pub mean_fitness: f64,
    pub best_fitness: f64,
    pub sigma_mean: f64,
    /// Best held-out score so far; `NaN` until the first evaluation.
    pub best_avg_score: f64,
}

impl HistoryRow {
    pub fn bitwise_eq(&self, other: &HistoryRow) -> bool {
        self.generation == other.generation
            && self.mean_fitness.to_bits() == other.mean_fitness.to_bits()
            && self.best_fitness.to_bits() == other.best_fitness.to_bits()
            && self.sigma_mean.to_bits() == other.sigma_mean.to_bits()
            && self.best_avg_score.to_bits() == other.best_avg_score.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Completed generations.
    pub generation: usize,
    pub dist: SearchDistribution,
    pub best_params: Option<Vec<f64>>,
    pub best_avg_score: Option<f64>,
    pub history: Vec<HistoryRow>,
}

impl TrainState {
    pub fn initial(dim: usize, opt: &OptimizerConfig, cfg: &TrainConfig) -> Self {
        let mu = if cfg.init_mu_range > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(&[seed::tag::INIT, cfg.master_seed]));
            (0..dim)
                .map(|_| rng.random_range(-cfg.init_mu_range..=cfg.init_mu_range))
                .collect()
        } else {
            vec![0.0; dim]
        };
        TrainState {
            generation: 0,
            dist: SearchDistribution::isotropic(mu, opt.sigma_init),
            best_params: None,
            best_avg_score: None,
            history: Vec::new(),
        }
    }

    /// Bitwise comparison of every numeric field.
    pub fn bitwise_eq(&self, other: &TrainState) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.generation == other.generation
            && bits(&self.dist.mu) == bits(&other.dist.mu)
            && bits(&self.dist.sigma) == bits(&other.dist.sigma)
            && self.best_params.as_deref().map(bits) == other.best_params.as_deref().map(bits)
            && self.best_avg_score.map(f64::to_bits) == other.best_avg_score.map(f64::to_bits)
            && self.history.len() == other.history.len()
            && self
                .history
                .iter()
                .zip(&other.history)
                .all(|(a, b)| a.bitwise_eq(b))
    }
}

/// Training stopped early; `state` is the last consistent state.
#[derive(Debug, thiserror::Error)]
#[error("training aborted at generation {}: {source}", state.generation)]
pub struct TrainAbort {
    pub state: Box<TrainState>,
    #[source]
    pub source: Error,
}

/// Mean of `k` rollouts of candidate `w` whose base seed is `candidate_seed`.
pub fn evaluate_candidate(
    objective: &dyn Objective,
    w: &[f64],
    candidate_seed: u64,
    rollouts: usize,
) -> f64 {
    let fitnesses: Vec<f64> = (0..rollouts)
        .map(|k| objective.evaluate(w, seed::rollout_seed(candidate_seed, k)).fitness)
        .collect();
    mean(&fitnesses)
}

/// Mean unaugmented score of `w` over the held-out seeds of `master_seed`.
pub fn held_out_score(objective: &dyn Objective, w: &[f64], master_seed: u64, rollouts: usize) -> f64 {
    let scores: Vec<f64> = (0..rollouts)
        .map(|k| objective.evaluate(w, seed::eval_seed(master_seed, k)).task_score)
        .collect();
    mean(&scores)
}

pub struct Trainer<'a> {
    pub train: &'a TrainConfig,
    pub optimizer: &'a OptimizerConfig,
    pub objective: &'a dyn Objective,
}

impl<'a> Trainer<'a> {
    pub fn new(train: &'a TrainConfig, optimizer: &'a OptimizerConfig, objective: &'a dyn Objective) -> Self {
        Trainer {
            train,
            optimizer,
            objective,
        }
    }

    pub fn initial_state(&self) -> TrainState {
        TrainState::initial(self.objective.dim(), self.optimizer, self.train)
    }

    /// Trains from scratch.
    pub fn run(&self) -> Result<TrainState, TrainAbort> {
        self.resume(self.initial_state(), |_| Ok(()))
    }

    /// Continues `state` up to `train.generations`. `on_checkpoint` is called
    /// every `checkpoint_every` generations and once at the end.
    pub fn resume<F>(&self, mut state: TrainState, mut on_checkpoint: F) -> Result<TrainState, TrainAbort>
    where
        F: FnMut(&TrainState) -> Result<()>,
    {
        let abort = |state: &TrainState, source: Error| TrainAbort {
            state: Box::new(state.clone()),
            source,
        };
        if state.dist.dim() != self.objective.dim() {
            let e = Error::dim("search distribution", self.objective.dim(), state.dist.dim());
            return Err(abort(&state, e));
        }
        if let Err(e) = self.train.validate().and_then(|_| self.optimizer.validate()) {
            return Err(abort(&state, e));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.train.workers)
            .build()
            .map_err(|e| abort(&state, Error::Config(format!("train.workers: {e}"))))?;

        while state.generation < self.train.generations {
            match pool.install(|| self.step(&state)) {
                Ok(next) => state = next,
                Err(e) => return Err(abort(&state, e)),
            }
            let every = self.train.checkpoint_every;
            if every > 0 && state.generation.is_multiple_of(every) && state.generation < self.train.generations {
                on_checkpoint(&state).map_err(|e| abort(&state, e))?;
            }
        }
        on_checkpoint(&state).map_err(|e| abort(&state, e))?;
        Ok(state)
    }

    /// One generation: sample, evaluate, track best, update.
    pub fn step(&self, state: &TrainState) -> Result<TrainState> {
        let g = state.generation;
        let cfg = self.train;
        let mut pop = es::sample_population(
            &state.dist,
            self.optimizer.population_size,
            seed::sample_seed(cfg.master_seed, g),
            self.optimizer.antithetic,
        );
        pop.fitnesses = pop
            .candidates
            .par_iter()
            .zip(&pop.seeds)
            .map(|(w, &s)| evaluate_candidate(self.objective, w, s, cfg.rollouts_per_candidate))
            .collect();

        let grad = es::estimate_gradient(&state.dist, &pop, self.optimizer)?;
        let dist = es::update(&state.dist, &grad, self.optimizer)?;
        if !dist.is_finite() {
            return Err(Error::Diverged { generation: g });
        }

        let mut best_params = state.best_params.clone();
        let mut best_avg_score = state.best_avg_score;
        let last = g + 1 == cfg.generations;
        if g.is_multiple_of(cfg.eval_every) || last {
            let idx = pop.best_index().expect("fitnesses are finite");
            let candidate = &pop.candidates[idx];
            let seeds: Vec<usize> = (0..cfg.eval_rollouts).collect();
            let scores: Vec<f64> = seeds
                .par_iter()
                .map(|&k| {
                    self.objective
                        .evaluate(candidate, seed::eval_seed(cfg.master_seed, k))
                        .task_score
                })
                .collect();
            let score = mean(&scores);
            if best_avg_score.is_none_or(|b| score > b) {
                best_avg_score = Some(score);
                best_params = Some(candidate.clone());
            }
        }

        let best_fitness = pop.fitnesses[pop.best_index().expect("fitnesses are finite")];
        let mut history = state.history.clone();
        history.push(HistoryRow {
            generation: g,
            mean_fitness: mean(&pop.fitnesses),
            best_fitness,
            sigma_mean: dist.sigma_mean(),
            best_avg_score: best_avg_score.unwrap_or(f64::NAN),
        });
        Ok(TrainState {
            generation: g + 1,
            dist,
            best_params,
            best_avg_score,
            history,
        })
    }
}

/// Outcome of one run of a repeated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run: usize,
    pub master_seed: u64,
    /// Final best held-out score, or the failure message.
    pub result: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRunSummary {
    pub runs: Vec<RunOutcome>,
    /// Over successful runs only.
    pub mean: f64,
    pub std: f64,
    pub failed: usize,
}

impl MultiRunSummary {
    pub fn from_runs(runs: Vec<RunOutcome>) -> Self {
        let ok: Vec<f64> = runs.iter().filter_map(|r| r.result.clone().ok()).collect();
        let failed = runs.len() - ok.len();
        let (mean_v, std_v) = if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (mean(&ok), std_dev(&ok))
        };
        MultiRunSummary {
            runs,
            mean: mean_v,
            std: std_v,
            failed,
        }
    }
}

/// Runs `n_runs` independent trainings; run `r` uses `master_seed + r`.
/// `on_run` sees each finished state.
pub fn multi_run<F>(
    train: &TrainConfig,
    optimizer: &OptimizerConfig,
    objective: &dyn Objective,
    n_runs: usize,
    mut on_run: F,
) -> MultiRunSummary
where
    F: FnMut(usize, &TrainState),
{
    let runs = (0..n_runs)
        .map(|r| {
            let cfg = TrainConfig {
                master_seed: train.master_seed.wrapping_add(r as u64),
                ..train.clone()
            };
            let outcome = Trainer::new(&cfg, optimizer, objective).run();
            let result = match outcome {
                Ok(state) => {
                    on_run(r, &state);
                    state
                        .best_avg_score
                        .ok_or_else(|| "no evaluation was run".to_string())
                }
                Err(abort) => Err(abort.to_string()),
            };
            RunOutcome {
                run: r,
                master_seed: cfg.master_seed,
                result,
            }
        })
        .collect();
    MultiRunSummary::from_runs(runs)
}
