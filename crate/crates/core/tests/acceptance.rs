//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! Run alone with `cargo test --test acceptance`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use morphgrad::checkpoint::Checkpoint;
use morphgrad::config::RunConfig;
use morphgrad::env_core::{Augmentation, Environment, LegArea, MorphParam, MorphologySpec};
use morphgrad::envs::{BenchmarkKind, HopperParams, PlanarHopper, SpringMass1D, SpringMassParams};
use morphgrad::es::{self, OptimizerConfig, SearchDistribution};
use morphgrad::policy_net::{NetworkShape, TanhMlp};
use morphgrad::trainer::{
    multi_run, AgentObjective, BenchmarkObjective, Objective, PolicySource, TrainConfig, TrainState, Trainer,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// 1. Score functions against the density written out by hand.
fn score_functions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mu: f64 = rng.random_range(-2.0..2.0);
        let sigma: f64 = rng.random_range(0.5..2.0);
        let w: f64 = mu + sigma * rng.random_range(-4.0..4.0);
        let dist = SearchDistribution::new(vec![mu], vec![sigma]).unwrap();
        let (gm, gs) = es::log_prob_grads(&dist, &[w]);
        // log N = -ln(sigma) - z^2 / 2 + const with z = (w - mu) / sigma;
        // dz/dmu = -1/sigma and dz/dsigma = -z/sigma.
        let z = (w - mu) / sigma;
        let oracle_mu = z / sigma;
        let oracle_sigma = -1.0 / sigma + z * z / sigma;
        worst = worst.max((gm[0] - oracle_mu).abs()).max((gs[0] - oracle_sigma).abs());
    }
    outcome(worst < 1e-12, format!("max abs error {worst:.2e} over 1000 triples"))
}

// 2. Monte Carlo gradient of E[-|w|^2], which is (-2 mu, -2 sigma).
fn estimator_consistency() -> Outcome {
    let dist = SearchDistribution::new(vec![0.5, -0.5, 0.5], vec![1.0, 1.0, 1.0]).unwrap();
    let cfg = OptimizerConfig {
        use_baseline: false,
        rank_shaping: false,
        ..OptimizerConfig::default()
    };
    let mut pop = es::sample_population(&dist, 100_000, 7, false);
    pop.fitnesses = pop
        .candidates
        .iter()
        .map(|w| -w.iter().map(|x| x * x).sum::<f64>())
        .collect();
    let g = es::estimate_gradient(&dist, &pop, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        worst = worst
            .max(((g.mu[j] + 2.0 * dist.mu[j]) / (2.0 * dist.mu[j])).abs())
            .max(((g.sigma[j] + 2.0 * dist.sigma[j]) / (2.0 * dist.sigma[j])).abs());
    }
    outcome(worst < 0.05, format!("max relative error {:.2}%", 100.0 * worst))
}

// 3. Benchmark convergence.
fn benchmark_convergence() -> Outcome {
    let sphere = BenchmarkObjective::new(BenchmarkKind::Sphere, 10);
    let train = TrainConfig {
        generations: 300,
        rollouts_per_candidate: 1,
        master_seed: 0,
        eval_every: 50,
        eval_rollouts: 1,
        init_mu_range: 1.0,
        ..TrainConfig::default()
    };
    let opt = OptimizerConfig {
        population_size: 64,
        sigma_init: 0.3,
        ..OptimizerConfig::default()
    };
    let s = Trainer::new(&train, &opt, &sphere).run().unwrap();
    let norm = s.dist.mu.iter().map(|x| x * x).sum::<f64>().sqrt();

    let rastrigin = BenchmarkObjective::new(BenchmarkKind::Rastrigin, 5);
    let train = TrainConfig {
        generations: 1000,
        eval_every: 1000,
        ..train
    };
    let opt = OptimizerConfig {
        population_size: 256,
        sigma_init: 0.5,
        lr_mu: 0.1,
        lr_sigma: 0.005,
        rank_shaping: true,
        ..OptimizerConfig::default()
    };
    let r = Trainer::new(&train, &opt, &rastrigin).run().unwrap();
    let hit = r.history.iter().position(|h| h.best_fitness > -1.0);
    let best = r.history.iter().map(|h| h.best_fitness).fold(f64::NEG_INFINITY, f64::max);
    outcome(
        norm < 0.1 && hit.is_some(),
        format!(
            "sphere |mu| = {norm:.4} after 300 generations; rastrigin best fitness {best:.4}, above -1 first at generation {}",
            hit.map_or("never".to_string(), |g| g.to_string())
        ),
    )
}

// 4. Decoded morphology always inside its bounds.
fn decode_bounds() -> Outcome {
    let p = MorphParam::new("x", 8.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (lo, hi) = (8.0 * 0.25, 8.0 * 1.75);
    let mut outside = 0usize;
    for _ in 0..1_000_000 {
        let raw: f64 = rng.random_range(-1e6..1e6) * rng.random::<f64>().powi(8);
        let v = p.decode(raw);
        if !(lo..=hi).contains(&v) {
            outside += 1;
        }
    }
    let floor = p.decode(-5.0);
    let thin = MorphParam::new("y", 6.4).decode(-1.0);
    let pass = outside == 0 && floor == 2.0 && (thin - 1.6).abs() < 1e-12;
    outcome(
        pass,
        format!("{outside} of 1e6 outside [2, 14]; 8.0 at floor -> {floor}; 6.4 at floor -> {thin}"),
    )
}

// 5. Utility factor.
fn utility_factor() -> Outcome {
    let spec = MorphologySpec {
        params: vec![MorphParam::new("len", 1.0), MorphParam::new("width", 0.5)],
    };
    let aug = Augmentation::for_design(true, &spec, LegArea { parts: vec![(0, 1)] }).unwrap();
    let same = aug.utility_factor(&[1.0, 0.5]);
    // Area 0.5 / e gives ln(e) = 1 extra.
    let smaller = aug.utility_factor(&[1.0 / std::f64::consts::E, 0.5]);
    let pass = (same - 1.0).abs() < 1e-12 && (smaller - 2.0).abs() < 1e-12;
    outcome(pass, format!("equal area {same:.15}; area / e {smaller:.15}"))
}

// 6. Learned spring-mass leg length against a brute-force grid.
fn spring_mass_oracle() -> Outcome {
    let env = SpringMass1D::new(SpringMassParams::default());
    let spec = env.morphology();
    let (shape, weights) = SpringMass1D::reference_policy();
    let score = |l: f64, t: f64| {
        let mut net = TanhMlp::new(shape.clone(), weights.clone()).unwrap();
        env.simulate(&[l, t], &mut net).0
    };
    let (l_lo, l_hi) = spec.params[0].bounds();
    let (t_lo, t_hi) = spec.params[1].bounds();
    let mut grid_best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=((l_hi - l_lo) / 0.01).round() as usize {
        let l = l_lo + 0.01 * i as f64;
        for k in 0..=((t_hi - t_lo) / 0.005).round() as usize {
            let t = t_lo + 0.005 * k as f64;
            let s = score(l, t);
            if s > grid_best.0 {
                grid_best = (s, l, t);
            }
        }
    }

    let objective = AgentObjective::new(
        env.clone(),
        PolicySource::Fixed(shape.clone(), weights.clone()),
        spec.clone(),
        true,
        false,
    )
    .unwrap();
    let train = TrainConfig {
        generations: 300,
        rollouts_per_candidate: 1,
        eval_every: 10,
        eval_rollouts: 1,
        ..TrainConfig::default()
    };
    let opt = OptimizerConfig {
        population_size: 32,
        lr_mu: 0.02,
        ..OptimizerConfig::default()
    };
    let s = Trainer::new(&train, &opt, &objective).run().unwrap();
    let learned = objective.physical_morphology(&s.dist.mu).unwrap();
    let gap = (learned[0] - grid_best.1).abs();
    outcome(
        gap <= 0.05,
        format!(
            "grid L* = {:.2} (t = {:.3}, score {:.4}); learned L = {:.4}, t = {:.4}, score {:.4}",
            grid_best.1,
            grid_best.2,
            grid_best.0,
            learned[0],
            learned[1],
            score(learned[0], learned[1])
        ),
    )
}

fn hopper_objective(learn_morphology: bool, params: HopperParams, hidden: Vec<usize>) -> AgentObjective<PlanarHopper> {
    let env = PlanarHopper::new(params);
    let shape = NetworkShape::new(PlanarHopper::OBS_DIM, hidden, PlanarHopper::ACT_DIM).unwrap();
    let spec = env.morphology();
    AgentObjective::new(env, PolicySource::Learned(shape), spec, learn_morphology, false).unwrap()
}

/// First generation whose best agent reaches `target`.
fn first_reaching(state: &TrainState, target: f64) -> Option<usize> {
    state.history.iter().position(|h| h.best_avg_score >= target)
}

// 7. Joint against fixed-morphology training on the hopper.
fn hopper_comparison() -> Outcome {
    const RUNS: usize = 5;
    let train = TrainConfig {
        generations: 100,
        rollouts_per_candidate: 1,
        eval_every: 1,
        eval_rollouts: 1,
        ..TrainConfig::default()
    };
    let opt = OptimizerConfig {
        population_size: 32,
        rank_shaping: true,
        ..OptimizerConfig::default()
    };
    let mut finals = Vec::new();
    let mut summaries = Vec::new();
    for learn in [true, false] {
        let obj = hopper_objective(learn, HopperParams::default(), vec![16, 16]);
        let mut states = Vec::new();
        let summary = multi_run(&train, &opt, &obj, RUNS, |_, s| states.push(s.clone()));
        // Score each final best agent on 16 held-out seeds.
        let scored: Vec<f64> = states
            .iter()
            .map(|s| {
                let w = s.best_params.as_ref().unwrap();
                let scores: Vec<f64> = (0..16).map(|k| obj.evaluate(w, 1000 + k).task_score).collect();
                morphgrad::trainer::mean(&scores)
            })
            .collect();
        finals.push(states);
        summaries.push((summary, scored));
    }
    let (joint, fixed) = (&summaries[0], &summaries[1]);
    let budget = (0.7 * train.generations as f64).floor() as usize;
    let mut fast = 0;
    let mut reach = Vec::new();
    for (j, f) in finals[0].iter().zip(&finals[1]) {
        let target = f.best_avg_score.unwrap();
        let g = first_reaching(j, target);
        if g.is_some_and(|g| g + 1 <= budget) {
            fast += 1;
        }
        reach.push(g.map_or("-".to_string(), |g| (g + 1).to_string()));
    }
    let wins = joint.1.iter().zip(&fixed.1).filter(|(a, b)| a > b).count();
    let pass = joint.0.failed == 0 && fixed.0.failed == 0 && joint.0.mean > fixed.0.mean && fast >= 3;
    outcome(
        pass,
        format!(
            "joint {:.2} ± {:.2} vs fixed {:.2} ± {:.2}; joint reached fixed final in <= {budget} generations in {fast}/5 runs (generations: {}); 16-seed wins {wins}/5",
            joint.0.mean,
            joint.0.std,
            fixed.0.mean,
            fixed.0.std,
            reach.join(", ")
        ),
    )
}

fn small_hopper() -> (TrainConfig, OptimizerConfig, AgentObjective<PlanarHopper>) {
    let params = HopperParams {
        terrain_bump_height: 0.03,
        steps: 300,
        ..HopperParams::default()
    };
    let train = TrainConfig {
        generations: 6,
        rollouts_per_candidate: 3,
        master_seed: 11,
        eval_every: 2,
        eval_rollouts: 4,
        ..TrainConfig::default()
    };
    let opt = OptimizerConfig {
        population_size: 24,
        rank_shaping: true,
        ..OptimizerConfig::default()
    };
    (train, opt, hopper_objective(true, params, vec![8]))
}

// 8. Bitwise determinism across invocations and worker counts.
fn determinism() -> Outcome {
    let (train, opt, obj) = small_hopper();
    let runs: Vec<TrainState> = [1, 4, 8, 1]
        .iter()
        .map(|&workers| {
            let cfg = TrainConfig { workers, ..train.clone() };
            Trainer::new(&cfg, &opt, &obj).run().unwrap()
        })
        .collect();
    let same = runs.iter().all(|r| r.bitwise_eq(&runs[0]));
    outcome(same, "hopper, workers 1/4/8 and a repeated run".to_string())
}

// 9. Checkpoint resume and round-trips.
fn persistence() -> Outcome {
    let text = r#"
output_dir = "unused"
[env]
id = "hopper"
[env.hopper]
terrain_bump_height = 0.03
steps = 300
[policy]
hidden_dims = [8]
[optimizer]
population_size = 16
rank_shaping = true
[train]
generations = 8
rollouts_per_candidate = 2
eval_every = 3
eval_rollouts = 3
master_seed = 5
"#;
    let config = RunConfig::parse(text).unwrap();
    let config_ok = RunConfig::parse(&config.to_text()).unwrap() == config;
    let obj = config.build().unwrap();
    let trainer = Trainer::new(&config.train, &config.optimizer, obj.as_ref());
    let full = trainer.run().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.txt");
    let cadence = TrainConfig {
        checkpoint_every: 3,
        ..config.train.clone()
    };
    let mut snapshots = Vec::new();
    Trainer::new(&cadence, &config.optimizer, obj.as_ref())
        .resume(trainer.initial_state(), |s| {
            snapshots.push(s.clone());
            Ok(())
        })
        .unwrap();
    let partial = snapshots[0].clone();
    let ckpt = Checkpoint {
        config: config.clone(),
        state: partial.clone(),
    };
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let ckpt_ok = loaded.state.bitwise_eq(&partial) && loaded.config == config;
    let resumed = trainer.resume(loaded.state, |_| Ok(())).unwrap();
    let resume_ok = resumed.bitwise_eq(&full);
    outcome(
        config_ok && ckpt_ok && resume_ok,
        format!(
            "config round-trip {config_ok}; checkpoint round-trip {ckpt_ok}; resume at {} of 8 matches {resume_ok}",
            partial.generation
        ),
    )
}

fn trace_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/fixed_morphology_trace.txt")
}

// 10. Fixed-morphology training against the stored trace.
fn baseline_trace() -> Outcome {
    let config = RunConfig::parse(include_str!("data/fixed_morphology.toml")).unwrap();
    let obj = config.build().unwrap();
    let state = Trainer::new(&config.train, &config.optimizer, obj.as_ref()).run().unwrap();
    let path = trace_path();
    if std::env::var_os("MORPHGRAD_BLESS").is_some() {
        Checkpoint {
            config: config.clone(),
            state: state.clone(),
        }
        .save(&path)
        .unwrap();
    }
    match Checkpoint::load(&path) {
        Ok(stored) => {
            let same = stored.state.bitwise_eq(&state) && stored.config == config;
            outcome(
                same,
                format!("{} generations, {} parameters", state.generation, state.dist.dim()),
            )
        }
        Err(e) => outcome(false, format!("reference trace unreadable: {e}")),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("score functions", score_functions),
        ("estimator consistency", estimator_consistency),
        ("benchmark convergence", benchmark_convergence),
        ("morphology bounds", decode_bounds),
        ("utility factor", utility_factor),
        ("spring-mass oracle", spring_mass_oracle),
        ("hopper joint vs fixed", hopper_comparison),
        ("determinism", determinism),
        ("persistence", persistence),
        ("baseline trace", baseline_trace),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = check();
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        if !r.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {verdict} {name}: {} [{:.1}s]",
            i + 1,
            r.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
