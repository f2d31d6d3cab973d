use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use morphgrad::checkpoint::Checkpoint;
use morphgrad::config::RunConfig;
use morphgrad::history::{read_history, summary_to_csv, write_history};
use morphgrad::plot::{render_svg, Series};
use morphgrad::seed;
use morphgrad::trainer::{mean, multi_run, std_dev, TrainState, Trainer};
use morphgrad::Error;

#[derive(Parser)]
#[command(name = "morphgrad", version, about = "Joint policy and morphology search with evolution strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file, optionally resuming from a checkpoint.
    Train {
        config: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score the best agent of a checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw training curves from one or more history files.
    Plot {
        #[arg(long = "history", required = true)]
        histories: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat training with seeds `master_seed + r`.
    Multirun {
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Config(_) => 2,
            Error::DigestMismatch { .. } => 3,
            Error::Checkpoint { .. } => 4,
            Error::Csv { .. } => 5,
            _ => 1,
        };
        Failure { code, error }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, resume } => cmd_train(&config, resume.as_deref()),
        Command::Eval {
            checkpoint,
            rollouts,
            seed,
        } => cmd_eval(&checkpoint, rollouts, seed),
        Command::Plot { histories, out } => cmd_plot(&histories, &out),
        Command::Multirun { config, runs } => cmd_multirun(&config, runs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).into())
}

fn cmd_train(config_path: &Path, resume: Option<&Path>) -> Result<(), Failure> {
    let config = RunConfig::load(config_path)?;
    let objective = config.build()?;
    let trainer = Trainer::new(&config.train, &config.optimizer, objective.as_ref());
    let state = match resume {
        None => trainer.initial_state(),
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let (expected, found) = (ckpt.config.digest(), config.digest());
            if expected != found {
                return Err(Error::DigestMismatch { expected, found }.into());
            }
            info!("resuming from generation {}", ckpt.state.generation);
            ckpt.state
        }
    };

    let dir = &config.output_dir;
    create_dir(dir)?;
    let ckpt_path = dir.join("checkpoint.txt");
    let save = |state: &TrainState| {
        info!("generation {}: checkpoint", state.generation);
        Checkpoint {
            config: config.clone(),
            state: state.clone(),
        }
        .save(&ckpt_path)
    };
    let state = match trainer.resume(state, save) {
        Ok(state) => state,
        Err(abort) => {
            let diag = dir.join("diverged.txt");
            let ckpt = Checkpoint {
                config: config.clone(),
                state: *abort.state,
            };
            match ckpt.save(&diag) {
                Ok(()) => warn!("diagnostic checkpoint written to {}", diag.display()),
                Err(e) => warn!("could not write diagnostic checkpoint: {e}"),
            }
            write_history(&dir.join("history.csv"), &ckpt.state.history)?;
            return Err(abort.source.into());
        }
    };
    write_history(&dir.join("history.csv"), &state.history)?;
    match state.best_avg_score {
        Some(best) => println!(
            "trained {} generations; best_avg_score {best:.6}; output {}",
            state.generation,
            dir.display()
        ),
        None => println!(
            "trained {} generations; no evaluation yet; output {}",
            state.generation,
            dir.display()
        ),
    }
    Ok(())
}

fn cmd_eval(path: &Path, rollouts: usize, seed_value: u64) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(path)?;
    let objective = ckpt.config.build()?;
    let w = ckpt.state.best_params.as_ref().unwrap_or(&ckpt.state.dist.mu);
    if rollouts == 0 {
        return Err(Error::Config("--rollouts must be >= 1".into()).into());
    }
    let scores: Vec<f64> = (0..rollouts)
        .map(|k| objective.evaluate(w, seed::eval_seed(seed_value, k)).task_score)
        .collect();
    println!(
        "score over {rollouts} rollouts: {:.6} ± {:.6}",
        mean(&scores),
        std_dev(&scores)
    );
    match objective.morphology_rows(w) {
        None => println!("morphology: fixed (baseline)"),
        Some(rows) => {
            println!("{:<16} {:>12} {:>12} {:>9}", "name", "original", "learned", "percent");
            for (name, original, learned) in rows {
                println!(
                    "{name:<16} {original:>12.4} {learned:>12.4} {:>8.1}%",
                    100.0 * learned / original
                );
            }
        }
    }
    Ok(())
}

fn cmd_plot(histories: &[PathBuf], out: &Path) -> Result<(), Failure> {
    let mut series = Vec::new();
    for path in histories {
        let rows = read_history(path)?;
        if histories.len() == 1 {
            series.push(Series::best_avg_score("best_avg_score", &rows));
            series.push(Series::mean_fitness("mean_fitness", &rows));
        } else {
            let stem = path.file_stem().map_or_else(
                || path.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            );
            series.push(Series::best_avg_score(stem, &rows));
        }
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(out, render_svg("training curves", &series)).map_err(Error::from)?;
    Ok(())
}

fn cmd_multirun(config_path: &Path, runs: usize) -> Result<(), Failure> {
    let config = RunConfig::load(config_path)?;
    if runs == 0 {
        return Err(Error::Config("--runs must be >= 1".into()).into());
    }
    let objective = config.build()?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let mut write_err = None;
    let summary = multi_run(
        &config.train,
        &config.optimizer,
        objective.as_ref(),
        runs,
        |r, state| {
            let run_dir = dir.join(format!("run_{r}"));
            let res = std::fs::create_dir_all(&run_dir)
                .map_err(Error::from)
                .and_then(|_| write_history(&run_dir.join("history.csv"), &state.history));
            if let Err(e) = res {
                write_err.get_or_insert(e);
            }
        },
    );
    if let Some(e) = write_err {
        return Err(e.into());
    }
    std::fs::write(dir.join("summary.csv"), summary_to_csv(&summary)).map_err(Error::from)?;
    for r in &summary.runs {
        match &r.result {
            Ok(score) => println!("run {} (seed {}): {score:.6}", r.run, r.master_seed),
            Err(msg) => println!("run {} (seed {}): FAILED {msg}", r.run, r.master_seed),
        }
    }
    println!(
        "final score over {} runs: {:.6} ± {:.6}",
        runs - summary.failed,
        summary.mean,
        summary.std
    );
    if summary.failed > 0 {
        println!("{} of {runs} runs failed and are excluded", summary.failed);
    }
    Ok(())
}
