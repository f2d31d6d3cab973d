//! Text checkpoints.
//!
//! ```text
//! morphgrad-checkpoint 1
//! config_digest <sha256 hex>
//! config <n>
//! <n lines of canonical run config>
//! generation <g>
//! mu <d> <v>...
//! sigma <d> <v>...
//! best_avg_score <v | none>
//! best_params <d> <v>... | best_params none
//! history <rows>
//! <generation> <mean_fitness> <best_fitness> <sigma_mean> <best_avg_score>
//! ...
//! end
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::es::SearchDistribution;
use crate::trainer::{HistoryRow, TrainState};

pub const MAGIC: &str = "morphgrad-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: TrainState,
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_vec(out: &mut String, key: &str, values: &[f64]) {
    let _ = write!(out, "{key} {}", values.len());
    for v in values {
        out.push(' ');
        out.push_str(&real(*v));
    }
    out.push('\n');
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let config_text = self.config.to_text();
        let s = &self.state;
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "config_digest {}", self.config.digest());
        let _ = writeln!(out, "config {}", config_text.lines().count());
        for line in config_text.lines() {
            out.push_str(line);
            out.push('\n');
        }
        let _ = writeln!(out, "generation {}", s.generation);
        push_vec(&mut out, "mu", &s.dist.mu);
        push_vec(&mut out, "sigma", &s.dist.sigma);
        match s.best_avg_score {
            Some(v) => {
                let _ = writeln!(out, "best_avg_score {}", real(v));
            }
            None => out.push_str("best_avg_score none\n"),
        }
        match &s.best_params {
            Some(p) => push_vec(&mut out, "best_params", p),
            None => out.push_str("best_params none\n"),
        }
        let _ = writeln!(out, "history {}", s.history.len());
        for r in &s.history {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                r.generation,
                real(r.mean_fitness),
                real(r.best_fitness),
                real(r.sigma_mean),
                real(r.best_avg_score)
            );
        }
        out.push_str("end\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_text())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        Reader {
            path: path.to_path_buf(),
            lines: text.lines().enumerate(),
        }
        .checkpoint()
    }
}

struct Reader<'a> {
    path: PathBuf,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, line: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Checkpoint {
            path: self.path.clone(),
            msg: format!("line {line}: {}", msg.into()),
        })
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((i, l)) => Ok((i + 1, l)),
            None => self.fail(0, "unexpected end of file"),
        }
    }

    /// Reads `key rest...` and returns the whitespace-separated rest.
    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return self.fail(n, format!("expected `{key}`"));
        }
        Ok((n, parts.collect()))
    }

    fn real(&self, n: usize, s: &str) -> Result<f64> {
        match s.parse::<f64>() {
            Ok(v) => Ok(v),
            Err(e) => self.fail(n, format!("bad number `{s}`: {e}")),
        }
    }

    fn count(&self, n: usize, s: Option<&&str>) -> Result<usize> {
        match s.map(|s| s.parse::<usize>()) {
            Some(Ok(v)) => Ok(v),
            _ => self.fail(n, "bad count"),
        }
    }

    fn vector(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        let (n, rest) = self.keyed(key)?;
        if rest == ["none"] {
            return Ok(None);
        }
        let len = self.count(n, rest.first())?;
        if rest.len() != len + 1 {
            return self.fail(n, format!("`{key}` declares {len} values, found {}", rest.len() - 1));
        }
        rest[1..].iter().map(|s| self.real(n, s)).collect::<Result<_>>().map(Some)
    }

    fn checkpoint(mut self) -> Result<Checkpoint> {
        let (n, header) = self.keyed(MAGIC)?;
        if header != [VERSION.to_string().as_str()] {
            return self.fail(n, format!("unsupported version {header:?}"));
        }
        let (n, digest) = self.keyed("config_digest")?;
        let Some(&digest) = digest.first() else {
            return self.fail(n, "missing digest");
        };
        let (n, count) = self.keyed("config")?;
        let count = self.count(n, count.first())?;
        let mut config_text = String::new();
        for _ in 0..count {
            let (_, line) = self.next_line()?;
            config_text.push_str(line);
            config_text.push('\n');
        }
        let config = RunConfig::parse(&config_text).or_else(|e| self.fail(n, format!("embedded config: {e}")))?;
        let found = config.digest();
        if found != digest {
            return Err(Error::DigestMismatch {
                expected: digest.to_string(),
                found,
            });
        }

        let (n, g) = self.keyed("generation")?;
        let generation = self.count(n, g.first())?;
        let mu = self.vector("mu")?.unwrap_or_default();
        let sigma = self.vector("sigma")?.unwrap_or_default();
        let dist = SearchDistribution::new(mu, sigma).or_else(|e| self.fail(n, e.to_string()))?;
        let (n, best) = self.keyed("best_avg_score")?;
        let best_avg_score = match best.as_slice() {
            ["none"] => None,
            [v] => Some(self.real(n, v)?),
            _ => return self.fail(n, "bad best_avg_score"),
        };
        let best_params = self.vector("best_params")?;
        let (n, h) = self.keyed("history")?;
        let rows = self.count(n, h.first())?;
        let mut history = Vec::with_capacity(rows);
        for _ in 0..rows {
            let (n, line) = self.next_line()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return self.fail(n, "history rows need 5 fields");
            }
            history.push(HistoryRow {
                generation: self.count(n, f.first())?,
                mean_fitness: self.real(n, f[1])?,
                best_fitness: self.real(n, f[2])?,
                sigma_mean: self.real(n, f[3])?,
                best_avg_score: self.real(n, f[4])?,
            });
        }
        let (n, end) = self.next_line()?;
        if end != "end" {
            return self.fail(n, "expected `end`");
        }
        Ok(Checkpoint {
            config,
            state: TrainState {
                generation,
                dist,
                best_params,
                best_avg_score,
                history,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = RunConfig::parse("[env]\nid = \"sphere\"\ndim = 2\n").unwrap();
        Checkpoint {
            config,
            state: TrainState {
                generation: 2,
                dist: SearchDistribution::new(vec![0.1, -1.0 / 3.0], vec![0.3, 1e-300]).unwrap(),
                best_params: Some(vec![std::f64::consts::PI, -0.0]),
                best_avg_score: Some(-0.123456789012345678),
                history: vec![
                    HistoryRow {
                        generation: 0,
                        mean_fitness: -2.0,
                        best_fitness: -0.5,
                        sigma_mean: 0.29,
                        best_avg_score: -0.7,
                    },
                    HistoryRow {
                        generation: 1,
                        mean_fitness: f64::MIN_POSITIVE,
                        best_fitness: 1e300,
                        sigma_mean: 0.28,
                        best_avg_score: f64::NAN,
                    },
                ],
            },
        }
    }

    #[test]
    fn text_round_trip_is_bitwise() {
        let c = sample();
        let back = Checkpoint::parse(Path::new("c"), &c.to_text()).unwrap();
        assert!(back.state.bitwise_eq(&c.state));
        assert_eq!(back.config, c.config);
    }

    #[test]
    fn unset_best_round_trips() {
        let mut c = sample();
        c.state.best_params = None;
        c.state.best_avg_score = None;
        let back = Checkpoint::parse(Path::new("c"), &c.to_text()).unwrap();
        assert!(back.state.bitwise_eq(&c.state));
    }

    #[test]
    fn tampered_config_fails_digest() {
        let text = sample().to_text().replace("dim = 2", "dim = 3");
        assert!(matches!(
            Checkpoint::parse(Path::new("c"), &text),
            Err(Error::DigestMismatch { .. })
        ));
    }

    #[test]
    fn truncated_file_is_an_error() {
        let text = sample().to_text();
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            Checkpoint::parse(Path::new("c"), cut),
            Err(Error::Checkpoint { .. })
        ));
        assert!(Checkpoint::parse(Path::new("c"), "garbage").is_err());
    }
}
