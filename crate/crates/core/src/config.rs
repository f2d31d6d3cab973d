//! Run configuration file.
//!
//! TOML with one table per concern. Unknown keys anywhere are rejected.
//!
//! ```toml
//! output_dir = "runs/hopper-joint"
//!
//! [env]
//! id = "hopper"              # sphere | rastrigin | springmass | hopper
//! learn_morphology = true
//!
//! [env.hopper]               # optional physical constants
//! terrain_bump_height = 0.0
//!
//! [policy]
//! hidden_dims = [16, 16]
//!
//! [optimizer]
//! population_size = 64
//!
//! [train]
//! generations = 200
//! rollouts_per_candidate = 1
//!
//! [augmentation]
//! enabled = false
//!
//! [[morphology.params]]      # optional; defaults come from the environment
//! name = "thigh_length"
//! original = 0.45
//! scale_limit = 0.75
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env_core::{Environment, MorphologySpec, ParamPartition};
use crate::envs::{BenchmarkKind, HopperParams, PlanarHopper, SpringMass1D, SpringMassParams};
use crate::error::{Error, Result};
use crate::es::OptimizerConfig;
use crate::policy_net::NetworkShape;
use crate::trainer::{AgentObjective, BenchmarkObjective, Objective, PolicySource, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Sphere,
    Rastrigin,
    Springmass,
    Hopper,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub id: EnvId,
    /// Dimension of benchmark environments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// `false` runs the fixed-morphology baseline.
    #[serde(default = "yes")]
    pub learn_morphology: bool,
    /// Spring-mass only: drive the leg with the built-in reference controller
    /// and search over morphology alone.
    #[serde(default)]
    pub reference_policy: bool,
    #[serde(default)]
    pub hopper: HopperParams,
    #[serde(default)]
    pub springmass: SpringMassParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden_dims: Vec<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden_dims: vec![16, 16],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub enabled: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub env: EnvConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub morphology: Option<MorphologySpec>,
}

impl RunConfig {
    /// Parses and validates config text. Errors carry line and field.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.train.validate()?;
        if let Some(m) = &self.morphology {
            m.validate()?;
        }
        match self.env.id {
            EnvId::Sphere | EnvId::Rastrigin => match self.env.dim {
                Some(d) if d >= 1 => {}
                _ => return Err(Error::Config("env.dim must be set to >= 1 for benchmark environments".into())),
            },
            EnvId::Springmass | EnvId::Hopper => {
                if self.env.dim.is_some() {
                    return Err(Error::Config("env.dim only applies to benchmark environments".into()));
                }
            }
        }
        if self.env.reference_policy && self.env.id != EnvId::Springmass {
            return Err(Error::Config("env.reference_policy is only available for springmass".into()));
        }
        if self.env.id == EnvId::Hopper {
            let h = &self.env.hopper;
            if h.substeps == 0 || !(h.dt > 0.0) {
                return Err(Error::Config("env.hopper: dt must be > 0 and substeps >= 1".into()));
            }
        }
        if self.env.id == EnvId::Springmass && !(self.env.springmass.dt > 0.0) {
            return Err(Error::Config("env.springmass.dt must be > 0".into()));
        }
        // Building catches shape and morphology-length mismatches.
        self.build().map(|_| ())
    }

    fn morphology_for(&self, env: &dyn Environment) -> Result<MorphologySpec> {
        let spec = self.morphology.clone().unwrap_or_else(|| env.morphology());
        let expected = env.morphology().len();
        if spec.len() != expected {
            return Err(Error::Config(format!(
                "morphology.params: {} needs {expected} parameters, got {}",
                env.name(),
                spec.len()
            )));
        }
        Ok(spec)
    }

    fn network(&self, env: &dyn Environment) -> Result<NetworkShape> {
        NetworkShape::new(env.obs_dim(), self.policy.hidden_dims.clone(), env.act_dim())
            .map_err(|e| Error::Config(format!("policy.hidden_dims: {e}")))
    }

    /// Builds the objective this config trains on.
    pub fn build(&self) -> Result<Box<dyn Objective + Send>> {
        let aug = self.augmentation.enabled;
        let learn = self.env.learn_morphology;
        Ok(match self.env.id {
            EnvId::Sphere => Box::new(BenchmarkObjective::new(BenchmarkKind::Sphere, self.env.dim.unwrap_or(0))),
            EnvId::Rastrigin => {
                Box::new(BenchmarkObjective::new(BenchmarkKind::Rastrigin, self.env.dim.unwrap_or(0)))
            }
            EnvId::Springmass => {
                let env = SpringMass1D::new(self.env.springmass.clone());
                let spec = self.morphology_for(&env)?;
                let policy = if self.env.reference_policy {
                    let (shape, w) = SpringMass1D::reference_policy();
                    PolicySource::Fixed(shape, w)
                } else {
                    PolicySource::Learned(self.network(&env)?)
                };
                Box::new(AgentObjective::new(env, policy, spec, learn, aug)?)
            }
            EnvId::Hopper => {
                let env = PlanarHopper::new(self.env.hopper.clone());
                let spec = self.morphology_for(&env)?;
                let policy = PolicySource::Learned(self.network(&env)?);
                Box::new(AgentObjective::new(env, policy, spec, learn, aug)?)
            }
        })
    }

    /// Policy/morphology split of the joint vector.
    pub fn partition(&self) -> Result<ParamPartition> {
        let objective = self.build()?;
        let dim = objective.dim();
        let morph_len = objective.morphology_rows(&vec![0.0; dim]).map_or(0, |r| r.len());
        Ok(ParamPartition::new(dim - morph_len, morph_len))
    }
}
