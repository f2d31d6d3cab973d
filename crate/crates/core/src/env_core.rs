//! The joint parameter vector and the environment side of it.
//!
//! A candidate `w` is split into a policy prefix and a morphology suffix. The
//! suffix is decoded into physical body dimensions that configure the
//! environment before the episode starts; the prefix becomes the policy that
//! drives that body. Body dimensions never change during an episode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that maps an observation to an action.
pub trait Policy {
    fn act(&mut self, obs: &[f64], action: &mut [f64]);
}

impl<F: FnMut(&[f64], &mut [f64])> Policy for F {
    fn act(&mut self, obs: &[f64], action: &mut [f64]) {
        self(obs, action)
    }
}

/// Outcome of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rollout {
    /// Unaugmented cumulative reward.
    pub task_score: f64,
    pub steps: usize,
}

/// Score reported for an episode whose state went non-finite.
pub const SENTINEL_SCORE: f64 = -1000.0;

/// A parameterized environment.
///
/// `rollout` must be a pure function of `(morphology, policy, seed)`; the
/// trainer relies on that to evaluate candidates in any order on any thread.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Default design and per-parameter bounds.
    fn morphology(&self) -> MorphologySpec;
    /// How leg area is computed from physical morphology values.
    fn leg_area(&self) -> LegArea;
    fn rollout(&self, morphology: &[f64], policy: &mut dyn Policy, seed: u64) -> Rollout;
}

/// Lengths of the policy prefix and the morphology suffix of `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamPartition {
    pub policy_len: usize,
    pub morph_len: usize,
}

impl ParamPartition {
    pub fn new(policy_len: usize, morph_len: usize) -> Self {
        ParamPartition {
            policy_len,
            morph_len,
        }
    }

    pub fn total(&self) -> usize {
        self.policy_len + self.morph_len
    }

    pub fn split<'a>(&self, w: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        if w.len() != self.total() {
            return Err(Error::dim("joint parameter vector", self.total(), w.len()));
        }
        Ok(w.split_at(self.policy_len))
    }
}

fn default_scale_limit() -> f64 {
    0.75
}

/// One learnable body dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphParam {
    pub name: String,
    /// Original design value in environment units. Must be positive.
    pub original: f64,
    /// Fraction by which the value may shrink or grow, in `(0, 1)`.
    #[serde(default = "default_scale_limit")]
    pub scale_limit: f64,
}

impl MorphParam {
    pub fn new(name: impl Into<String>, original: f64) -> Self {
        MorphParam {
            name: name.into(),
            original,
            scale_limit: default_scale_limit(),
        }
    }

    /// `original * (1 + scale_limit * clamp(raw, -1, 1))`.
    pub fn decode(&self, raw: f64) -> f64 {
        // NaN raw values decode to the original design.
        let r = if raw.is_nan() { 0.0 } else { raw.clamp(-1.0, 1.0) };
        self.original * (1.0 + self.scale_limit * r)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (
            self.original * (1.0 - self.scale_limit),
            self.original * (1.0 + self.scale_limit),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphologySpec {
    pub params: Vec<MorphParam>,
}

impl MorphologySpec {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn originals(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.original).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.params {
            if !(p.original > 0.0 && p.original.is_finite()) {
                return Err(Error::Config(format!(
                    "morphology.{}: original value must be positive, got {}",
                    p.name, p.original
                )));
            }
            if !(p.scale_limit > 0.0 && p.scale_limit < 1.0) {
                return Err(Error::Config(format!(
                    "morphology.{}: scale_limit must lie in (0, 1), got {}",
                    p.name, p.scale_limit
                )));
            }
        }
        Ok(())
    }

    /// Maps raw search coordinates to physical values. Every raw vector is
    /// admissible.
    pub fn decode(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.params.len() {
            return Err(Error::dim("morphology", self.params.len(), raw.len()));
        }
        Ok(self
            .params
            .iter()
            .zip(raw)
            .map(|(p, r)| p.decode(*r))
            .collect())
    }
}

/// Leg area as a sum of `length * width` over leg parts, each part given by
/// the indices of its length and width in the physical morphology vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegArea {
    pub parts: Vec<(usize, usize)>,
}

impl LegArea {
    pub fn area(&self, physical: &[f64]) -> f64 {
        self.parts
            .iter()
            .map(|&(l, w)| physical[l] * physical[w])
            .sum()
    }
}

/// Multiplicative fitness bonus for smaller legs.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub enabled: bool,
    pub orig_area: f64,
    pub area_of: LegArea,
}

impl Augmentation {
    pub fn disabled() -> Self {
        Augmentation {
            enabled: false,
            orig_area: 1.0,
            area_of: LegArea { parts: Vec::new() },
        }
    }

    /// Bonus anchored at the original design of `spec`.
    pub fn for_design(enabled: bool, spec: &MorphologySpec, area_of: LegArea) -> Result<Self> {
        let orig_area = area_of.area(&spec.originals());
        if enabled && !(orig_area > 0.0) {
            return Err(Error::Config(format!(
                "augmentation needs a positive original leg area, got {orig_area}"
            )));
        }
        Ok(Augmentation {
            enabled,
            orig_area,
            area_of,
        })
    }

    /// `1 + ln(orig_area / area)`. Goes negative once the area exceeds
    /// `e * orig_area`.
    pub fn utility_factor(&self, physical: &[f64]) -> f64 {
        1.0 + (self.orig_area / self.area_of.area(physical)).ln()
    }

    pub fn augment(&self, task_score: f64, physical: &[f64]) -> f64 {
        if !self.enabled {
            return task_score;
        }
        task_score * self.utility_factor(physical)
    }
}

/// Free-function form of [`MorphologySpec::decode`].
pub fn decode_morphology(raw: &[f64], spec: &MorphologySpec) -> Result<Vec<f64>> {
    spec.decode(raw)
}

/// Free-function form of [`Augmentation::augment`].
pub fn augment_reward(task_score: f64, physical: &[f64], aug: &Augmentation) -> f64 {
    aug.augment(task_score, physical)
}
