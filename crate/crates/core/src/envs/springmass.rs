//! One-dimensional spring-leg crawler.
//!
//! A payload rides on a single elastic leg of rest length `L` and thickness
//! `t`. The leg weighs `density * L * t`, has stiffness `stiffness_constant *
//! t / L` and internal damping `damping_per_thickness * t`. A linear actuator
//! in the leg adds `u * actuator_force` along the leg while the foot is on the
//! ground. A ratchet foot turns every extension of the loaded leg into forward
//! travel, so the score is the total extension stroke over the episode.
//!
//! The policy sees `[compression, vertical velocity, contact, sin(clock),
//! cos(clock)]` where the clock runs at `clock_rate` rad/s. Driving the
//! actuator off the clock excites the leg near its natural frequency, which
//! depends on both `L` and `t`; for a fixed policy this gives a smooth,
//! single-peaked score over leg length.

use serde::{Deserialize, Serialize};

use crate::env_core::{Environment, LegArea, MorphParam, MorphologySpec, Policy, Rollout, SENTINEL_SCORE};
use crate::policy_net::NetworkShape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpringMassParams {
    pub dt: f64,
    pub steps: usize,
    pub gravity: f64,
    pub payload_mass: f64,
    /// Leg mass per unit length per unit thickness, kg/m^2.
    pub density: f64,
    /// Stiffness is `stiffness_constant * t / L`, N.
    pub stiffness_constant: f64,
    /// Damping is `damping_per_thickness * t`, N s/m^2.
    pub damping_per_thickness: f64,
    pub actuator_force: f64,
    pub clock_rate: f64,
    pub leg_length: f64,
    pub leg_thickness: f64,
}

impl Default for SpringMassParams {
    fn default() -> Self {
        SpringMassParams {
            dt: 0.01,
            steps: 1000,
            gravity: 9.81,
            payload_mass: 2.0,
            density: 5.0,
            stiffness_constant: 800.0,
            damping_per_thickness: 10.0,
            actuator_force: 1.5,
            clock_rate: 3.7,
            leg_length: 1.0,
            leg_thickness: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SpringMass1D {
    pub params: SpringMassParams,
}

/// Vertical state of the payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringMassState {
    pub height: f64,
    pub velocity: f64,
}

impl SpringMass1D {
    pub const OBS_DIM: usize = 5;
    pub const ACT_DIM: usize = 1;

    pub fn new(params: SpringMassParams) -> Self {
        SpringMass1D { params }
    }

    /// Shape and weights of the fixed reference controller: the actuator
    /// follows `tanh(sin(clock))`.
    pub fn reference_policy() -> (NetworkShape, Vec<f64>) {
        let shape = NetworkShape {
            input_dim: Self::OBS_DIM,
            hidden_dims: Vec::new(),
            output_dim: Self::ACT_DIM,
        };
        (shape, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    }

    /// Runs an episode and returns `(score, final state)`.
    pub fn simulate(
        &self,
        morphology: &[f64],
        policy: &mut dyn Policy,
    ) -> (f64, SpringMassState) {
        let p = &self.params;
        let (length, thickness) = (morphology[0], morphology[1]);
        let mass = p.payload_mass + p.density * length * thickness;
        let stiffness = p.stiffness_constant * thickness / length;
        let damping = p.damping_per_thickness * thickness;

        let mut state = SpringMassState {
            height: length - mass * p.gravity / stiffness,
            velocity: 0.0,
        };
        let mut obs = [0.0; Self::OBS_DIM];
        let mut act = [0.0; Self::ACT_DIM];
        let mut travelled = 0.0;

        for step in 0..p.steps {
            let contact = state.height < length;
            let phase = p.clock_rate * step as f64 * p.dt;
            obs[0] = if contact { length - state.height } else { 0.0 };
            obs[1] = state.velocity;
            obs[2] = if contact { 1.0 } else { 0.0 };
            obs[3] = phase.sin();
            obs[4] = phase.cos();
            policy.act(&obs, &mut act);
            let u = act[0].clamp(-1.0, 1.0);

            let leg_force = if contact {
                (stiffness * (length - state.height) - damping * state.velocity
                    + u * p.actuator_force)
                    .max(0.0)
            } else {
                0.0
            };
            state.velocity += (leg_force / mass - p.gravity) * p.dt;
            let next = state.height + state.velocity * p.dt;
            if contact {
                travelled += (next.min(length) - state.height).max(0.0);
            }
            state.height = next;

            if !(state.height.is_finite() && state.velocity.is_finite()) {
                log::warn!("spring-mass state diverged at step {step}; scoring sentinel");
                return (SENTINEL_SCORE, state);
            }
        }
        (travelled, state)
    }
}

impl Environment for SpringMass1D {
    fn name(&self) -> &str {
        "springmass"
    }

    fn obs_dim(&self) -> usize {
        Self::OBS_DIM
    }

    fn act_dim(&self) -> usize {
        Self::ACT_DIM
    }

    fn morphology(&self) -> MorphologySpec {
        MorphologySpec {
            params: vec![
                MorphParam::new("leg_length", self.params.leg_length),
                MorphParam::new("leg_thickness", self.params.leg_thickness),
            ],
        }
    }

    fn leg_area(&self) -> LegArea {
        LegArea {
            parts: vec![(0, 1)],
        }
    }

    fn rollout(&self, morphology: &[f64], policy: &mut dyn Policy, _seed: u64) -> Rollout {
        let (task_score, _) = self.simulate(morphology, policy);
        Rollout {
            task_score,
            steps: self.params.steps,
        }
    }
}
