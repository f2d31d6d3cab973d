//! Planar one-legged hopper.
//!
//! The torso is a point mass carried at the hip and held upright, as if on a
//! planarizing boom, so the hip motor pushes the thigh against a fixed frame.
//! The leg has a thigh and a shin, each a uniform rod of mass
//! `density * length * width`. Generalized coordinates are the hip position
//! `(x, y)` and the absolute segment angles `(a1, a2)`, measured from straight
//! down and positive forward. The knee angle is `a2 - a1` and bends backward
//! (negative). Passive springs at both joints pull the leg toward the
//! straight pose, so an untrained policy wobbles instead of toppling.
//!
//! The knee and foot touch a penalty spring-damper ground with viscous,
//! friction-limited tangential force. The equations of motion are integrated
//! with semi-implicit Euler at `dt / substeps`; the policy acts every `dt`.
//!
//! Reward per control step is hip forward displacement minus `torque_cost`
//! times the summed normalized torque magnitudes. The episode ends after
//! `steps` control steps or when the hip drops below `fall_height` above the
//! ground, which costs `fall_penalty`.

use serde::{Deserialize, Serialize};

use crate::env_core::{Environment, LegArea, MorphParam, MorphologySpec, Policy, Rollout, SENTINEL_SCORE};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HopperParams {
    pub dt: f64,
    pub substeps: usize,
    pub steps: usize,
    pub gravity: f64,
    pub torso_mass: f64,
    /// Segment mass per unit length per unit width, kg/m^2.
    pub density: f64,
    pub torque_limit: f64,
    pub torque_cost: f64,
    pub ground_stiffness: f64,
    pub ground_damping: f64,
    pub friction_coeff: f64,
    pub friction_damping: f64,
    pub joint_damping: f64,
    /// Passive springs pulling the hip and knee back to the straight pose, N m/rad.
    pub hip_stiffness: f64,
    pub knee_stiffness: f64,
    pub limit_stiffness: f64,
    pub limit_damping: f64,
    pub hip_range: (f64, f64),
    pub knee_range: (f64, f64),
    pub fall_height: f64,
    pub fall_penalty: f64,
    /// Peak height of per-seed terrain bumps; 0 gives flat ground.
    pub terrain_bump_height: f64,
    pub terrain_bump_spacing: f64,
    pub thigh_length: f64,
    pub shin_length: f64,
    pub thigh_width: f64,
    pub shin_width: f64,
}

impl Default for HopperParams {
    fn default() -> Self {
        HopperParams {
            dt: 0.01,
            substeps: 10,
            steps: 1000,
            gravity: 9.81,
            torso_mass: 5.0,
            density: 5.0,
            torque_limit: 80.0,
            torque_cost: 0.001,
            ground_stiffness: 2.0e4,
            ground_damping: 100.0,
            friction_coeff: 1.0,
            friction_damping: 100.0,
            joint_damping: 0.5,
            hip_stiffness: 150.0,
            knee_stiffness: 100.0,
            limit_stiffness: 500.0,
            limit_damping: 5.0,
            hip_range: (-1.5, 1.5),
            knee_range: (-2.6, 0.0),
            fall_height: 0.1,
            fall_penalty: 100.0,
            terrain_bump_height: 0.0,
            terrain_bump_spacing: 1.0,
            thigh_length: 0.45,
            shin_length: 0.45,
            thigh_width: 0.2,
            shin_width: 0.16,
        }
    }
}

/// Rates beyond this mean the integrator has left its stable regime.
const MAX_RATE: f64 = 1.0e3;

/// Generalized state `[x, y, a1, a2]` and its rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopperState {
    pub q: [f64; 4],
    pub v: [f64; 4],
}

impl HopperState {
    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Default)]
pub struct PlanarHopper {
    pub params: HopperParams,
}

struct Body {
    l1: f64,
    l2: f64,
    m1: f64,
    m2: f64,
    i1: f64,
    i2: f64,
    total: f64,
}

struct Terrain {
    seed: u64,
    bump: f64,
    spacing: f64,
}

impl Terrain {
    fn node(&self, k: i64) -> f64 {
        if k.abs() <= 1 {
            return 0.0;
        }
        let u = (seed::mix(&[self.seed, k as u64]) >> 11) as f64 / (1u64 << 53) as f64;
        self.bump * (2.0 * u - 1.0)
    }

    fn height(&self, x: f64) -> f64 {
        if self.bump == 0.0 {
            return 0.0;
        }
        let s = x / self.spacing;
        let k = s.floor();
        let frac = s - k;
        let k = k as i64;
        self.node(k) * (1.0 - frac) + self.node(k + 1) * frac
    }
}

/// `d(a) = (sin a, -cos a)`, the direction of a segment at angle `a`.
#[inline]
fn dir(s: f64, c: f64) -> [f64; 2] {
    [s, -c]
}

/// Solves `m x = b` for symmetric positive definite 4x4 `m`.
fn solve_spd4(m: &[[f64; 4]; 4], b: &[f64; 4]) -> [f64; 4] {
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; 4];
    for i in 0..4 {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [0.0; 4];
    for i in (0..4).rev() {
        let mut s = y[i];
        for k in i + 1..4 {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Episode trace, kept for tests and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopperOutcome {
    pub rollout: Rollout,
    pub state: HopperState,
    pub fell: bool,
}

impl PlanarHopper {
    pub const OBS_DIM: usize = 8;
    pub const ACT_DIM: usize = 2;

    pub fn new(params: HopperParams) -> Self {
        PlanarHopper { params }
    }

    fn body(&self, morph: &[f64]) -> Body {
        let p = &self.params;
        let (l1, l2, w1, w2) = (morph[0], morph[1], morph[2], morph[3]);
        let m1 = p.density * l1 * w1;
        let m2 = p.density * l2 * w2;
        Body {
            l1,
            l2,
            m1,
            m2,
            i1: m1 * l1 * l1 / 12.0,
            i2: m2 * l2 * l2 / 12.0,
            total: p.torso_mass + m1 + m2,
        }
    }

    /// Standing upright with the foot resting on the ground at `x = 0`.
    pub fn initial_state(&self, morph: &[f64]) -> HopperState {
        HopperState {
            q: [0.0, morph[0] + morph[1], 0.0, 0.0],
            v: [0.0; 4],
        }
    }

    /// Generalized accelerations for the given joint torques.
    fn accelerations(
        &self,
        body: &Body,
        terrain: &Terrain,
        st: &HopperState,
        hip_torque: f64,
        knee_torque: f64,
    ) -> [f64; 4] {
        let p = &self.params;
        let [x, y, a1, a2] = st.q;
        let [vx, vy, w1, w2] = st.v;
        let (s1, c1) = a1.sin_cos();
        let (s2, c2) = a2.sin_cos();
        let d1 = dir(s1, c1);
        let d2 = dir(s2, c2);
        let (l1, l2, m1, m2) = (body.l1, body.l2, body.m1, body.m2);

        let k1 = (0.5 * m1 + m2) * l1;
        let k2 = 0.5 * m2 * l2;
        let mass = [
            [body.total, 0.0, k1 * c1, k2 * c2],
            [0.0, body.total, k1 * s1, k2 * s2],
            [
                k1 * c1,
                k1 * s1,
                (0.25 * m1 + m2) * l1 * l1 + body.i1,
                0.5 * m2 * l1 * l2 * (c1 * c2 + s1 * s2),
            ],
            [
                k2 * c2,
                k2 * s2,
                0.5 * m2 * l1 * l2 * (c1 * c2 + s1 * s2),
                0.25 * m2 * l2 * l2 + body.i2,
            ],
        ];

        // Segment COM forces: gravity minus the velocity-product terms.
        let w1s = w1 * w1;
        let w2s = w2 * w2;
        let f1 = [
            m1 * 0.5 * l1 * d1[0] * w1s,
            -m1 * p.gravity + m1 * 0.5 * l1 * d1[1] * w1s,
        ];
        let f2 = [
            m2 * (l1 * d1[0] * w1s + 0.5 * l2 * d2[0] * w2s),
            -m2 * p.gravity + m2 * (l1 * d1[1] * w1s + 0.5 * l2 * d2[1] * w2s),
        ];
        let e1 = [c1, s1];
        let e2 = [c2, s2];
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];

        let mut rhs = [
            f1[0] + f2[0],
            -p.torso_mass * p.gravity + f1[1] + f2[1],
            0.5 * l1 * dot(e1, f1) + l1 * dot(e1, f2),
            0.5 * l2 * dot(e2, f2),
        ];

        // Contacts at the knee and the foot.
        let knee = [x + l1 * d1[0], y + l1 * d1[1]];
        let knee_v = [vx + l1 * e1[0] * w1, vy + l1 * e1[1] * w1];
        let foot = [knee[0] + l2 * d2[0], knee[1] + l2 * d2[1]];
        let foot_v = [knee_v[0] + l2 * e2[0] * w2, knee_v[1] + l2 * e2[1] * w2];
        if let Some(f) = self.contact_force(terrain, knee, knee_v) {
            rhs[0] += f[0];
            rhs[1] += f[1];
            rhs[2] += l1 * dot(e1, f);
        }
        if let Some(f) = self.contact_force(terrain, foot, foot_v) {
            rhs[0] += f[0];
            rhs[1] += f[1];
            rhs[2] += l1 * dot(e1, f);
            rhs[3] += l2 * dot(e2, f);
        }

        // Joint torques, damping and soft limits.
        let knee_angle = a2 - a1;
        let knee_rate = w2 - w1;
        let mut hip = hip_torque - p.hip_stiffness * a1 - p.joint_damping * w1;
        hip += limit_torque(a1, w1, p.hip_range, p.limit_stiffness, p.limit_damping);
        let mut kt = knee_torque - p.knee_stiffness * knee_angle - p.joint_damping * knee_rate;
        kt += limit_torque(knee_angle, knee_rate, p.knee_range, p.limit_stiffness, p.limit_damping);
        rhs[2] += hip - kt;
        rhs[3] += kt;

        solve_spd4(&mass, &rhs)
    }

    fn contact_force(&self, terrain: &Terrain, pos: [f64; 2], vel: [f64; 2]) -> Option<[f64; 2]> {
        let p = &self.params;
        let depth = terrain.height(pos[0]) - pos[1];
        if depth <= 0.0 {
            return None;
        }
        let normal = (p.ground_stiffness * depth - p.ground_damping * vel[1]).max(0.0);
        let limit = p.friction_coeff * normal;
        let tangent = (-p.friction_damping * vel[0]).clamp(-limit, limit);
        Some([tangent, normal])
    }

    fn foot_contact(&self, body: &Body, terrain: &Terrain, st: &HopperState) -> bool {
        let [x, y, a1, a2] = st.q;
        let fx = x + body.l1 * a1.sin() + body.l2 * a2.sin();
        let fy = y - body.l1 * a1.cos() - body.l2 * a2.cos();
        fy < terrain.height(fx)
    }

    fn observe(&self, body: &Body, terrain: &Terrain, st: &HopperState, obs: &mut [f64]) {
        let [x, y, a1, a2] = st.q;
        let [vx, vy, w1, w2] = st.v;
        obs[0] = y - terrain.height(x);
        obs[1] = vx;
        obs[2] = vy;
        obs[3] = a1;
        obs[4] = a2 - a1;
        obs[5] = w1;
        obs[6] = w2 - w1;
        obs[7] = if self.foot_contact(body, terrain, st) { 1.0 } else { 0.0 };
    }

    /// Runs one episode and reports the final state alongside the score.
    pub fn simulate(&self, morphology: &[f64], policy: &mut dyn Policy, seed: u64) -> HopperOutcome {
        let p = &self.params;
        let body = self.body(morphology);
        let terrain = Terrain {
            seed,
            bump: p.terrain_bump_height,
            spacing: p.terrain_bump_spacing,
        };
        let mut st = self.initial_state(morphology);
        let h = p.dt / p.substeps as f64;
        let mut obs = [0.0; Self::OBS_DIM];
        let mut act = [0.0; Self::ACT_DIM];
        let mut score = 0.0;

        for step in 0..p.steps {
            self.observe(&body, &terrain, &st, &mut obs);
            policy.act(&obs, &mut act);
            let hip_a = act[0].clamp(-1.0, 1.0);
            let knee_a = act[1].clamp(-1.0, 1.0);
            let x0 = st.q[0];
            for _ in 0..p.substeps {
                let acc = self.accelerations(
                    &body,
                    &terrain,
                    &st,
                    hip_a * p.torque_limit,
                    knee_a * p.torque_limit,
                );
                for i in 0..4 {
                    st.v[i] += acc[i] * h;
                }
                for i in 0..4 {
                    st.q[i] += st.v[i] * h;
                }
            }
            if !st.is_finite() || st.v.iter().any(|v| v.abs() > MAX_RATE) {
                log::warn!("hopper state diverged at step {step}; scoring sentinel");
                return HopperOutcome {
                    rollout: Rollout {
                        task_score: SENTINEL_SCORE,
                        steps: step + 1,
                    },
                    state: st,
                    fell: false,
                };
            }
            score += st.q[0] - x0 - p.torque_cost * (hip_a.abs() + knee_a.abs());
            if st.q[1] - terrain.height(st.q[0]) < p.fall_height {
                return HopperOutcome {
                    rollout: Rollout {
                        task_score: score - p.fall_penalty,
                        steps: step + 1,
                    },
                    state: st,
                    fell: true,
                };
            }
        }
        HopperOutcome {
            rollout: Rollout {
                task_score: score,
                steps: p.steps,
            },
            state: st,
            fell: false,
        }
    }
}

fn limit_torque(angle: f64, rate: f64, range: (f64, f64), k: f64, b: f64) -> f64 {
    if angle > range.1 {
        -k * (angle - range.1) - b * rate.max(0.0)
    } else if angle < range.0 {
        k * (range.0 - angle) - b * rate.min(0.0)
    } else {
        0.0
    }
}

impl Environment for PlanarHopper {
    fn name(&self) -> &str {
        "hopper"
    }

    fn obs_dim(&self) -> usize {
        Self::OBS_DIM
    }

    fn act_dim(&self) -> usize {
        Self::ACT_DIM
    }

    fn morphology(&self) -> MorphologySpec {
        let p = &self.params;
        MorphologySpec {
            params: vec![
                MorphParam::new("thigh_length", p.thigh_length),
                MorphParam::new("shin_length", p.shin_length),
                MorphParam::new("thigh_width", p.thigh_width),
                MorphParam::new("shin_width", p.shin_width),
            ],
        }
    }

    fn leg_area(&self) -> LegArea {
        LegArea {
            parts: vec![(0, 2), (1, 3)],
        }
    }

    fn rollout(&self, morphology: &[f64], policy: &mut dyn Policy, seed: u64) -> Rollout {
        self.simulate(morphology, policy, seed).rollout
    }
}
