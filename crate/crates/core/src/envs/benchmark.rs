//! Closed-form fitness functions for checking the optimizer. Maximized; the
//! optimum of both is 0 at the origin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Sphere,
    Rastrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkEnv {
    pub kind: BenchmarkKind,
    pub dim: usize,
}

impl BenchmarkEnv {
    pub fn fitness(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.dim, "benchmark input length");
        benchmark_fitness(self.kind, w)
    }
}

pub fn benchmark_fitness(kind: BenchmarkKind, w: &[f64]) -> f64 {
    match kind {
        BenchmarkKind::Sphere => -w.iter().map(|x| x * x).sum::<f64>(),
        BenchmarkKind::Rastrigin => {
            let n = w.len() as f64;
            -(10.0 * n
                + w.iter()
                    .map(|x| x * x - 10.0 * (2.0 * PI * x).cos())
                    .sum::<f64>())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let sphere = BenchmarkEnv {
            kind: BenchmarkKind::Sphere,
            dim: 2,
        };
        assert_eq!(sphere.fitness(&[0.0, 0.0]), 0.0);
        assert_eq!(sphere.fitness(&[1.0, 1.0]), -2.0);
        let rastrigin = BenchmarkEnv {
            kind: BenchmarkKind::Rastrigin,
            dim: 3,
        };
        assert_eq!(rastrigin.fitness(&[0.0; 3]), 0.0);
        // Integer points sit in local optima with value -sum(x^2).
        assert!((rastrigin.fitness(&[1.0, 0.0, -2.0]) + 5.0).abs() < 1e-12);
    }
}
