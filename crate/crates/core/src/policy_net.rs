//! Feed-forward tanh policy over a flat weight slice.
//!
//! Layer `l` maps `in_l` inputs to `out_l` outputs and occupies
//! `(in_l + 1) * out_l` consecutive values: the `in_l x out_l` weight matrix in
//! row-major order (input index major), then the `out_l` biases. Every layer,
//! including the last, is followed by `tanh`, so actions lie in `(-1, 1)`.

use serde::{Deserialize, Serialize};

use crate::env_core::Policy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkShape {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

impl NetworkShape {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let shape = NetworkShape {
            input_dim,
            hidden_dims,
            output_dim,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Shape(format!(
                "all layer sizes must be >= 1, got {} -> {:?} -> {}",
                self.input_dim, self.hidden_dims, self.output_dim
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for each weight layer, input to output.
    pub fn layers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let sizes = std::iter::once(self.input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.output_dim));
        let outs = sizes.clone().skip(1);
        sizes.zip(outs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|(i, o)| (i + 1) * o).sum()
    }

    fn widest(&self) -> usize {
        self.hidden_dims
            .iter()
            .copied()
            .chain([self.input_dim, self.output_dim])
            .max()
            .unwrap_or(1)
    }
}

/// Evaluates the network once. Allocates; rollouts should use [`TanhMlp`].
pub fn forward(shape: &NetworkShape, weights: &[f64], obs: &[f64]) -> Result<Vec<f64>> {
    let mut net = TanhMlp::new(shape.clone(), weights.to_vec())?;
    let mut out = vec![0.0; shape.output_dim];
    net.forward(obs, &mut out)?;
    Ok(out)
}

/// A network bound to its weights, with scratch space for repeated calls.
#[derive(Debug, Clone)]
pub struct TanhMlp {
    shape: NetworkShape,
    weights: Vec<f64>,
    buf_in: Vec<f64>,
    buf_out: Vec<f64>,
}

impl TanhMlp {
    pub fn new(shape: NetworkShape, weights: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        let expected = shape.parameter_count();
        if weights.len() != expected {
            return Err(Error::dim("policy weights", expected, weights.len()));
        }
        let width = shape.widest();
        Ok(TanhMlp {
            shape,
            weights,
            buf_in: Vec::with_capacity(width),
            buf_out: Vec::with_capacity(width),
        })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn forward(&mut self, obs: &[f64], out: &mut [f64]) -> Result<()> {
        if obs.len() != self.shape.input_dim {
            return Err(Error::dim("observation", self.shape.input_dim, obs.len()));
        }
        if out.len() != self.shape.output_dim {
            return Err(Error::dim("action", self.shape.output_dim, out.len()));
        }
        self.buf_in.clear();
        self.buf_in.extend_from_slice(obs);
        let mut offset = 0;
        for (fan_in, fan_out) in self.shape.layers() {
            let matrix = &self.weights[offset..offset + fan_in * fan_out];
            let bias = &self.weights[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;

            self.buf_out.clear();
            self.buf_out.extend_from_slice(bias);
            for (x, row) in self.buf_in.iter().zip(matrix.chunks_exact(fan_out)) {
                for (acc, w) in self.buf_out.iter_mut().zip(row) {
                    *acc += x * w;
                }
            }
            for v in &mut self.buf_out {
                *v = v.tanh();
            }
            std::mem::swap(&mut self.buf_in, &mut self.buf_out);
        }
        out.copy_from_slice(&self.buf_in);
        Ok(())
    }
}

impl Policy for TanhMlp {
    fn act(&mut self, obs: &[f64], action: &mut [f64]) {
        // Environments size both buffers from the shape they were built with.
        self.forward(obs, action)
            .expect("policy network called with mismatched dimensions");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_counts() {
        let biped = NetworkShape::new(24, vec![40, 40], 4).unwrap();
        assert_eq!(biped.parameter_count(), 2804);
        let single = NetworkShape::new(1, vec![], 1).unwrap();
        assert_eq!(single.parameter_count(), 2);
        let ant = NetworkShape::new(28, vec![64, 32], 8).unwrap();
        assert_eq!(ant.parameter_count(), 4200);
    }

    #[test]
    fn zero_sized_layers_rejected() {
        assert!(NetworkShape::new(0, vec![], 1).is_err());
        assert!(NetworkShape::new(3, vec![4, 0], 1).is_err());
        assert!(NetworkShape::new(3, vec![], 0).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let shape = NetworkShape::new(5, vec![7, 3], 2).unwrap();
        let w = vec![0.0; shape.parameter_count()];
        let out = forward(&shape, &w, &[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn single_neuron() {
        let shape = NetworkShape::new(1, vec![], 1).unwrap();
        let out = forward(&shape, &[1.0, 0.0], &[0.5]).unwrap();
        assert_eq!(out[0], 0.5f64.tanh());
        assert!((out[0] - 0.46212).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let shape = NetworkShape::new(2, vec![3], 1).unwrap();
        let w = vec![0.1; shape.parameter_count()];
        assert!(matches!(
            forward(&shape, &w, &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(TanhMlp::new(shape, vec![0.0; 3]).is_err());
    }

    /// Builds explicit `out x in` matrices from the flat layout and multiplies.
    fn dense_oracle(shape: &NetworkShape, w: &[f64], obs: &[f64]) -> Vec<f64> {
        let mut x = obs.to_vec();
        let mut off = 0;
        for (fi, fo) in shape.layers() {
            let mut m = vec![vec![0.0; fi]; fo];
            for (i, row) in w[off..off + fi * fo].chunks(fo).enumerate() {
                for (j, v) in row.iter().enumerate() {
                    m[j][i] = *v;
                }
            }
            let b = &w[off + fi * fo..off + fi * fo + fo];
            off += fi * fo + fo;
            x = (0..fo)
                .map(|j| {
                    let dot: f64 = m[j].iter().zip(&x).map(|(a, b)| a * b).sum();
                    (dot + b[j]).tanh()
                })
                .collect();
        }
        x
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let hidden: Vec<usize> = (0..rng.random_range(0..3))
                .map(|_| rng.random_range(1..9))
                .collect();
            let shape =
                NetworkShape::new(rng.random_range(1..10), hidden, rng.random_range(1..5)).unwrap();
            let w: Vec<f64> = (0..shape.parameter_count())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let obs: Vec<f64> = (0..shape.input_dim)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let got = forward(&shape, &w, &obs).unwrap();
            let want = dense_oracle(&shape, &w, &obs);
            for (g, e) in got.iter().zip(&want) {
                assert!((g - e).abs() <= 1e-12, "{g} vs {e}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn outputs_are_bounded(
            w in proptest::collection::vec(-10.0f64..10.0, 3 * 4 + 4 + 5 * 2 + 2),
            obs in proptest::collection::vec(-100.0f64..100.0, 3),
        ) {
            let shape = NetworkShape::new(3, vec![4], 2).unwrap();
            let mut wide = w.clone();
            wide.truncate(shape.parameter_count());
            let out = forward(&shape, &wide, &obs).unwrap();
            for v in out {
                proptest::prop_assert!(v.abs() <= 1.0);
            }
        }

        #[test]
        fn repacking_is_bitwise_stable(w in proptest::collection::vec(-3.0f64..3.0, 26)) {
            let shape = NetworkShape::new(3, vec![4], 2).unwrap();
            let net = TanhMlp::new(shape.clone(), w.clone()).unwrap();
            let repacked = net.weights().to_vec();
            let a = forward(&shape, &w, &[0.1, 0.2, 0.3]).unwrap();
            let b = forward(&shape, &repacked, &[0.1, 0.2, 0.3]).unwrap();
            proptest::prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                                      b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
