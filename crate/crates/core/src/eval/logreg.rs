//! Minimal step-wise logistic regression.
//!
//! Plain SGD on the logistic loss with a fixed epoch count, a constant
//! learning rate and optional L2 shrinkage. Examples are visited in a
//! seeded-shuffle order and updates are applied sequentially, so training is
//! deterministic for a fixed seed and example list.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct SgdConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            epochs: 10,
            learning_rate: 0.5,
            l2: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> LogisticModel {
        LogisticModel {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Raw decision value `w . x + b`.
    pub fn margin(&self, x: &[f32]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights
            .iter()
            .zip(x)
            .map(|(&w, &v)| w * v as f64)
            .sum::<f64>()
            + self.bias
    }

    /// Margin over the implicit Hadamard features `u ⊙ v`.
    pub fn pair_margin(&self, u: &[f32], v: &[f32]) -> f64 {
        debug_assert_eq!(u.len(), self.weights.len());
        self.weights
            .iter()
            .zip(u.iter().zip(v))
            .map(|(&w, (&a, &b))| w * a as f64 * b as f64)
            .sum::<f64>()
            + self.bias
    }

    pub fn probability(&self, x: &[f32]) -> f64 {
        sigmoid(self.margin(x))
    }

    fn update(&mut self, x: &[f32], target: f64, lr: f64, l2: f64) {
        let gradient = target - sigmoid(self.margin(x));
        let step = lr * gradient;
        if l2 > 0.0 {
            let shrink = 1.0 - lr * l2;
            for w in self.weights.iter_mut() {
                *w *= shrink;
            }
        }
        for (w, &v) in self.weights.iter_mut().zip(x) {
            *w += step * v as f64;
        }
        self.bias += step;
    }
}

/// Train a binary model over `n_examples` examples. `fill` writes the feature
/// vector of example `i` into the buffer and returns its 0/1 target; it is
/// called once per example per epoch so features never need materializing.
pub fn train_binary(
    n_examples: usize,
    dim: usize,
    cfg: &SgdConfig,
    mut fill: impl FnMut(usize, &mut [f32]) -> f64,
) -> LogisticModel {
    let mut model = LogisticModel::zeros(dim);
    let mut order: Vec<usize> = (0..n_examples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut features = vec![0.0f32; dim];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let target = fill(i, &mut features);
            model.update(&features, target, cfg.learning_rate, cfg.l2);
        }
    }
    model
}
