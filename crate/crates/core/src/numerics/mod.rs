//! Numerical substrate shared by the transformer and the gradient-trained baselines.

mod adam;
mod gradcheck;
mod matrix;
pub mod ops;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use matrix::{dot, matmul, Matrix};
pub use ops::{layer_norm, softmax, softmax_rows, LAYER_NORM_EPS};
pub use rng::{derive_seed, Rng};

/// Xavier/Glorot uniform initialisation for a `fan_in × fan_out` weight.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    xavier_uniform_with_fans(rows, cols, rows, cols, rng)
}

pub fn xavier_uniform_with_fans(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

/// Mean/epoch loss settings shared by every gradient-trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    /// Coefficient of `(l2 / 2)·‖W‖²` on weight matrices (biases and norms excluded).
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            shuffle_each_epoch: true,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(crate::Error::invalid("epochs and batch_size must be >= 1"));
        }
        if !(self.lr >= 0.0) || !(self.l2 >= 0.0) {
            return Err(crate::Error::invalid("lr and l2 must be non-negative"));
        }
        Ok(())
    }

    /// Mini-batch index lists for one epoch.
    pub fn batches(&self, n: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.shuffle_each_epoch {
            rng.shuffle(&mut order);
        }
        order.chunks(self.batch_size).map(|c| c.to_vec()).collect()
    }
}
