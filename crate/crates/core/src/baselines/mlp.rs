use super::{check_row, describe_train, header, not_fitted, read_train_config, require_two_classes, write_train_config, Classifier};
use crate::codec::Reader;
use crate::dataset::LabeledDataset;
use crate::numerics::ops::{linear, relu, relu_backward};
use crate::numerics::{adam_step, softmax_rows, xavier_uniform, AdamConfig, AdamState, Matrix, Rng, TrainConfig};
use crate::{Error, Result};

pub const MLP_HIDDEN: [usize; 2] = [32, 16];

/// `input → h1 → h2 → 2` with ReLU hidden layers and a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub w3: Matrix,
    pub b3: Matrix,
}

const MLP_TENSORS: [&str; 6] = ["w1", "b1", "w2", "b2", "w3", "b3"];

impl MlpParams {
    pub fn zeros(n_in: usize, hidden: [usize; 2]) -> Self {
        MlpParams {
            w1: Matrix::zeros(n_in, hidden[0]),
            b1: Matrix::zeros(1, hidden[0]),
            w2: Matrix::zeros(hidden[0], hidden[1]),
            b2: Matrix::zeros(1, hidden[1]),
            w3: Matrix::zeros(hidden[1], 2),
            b3: Matrix::zeros(1, 2),
        }
    }

    /// Xavier-uniform weights and zero biases; the output layer stays zero when asked.
    pub fn init(n_in: usize, hidden: [usize; 2], zero_init_output: bool, rng: &mut Rng) -> Self {
        let mut p = MlpParams::zeros(n_in, hidden);
        p.w1 = xavier_uniform(n_in, hidden[0], rng);
        p.w2 = xavier_uniform(hidden[0], hidden[1], rng);
        if !zero_init_output {
            p.w3 = xavier_uniform(hidden[1], 2, rng);
        }
        p
    }

    pub fn n_inputs(&self) -> usize {
        self.w1.rows()
    }

    pub fn tensors(&self) -> [&Matrix; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|m| m.as_slice().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.tensors().iter().map(|m| m.as_slice().len()).sum();
        if flat.len() != total {
            return Err(Error::shape("flat MLP parameters", total, flat.len()));
        }
        let mut off = 0;
        for m in self.tensors_mut() {
            let n = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Row-wise class probabilities for a batch.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Matrix> {
        let h1 = relu(&linear(x, &self.w1, self.b1.as_slice())?);
        let h2 = relu(&linear(&h1, &self.w2, self.b2.as_slice())?);
        Ok(softmax_rows(&linear(&h2, &self.w3, self.b3.as_slice())?))
    }

    /// Mean cross-entropy plus `(l2/2)·Σ‖W‖²` over the weight matrices, and its gradient.
    pub fn loss_and_grad(&self, x: &Matrix, labels: &[u8], l2: f64) -> Result<(f64, MlpParams)> {
        if x.rows() != labels.len() || labels.is_empty() {
            return Err(Error::shape("MLP batch", x.rows(), labels.len()));
        }
        let n = labels.len() as f64;
        let z1 = linear(x, &self.w1, self.b1.as_slice())?;
        let h1 = relu(&z1);
        let z2 = linear(&h1, &self.w2, self.b2.as_slice())?;
        let h2 = relu(&z2);
        let logits = linear(&h2, &self.w3, self.b3.as_slice())?;
        let probs = softmax_rows(&logits);

        let mut loss = 0.0;
        let mut dlogits = probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            let row = logits.row(i);
            let m = row[0].max(row[1]);
            let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
            loss += (lse - row[y as usize]) / n;
            dlogits[(i, y as usize)] -= 1.0;
        }
        let dlogits = dlogits.scaled(1.0 / n);

        let mut g = MlpParams::zeros(self.n_inputs(), [self.w1.cols(), self.w2.cols()]);
        g.w3 = h2.t_matmul(&dlogits)?;
        g.b3 = Matrix::row_vector(&dlogits.column_sums());
        let dz2 = relu_backward(&z2, &dlogits.matmul_t(&self.w3)?);
        g.w2 = h1.t_matmul(&dz2)?;
        g.b2 = Matrix::row_vector(&dz2.column_sums());
        let dz1 = relu_backward(&z1, &dz2.matmul_t(&self.w2)?);
        g.w1 = x.t_matmul(&dz1)?;
        g.b1 = Matrix::row_vector(&dz1.column_sums());

        if l2 > 0.0 {
            for (w, gw) in [(&self.w1, &mut g.w1), (&self.w2, &mut g.w2), (&self.w3, &mut g.w3)] {
                loss += 0.5 * l2 * w.as_slice().iter().map(|v| v * v).sum::<f64>();
                gw.add_assign(&w.scaled(l2))?;
            }
        }
        Ok((loss, g))
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub config: TrainConfig,
    /// Start with a zero output layer, so every initial score is exactly 0.5.
    pub zero_init_output: bool,
    params: Option<MlpParams>,
    pub loss_curve: Vec<f64>,
}

impl Default for Mlp {
    fn default() -> Self {
        Mlp::new(TrainConfig {
            epochs: 50,
            batch_size: 32,
            lr: 1e-3,
            ..Default::default()
        })
    }
}

impl Mlp {
    pub fn new(config: TrainConfig) -> Self {
        Mlp {
            config,
            zero_init_output: false,
            params: None,
            loss_curve: Vec::new(),
        }
    }

    pub fn params(&self) -> Option<&MlpParams> {
        self.params.as_ref()
    }

    pub(super) fn decode(r: &mut Reader) -> Result<Self> {
        let config = read_train_config(r)?;
        let zero_init_output = r.u32()? != 0;
        let params = match r.u32()? {
            0 => None,
            _ => {
                let mut p = MlpParams::zeros(0, [0, 0]);
                for (name, slot) in MLP_TENSORS.iter().zip(p.tensors_mut()) {
                    *slot = r.matrix_named(&format!("mlp.{name}"), None)?;
                }
                let consistent = p.b1.cols() == p.w1.cols()
                    && p.w2.rows() == p.w1.cols()
                    && p.b2.cols() == p.w2.cols()
                    && p.w3.rows() == p.w2.cols()
                    && p.w3.cols() == 2
                    && p.b3.cols() == 2;
                if !consistent {
                    return Err(Error::shape("mlp tensors", "chained layer shapes", "inconsistent shapes"));
                }
                Some(p)
            }
        };
        Ok(Mlp {
            config,
            zero_init_output,
            params,
            loss_curve: Vec::new(),
        })
    }
}

impl Classifier for Mlp {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn fit(&mut self, train: &LabeledDataset, seed: u64) -> Result<()> {
        self.config.validate()?;
        require_two_classes(train)?;
        let mut p = MlpParams::init(train.n_cols(), MLP_HIDDEN, self.zero_init_output, &mut Rng::derive(seed, "mlp/init"));
        let mut order_rng = Rng::derive(seed, "mlp/batches");
        let mut adam = AdamState::new(AdamConfig::with_lr(self.config.lr), &p.tensors())?;
        self.loss_curve.clear();
        for epoch in 0..self.config.epochs {
            let mut total = 0.0;
            for (b, batch) in self.config.batches(train.n_rows(), &mut order_rng).iter().enumerate() {
                let rows: Vec<&[f64]> = batch.iter().map(|&i| train.row(i)).collect();
                let x = Matrix::from_rows(&rows)?;
                let labels: Vec<u8> = batch.iter().map(|&i| train.labels()[i]).collect();
                let (loss, g) = p.loss_and_grad(&x, &labels, self.config.l2)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("mlp loss at epoch {}, batch {}", epoch + 1, b + 1)));
                }
                total += loss * batch.len() as f64;
                adam_step(&mut p.tensors_mut(), &g.tensors(), &mut adam)?;
            }
            self.loss_curve.push(total / train.n_rows() as f64);
        }
        self.params = Some(p);
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        let p = self.params.as_ref().ok_or_else(|| not_fitted("mlp"))?;
        check_row("mlp", p.n_inputs(), row)?;
        Ok(p.predict_batch(&Matrix::row_vector(row))?[(0, 1)])
    }

    fn n_features(&self) -> Option<usize> {
        self.params.as_ref().map(|p| p.n_inputs())
    }

    fn threshold(&self) -> f64 {
        0.5
    }

    fn describe(&self) -> String {
        format!("hidden={}x{} {}", MLP_HIDDEN[0], MLP_HIDDEN[1], describe_train(&self.config))
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = header("mlp");
        write_train_config(&mut w, &self.config);
        w.u32(u32::from(self.zero_init_output));
        match &self.params {
            None => w.u32(0),
            Some(p) => {
                w.u32(1);
                for t in p.tensors() {
                    w.matrix(t);
                }
            }
        }
        Ok(w.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    #[test]
    fn zero_output_layer_scores_half() {
        let p = MlpParams::init(3, MLP_HIDDEN, true, &mut Rng::new(1));
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [3.0, 0.0, -1.0]]).unwrap();
        for v in p.predict_batch(&x).unwrap().as_slice() {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let p = MlpParams::init(3, MLP_HIDDEN, false, &mut Rng::new(2));
        let x = Matrix::from_rows(&[[0.7, -1.3, 0.2], [-0.4, 0.9, 1.6]]).unwrap();
        let labels = [1u8, 0];
        let (_, g) = p.loss_and_grad(&x, &labels, 1e-2).unwrap();
        let mut probe = p.clone();
        let report = grad_check(
            |theta| {
                probe.set_flat(theta).unwrap();
                probe.loss_and_grad(&x, &labels, 1e-2).unwrap().0
            },
            &p.to_flat(),
            &g.to_flat(),
            1e-4,
            1e-3,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
