use super::{check_row, describe_train, header, not_fitted, read_train_config, require_two_classes, write_train_config, Classifier};
use crate::codec::Reader;
use crate::dataset::LabeledDataset;
use crate::numerics::{adam_step, dot, AdamConfig, AdamState, Matrix, Rng, TrainConfig};
use crate::{Error, Result};

/// Fitted `w`, `b` of a linear score `wᵀx + b`.
#[derive(Debug, Clone, PartialEq)]
pub(super) struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.bias
    }
}

/// Mini-batch Adam on `mean(loss(z_i, y_i)) + (l2/2)·‖w‖²`, where `point`
/// returns the per-row loss and its derivative with respect to `z = wᵀx + b`.
pub(super) fn fit_linear(
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    seed: u64,
    stream: &str,
    point: impl Fn(f64, u8) -> (f64, f64),
) -> Result<LinearModel> {
    cfg.validate()?;
    require_two_classes(ds)?;
    let d = ds.n_cols();
    let mut w = Matrix::zeros(1, d);
    let mut b = Matrix::zeros(1, 1);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &[&w, &b])?;
    let mut rng = Rng::derive(seed, stream);
    for epoch in 0..cfg.epochs {
        for (bi, batch) in cfg.batches(ds.n_rows(), &mut rng).iter().enumerate() {
            let n = batch.len() as f64;
            let mut gw = Matrix::zeros(1, d);
            let mut gb = Matrix::zeros(1, 1);
            let mut loss = 0.0;
            for &i in batch {
                let x = ds.row(i);
                let z = dot(w.as_slice(), x) + b[(0, 0)];
                let (l, dz) = point(z, ds.labels()[i]);
                loss += l / n;
                for (g, xv) in gw.as_mut_slice().iter_mut().zip(x) {
                    *g += dz * xv / n;
                }
                gb.as_mut_slice()[0] += dz / n;
            }
            for (g, wv) in gw.as_mut_slice().iter_mut().zip(w.as_slice()) {
                *g += cfg.l2 * wv;
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("{stream} loss at epoch {}, batch {}", epoch + 1, bi + 1)));
            }
            adam_step(&mut [&mut w, &mut b], &[&gw, &gb], &mut adam)?;
        }
    }
    Ok(LinearModel {
        weights: w.into_vec(),
        bias: b[(0, 0)],
    })
}

pub(super) fn encode_linear(w: &mut crate::codec::Writer, m: &Option<LinearModel>) {
    match m {
        None => w.u32(0),
        Some(m) => {
            w.u32(1);
            w.usize(m.weights.len());
            for &v in &m.weights {
                w.f64(v);
            }
            w.f64(m.bias);
        }
    }
}

pub(super) fn decode_linear(r: &mut Reader) -> Result<Option<LinearModel>> {
    if r.u32()? == 0 {
        return Ok(None);
    }
    let n = r.usize()?;
    let weights = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    Ok(Some(LinearModel { weights, bias: r.f64()? }))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub config: TrainConfig,
    model: Option<LinearModel>,
}

impl Default for LogisticRegression {
    fn default() -> Self {
        LogisticRegression::new(TrainConfig {
            epochs: 50,
            batch_size: 32,
            lr: 1e-2,
            ..Default::default()
        })
    }
}

impl LogisticRegression {
    pub fn new(config: TrainConfig) -> Self {
        LogisticRegression { config, model: None }
    }

    /// `(w, b)` once fitted.
    pub fn coefficients(&self) -> Option<(&[f64], f64)> {
        self.model.as_ref().map(|m| (m.weights.as_slice(), m.bias))
    }

    pub(super) fn decode(r: &mut Reader) -> Result<Self> {
        Ok(LogisticRegression {
            config: read_train_config(r)?,
            model: decode_linear(r)?,
        })
    }
}

impl Classifier for LogisticRegression {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn fit(&mut self, train: &LabeledDataset, seed: u64) -> Result<()> {
        // cross-entropy: -y·ln σ(z) - (1-y)·ln(1-σ(z)) = softplus(z) - y·z
        self.model = Some(fit_linear(train, &self.config, seed, "logistic", |z, y| {
            let y = f64::from(y);
            (softplus(z) - y * z, sigmoid(z) - y)
        })?);
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        let m = self.model.as_ref().ok_or_else(|| not_fitted("logistic"))?;
        check_row("logistic", m.weights.len(), row)?;
        Ok(sigmoid(m.margin(row)))
    }

    fn n_features(&self) -> Option<usize> {
        self.model.as_ref().map(|m| m.weights.len())
    }

    fn threshold(&self) -> f64 {
        0.5
    }

    fn describe(&self) -> String {
        describe_train(&self.config)
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = header("logistic");
        write_train_config(&mut w, &self.config);
        encode_linear(&mut w, &self.model);
        Ok(w.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sign_data(copies: usize) -> LabeledDataset {
        let xs = [-3.0, -2.5, -2.0, -1.5, 1.5, 2.0, 2.5, 3.0];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..copies {
            for &x in &xs {
                rows.push([x]);
                labels.push(u8::from(x > 0.0));
            }
        }
        LabeledDataset::from_parts(Matrix::from_rows(&rows).unwrap(), &["x"], labels).unwrap()
    }

    #[test]
    fn zero_weights_score_half() {
        let m = LogisticRegression {
            config: TrainConfig::default(),
            model: Some(LinearModel {
                weights: vec![0.0, 0.0],
                bias: 0.0,
            }),
        };
        assert_eq!(m.score(&[5.0, -7.0]).unwrap(), 0.5);
        assert_eq!(m.predict(&[5.0, -7.0]).unwrap(), 1);
    }

    #[test]
    fn separable_sign_data_is_fitted_exactly() {
        let ds = sign_data(1);
        let mut m = LogisticRegression::default();
        m.fit(&ds, 0).unwrap();
        for i in 0..ds.n_rows() {
            assert_eq!(m.predict(ds.row(i)).unwrap(), ds.labels()[i]);
        }
    }

    #[test]
    fn duplicated_rows_leave_boundary_unchanged() {
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 1000,
            lr: 0.05,
            shuffle_each_epoch: false,
            l2: 1e-2,
            ..Default::default()
        };
        let mut a = LogisticRegression::new(cfg.clone());
        let mut b = LogisticRegression::new(cfg);
        a.fit(&sign_data(1), 0).unwrap();
        b.fit(&sign_data(2), 0).unwrap();
        let (wa, ba) = a.coefficients().unwrap();
        let (wb, bb) = b.coefficients().unwrap();
        assert!((wa[0] - wb[0]).abs() < 1e-6);
        assert!((ba - bb).abs() < 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        let ds = sign_data(1);
        let pos = ds.select_rows(&ds.indices_of_class(1));
        assert!(LogisticRegression::default().fit(&pos, 0).is_err());
    }
}
