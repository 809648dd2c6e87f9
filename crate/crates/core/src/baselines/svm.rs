use super::logistic::{decode_linear, encode_linear, fit_linear, LinearModel};
use super::{check_row, describe_train, header, not_fitted, read_train_config, write_train_config, Classifier};
use crate::codec::Reader;
use crate::dataset::LabeledDataset;
use crate::numerics::TrainConfig;
use crate::Result;

/// Linear SVM trained on mean hinge loss with Adam; the score is the raw margin.
#[derive(Debug, Clone)]
pub struct LinearSvm {
    pub config: TrainConfig,
    model: Option<LinearModel>,
}

impl Default for LinearSvm {
    fn default() -> Self {
        LinearSvm::new(TrainConfig {
            epochs: 50,
            batch_size: 32,
            lr: 1e-2,
            l2: 1e-4,
            ..Default::default()
        })
    }
}

impl LinearSvm {
    pub fn new(config: TrainConfig) -> Self {
        LinearSvm { config, model: None }
    }

    pub fn coefficients(&self) -> Option<(&[f64], f64)> {
        self.model.as_ref().map(|m| (m.weights.as_slice(), m.bias))
    }

    pub(super) fn decode(r: &mut Reader) -> Result<Self> {
        Ok(LinearSvm {
            config: read_train_config(r)?,
            model: decode_linear(r)?,
        })
    }
}

impl Classifier for LinearSvm {
    fn name(&self) -> &'static str {
        "svm"
    }

    fn fit(&mut self, train: &LabeledDataset, seed: u64) -> Result<()> {
        self.model = Some(fit_linear(train, &self.config, seed, "svm", |z, y| {
            let y = if y == 1 { 1.0 } else { -1.0 };
            let margin = y * z;
            if margin < 1.0 {
                (1.0 - margin, -y)
            } else {
                (0.0, 0.0)
            }
        })?);
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        let m = self.model.as_ref().ok_or_else(|| not_fitted("svm"))?;
        check_row("svm", m.weights.len(), row)?;
        Ok(m.margin(row))
    }

    fn n_features(&self) -> Option<usize> {
        self.model.as_ref().map(|m| m.weights.len())
    }

    fn threshold(&self) -> f64 {
        0.0
    }

    fn describe(&self) -> String {
        describe_train(&self.config)
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = header("svm");
        write_train_config(&mut w, &self.config);
        encode_linear(&mut w, &self.model);
        Ok(w.finish())
    }
}
