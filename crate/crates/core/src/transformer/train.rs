use super::{decode_model, encode_model, forward, loss_and_grad, TransformerHyper, TransformerParams};
use crate::baselines::{require_two_classes, Classifier};
use crate::dataset::LabeledDataset;
use crate::numerics::{adam_step, AdamConfig, AdamState, Rng, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: TransformerParams,
    /// Mean training loss of each epoch (batch losses weighted by batch size).
    pub loss_curve: Vec<f64>,
}

/// Mini-batch Adam on mean cross-entropy. Deterministic for a given `cfg.seed`.
pub fn train(ds: &LabeledDataset, hyper: &TransformerHyper, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    hyper.validate()?;
    require_two_classes(ds)?;
    if ds.n_cols() != hyper.max_tokens {
        return Err(Error::shape("training features vs max_tokens", hyper.max_tokens, ds.n_cols()));
    }
    let mut params = TransformerParams::init(hyper, &mut Rng::derive(cfg.seed, "transformer/init"))?;
    let mut order_rng = Rng::derive(cfg.seed, "transformer/batches");
    let mut dropout_rng = Rng::derive(cfg.seed, "transformer/dropout");
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &params.tensors())?;
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for (b, batch) in cfg.batches(ds.n_rows(), &mut order_rng).iter().enumerate() {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| ds.row(i)).collect();
            let labels: Vec<u8> = batch.iter().map(|&i| ds.labels()[i]).collect();
            let out = loss_and_grad(&rows, &labels, &params, cfg.l2, true, &mut dropout_rng)?;
            if !out.total_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "transformer loss at epoch {}, batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            total += out.data_loss * batch.len() as f64;
            let grads = out.grads.tensors();
            adam_step(&mut params.tensors_mut(), &grads, &mut adam)?;
        }
        loss_curve.push(total / ds.n_rows() as f64);
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("transformer parameters after training".into()));
    }
    Ok(TrainOutcome { params, loss_curve })
}

/// Fraud probability for every row, in row order, with dropout off.
pub fn predict_proba(ds: &LabeledDataset, params: &TransformerParams) -> Result<Vec<f64>> {
    if ds.n_cols() != params.hyper.max_tokens {
        return Err(Error::shape("dataset features vs max_tokens", params.hyper.max_tokens, ds.n_cols()));
    }
    // the rng is never drawn from at inference
    let mut rng = Rng::new(0);
    (0..ds.n_rows())
        .map(|i| forward(ds.row(i), params, false, &mut rng).map(|p| p[1]))
        .collect()
}

/// The encoder behind the common [`Classifier`] interface.
#[derive(Debug, Clone)]
pub struct TransformerClassifier {
    /// `max_tokens` is taken from the training data at fit time.
    pub hyper: TransformerHyper,
    pub train_config: TrainConfig,
    pub params: Option<TransformerParams>,
    pub loss_curve: Vec<f64>,
}

impl TransformerClassifier {
    pub fn new(hyper: TransformerHyper, train_config: TrainConfig) -> Self {
        TransformerClassifier {
            hyper,
            train_config,
            params: None,
            loss_curve: Vec::new(),
        }
    }

    pub fn from_params(params: TransformerParams) -> Self {
        TransformerClassifier {
            hyper: params.hyper,
            train_config: TrainConfig::default(),
            params: Some(params),
            loss_curve: Vec::new(),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(Self::from_params(decode_model(bytes)?))
    }

    fn fitted(&self) -> Result<&TransformerParams> {
        self.params.as_ref().ok_or_else(|| Error::invalid("transformer is not fitted"))
    }
}

impl Default for TransformerClassifier {
    fn default() -> Self {
        TransformerClassifier::new(TransformerHyper::for_features(1), TrainConfig::default())
    }
}

impl Classifier for TransformerClassifier {
    fn name(&self) -> &'static str {
        "transformer"
    }

    fn fit(&mut self, train_ds: &LabeledDataset, seed: u64) -> Result<()> {
        self.hyper.max_tokens = train_ds.n_cols();
        let cfg = TrainConfig {
            seed,
            ..self.train_config.clone()
        };
        let out = train(train_ds, &self.hyper, &cfg)?;
        self.params = Some(out.params);
        self.loss_curve = out.loss_curve;
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        Ok(forward(row, self.fitted()?, false, &mut Rng::new(0))?[1])
    }

    fn n_features(&self) -> Option<usize> {
        self.params.as_ref().map(|p| p.hyper.max_tokens)
    }

    fn threshold(&self) -> f64 {
        0.5
    }

    fn describe(&self) -> String {
        let h = &self.hyper;
        let c = &self.train_config;
        format!(
            "d_model={} n_heads={} n_layers={} d_ff={} dropout={} epochs={} batch={} lr={} l2={}",
            h.d_model, h.n_heads, h.n_layers, h.d_ff, h.dropout_rate, c.epochs, c.batch_size, c.lr, c.l2
        )
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(encode_model(self.fitted()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticKind, SyntheticSpec};

    fn small_hyper(n: usize) -> TransformerHyper {
        TransformerHyper {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            dropout_rate: 0.0,
            max_tokens: n,
        }
    }

    fn blobs(n: usize, seed: u64) -> LabeledDataset {
        generate_synthetic(&SyntheticSpec {
            kind: SyntheticKind::GaussianBlobs { mu: 3.0 },
            n_per_class: n,
            n_features: 2,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let ds = blobs(20, 1);
        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.0,
            batch_size: 8,
            ..Default::default()
        };
        let out = train(&ds, &small_hyper(2), &cfg).unwrap();
        let init = TransformerParams::init(&small_hyper(2), &mut Rng::derive(0, "transformer/init")).unwrap();
        assert_eq!(out.params, init);
        for w in out.loss_curve.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn same_config_same_curve() {
        let ds = blobs(16, 2);
        let hyper = TransformerHyper {
            dropout_rate: 0.1,
            ..small_hyper(2)
        };
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 9,
            ..Default::default()
        };
        let a = train(&ds, &hyper, &cfg).unwrap();
        let b = train(&ds, &hyper, &cfg).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn single_class_rejected() {
        let ds = blobs(5, 3);
        let idx = ds.indices_of_class(1);
        let one = ds.select_rows(&idx);
        assert!(train(&one, &small_hyper(2), &TrainConfig::default()).is_err());
    }

    #[test]
    fn predict_proba_matches_forward_and_is_pure() {
        let ds = blobs(4, 4);
        let p = TransformerParams::init(&small_hyper(2), &mut Rng::new(1)).unwrap();
        let probs = predict_proba(&ds, &p).unwrap();
        assert_eq!(probs, predict_proba(&ds, &p).unwrap());
        let single = ds.select_rows(&[2]);
        let f = forward(ds.row(2), &p, false, &mut Rng::new(5)).unwrap();
        assert_eq!(predict_proba(&single, &p).unwrap(), vec![f[1]]);
        let rev: Vec<usize> = (0..ds.n_rows()).rev().collect();
        let mut expected = probs.clone();
        expected.reverse();
        assert_eq!(predict_proba(&ds.select_rows(&rev), &p).unwrap(), expected);
    }
}
