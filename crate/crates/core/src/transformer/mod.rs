//! Feature-as-token self-attention encoder for tabular classification.
//!
//! Each scalar feature becomes one token, `x_t·w_t + b_t + e_t`, where
//! `w_t`/`b_t` are a learned per-feature affine embedding and `e_t` a learned
//! feature-identity vector. Tokens pass through post-LN encoder layers
//! (multi-head self-attention, then a ReLU feed-forward block, each wrapped
//! in residual + LayerNorm), are mean-pooled, and a linear head produces two
//! class logits.
//!
//! All backward passes are written out by hand in [`forward`]; they are
//! validated against central differences in the test suite.

mod forward;
mod io;
mod train;

pub use forward::{
    attention_weights, encoder_layer, forward, loss_and_grad, multi_head_attention, tokenize, BatchLoss,
};
pub use io::{decode_model, encode_model, load_model, load_model_expecting, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{predict_proba, train, TrainOutcome, TransformerClassifier};

pub use crate::numerics::TrainConfig;

use crate::numerics::{xavier_uniform, xavier_uniform_with_fans, Matrix, Rng};
use crate::{Error, Result};

pub const N_CLASSES: usize = 2;
const IDENTITY_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerHyper {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout_rate: f64,
    /// One token per input feature.
    pub max_tokens: usize,
}

impl TransformerHyper {
    /// Default architecture for `n_features` inputs.
    pub fn for_features(n_features: usize) -> Self {
        TransformerHyper {
            d_model: 32,
            n_heads: 4,
            n_layers: 2,
            d_ff: 64,
            dropout_rate: 0.1,
            max_tokens: n_features,
        }
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 || self.max_tokens == 0 {
            return Err(Error::invalid("transformer dimensions must be positive"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::invalid(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("dropout_rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Learnable tensors of one encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub w_ff1: Matrix,
    pub b_ff1: Matrix,
    pub w_ff2: Matrix,
    pub b_ff2: Matrix,
    pub ln1_gain: Matrix,
    pub ln1_bias: Matrix,
    pub ln2_gain: Matrix,
    pub ln2_bias: Matrix,
}

const LAYER_TENSORS: [&str; 12] = [
    "w_q", "w_k", "w_v", "w_o", "w_ff1", "b_ff1", "w_ff2", "b_ff2", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
];

impl LayerParams {
    fn zeros(h: &TransformerHyper) -> Self {
        let d = h.d_model;
        LayerParams {
            w_q: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
            w_o: Matrix::zeros(d, d),
            w_ff1: Matrix::zeros(d, h.d_ff),
            b_ff1: Matrix::zeros(1, h.d_ff),
            w_ff2: Matrix::zeros(h.d_ff, d),
            b_ff2: Matrix::zeros(1, d),
            ln1_gain: Matrix::zeros(1, d),
            ln1_bias: Matrix::zeros(1, d),
            ln2_gain: Matrix::zeros(1, d),
            ln2_bias: Matrix::zeros(1, d),
        }
    }

    fn tensors(&self) -> [&Matrix; 12] {
        [
            &self.w_q, &self.w_k, &self.w_v, &self.w_o, &self.w_ff1, &self.b_ff1, &self.w_ff2, &self.b_ff2,
            &self.ln1_gain, &self.ln1_bias, &self.ln2_gain, &self.ln2_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 12] {
        [
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.w_ff1,
            &mut self.b_ff1,
            &mut self.w_ff2,
            &mut self.b_ff2,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }
}

/// Every learnable tensor of the encoder classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub hyper: TransformerHyper,
    /// `max_tokens × d_model`: row `t` scales feature `t`.
    pub feature_weight: Matrix,
    pub feature_bias: Matrix,
    /// Feature-identity embedding table, `max_tokens × d_model`.
    pub identity: Matrix,
    pub layers: Vec<LayerParams>,
    pub head_weight: Matrix,
    pub head_bias: Matrix,
}

impl TransformerParams {
    pub fn zeros(hyper: &TransformerHyper) -> Self {
        let (t, d) = (hyper.max_tokens, hyper.d_model);
        TransformerParams {
            hyper: *hyper,
            feature_weight: Matrix::zeros(t, d),
            feature_bias: Matrix::zeros(t, d),
            identity: Matrix::zeros(t, d),
            layers: (0..hyper.n_layers).map(|_| LayerParams::zeros(hyper)).collect(),
            head_weight: Matrix::zeros(d, N_CLASSES),
            head_bias: Matrix::zeros(1, N_CLASSES),
        }
    }

    /// Xavier-uniform weights, zero biases, unit LayerNorm gains, `N(0, 0.02²)` identity table.
    pub fn init(hyper: &TransformerHyper, rng: &mut Rng) -> Result<Self> {
        hyper.validate()?;
        let (t, d) = (hyper.max_tokens, hyper.d_model);
        let mut p = TransformerParams::zeros(hyper);
        // each row maps one scalar to d_model
        p.feature_weight = xavier_uniform_with_fans(t, d, 1, d, rng);
        for v in p.identity.as_mut_slice() {
            *v = rng.normal(0.0, IDENTITY_INIT_STD);
        }
        for layer in &mut p.layers {
            layer.w_q = xavier_uniform(d, d, rng);
            layer.w_k = xavier_uniform(d, d, rng);
            layer.w_v = xavier_uniform(d, d, rng);
            layer.w_o = xavier_uniform(d, d, rng);
            layer.w_ff1 = xavier_uniform(d, hyper.d_ff, rng);
            layer.w_ff2 = xavier_uniform(hyper.d_ff, d, rng);
            layer.ln1_gain = Matrix::filled(1, d, 1.0);
            layer.ln2_gain = Matrix::filled(1, d, 1.0);
        }
        p.head_weight = xavier_uniform(d, N_CLASSES, rng);
        Ok(p)
    }

    /// Tensor names in serialisation order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec![
            "embed.feature_weight".to_string(),
            "embed.feature_bias".to_string(),
            "embed.identity".to_string(),
        ];
        for l in 0..self.layers.len() {
            names.extend(LAYER_TENSORS.iter().map(|n| format!("layers.{l}.{n}")));
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.feature_weight, &self.feature_bias, &self.identity];
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.feature_weight, &mut self.feature_bias, &mut self.identity];
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    /// Whether tensor `name` is a weight matrix subject to L2.
    pub fn is_weight(name: &str) -> bool {
        let leaf = name.rsplit('.').next().unwrap_or(name);
        matches!(leaf, "feature_weight" | "w_q" | "w_k" | "w_v" | "w_o" | "w_ff1" | "w_ff2" | "weight")
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|m| m.as_slice().len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|m| m.as_slice().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_parameters() {
            return Err(Error::shape("flat parameter vector", self.n_parameters(), flat.len()));
        }
        let mut offset = 0;
        for m in self.tensors_mut() {
            let n = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }
}
