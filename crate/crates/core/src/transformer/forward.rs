use super::{LayerParams, TransformerHyper, TransformerParams, N_CLASSES};
use crate::numerics::ops::{
    dropout_mask, hadamard, layer_norm_rows, layer_norm_rows_backward, linear, relu, relu_backward, softmax,
    softmax_rows, softmax_rows_backward, LayerNormCache,
};
use crate::numerics::{Matrix, Rng, LAYER_NORM_EPS};
use crate::{Error, Result};

/// Token `t` is `x_t·w_t + b_t + e_t`.
pub fn tokenize(row: &[f64], params: &TransformerParams) -> Result<Matrix> {
    let (t_len, d) = (params.hyper.max_tokens, params.hyper.d_model);
    if row.len() != t_len {
        return Err(Error::shape("tokenize row length", t_len, row.len()));
    }
    let mut tokens = Matrix::zeros(t_len, d);
    for (t, &x) in row.iter().enumerate() {
        let w = params.feature_weight.row(t);
        let b = params.feature_bias.row(t);
        let e = params.identity.row(t);
        for (j, out) in tokens.row_mut(t).iter_mut().enumerate() {
            *out = x * w[j] + b[j] + e[j];
        }
    }
    Ok(tokens)
}

fn check_tokens(x: &Matrix, d_model: usize) -> Result<()> {
    if x.cols() != d_model || x.rows() == 0 {
        return Err(Error::shape("token matrix", format!("T x {d_model}"), format!("{}x{}", x.rows(), x.cols())));
    }
    Ok(())
}

struct AttentionCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// One `T × T` row-stochastic matrix per head.
    weights: Vec<Matrix>,
    concat: Matrix,
}

fn attention_forward(x: &Matrix, layer: &LayerParams, n_heads: usize) -> Result<(Matrix, AttentionCache)> {
    let d = layer.w_q.rows();
    check_tokens(x, d)?;
    let dk = d / n_heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let q = x.matmul(&layer.w_q)?;
    let k = x.matmul(&layer.w_k)?;
    let v = x.matmul(&layer.w_v)?;
    let mut concat = Matrix::zeros(x.rows(), d);
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = q.column_block(h * dk, dk);
        let kh = k.column_block(h * dk, dk);
        let vh = v.column_block(h * dk, dk);
        let a = softmax_rows(&qh.matmul_t(&kh)?.scaled(scale));
        concat.set_column_block(h * dk, &a.matmul(&vh)?);
        weights.push(a);
    }
    let out = concat.matmul(&layer.w_o)?;
    Ok((
        out,
        AttentionCache {
            q,
            k,
            v,
            weights,
            concat,
        },
    ))
}

/// Per-head attention matrices `softmax(Q_h K_hᵀ / √d_k)`.
pub fn attention_weights(x: &Matrix, layer: &LayerParams, n_heads: usize) -> Result<Vec<Matrix>> {
    Ok(attention_forward(x, layer, n_heads)?.1.weights)
}

/// Multi-head self-attention: heads concatenated, then projected by `W_O`.
pub fn multi_head_attention(x: &Matrix, layer: &LayerParams, n_heads: usize) -> Result<Matrix> {
    Ok(attention_forward(x, layer, n_heads)?.0)
}

struct LayerCache {
    x: Matrix,
    attn: AttentionCache,
    mask1: Option<Matrix>,
    ln1: LayerNormCache,
    y: Matrix,
    ff_pre: Matrix,
    ff_act: Matrix,
    mask2: Option<Matrix>,
    ln2: LayerNormCache,
}

fn layer_forward(
    x: &Matrix,
    layer: &LayerParams,
    hyper: &TransformerHyper,
    training: bool,
    rng: &mut Rng,
) -> Result<(Matrix, LayerCache)> {
    let (attn_out, attn) = attention_forward(x, layer, hyper.n_heads)?;
    let dropout_on = training && hyper.dropout_rate > 0.0;
    let (t, d) = x.shape();

    let mask1 = dropout_on.then(|| dropout_mask(t, d, hyper.dropout_rate, rng));
    let mut r1 = match &mask1 {
        Some(m) => hadamard(&attn_out, m),
        None => attn_out,
    };
    r1.add_assign(x)?;
    let (y, ln1) = layer_norm_rows(&r1, layer.ln1_gain.as_slice(), layer.ln1_bias.as_slice(), LAYER_NORM_EPS);

    let ff_pre = linear(&y, &layer.w_ff1, layer.b_ff1.as_slice())?;
    let ff_act = relu(&ff_pre);
    let ff_out = linear(&ff_act, &layer.w_ff2, layer.b_ff2.as_slice())?;
    let mask2 = dropout_on.then(|| dropout_mask(t, d, hyper.dropout_rate, rng));
    let mut r2 = match &mask2 {
        Some(m) => hadamard(&ff_out, m),
        None => ff_out,
    };
    r2.add_assign(&y)?;
    let (z, ln2) = layer_norm_rows(&r2, layer.ln2_gain.as_slice(), layer.ln2_bias.as_slice(), LAYER_NORM_EPS);

    Ok((
        z,
        LayerCache {
            x: x.clone(),
            attn,
            mask1,
            ln1,
            y,
            ff_pre,
            ff_act,
            mask2,
            ln2,
        },
    ))
}

/// Post-LN block: `Y = LN(X + Dropout(MHA(X)))`, `Z = LN(Y + Dropout(FFN(Y)))`.
pub fn encoder_layer(
    x: &Matrix,
    layer: &LayerParams,
    hyper: &TransformerHyper,
    training: bool,
    rng: &mut Rng,
) -> Result<Matrix> {
    Ok(layer_forward(x, layer, hyper, training, rng)?.0)
}

/// Accumulates this layer's parameter gradients into `grads` and returns `dL/dX`.
fn layer_backward(
    cache: &LayerCache,
    layer: &LayerParams,
    n_heads: usize,
    dz: &Matrix,
    grads: &mut LayerParams,
) -> Result<Matrix> {
    // second sublayer
    let (dr2, dg2, db2) = layer_norm_rows_backward(&cache.ln2, layer.ln2_gain.as_slice(), dz);
    add_slice(&mut grads.ln2_gain, &dg2);
    add_slice(&mut grads.ln2_bias, &db2);
    let dff_out = match &cache.mask2 {
        Some(m) => hadamard(&dr2, m),
        None => dr2.clone(),
    };
    grads.w_ff2.add_assign(&cache.ff_act.t_matmul(&dff_out)?)?;
    add_slice(&mut grads.b_ff2, &dff_out.column_sums());
    let dact = dff_out.matmul_t(&layer.w_ff2)?;
    let dpre = relu_backward(&cache.ff_pre, &dact);
    grads.w_ff1.add_assign(&cache.y.t_matmul(&dpre)?)?;
    add_slice(&mut grads.b_ff1, &dpre.column_sums());
    let mut dy = dr2;
    dy.add_assign(&dpre.matmul_t(&layer.w_ff1)?)?;

    // first sublayer
    let (dr1, dg1, db1) = layer_norm_rows_backward(&cache.ln1, layer.ln1_gain.as_slice(), &dy);
    add_slice(&mut grads.ln1_gain, &dg1);
    add_slice(&mut grads.ln1_bias, &db1);
    let dattn_out = match &cache.mask1 {
        Some(m) => hadamard(&dr1, m),
        None => dr1.clone(),
    };
    let mut dx = dr1;

    let a = &cache.attn;
    grads.w_o.add_assign(&a.concat.t_matmul(&dattn_out)?)?;
    let dconcat = dattn_out.matmul_t(&layer.w_o)?;
    let (t, d) = cache.x.shape();
    let dk = d / n_heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut dq = Matrix::zeros(t, d);
    let mut dkm = Matrix::zeros(t, d);
    let mut dv = Matrix::zeros(t, d);
    for (h, weights) in a.weights.iter().enumerate() {
        let qh = a.q.column_block(h * dk, dk);
        let kh = a.k.column_block(h * dk, dk);
        let vh = a.v.column_block(h * dk, dk);
        let dhead = dconcat.column_block(h * dk, dk);
        let dweights = dhead.matmul_t(&vh)?;
        dv.set_column_block(h * dk, &weights.t_matmul(&dhead)?);
        let dscores = softmax_rows_backward(weights, &dweights).scaled(scale);
        dq.set_column_block(h * dk, &dscores.matmul(&kh)?);
        dkm.set_column_block(h * dk, &dscores.t_matmul(&qh)?);
    }
    grads.w_q.add_assign(&cache.x.t_matmul(&dq)?)?;
    grads.w_k.add_assign(&cache.x.t_matmul(&dkm)?)?;
    grads.w_v.add_assign(&cache.x.t_matmul(&dv)?)?;
    dx.add_assign(&dq.matmul_t(&layer.w_q)?)?;
    dx.add_assign(&dkm.matmul_t(&layer.w_k)?)?;
    dx.add_assign(&dv.matmul_t(&layer.w_v)?)?;
    Ok(dx)
}

fn add_slice(m: &mut Matrix, v: &[f64]) {
    for (a, b) in m.as_mut_slice().iter_mut().zip(v) {
        *a += b;
    }
}

struct RowCache {
    layers: Vec<LayerCache>,
    pooled: Vec<f64>,
    logits: [f64; N_CLASSES],
}

fn forward_cached(
    row: &[f64],
    params: &TransformerParams,
    training: bool,
    rng: &mut Rng,
) -> Result<RowCache> {
    let mut x = tokenize(row, params)?;
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (z, cache) = layer_forward(&x, layer, &params.hyper, training, rng)?;
        layers.push(cache);
        x = z;
    }
    let t = x.rows() as f64;
    let pooled: Vec<f64> = x.column_sums().iter().map(|s| s / t).collect();
    let logits_m = linear(&Matrix::row_vector(&pooled), &params.head_weight, params.head_bias.as_slice())?;
    let logits = [logits_m[(0, 0)], logits_m[(0, 1)]];
    Ok(RowCache { layers, pooled, logits })
}

/// Class probabilities `[p(legit), p(fraud)]` for one row.
pub fn forward(row: &[f64], params: &TransformerParams, training: bool, rng: &mut Rng) -> Result<[f64; 2]> {
    let cache = forward_cached(row, params, training, rng)?;
    let p = softmax(&cache.logits);
    Ok([p[0], p[1]])
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone)]
pub struct BatchLoss {
    /// Mean cross-entropy over the batch.
    pub data_loss: f64,
    /// `data_loss` plus the L2 penalty.
    pub total_loss: f64,
    pub grads: TransformerParams,
}

/// Mean cross-entropy of a batch (plus `(l2/2)·‖W‖²`) and its gradient.
pub fn loss_and_grad(
    rows: &[&[f64]],
    labels: &[u8],
    params: &TransformerParams,
    l2: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<BatchLoss> {
    if rows.len() != labels.len() || rows.is_empty() {
        return Err(Error::shape("batch", rows.len(), labels.len()));
    }
    let batch = rows.len() as f64;
    let mut grads = TransformerParams::zeros(&params.hyper);
    let mut data_loss = 0.0;

    for (row, &label) in rows.iter().zip(labels) {
        let cache = forward_cached(row, params, training, rng)?;
        let y = label as usize;
        data_loss += log_sum_exp(&cache.logits) - cache.logits[y];

        let probs = softmax(&cache.logits);
        let dlogits: Vec<f64> = (0..N_CLASSES)
            .map(|c| (probs[c] - if c == y { 1.0 } else { 0.0 }) / batch)
            .collect();
        for (j, &p) in cache.pooled.iter().enumerate() {
            for (c, &dl) in dlogits.iter().enumerate() {
                grads.head_weight[(j, c)] += p * dl;
            }
        }
        add_slice(&mut grads.head_bias, &dlogits);
        let dpooled = Matrix::row_vector(&dlogits).matmul_t(&params.head_weight)?;

        let t = params.hyper.max_tokens;
        let mut dz = Matrix::zeros(t, params.hyper.d_model);
        for i in 0..t {
            for (o, g) in dz.row_mut(i).iter_mut().zip(dpooled.as_slice()) {
                *o = g / t as f64;
            }
        }
        for (l, layer_cache) in cache.layers.iter().enumerate().rev() {
            dz = layer_backward(layer_cache, &params.layers[l], params.hyper.n_heads, &dz, &mut grads.layers[l])?;
        }
        for (ti, &x) in row.iter().enumerate() {
            let dtok = dz.row(ti);
            for (j, &g) in dtok.iter().enumerate() {
                grads.feature_weight[(ti, j)] += x * g;
                grads.feature_bias[(ti, j)] += g;
                grads.identity[(ti, j)] += g;
            }
        }
    }
    data_loss /= batch;

    let mut penalty = 0.0;
    if l2 > 0.0 {
        let names = params.tensor_names();
        let weights = params.tensors();
        for ((name, w), g) in names.iter().zip(weights).zip(grads.tensors_mut()) {
            if TransformerParams::is_weight(name) {
                penalty += 0.5 * l2 * w.as_slice().iter().map(|v| v * v).sum::<f64>();
                for (gv, wv) in g.as_mut_slice().iter_mut().zip(w.as_slice()) {
                    *gv += l2 * wv;
                }
            }
        }
    }
    Ok(BatchLoss {
        data_loss,
        total_loss: data_loss + penalty,
        grads,
    })
}
