//! Two-dimensional projections for structure inspection: PCA and truncated
//! SVD on top of a one-sided Jacobi SVD, and exact `O(n²)` t-SNE.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dataset::LabeledDataset;
use crate::numerics::{dot, Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Tsne,
    Pca,
    TruncatedSvd,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Tsne => "tsne",
            Method::Pca => "pca",
            Method::TruncatedSvd => "tsvd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub points: Matrix,
    pub labels: Vec<u8>,
    pub method: Method,
    /// `explained_variance_ratio` (PCA), `singular_values` (TSVD), `final_kl` (t-SNE), ...
    pub diagnostics: BTreeMap<String, Vec<f64>>,
    /// Loadings, `n_features × 2`, for the linear methods.
    pub components: Option<Matrix>,
}

impl Embedding2D {
    pub fn n_points(&self) -> usize {
        self.points.rows()
    }

    /// `x,y,label` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,label\n");
        for i in 0..self.points.rows() {
            let _ = writeln!(out, "{},{},{}", self.points[(i, 0)], self.points[(i, 1)], self.labels[i]);
        }
        out
    }
}

/// Thin SVD `A = U·diag(s)·Vᵀ` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd_jacobi(a: &Matrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("SVD input".into()));
    }
    if a.rows() < a.cols() {
        let t = svd_jacobi(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    let (m, n) = a.shape();
    // columns of A stored as rows for contiguous access
    let mut w = a.transpose();
    let mut vt = Matrix::identity(n);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(w.row(p), w.row(p));
                let beta = dot(w.row(q), w.row(q));
                let gamma = dot(w.row(p), w.row(q));
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| dot(w.row(j), w.row(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        singular_values.push(s);
        for i in 0..m {
            u[(i, k)] = if s > 0.0 { w[(j, i)] / s } else { 0.0 };
        }
        for i in 0..n {
            v[(i, k)] = vt[(j, i)];
        }
    }
    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    for k in 0..cols {
        let a = m[(p, k)];
        let b = m[(q, k)];
        m[(p, k)] = c * a - s * b;
        m[(q, k)] = s * a + c * b;
    }
}

/// Flips each of the first `k` components so its largest-magnitude loading is positive.
fn fix_signs(svd: &mut Svd, k: usize) {
    for c in 0..k.min(svd.v.cols()) {
        let mut best = 0;
        for i in 0..svd.v.rows() {
            if svd.v[(i, c)].abs() > svd.v[(best, c)].abs() {
                best = i;
            }
        }
        if svd.v[(best, c)] < 0.0 {
            for i in 0..svd.v.rows() {
                svd.v[(i, c)] = -svd.v[(i, c)];
            }
            for i in 0..svd.u.rows() {
                svd.u[(i, c)] = -svd.u[(i, c)];
            }
        }
    }
}

fn check_linear_input(ds: &LabeledDataset) -> Result<()> {
    if ds.n_rows() < 3 {
        return Err(Error::invalid("2-D projection needs at least 3 rows"));
    }
    if ds.n_cols() < 2 {
        return Err(Error::invalid("2-D projection needs at least 2 feature columns"));
    }
    Ok(())
}

fn project_top2(x: &Matrix, svd: &Svd) -> Result<(Matrix, Matrix)> {
    let comps = svd.v.column_block(0, 2);
    let points = x.matmul(&comps)?;
    Ok((points, comps))
}

struct PcaFit {
    points: Matrix,
    components: Matrix,
    ratios: Vec<f64>,
    variance: Vec<f64>,
    mean: Vec<f64>,
}

fn pca_fit(x: &Matrix) -> Result<PcaFit> {
    let n = x.rows();
    let mean: Vec<f64> = x.column_sums().iter().map(|s| s / n as f64).collect();
    let mut centred = x.clone();
    for i in 0..n {
        for (v, m) in centred.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut svd = svd_jacobi(&centred)?;
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::invalid("PCA input is degenerate: all rows identical"));
    }
    fix_signs(&mut svd, 2);
    let (points, components) = project_top2(&centred, &svd)?;
    let top = &svd.singular_values[..2];
    Ok(PcaFit {
        points,
        components,
        ratios: top.iter().map(|s| s * s / total).collect(),
        variance: top.iter().map(|s| s * s / (n - 1) as f64).collect(),
        mean,
    })
}

/// Mean-centred projection onto the top two principal axes.
pub fn pca_2d(ds: &LabeledDataset) -> Result<Embedding2D> {
    check_linear_input(ds)?;
    let fit = pca_fit(ds.features())?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("explained_variance_ratio".into(), fit.ratios);
    diagnostics.insert("explained_variance".into(), fit.variance);
    diagnostics.insert("mean".into(), fit.mean);
    Ok(Embedding2D {
        points: fit.points,
        labels: ds.labels().to_vec(),
        method: Method::Pca,
        diagnostics,
        components: Some(fit.components),
    })
}

/// Rank-2 SVD of the uncentred matrix; points are `U₂·S₂`.
pub fn truncated_svd_2d(ds: &LabeledDataset) -> Result<Embedding2D> {
    check_linear_input(ds)?;
    let x = ds.features();
    let mut svd = svd_jacobi(x)?;
    if svd.singular_values[0] == 0.0 {
        return Err(Error::invalid("truncated SVD input is the zero matrix"));
    }
    fix_signs(&mut svd, 2);
    let (points, comps) = project_top2(x, &svd)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("singular_values".into(), svd.singular_values[..2].to_vec());
    Ok(Embedding2D {
        points,
        labels: ds.labels().to_vec(),
        method: Method::TruncatedSvd,
        diagnostics,
        components: Some(comps),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsneInit {
    RandomGaussian,
    PcaInit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
    pub init: TsneInit,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            n_iter: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
            init: TsneInit::RandomGaussian,
        }
    }
}

const TSNE_INIT_STD: f64 = 1e-4;
const MOMENTUM_SWITCH_ITER: usize = 250;
const MIN_GAIN: f64 = 0.01;
/// Entropy tolerance (bits) for the bandwidth search.
const ENTROPY_TOL_BITS: f64 = 1e-5;
const BANDWIDTH_MAX_STEPS: usize = 200;

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 10 {
            return Err(Error::invalid("t-SNE needs at least 10 rows"));
        }
        if !(self.perplexity > 0.0) || self.perplexity >= (n as f64 - 1.0) / 3.0 {
            return Err(Error::invalid(format!(
                "perplexity {} infeasible for {n} rows (must be in (0, {}))",
                self.perplexity,
                (n as f64 - 1.0) / 3.0
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.early_exaggeration >= 1.0) {
            return Err(Error::invalid("learning_rate must be > 0 and early_exaggeration >= 1"));
        }
        if self.exaggeration_iters > self.n_iter {
            return Err(Error::invalid("exaggeration_iters must not exceed n_iter"));
        }
        Ok(())
    }
}

pub fn pairwise_sq_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Symmetrised input affinities plus the perplexity each row actually achieved.
#[derive(Debug, Clone)]
pub struct Affinities {
    pub p: Matrix,
    pub row_perplexity: Vec<f64>,
}

/// Gaussian conditionals with per-row precision found by bisection, then
/// `P = (P_cond + P_condᵀ) / 2n`.
pub fn joint_probabilities(x: &Matrix, perplexity: f64) -> Result<Affinities> {
    let n = x.rows();
    let dist = pairwise_sq_distances(x);
    let target = perplexity.log2();
    let mut cond = Matrix::zeros(n, n);
    let mut row_perplexity = Vec::with_capacity(n);

    for i in 0..n {
        let d_min = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist[(i, j)])
            .fold(f64::INFINITY, f64::min);
        let mut beta = 1.0;
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut probs = vec![0.0; n];
        let mut entropy = 0.0;
        for _ in 0..BANDWIDTH_MAX_STEPS {
            entropy = row_entropy_bits(&dist, i, d_min, beta, &mut probs);
            let diff = entropy - target;
            if diff.abs() < ENTROPY_TOL_BITS {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_infinite() { beta * 2.0 } else { (lo + hi) / 2.0 };
            } else {
                hi = beta;
                beta = (lo + hi) / 2.0;
            }
        }
        cond.row_mut(i).copy_from_slice(&probs);
        row_perplexity.push(entropy.exp2());
    }

    let mut p = Matrix::zeros(n, n);
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = (cond[(i, j)] + cond[(j, i)]) / denom;
        }
    }
    Ok(Affinities { p, row_perplexity })
}

fn row_entropy_bits(dist: &Matrix, i: usize, d_min: f64, beta: f64, probs: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, p) in probs.iter_mut().enumerate() {
        if j == i {
            *p = 0.0;
            continue;
        }
        let shifted = dist[(i, j)] - d_min;
        *p = (-beta * shifted).exp();
        sum += *p;
        weighted += shifted * *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    // H = ln Σ + β·E[d − d_min], converted to bits
    (sum.ln() + beta * weighted / sum) / std::f64::consts::LN_2
}

/// Everything a t-SNE run produces, beyond the embedding itself.
#[derive(Debug, Clone)]
pub struct TsneRun {
    pub points: Matrix,
    pub affinities: Affinities,
    /// KL at the first iteration after exaggeration ends.
    pub kl_after_exaggeration: f64,
    pub final_kl: f64,
    /// `(iteration, KL)` every 50 iterations.
    pub kl_history: Vec<(usize, f64)>,
}

fn kl_and_grad(p: &Matrix, y: &Matrix, exaggeration: f64, grad: &mut Matrix) -> f64 {
    let n = y.rows();
    let mut num = Matrix::zeros(n, n);
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[(i, 0)] - y[(j, 0)];
            let dy = y[(i, 1)] - y[(j, 1)];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[(i, j)] = v;
            num[(j, i)] = v;
            z += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = num[(i, j)] / z;
            let pij = p[(i, j)];
            if pij > 0.0 {
                kl += pij * (pij / q.max(f64::MIN_POSITIVE)).ln();
            }
            let m = (exaggeration * pij - q) * num[(i, j)];
            gx += m * (y[(i, 0)] - y[(j, 0)]);
            gy += m * (y[(i, 1)] - y[(j, 1)]);
        }
        grad[(i, 0)] = 4.0 * gx;
        grad[(i, 1)] = 4.0 * gy;
    }
    kl
}

/// Runs exact t-SNE on a raw feature matrix.
pub fn tsne_run(x: &Matrix, cfg: &TsneConfig) -> Result<TsneRun> {
    let n = x.rows();
    cfg.validate(n)?;
    let affinities = joint_probabilities(x, cfg.perplexity)?;
    let p = &affinities.p;

    let mut rng = Rng::new(cfg.seed);
    let mut y = match cfg.init {
        TsneInit::RandomGaussian => {
            let data = (0..n * 2).map(|_| rng.normal(0.0, TSNE_INIT_STD)).collect();
            Matrix::from_vec(n, 2, data)?
        }
        TsneInit::PcaInit => {
            if x.cols() < 2 {
                return Err(Error::invalid("PCA initialisation needs at least 2 features"));
            }
            let pts = pca_fit(x)?.points;
            let c0 = pts.column(0);
            let std = (c0.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            let scale = if std > 0.0 { TSNE_INIT_STD / std } else { 1.0 };
            pts.scaled(scale)
        }
    };

    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::filled(n, 2, 1.0);
    let mut grad = Matrix::zeros(n, 2);
    let mut kl_after_exaggeration = f64::NAN;
    let mut kl_history = Vec::new();

    for iter in 0..cfg.n_iter {
        let exaggeration = if iter < cfg.exaggeration_iters {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let exag_kl = kl_and_grad(p, &y, exaggeration, &mut grad);
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!("t-SNE gradient at iteration {iter}")));
        }
        // the KL returned above is always against the unexaggerated P
        if iter == cfg.exaggeration_iters {
            kl_after_exaggeration = exag_kl;
        }
        if iter % 50 == 0 {
            kl_history.push((iter, exag_kl));
        }
        let momentum = if iter < MOMENTUM_SWITCH_ITER { 0.5 } else { 0.8 };
        for k in 0..n * 2 {
            let g = grad.as_slice()[k];
            let u = update.as_slice()[k];
            let gain = &mut gains.as_mut_slice()[k];
            *gain = if (g > 0.0) != (u > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(MIN_GAIN);
            let step = momentum * u - cfg.learning_rate * *gain * g;
            update.as_mut_slice()[k] = step;
            y.as_mut_slice()[k] += step;
        }
        let mean = y.column_sums();
        for i in 0..n {
            y[(i, 0)] -= mean[0] / n as f64;
            y[(i, 1)] -= mean[1] / n as f64;
        }
    }

    let final_kl = kl_and_grad(p, &y, 1.0, &mut grad);
    if cfg.exaggeration_iters == cfg.n_iter {
        kl_after_exaggeration = final_kl;
    }
    if !y.is_finite() {
        return Err(Error::NonFinite("t-SNE embedding".into()));
    }
    Ok(TsneRun {
        points: y,
        affinities,
        kl_after_exaggeration,
        final_kl,
        kl_history,
    })
}

pub fn tsne_2d(ds: &LabeledDataset, cfg: &TsneConfig) -> Result<Embedding2D> {
    let run = tsne_run(ds.features(), cfg)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("final_kl".into(), vec![run.final_kl]);
    diagnostics.insert("kl_after_exaggeration".into(), vec![run.kl_after_exaggeration]);
    Ok(Embedding2D {
        points: run.points,
        labels: ds.labels().to_vec(),
        method: Method::Tsne,
        diagnostics,
        components: None,
    })
}

/// Fraction of points whose nearest embedded neighbour has the same label.
pub fn neighbor_label_agreement(points: &Matrix, labels: &[u8]) -> f64 {
    let n = points.rows();
    if n < 2 {
        return 1.0;
    }
    let d = pairwise_sq_distances(points);
    let agree = (0..n)
        .filter(|&i| {
            let nn = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| d[(i, a)].total_cmp(&d[(i, b)]).then(a.cmp(&b)))
                .expect("n >= 2");
            labels[nn] == labels[i]
        })
        .count();
    agree as f64 / n as f64
}
