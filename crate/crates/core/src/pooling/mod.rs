//! Pooling operators that compress `N` node embeddings into `K` soft tokens,
//! organized as select-reduce-connect:
//!
//! * baselines — [`mean_pool`], [`rand_k`], [`all_tokens`];
//! * pruning — [`topk_pool`], [`sag_pool`] keep a scored node subset, gate
//!   the kept rows with `tanh(score)`, and emit them in descending-score
//!   order;
//! * clustering — [`diff_pool`], [`mincut_pool`] aggregate nodes into `C`
//!   supernodes through a row-stochastic assignment matrix and report their
//!   auxiliary losses;
//! * global attention — [`vn_pool`] / [`perceiver_encode`], a learnable
//!   latent bank cross-attending over all nodes.
//!
//! [`project_tokens`] maps pooled tokens into the readout width, and
//! [`calibrate_retention`] converts a token budget into a retention ratio.
//! Every differentiable path has an explicit backward checked against the
//! central-difference oracle.

mod attention;
mod clustering;

pub use attention::{perceiver_encode, perceiver_encode_backward, vn_pool, vn_pool_backward, VirtualNodeBank};
pub use clustering::{
    diff_pool, diff_pool_backward, diffpool_entropy_loss, diffpool_link_pred_loss, mincut_cut_loss,
    mincut_ortho_loss, mincut_pool, mincut_pool_backward,
};

use serde::{Deserialize, Serialize};

use crate::encoders::{gcn_chain_backward, gcn_chain_forward, EncoderKind, EncoderParams};
use crate::numerics::{sigmoid, DeterministicRng, Matrix};
use crate::{Error, Result};

/// Named auxiliary losses; `None` means the operator does not produce that
/// loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuxLosses {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cut: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ortho: Option<f64>,
}

impl AuxLosses {
    pub fn total(&self) -> f64 {
        [self.lp, self.entropy, self.cut, self.ortho]
            .iter()
            .flatten()
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.lp.is_none() && self.entropy.is_none() && self.cut.is_none() && self.ortho.is_none()
    }

    pub fn is_finite(&self) -> bool {
        [self.lp, self.entropy, self.cut, self.ortho]
            .iter()
            .flatten()
            .all(|v| v.is_finite())
    }
}

/// Soft cluster map `S` with nonnegative entries and rows summing to 1
/// within 1e-9; the constructor enforces both.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AssignmentMatrix(Matrix);

impl AssignmentMatrix {
    pub fn new(s: Matrix) -> crate::Result<Self> {
        for i in 0..s.rows() {
            let mut sum = 0.0;
            for v in s.row(i) {
                if *v < 0.0 {
                    return Err(Error::Invalid(format!(
                        "assignment row {i} has negative entry {v}"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!(
                    "assignment row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self(s))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn nodes(&self) -> usize {
        self.0.rows()
    }

    pub fn clusters(&self) -> usize {
        self.0.cols()
    }
}

/// Output of a pooling operator.
#[derive(Clone, Debug, Serialize)]
pub struct PoolResult {
    /// `K x d` token rows.
    pub tokens: Matrix,
    pub aux: AuxLosses,
    /// Original node indices kept by pruning operators, descending score.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Vec<usize>>,
    /// Soft cluster map from clustering operators.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<AssignmentMatrix>,
    /// `C x C` coarse adjacency from clustering operators.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarse_adjacency: Option<Matrix>,
    /// Set when a degenerate small graph forced the cluster count down to N.
    pub clusters_reduced: bool,
}

impl PoolResult {
    fn plain(tokens: Matrix) -> Self {
        Self {
            tokens,
            aux: AuxLosses::default(),
            selection: None,
            assignment: None,
            coarse_adjacency: None,
            clusters_reduced: false,
        }
    }

    pub fn token_count(&self) -> usize {
        self.tokens.rows()
    }
}

/// Upstream gradients flowing into a pooling operator's outputs: one matrix
/// for the tokens and one scalar weight per auxiliary loss.
#[derive(Clone, Debug)]
pub struct PoolGrad {
    pub d_tokens: Matrix,
    pub d_lp: f64,
    pub d_entropy: f64,
    pub d_cut: f64,
    pub d_ortho: f64,
}

impl PoolGrad {
    pub fn tokens_only(d_tokens: Matrix) -> Self {
        Self {
            d_tokens,
            d_lp: 0.0,
            d_entropy: 0.0,
            d_cut: 0.0,
            d_ortho: 0.0,
        }
    }

    /// Tokens gradient plus a uniform weight on every aux loss.
    pub fn with_aux_weight(d_tokens: Matrix, weight: f64) -> Self {
        Self {
            d_tokens,
            d_lp: weight,
            d_entropy: weight,
            d_cut: weight,
            d_ortho: weight,
        }
    }
}

fn require_nonempty(h: &Matrix) -> Result<()> {
    if h.rows() == 0 || h.cols() == 0 {
        return Err(Error::Dimension(format!(
            "pooling input is {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    Ok(())
}

/// Single token: the column-wise mean of `h`.
pub fn mean_pool(h: &Matrix) -> Result<PoolResult> {
    require_nonempty(h)?;
    let n = h.rows() as f64;
    let mut token = Matrix::zeros(1, h.cols());
    for (t, s) in token.row_mut(0).iter_mut().zip(h.col_sums()) {
        *t = s / n;
    }
    Ok(PoolResult::plain(token))
}

pub fn mean_pool_backward(n: usize, d_tokens: &Matrix) -> Matrix {
    let mut dh = Matrix::zeros(n, d_tokens.cols());
    for i in 0..n {
        for (o, g) in dh.row_mut(i).iter_mut().zip(d_tokens.row(0)) {
            *o = g / n as f64;
        }
    }
    dh
}

/// `k` rows sampled by the fixed generator: without replacement via partial
/// Fisher-Yates when `N >= k`, with replacement otherwise. The selection is
/// a pure function of `(N, k, seed)`.
pub fn rand_k(h: &Matrix, k: usize, seed: u64) -> Result<PoolResult> {
    require_nonempty(h)?;
    if k == 0 {
        return Err(Error::Invalid("rand_k needs k >= 1".to_string()));
    }
    let n = h.rows();
    let mut rng = DeterministicRng::new(seed);
    let selection = if n >= k {
        rng.sample_distinct(n, k)
    } else {
        (0..k).map(|_| rng.index(n)).collect()
    };
    let mut tokens = Matrix::zeros(selection.len(), h.cols());
    for (r, &i) in selection.iter().enumerate() {
        tokens.row_mut(r).copy_from_slice(h.row(i));
    }
    let mut result = PoolResult::plain(tokens);
    result.selection = Some(selection);
    Ok(result)
}

pub fn rand_k_backward(n: usize, selection: &[usize], d_tokens: &Matrix) -> Matrix {
    let mut dh = Matrix::zeros(n, d_tokens.cols());
    for (r, &i) in selection.iter().enumerate() {
        for (o, g) in dh.row_mut(i).iter_mut().zip(d_tokens.row(r)) {
            *o += g;
        }
    }
    dh
}

/// Every node embedding verbatim, `K = N`.
pub fn all_tokens(h: &Matrix) -> Result<PoolResult> {
    require_nonempty(h)?;
    Ok(PoolResult::plain(h.clone()))
}

pub fn all_tokens_backward(d_tokens: &Matrix) -> Matrix {
    d_tokens.clone()
}

/// Keep count for a retention ratio: `ceil(rho * n)`.
fn keep_count(n: usize, rho: f64) -> Result<usize> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Invalid(format!("retention ratio {rho} outside (0, 1]")));
    }
    Ok(((rho * n as f64).ceil() as usize).clamp(1, n))
}

/// Indices of the `k` largest scores, descending, ties broken by lower index.
fn rank_scores(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].partial_cmp(&scores[*a]).unwrap().then(a.cmp(b)));
    order.truncate(k);
    order
}

fn gate_rows(h: &Matrix, scores: &[f64], selection: &[usize]) -> Matrix {
    let mut tokens = Matrix::zeros(selection.len(), h.cols());
    for (r, &i) in selection.iter().enumerate() {
        let gate = scores[i].tanh();
        for (t, v) in tokens.row_mut(r).iter_mut().zip(h.row(i)) {
            *t = gate * v;
        }
    }
    tokens
}

/// Scores every node with the normalized projection vector
/// (`y = H p / ||p||`), keeps the `ceil(rho N)` top-scored nodes, and emits
/// `tanh(y_i) * H_i` rows in descending-score order.
pub fn topk_pool(h: &Matrix, p: &[f64], rho: f64) -> Result<PoolResult> {
    require_nonempty(h)?;
    let (scores, _) = topk_scores(h, p)?;
    let selection = rank_scores(&scores, keep_count(h.rows(), rho)?);
    let tokens = gate_rows(h, &scores, &selection);
    let mut result = PoolResult::plain(tokens);
    result.selection = Some(selection);
    Ok(result)
}

fn topk_scores(h: &Matrix, p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if p.len() != h.cols() {
        return Err(Error::Dimension(format!(
            "projection width {} for {} columns",
            p.len(),
            h.cols()
        )));
    }
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Invalid("projection vector has zero norm".to_string()));
    }
    let unit: Vec<f64> = p.iter().map(|v| v / norm).collect();
    let scores = (0..h.rows())
        .map(|i| h.row(i).iter().zip(&unit).map(|(a, b)| a * b).sum())
        .collect();
    Ok((scores, unit))
}

/// Backward of [`topk_pool`]: gradients w.r.t. `h` and the projection
/// vector. The selection itself is treated as locally constant.
pub fn topk_pool_backward(
    h: &Matrix,
    p: &[f64],
    rho: f64,
    d_tokens: &Matrix,
) -> Result<(Matrix, Vec<f64>)> {
    let (scores, unit) = topk_scores(h, p)?;
    let selection = rank_scores(&scores, keep_count(h.rows(), rho)?);
    let mut dh = Matrix::zeros(h.rows(), h.cols());
    let mut du = vec![0.0; unit.len()];
    for (r, &i) in selection.iter().enumerate() {
        let t = scores[i].tanh();
        let drow = d_tokens.row(r);
        // Through the gated copy: d/dH_i of tanh(y_i) H_i.
        let dot_h: f64 = drow.iter().zip(h.row(i)).map(|(a, b)| a * b).sum();
        let dy = dot_h * (1.0 - t * t);
        for (c, o) in dh.row_mut(i).iter_mut().enumerate() {
            *o += t * drow[c] + dy * unit[c];
        }
        for (c, o) in du.iter_mut().enumerate() {
            *o += dy * h[(i, c)];
        }
    }
    // u = p / ||p||, so dp = (du - (du . u) u) / ||p||.
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let proj: f64 = du.iter().zip(&unit).map(|(a, b)| a * b).sum();
    let dp = du
        .iter()
        .zip(&unit)
        .map(|(d, u)| (d - proj * u) / norm)
        .collect();
    Ok((dh, dp))
}

/// Like [`topk_pool`] but scores come from a one-output GCN over the graph,
/// so structurally placed nodes can outrank feature-rich ones.
pub fn sag_pool(
    h: &Matrix,
    a_hat: &Matrix,
    scorer: &EncoderParams,
    rho: f64,
) -> Result<PoolResult> {
    require_nonempty(h)?;
    let scores = sag_scores(h, a_hat, scorer)?;
    let selection = rank_scores(&scores, keep_count(h.rows(), rho)?);
    let tokens = gate_rows(h, &scores, &selection);
    let mut result = PoolResult::plain(tokens);
    result.selection = Some(selection);
    Ok(result)
}

fn sag_scores(h: &Matrix, a_hat: &Matrix, scorer: &EncoderParams) -> Result<Vec<f64>> {
    if scorer.kind != EncoderKind::Gcn {
        return Err(Error::Invalid("sag scorer must be a gcn".to_string()));
    }
    if scorer.output_dim() != 1 {
        return Err(Error::Dimension(format!(
            "sag scorer output width {} instead of 1",
            scorer.output_dim()
        )));
    }
    let scored = gcn_chain_forward(h, a_hat, &scorer.dense)?;
    Ok(scored.data().to_vec())
}

pub fn sag_pool_backward(
    h: &Matrix,
    a_hat: &Matrix,
    scorer: &EncoderParams,
    rho: f64,
    d_tokens: &Matrix,
) -> Result<(Matrix, EncoderParams)> {
    let scores = sag_scores(h, a_hat, scorer)?;
    let selection = rank_scores(&scores, keep_count(h.rows(), rho)?);
    let mut dh = Matrix::zeros(h.rows(), h.cols());
    let mut d_scores = Matrix::zeros(h.rows(), 1);
    for (r, &i) in selection.iter().enumerate() {
        let t = scores[i].tanh();
        let drow = d_tokens.row(r);
        let dot_h: f64 = drow.iter().zip(h.row(i)).map(|(a, b)| a * b).sum();
        d_scores[(i, 0)] = dot_h * (1.0 - t * t);
        for (c, o) in dh.row_mut(i).iter_mut().enumerate() {
            *o += t * drow[c];
        }
    }
    let (dh_scores, dense) = gcn_chain_backward(h, a_hat, &scorer.dense, &d_scores)?;
    let mut grads = scorer.zeros_like();
    grads.dense = dense;
    Ok((dh.add(&dh_scores)?, grads))
}

/// Retention ratio for a token budget: `min(1, k / n_avg)`, reported at two
/// decimals for config echo.
pub fn calibrate_retention(k: usize, n_avg: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Invalid("token budget must be >= 1".to_string()));
    }
    if !n_avg.is_finite() || n_avg <= 0.0 {
        return Err(Error::Invalid(format!("mean graph size {n_avg} must be > 0")));
    }
    let rho = (k as f64 / n_avg).min(1.0);
    Ok((rho * 100.0).round() / 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectorVariant {
    /// `sigmoid(T W1 + b1) W2 + b2` through a narrow middle layer.
    Bottleneck,
    /// `relu(T W1 + b1) W2 + b2` at full output width.
    Vn,
}

/// Two-layer per-token projector into the readout width.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectorParams {
    pub variant: ProjectorVariant,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl ProjectorParams {
    /// Bottleneck variant with the middle layer at half the output width.
    pub fn bottleneck(d_in: usize, d_out: usize, rng: &mut DeterministicRng) -> Self {
        let mid = (d_out / 2).max(1);
        let l1 = 1.0 / (d_in as f64).sqrt();
        let l2 = 1.0 / (mid as f64).sqrt();
        Self {
            variant: ProjectorVariant::Bottleneck,
            w1: rng.matrix(d_in, mid, -l1, l1),
            b1: vec![0.0; mid],
            w2: rng.matrix(mid, d_out, -l2, l2),
            b2: vec![0.0; d_out],
        }
    }

    /// Relu variant with the middle layer already at the output width.
    pub fn vn(d_in: usize, d_out: usize, rng: &mut DeterministicRng) -> Self {
        let l1 = 1.0 / (d_in as f64).sqrt();
        let l2 = 1.0 / (d_out as f64).sqrt();
        Self {
            variant: ProjectorVariant::Vn,
            w1: rng.matrix(d_in, d_out, -l1, l1),
            b1: vec![0.0; d_out],
            w2: rng.matrix(d_out, d_out, -l2, l2),
            b2: vec![0.0; d_out],
        }
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            variant: self.variant,
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
        }
    }
}

/// Maps `K x d` tokens to `K x d_out`; token count is preserved and each row
/// is projected independently.
pub fn project_tokens(tokens: &Matrix, p: &ProjectorParams) -> Result<Matrix> {
    let z1 = tokens.matmul(&p.w1)?.add_row_broadcast(&p.b1)?;
    let a1 = match p.variant {
        ProjectorVariant::Bottleneck => z1.map(sigmoid),
        ProjectorVariant::Vn => z1.map(crate::numerics::relu),
    };
    a1.matmul(&p.w2)?.add_row_broadcast(&p.b2)
}

pub fn project_tokens_backward(
    tokens: &Matrix,
    p: &ProjectorParams,
    d_out: &Matrix,
) -> Result<(Matrix, ProjectorParams)> {
    let z1 = tokens.matmul(&p.w1)?.add_row_broadcast(&p.b1)?;
    let a1 = match p.variant {
        ProjectorVariant::Bottleneck => z1.map(sigmoid),
        ProjectorVariant::Vn => z1.map(crate::numerics::relu),
    };
    let mut grads = p.zeros_like();
    grads.w2 = a1.transpose().matmul(d_out)?;
    grads.b2 = d_out.col_sums();
    let da1 = d_out.matmul(&p.w2.transpose())?;
    let dz1 = match p.variant {
        ProjectorVariant::Bottleneck => {
            let mut m = da1;
            for (v, a) in m.data_mut().iter_mut().zip(a1.data()) {
                *v *= a * (1.0 - a);
            }
            m
        }
        ProjectorVariant::Vn => {
            let mut m = da1;
            for (v, z) in m.data_mut().iter_mut().zip(z1.data()) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
            m
        }
    };
    grads.w1 = tokens.transpose().matmul(&dz1)?;
    grads.b1 = dz1.col_sums();
    let d_tokens = dz1.matmul(&p.w1.transpose())?;
    Ok((d_tokens, grads))
}
