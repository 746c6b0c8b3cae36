//! The trainable pipeline: encoder -> pooling -> projector -> surrogate
//! readout, with one hand-written backward pass through the whole chain.
//!
//! Parameters are addressed as named flat blocks (`encoder.dense0.w`,
//! `pooling.bank.w_q`, ...) so the optimizer, the gradient accumulator,
//! and the finite-difference checker all walk the same traversal. The
//! readout's base matrix `W0` is intentionally *not* a block: nothing in the
//! training loop can touch it, which is what the frozen-readout contract
//! demands. Only the low-rank adapter (present in the adapted regime) trains
//! on the readout side.

use serde::{Deserialize, Serialize};

use crate::encoders::{self, EncoderParams};
use crate::graph::AttributedGraph;
use crate::numerics::{row_softmax, Matrix, FD_REL_TOL, FD_STEP};
use crate::pooling::{
    all_tokens, all_tokens_backward, diff_pool, diff_pool_backward, mean_pool, mean_pool_backward,
    mincut_pool, mincut_pool_backward, project_tokens, project_tokens_backward, rand_k,
    rand_k_backward, sag_pool, sag_pool_backward, topk_pool, topk_pool_backward, vn_pool,
    vn_pool_backward, PoolGrad, PoolResult, ProjectorParams, VirtualNodeBank,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Readout fixed; encoder, pooling, and projector train.
    Frozen,
    /// Additionally trains a low-rank adapter on the readout.
    Adapted,
}

/// Low-rank readout delta `(scale / rank) * B A`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adapter {
    /// `d_llm x r`.
    pub b: Matrix,
    /// `r x num_classes`.
    pub a: Matrix,
    /// The scaling numerator; the applied factor is `scale / rank`.
    pub scale: f64,
}

impl Adapter {
    /// Standard init: `B = 0` so the adapted readout starts exactly at the
    /// frozen one, `A` uniform.
    pub fn init(d_llm: usize, classes: usize, rank: usize, scale: f64, rng: &mut crate::numerics::DeterministicRng) -> Self {
        let limit = 1.0 / (rank as f64).sqrt();
        Self {
            b: Matrix::zeros(d_llm, rank),
            a: rng.matrix(rank, classes, -limit, limit),
            scale,
        }
    }

    /// Both factors random; used by gradient checking so the `A` block gets
    /// a nonzero gradient.
    pub fn init_random(d_llm: usize, classes: usize, rank: usize, scale: f64, rng: &mut crate::numerics::DeterministicRng) -> Self {
        let limit = 1.0 / (rank as f64).sqrt();
        Self {
            b: rng.matrix(d_llm, rank, -limit, limit),
            a: rng.matrix(rank, classes, -limit, limit),
            scale,
        }
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    pub fn factor(&self) -> f64 {
        self.scale / self.rank() as f64
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            b: Matrix::zeros(self.b.rows(), self.b.cols()),
            a: Matrix::zeros(self.a.rows(), self.a.cols()),
            scale: self.scale,
        }
    }
}

/// Linear readout with a frozen base matrix and an optional adapter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReadoutParams {
    w0: Matrix,
    pub adapter: Option<Adapter>,
}

impl ReadoutParams {
    pub fn new(w0: Matrix, adapter: Option<Adapter>) -> Self {
        Self { w0, adapter }
    }

    pub fn init(d_llm: usize, classes: usize, rng: &mut crate::numerics::DeterministicRng) -> Self {
        let limit = 1.0 / (d_llm as f64).sqrt();
        Self {
            w0: rng.matrix(d_llm, classes, -limit, limit),
            adapter: None,
        }
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    /// Bit-exact FNV-1a over `W0`; training must leave this unchanged.
    pub fn w0_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.w0.data() {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// `W0 + (scale / rank) * B A` when an adapter is present.
    pub fn effective_weights(&self) -> Result<Matrix> {
        match &self.adapter {
            None => Ok(self.w0.clone()),
            Some(ad) => self
                .w0
                .add(&ad.b.matmul(&ad.a)?.scale(ad.factor())),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.w0.cols()
    }

    fn zeros_like(&self) -> Self {
        Self {
            w0: Matrix::zeros(self.w0.rows(), self.w0.cols()),
            adapter: self.adapter.as_ref().map(Adapter::zeros_like),
        }
    }
}

/// Class logits from mean-over-tokens times the (possibly adapted) readout.
pub fn surrogate_readout(tokens: &Matrix, p: &ReadoutParams) -> Result<Vec<f64>> {
    if tokens.cols() != p.w0.rows() {
        return Err(Error::Dimension(format!(
            "token width {} for readout with {} inputs",
            tokens.cols(),
            p.w0.rows()
        )));
    }
    let mean = token_mean(tokens);
    Ok(mean.matmul(&p.effective_weights()?)?.row(0).to_vec())
}

fn token_mean(tokens: &Matrix) -> Matrix {
    let mut mean = Matrix::zeros(1, tokens.cols());
    let k = tokens.rows() as f64;
    for (m, s) in mean.row_mut(0).iter_mut().zip(tokens.col_sums()) {
        *m = s / k;
    }
    mean
}

/// Backward of [`surrogate_readout`]: gradient for the tokens and, when an
/// adapter is present, for its factors. `W0` receives no gradient by
/// construction.
pub fn surrogate_readout_backward(
    tokens: &Matrix,
    p: &ReadoutParams,
    d_logits: &[f64],
) -> Result<(Matrix, Option<Adapter>)> {
    let mean = token_mean(tokens);
    let d_logits_m = Matrix::row_vector(d_logits)?;
    let d_mean = d_logits_m.matmul(&p.effective_weights()?.transpose())?;
    let k = tokens.rows() as f64;
    let mut d_tokens = Matrix::zeros(tokens.rows(), tokens.cols());
    for r in 0..tokens.rows() {
        for (o, g) in d_tokens.row_mut(r).iter_mut().zip(d_mean.row(0)) {
            *o = g / k;
        }
    }
    let adapter_grads = match &p.adapter {
        None => None,
        Some(ad) => {
            let f = ad.factor();
            // logits_adapter = f * (mean B) A.
            let u = mean.matmul(&ad.b)?;
            let d_a = u.transpose().matmul(&d_logits_m)?.scale(f);
            let d_u = d_logits_m.matmul(&ad.a.transpose())?.scale(f);
            let d_b = mean.transpose().matmul(&d_u)?;
            Some(Adapter {
                b: d_b,
                a: d_a,
                scale: ad.scale,
            })
        }
    };
    Ok((d_tokens, adapter_grads))
}

/// A pooling operator together with its learnable state.
#[derive(Clone, Debug)]
pub enum PoolingOp {
    Mean,
    All,
    RandK { k: usize, seed: u64 },
    TopK { p: Vec<f64>, rho: f64 },
    Sag { scorer: EncoderParams, rho: f64 },
    Diff { embed: EncoderParams, assign: EncoderParams, clusters: usize },
    MinCut { assign: EncoderParams, clusters: usize },
    Vn { bank: VirtualNodeBank },
}

impl PoolingOp {
    pub fn name(&self) -> &'static str {
        match self {
            PoolingOp::Mean => "mean",
            PoolingOp::All => "all",
            PoolingOp::RandK { .. } => "randk",
            PoolingOp::TopK { .. } => "topk",
            PoolingOp::Sag { .. } => "sag",
            PoolingOp::Diff { .. } => "diff",
            PoolingOp::MinCut { .. } => "mincut",
            PoolingOp::Vn { .. } => "vn",
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            PoolingOp::Mean => PoolingOp::Mean,
            PoolingOp::All => PoolingOp::All,
            PoolingOp::RandK { k, seed } => PoolingOp::RandK { k: *k, seed: *seed },
            PoolingOp::TopK { p, rho } => PoolingOp::TopK {
                p: vec![0.0; p.len()],
                rho: *rho,
            },
            PoolingOp::Sag { scorer, rho } => PoolingOp::Sag {
                scorer: scorer.zeros_like(),
                rho: *rho,
            },
            PoolingOp::Diff { embed, assign, clusters } => PoolingOp::Diff {
                embed: embed.zeros_like(),
                assign: assign.zeros_like(),
                clusters: *clusters,
            },
            PoolingOp::MinCut { assign, clusters } => PoolingOp::MinCut {
                assign: assign.zeros_like(),
                clusters: *clusters,
            },
            PoolingOp::Vn { bank } => PoolingOp::Vn {
                bank: bank.zeros_like(),
            },
        }
    }
}

/// Runs a pooling operator on encoder output `h` for graph `g`.
pub fn pool_forward(op: &PoolingOp, h: &Matrix, g: &AttributedGraph) -> Result<PoolResult> {
    match op {
        PoolingOp::Mean => mean_pool(h),
        PoolingOp::All => all_tokens(h),
        PoolingOp::RandK { k, seed } => rand_k(h, *k, *seed),
        PoolingOp::TopK { p, rho } => topk_pool(h, p, *rho),
        PoolingOp::Sag { scorer, rho } => {
            sag_pool(h, &crate::graph::normalized_adjacency(g), scorer, *rho)
        }
        PoolingOp::Diff { embed, assign, clusters } => {
            diff_pool(h, &g.adjacency(), embed, assign, *clusters)
        }
        PoolingOp::MinCut { assign, clusters } => {
            mincut_pool(h, &g.adjacency(), assign, *clusters)
        }
        PoolingOp::Vn { bank } => vn_pool(h, bank),
    }
}

/// Backward of [`pool_forward`]; returns `(dH, operator gradients)`.
pub fn pool_backward(
    op: &PoolingOp,
    h: &Matrix,
    g: &AttributedGraph,
    grad: &PoolGrad,
) -> Result<(Matrix, PoolingOp)> {
    match op {
        PoolingOp::Mean => Ok((mean_pool_backward(h.rows(), &grad.d_tokens), PoolingOp::Mean)),
        PoolingOp::All => Ok((all_tokens_backward(&grad.d_tokens), PoolingOp::All)),
        PoolingOp::RandK { k, seed } => {
            let selection = rand_k(h, *k, *seed)?
                .selection
                .expect("rand_k records its selection");
            Ok((
                rand_k_backward(h.rows(), &selection, &grad.d_tokens),
                PoolingOp::RandK { k: *k, seed: *seed },
            ))
        }
        PoolingOp::TopK { p, rho } => {
            let (dh, dp) = topk_pool_backward(h, p, *rho, &grad.d_tokens)?;
            Ok((dh, PoolingOp::TopK { p: dp, rho: *rho }))
        }
        PoolingOp::Sag { scorer, rho } => {
            let a_hat = crate::graph::normalized_adjacency(g);
            let (dh, scorer_grads) = sag_pool_backward(h, &a_hat, scorer, *rho, &grad.d_tokens)?;
            Ok((
                dh,
                PoolingOp::Sag {
                    scorer: scorer_grads,
                    rho: *rho,
                },
            ))
        }
        PoolingOp::Diff { embed, assign, clusters } => {
            let (dh, embed_grads, assign_grads) =
                diff_pool_backward(h, &g.adjacency(), embed, assign, *clusters, grad)?;
            Ok((
                dh,
                PoolingOp::Diff {
                    embed: embed_grads,
                    assign: assign_grads,
                    clusters: *clusters,
                },
            ))
        }
        PoolingOp::MinCut { assign, clusters } => {
            let (dh, assign_grads) =
                mincut_pool_backward(h, &g.adjacency(), assign, *clusters, grad)?;
            Ok((
                dh,
                PoolingOp::MinCut {
                    assign: assign_grads,
                    clusters: *clusters,
                },
            ))
        }
        PoolingOp::Vn { bank } => {
            let (dh, bank_grads) = vn_pool_backward(h, bank, &grad.d_tokens)?;
            Ok((dh, PoolingOp::Vn { bank: bank_grads }))
        }
    }
}

/// The full trainable chain. Doubles as its own gradient container: a
/// gradient is a `Pipeline` of the same shape holding partial derivatives
/// in every block.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub encoder: EncoderParams,
    pub pooling: PoolingOp,
    pub projector: ProjectorParams,
    pub readout: ReadoutParams,
    pub regime: Regime,
    /// Weight on the sum of auxiliary pooling losses.
    pub lambda: f64,
}

impl Pipeline {
    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            pooling: self.pooling.zeros_like(),
            projector: self.projector.zeros_like(),
            readout: self.readout.zeros_like(),
            regime: self.regime,
            lambda: self.lambda,
        }
    }

    /// Visits every trainable block in a fixed order. The adapter blocks are
    /// visited only in the adapted regime; `W0` is never visited.
    pub fn for_each_block(&self, f: &mut dyn FnMut(&str, &[f64])) {
        encoder_blocks("encoder", &self.encoder, f);
        match &self.pooling {
            PoolingOp::Mean | PoolingOp::All | PoolingOp::RandK { .. } => {}
            PoolingOp::TopK { p, .. } => f("pooling.p", p),
            PoolingOp::Sag { scorer, .. } => encoder_blocks("pooling.scorer", scorer, f),
            PoolingOp::Diff { embed, assign, .. } => {
                encoder_blocks("pooling.embed", embed, f);
                encoder_blocks("pooling.assign", assign, f);
            }
            PoolingOp::MinCut { assign, .. } => encoder_blocks("pooling.assign", assign, f),
            PoolingOp::Vn { bank } => {
                f("pooling.bank.h_vn", bank.h_vn.data());
                f("pooling.bank.w_q", bank.w_q.data());
                f("pooling.bank.w_k", bank.w_k.data());
                f("pooling.bank.w_v", bank.w_v.data());
            }
        }
        f("projector.w1", self.projector.w1.data());
        f("projector.b1", &self.projector.b1);
        f("projector.w2", self.projector.w2.data());
        f("projector.b2", &self.projector.b2);
        if self.regime == Regime::Adapted {
            if let Some(ad) = &self.readout.adapter {
                f("readout.adapter.b", ad.b.data());
                f("readout.adapter.a", ad.a.data());
            }
        }
    }

    pub fn for_each_block_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        encoder_blocks_mut("encoder", &mut self.encoder, f);
        match &mut self.pooling {
            PoolingOp::Mean | PoolingOp::All | PoolingOp::RandK { .. } => {}
            PoolingOp::TopK { p, .. } => f("pooling.p", p),
            PoolingOp::Sag { scorer, .. } => encoder_blocks_mut("pooling.scorer", scorer, f),
            PoolingOp::Diff { embed, assign, .. } => {
                encoder_blocks_mut("pooling.embed", embed, f);
                encoder_blocks_mut("pooling.assign", assign, f);
            }
            PoolingOp::MinCut { assign, .. } => encoder_blocks_mut("pooling.assign", assign, f),
            PoolingOp::Vn { bank } => {
                f("pooling.bank.h_vn", bank.h_vn.data_mut());
                f("pooling.bank.w_q", bank.w_q.data_mut());
                f("pooling.bank.w_k", bank.w_k.data_mut());
                f("pooling.bank.w_v", bank.w_v.data_mut());
            }
        }
        f("projector.w1", self.projector.w1.data_mut());
        f("projector.b1", &mut self.projector.b1);
        f("projector.w2", self.projector.w2.data_mut());
        f("projector.b2", &mut self.projector.b2);
        if self.regime == Regime::Adapted {
            if let Some(ad) = &mut self.readout.adapter {
                f("readout.adapter.b", ad.b.data_mut());
                f("readout.adapter.a", ad.a.data_mut());
            }
        }
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.for_each_block(&mut |name, _| names.push(name.to_string()));
        names
    }
}

fn encoder_blocks(prefix: &str, p: &EncoderParams, f: &mut dyn FnMut(&str, &[f64])) {
    for (i, l) in p.dense.iter().enumerate() {
        f(&format!("{prefix}.dense{i}.w"), l.w.data());
        f(&format!("{prefix}.dense{i}.b"), &l.b);
    }
    for (i, l) in p.attn.iter().enumerate() {
        f(&format!("{prefix}.attn{i}.w_q"), l.w_q.data());
        f(&format!("{prefix}.attn{i}.w_k"), l.w_k.data());
        f(&format!("{prefix}.attn{i}.w_v"), l.w_v.data());
        if let Some(w_e) = &l.w_e {
            f(&format!("{prefix}.attn{i}.w_e"), w_e.data());
        }
    }
}

fn encoder_blocks_mut(prefix: &str, p: &mut EncoderParams, f: &mut dyn FnMut(&str, &mut [f64])) {
    for (i, l) in p.dense.iter_mut().enumerate() {
        f(&format!("{prefix}.dense{i}.w"), l.w.data_mut());
        f(&format!("{prefix}.dense{i}.b"), &mut l.b);
    }
    for (i, l) in p.attn.iter_mut().enumerate() {
        f(&format!("{prefix}.attn{i}.w_q"), l.w_q.data_mut());
        f(&format!("{prefix}.attn{i}.w_k"), l.w_k.data_mut());
        f(&format!("{prefix}.attn{i}.w_v"), l.w_v.data_mut());
        if let Some(w_e) = &mut l.w_e {
            f(&format!("{prefix}.attn{i}.w_e"), w_e.data_mut());
        }
    }
}

/// `into += scale * other`, blockwise. Both pipelines must share a shape.
pub fn add_scaled(into: &mut Pipeline, other: &Pipeline, scale: f64) {
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    other.for_each_block(&mut |_, d| blocks.push(d.to_vec()));
    let mut idx = 0;
    into.for_each_block_mut(&mut |_, d| {
        for (p, g) in d.iter_mut().zip(&blocks[idx]) {
            *p += scale * g;
        }
        idx += 1;
    });
}

/// One gradient-descent step: `params -= lr * grads`.
pub fn apply_step(params: &mut Pipeline, grads: &Pipeline, lr: f64) {
    add_scaled(params, grads, -lr);
}

/// Forward metrics of one example.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub pool: PoolResult,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub cross_entropy: f64,
    pub loss: f64,
}

impl ForwardTrace {
    pub fn predicted(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.logits.iter().enumerate() {
            if *v > self.logits[best] {
                best = i;
            }
        }
        best
    }
}

/// Full forward pass: loss is cross-entropy plus `lambda` times the sum of
/// the operator's auxiliary losses.
pub fn forward_example(pipe: &Pipeline, g: &AttributedGraph, label: usize) -> Result<ForwardTrace> {
    let h = encoders::forward(g, &pipe.encoder)?;
    let pool = pool_forward(&pipe.pooling, &h, g)?;
    if !pool.aux.is_finite() {
        return Err(Error::NonFinite(format!(
            "aux losses of operator {}",
            pipe.pooling.name()
        )));
    }
    let projected = project_tokens(&pool.tokens, &pipe.projector)?;
    let logits = surrogate_readout(&projected, &pipe.readout)?;
    if label >= logits.len() {
        return Err(Error::Invalid(format!(
            "label {label} for {} classes",
            logits.len()
        )));
    }
    let probs = row_softmax(&Matrix::row_vector(&logits)?)?.row(0).to_vec();
    let cross_entropy = -probs[label].ln();
    let loss = cross_entropy + pipe.lambda * pool.aux.total();
    Ok(ForwardTrace {
        pool,
        logits,
        probs,
        cross_entropy,
        loss,
    })
}

/// Forward plus backward; the gradient comes back as a pipeline-shaped
/// container covering every trainable block.
pub fn forward_backward(
    pipe: &Pipeline,
    g: &AttributedGraph,
    label: usize,
) -> Result<(ForwardTrace, Pipeline)> {
    let h = encoders::forward(g, &pipe.encoder)?;
    let pool = pool_forward(&pipe.pooling, &h, g)?;
    if !pool.aux.is_finite() {
        return Err(Error::NonFinite(format!(
            "aux losses of operator {}",
            pipe.pooling.name()
        )));
    }
    let projected = project_tokens(&pool.tokens, &pipe.projector)?;
    let logits = surrogate_readout(&projected, &pipe.readout)?;
    if label >= logits.len() {
        return Err(Error::Invalid(format!(
            "label {label} for {} classes",
            logits.len()
        )));
    }
    let probs = row_softmax(&Matrix::row_vector(&logits)?)?.row(0).to_vec();
    let cross_entropy = -probs[label].ln();
    let loss = cross_entropy + pipe.lambda * pool.aux.total();

    // d(ce)/d(logits) = softmax - one_hot(label).
    let mut d_logits = probs.clone();
    d_logits[label] -= 1.0;
    let (d_projected, adapter_grads) =
        surrogate_readout_backward(&projected, &pipe.readout, &d_logits)?;
    let (d_tokens, projector_grads) =
        project_tokens_backward(&pool.tokens, &pipe.projector, &d_projected)?;
    let pool_grad = PoolGrad::with_aux_weight(d_tokens, pipe.lambda);
    let (dh, pooling_grads) = pool_backward(&pipe.pooling, &h, g, &pool_grad)?;
    let (_, encoder_grads) = encoders::backward(g, &pipe.encoder, &dh)?;

    let grads = Pipeline {
        encoder: encoder_grads,
        pooling: pooling_grads,
        projector: projector_grads,
        readout: ReadoutParams {
            w0: Matrix::zeros(pipe.readout.w0.rows(), pipe.readout.w0.cols()),
            adapter: adapter_grads,
        },
        regime: pipe.regime,
        lambda: pipe.lambda,
    };
    let trace = ForwardTrace {
        pool,
        logits,
        probs,
        cross_entropy,
        loss,
    };
    Ok((trace, grads))
}

/// Blocks whose gradient norm sits below this floor are compared with the
/// floor as denominator, i.e. absolutely at scale `floor * tolerance`.
/// Central differences on the full pipeline loss carry round-off noise of
/// about `|loss| * eps / step ~ 1e-11` per entry, so ratios against
/// smaller true gradients would measure nothing but that noise.
pub const GRAD_NOISE_FLOOR: f64 = 1e-4;

fn block_error(fd: &[f64], analytic: &[f64]) -> f64 {
    let diff = fd
        .iter()
        .zip(analytic)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let nf = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    let na = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / nf.max(na).max(GRAD_NOISE_FLOOR)
}

/// Per-block comparison of the analytic gradient against central
/// differences.
#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    /// `(block name, noise-floored relative error)`, traversal order.
    pub blocks: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub worst_block: String,
    pub pass: bool,
}

/// Checks every trainable block of `pipe` on one sample. The sample must
/// stay small (at most 8 nodes) to keep the finite-difference sweep exact
/// and fast.
pub fn gradcheck_pipeline(
    pipe: &Pipeline,
    g: &AttributedGraph,
    label: usize,
) -> Result<GradcheckReport> {
    gradcheck_pipeline_corrupted(pipe, g, label, None)
}

/// Negative-control variant: adds a constant to the named analytic block so
/// tests can confirm the checker localizes a broken gradient.
pub fn gradcheck_pipeline_corrupted(
    pipe: &Pipeline,
    g: &AttributedGraph,
    label: usize,
    corrupt_block: Option<&str>,
) -> Result<GradcheckReport> {
    if g.node_count() > 8 {
        return Err(Error::Invalid(format!(
            "gradcheck sample has {} nodes; keep it at 8 or fewer",
            g.node_count()
        )));
    }
    let (_, grads) = forward_backward(pipe, g, label)?;
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    grads.for_each_block(&mut |name, data| analytic.push((name.to_string(), data.to_vec())));
    if let Some(target) = corrupt_block {
        match analytic.iter_mut().find(|(name, _)| name == target) {
            Some((_, data)) => data.iter_mut().for_each(|v| *v += 0.5),
            None => {
                return Err(Error::Invalid(format!(
                    "no parameter block named {target}"
                )))
            }
        }
    }

    let mut probe = pipe.clone();
    let mut blocks = Vec::with_capacity(analytic.len());
    let mut max_rel_err = 0.0_f64;
    let mut worst_block = String::new();
    for (name, analytic_block) in &analytic {
        let mut fd = vec![0.0; analytic_block.len()];
        #[allow(clippy::needless_range_loop)] // idx also addresses the probe entry
        for idx in 0..analytic_block.len() {
            let orig = read_entry(&probe, name, idx);
            write_entry(&mut probe, name, idx, orig + FD_STEP);
            let plus = forward_example(&probe, g, label)?.loss;
            write_entry(&mut probe, name, idx, orig - FD_STEP);
            let minus = forward_example(&probe, g, label)?.loss;
            write_entry(&mut probe, name, idx, orig);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while probing {name}[{idx}]"
                )));
            }
            fd[idx] = (plus - minus) / (2.0 * FD_STEP);
        }
        let rel = block_error(&fd, analytic_block);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_block = name.clone();
        }
        blocks.push((name.clone(), rel));
    }
    Ok(GradcheckReport {
        blocks,
        max_rel_err,
        worst_block,
        pass: max_rel_err < FD_REL_TOL,
    })
}

fn read_entry(pipe: &Pipeline, block: &str, idx: usize) -> f64 {
    let mut value = 0.0;
    pipe.for_each_block(&mut |name, data| {
        if name == block {
            value = data[idx];
        }
    });
    value
}

fn write_entry(pipe: &mut Pipeline, block: &str, idx: usize, value: f64) {
    pipe.for_each_block_mut(&mut |name, data| {
        if name == block {
            data[idx] = value;
        }
    });
}
