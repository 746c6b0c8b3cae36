//! Desk-scale training harness: builds the encoder -> pooling -> projector
//! -> readout pipeline from a JSON-friendly config, trains it with
//! full-batch gradient descent across seeds, and reports per-seed accuracy
//! with mean and (population) standard deviation.
//!
//! Two regimes mirror the two ways of consuming pooled tokens: `frozen`
//! trains only the graph side against a fixed readout; `adapted`
//! additionally trains a low-rank delta on the readout. The base readout
//! matrix is never updated in either regime.

mod pipeline;

pub use pipeline::{
    add_scaled, apply_step, forward_backward, forward_example, gradcheck_pipeline,
    gradcheck_pipeline_corrupted, pool_backward, pool_forward, surrogate_readout,
    surrogate_readout_backward, Adapter, ForwardTrace, GradcheckReport, Pipeline, PoolingOp,
    ReadoutParams, Regime,
};

use serde::{Deserialize, Serialize};

use crate::encoders::{EncoderKind, EncoderParams};
use crate::graph::{AttributedGraph, DatasetExample, Edge};
use crate::numerics::DeterministicRng;
use crate::pooling::{ProjectorParams, ProjectorVariant, VirtualNodeBank};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// SGFormer graph weight.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_hidden() -> usize {
    16
}
fn default_layers() -> usize {
    2
}
fn default_alpha() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolOpKind {
    Mean,
    Randk,
    All,
    Topk,
    Sag,
    Diff,
    Mincut,
    Vn,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolingConfig {
    pub operator: PoolOpKind,
    /// Token budget for `randk`/`vn`.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    /// Retention ratio for the pruning operators.
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_projector")]
    pub projector: ProjectorVariant,
}

fn default_k() -> usize {
    8
}
fn default_clusters() -> usize {
    8
}
fn default_rho() -> f64 {
    1.0
}
fn default_projector() -> ProjectorVariant {
    ProjectorVariant::Bottleneck
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    #[serde(default = "default_rank")]
    pub rank: usize,
    /// Scaling numerator `a`; the applied factor is `a / rank`.
    #[serde(default = "default_adapter_alpha")]
    pub alpha: f64,
}

fn default_rank() -> usize {
    4
}
fn default_adapter_alpha() -> f64 {
    4.0
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            rank: default_rank(),
            alpha: default_adapter_alpha(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub pooling: PoolingConfig,
    #[serde(default = "default_d_llm")]
    pub d_llm: usize,
    pub regime: Regime,
    #[serde(default)]
    pub adapter: AdapterConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Weight on auxiliary pooling losses.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Stop a seed early once training accuracy reaches this value.
    #[serde(default)]
    pub stop_accuracy: Option<f64>,
}

fn default_d_llm() -> usize {
    32
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4]
}
fn default_epochs() -> usize {
    10
}
fn default_lr() -> f64 {
    0.05
}
fn default_lambda() -> f64 {
    1.0
}

/// Input dimensions a pipeline is built against.
#[derive(Clone, Copy, Debug)]
pub struct DataDims {
    pub d_in: usize,
    pub edge_dim: Option<usize>,
    pub num_classes: usize,
}

/// Scans a dataset for feature width, edge-feature width, and class count,
/// rejecting inconsistent examples.
pub fn data_dims(data: &[DatasetExample]) -> Result<DataDims> {
    let first = data
        .first()
        .ok_or_else(|| Error::Invalid("empty dataset".to_string()))?;
    let d_in = first.graph.feature_dim();
    let mut edge_dim = None;
    let mut num_classes = 0;
    for (i, ex) in data.iter().enumerate() {
        if ex.graph.feature_dim() != d_in {
            return Err(Error::Dimension(format!(
                "example {i} has feature width {} instead of {d_in}",
                ex.graph.feature_dim()
            )));
        }
        if let Some(e) = ex.graph.edges().first() {
            let w = e.feat.len();
            match edge_dim {
                None => edge_dim = Some(w),
                Some(prev) if prev != w => {
                    return Err(Error::Dimension(format!(
                        "example {i} has edge width {w} instead of {prev}"
                    )));
                }
                _ => {}
            }
        }
        num_classes = num_classes.max(ex.label + 1);
    }
    Ok(DataDims {
        d_in,
        edge_dim,
        num_classes: num_classes.max(2),
    })
}

fn encoder_dims(d_in: usize, cfg: &EncoderConfig) -> Vec<usize> {
    let mut dims = vec![d_in];
    dims.extend(std::iter::repeat_n(cfg.hidden, cfg.layers.max(1)));
    dims
}

fn build_encoder(cfg: &EncoderConfig, dims: &DataDims, rng: &mut DeterministicRng) -> Result<EncoderParams> {
    let chain = encoder_dims(dims.d_in, cfg);
    Ok(match cfg.kind {
        EncoderKind::Mlp => EncoderParams::mlp(&chain, rng),
        EncoderKind::Gcn => EncoderParams::gcn(&chain, rng),
        EncoderKind::Attn => EncoderParams::attn(&chain, dims.edge_dim, rng),
        EncoderKind::Sgformer => EncoderParams::sgformer(&chain, &chain, cfg.alpha, rng)?,
    })
}

/// Builds the pipeline with all weights drawn from `DeterministicRng(seed)`.
pub fn build_pipeline(cfg: &RunConfig, dims: &DataDims, seed: u64) -> Result<Pipeline> {
    build_pipeline_with(cfg, dims, seed, false)
}

/// Builds a pooling operator with its learnable state drawn from `rng`.
/// `run_seed` fixes the selection stream of `randk`.
pub fn build_pooling_op(
    cfg: &PoolingConfig,
    d: usize,
    run_seed: u64,
    rng: &mut DeterministicRng,
) -> PoolingOp {
    match cfg.operator {
        PoolOpKind::Mean => PoolingOp::Mean,
        PoolOpKind::All => PoolingOp::All,
        PoolOpKind::Randk => PoolingOp::RandK {
            k: cfg.k,
            seed: run_seed,
        },
        PoolOpKind::Topk => {
            let limit = 1.0 / (d as f64).sqrt();
            PoolingOp::TopK {
                p: (0..d).map(|_| rng.uniform(-limit, limit)).collect(),
                rho: cfg.rho,
            }
        }
        PoolOpKind::Sag => PoolingOp::Sag {
            scorer: EncoderParams::gcn(&[d, 1], rng),
            rho: cfg.rho,
        },
        PoolOpKind::Diff => PoolingOp::Diff {
            embed: EncoderParams::gcn(&[d, d], rng),
            assign: EncoderParams::gcn(&[d, cfg.clusters], rng),
            clusters: cfg.clusters,
        },
        PoolOpKind::Mincut => PoolingOp::MinCut {
            assign: EncoderParams::mlp(&[d, cfg.clusters], rng),
            clusters: cfg.clusters,
        },
        PoolOpKind::Vn => PoolingOp::Vn {
            bank: VirtualNodeBank::init(cfg.k, d, rng),
        },
    }
}

fn build_pipeline_with(
    cfg: &RunConfig,
    dims: &DataDims,
    seed: u64,
    random_adapter: bool,
) -> Result<Pipeline> {
    let mut rng = DeterministicRng::new(seed);
    let encoder = build_encoder(&cfg.encoder, dims, &mut rng)?;
    let d_h = encoder.output_dim();
    let pooling = build_pooling_op(&cfg.pooling, d_h, seed, &mut rng);
    let projector = match cfg.pooling.projector {
        ProjectorVariant::Bottleneck => ProjectorParams::bottleneck(d_h, cfg.d_llm, &mut rng),
        ProjectorVariant::Vn => ProjectorParams::vn(d_h, cfg.d_llm, &mut rng),
    };
    let mut readout = ReadoutParams::init(cfg.d_llm, dims.num_classes, &mut rng);
    if cfg.regime == Regime::Adapted {
        let adapter = if random_adapter {
            Adapter::init_random(cfg.d_llm, dims.num_classes, cfg.adapter.rank, cfg.adapter.alpha, &mut rng)
        } else {
            Adapter::init(cfg.d_llm, dims.num_classes, cfg.adapter.rank, cfg.adapter.alpha, &mut rng)
        };
        readout.adapter = Some(adapter);
    }
    Ok(Pipeline {
        encoder,
        pooling,
        projector,
        readout,
        regime: cfg.regime,
        lambda: cfg.lambda,
    })
}

/// Everything a single-seed run produces, including the trained pipeline
/// for inspection.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub pipeline: Pipeline,
    /// Mean loss per epoch, evaluated before that epoch's update, plus a
    /// final entry at the trained parameters.
    pub losses: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub final_accuracy: f64,
    pub initial_w0_checksum: u64,
}

impl SeedOutcome {
    pub fn w0_intact(&self) -> bool {
        self.pipeline.readout.w0_checksum() == self.initial_w0_checksum
    }
}

fn epoch_pass(
    pipe: &Pipeline,
    data: &[DatasetExample],
) -> Result<(f64, f64, Pipeline)> {
    let mut grads = pipe.zeros_like();
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let scale = 1.0 / data.len() as f64;
    for ex in data {
        let (trace, g) = forward_backward(pipe, &ex.graph, ex.label)?;
        total_loss += trace.loss * scale;
        if trace.predicted() == ex.label {
            correct += 1;
        }
        add_scaled(&mut grads, &g, scale);
    }
    Ok((total_loss, correct as f64 / data.len() as f64, grads))
}

fn eval_pass(pipe: &Pipeline, data: &[DatasetExample]) -> Result<(f64, f64)> {
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    for ex in data {
        let trace = forward_example(pipe, &ex.graph, ex.label)?;
        total_loss += trace.loss / data.len() as f64;
        if trace.predicted() == ex.label {
            correct += 1;
        }
    }
    Ok((total_loss, correct as f64 / data.len() as f64))
}

/// Trains one seed with full-batch gradient descent. Deterministic: equal
/// `(config, data, seed)` give bit-identical outcomes.
pub fn train_seed(cfg: &RunConfig, data: &[DatasetExample], seed: u64) -> Result<SeedOutcome> {
    let dims = data_dims(data)?;
    let mut pipe = build_pipeline(cfg, &dims, seed)?;
    let initial_w0_checksum = pipe.readout.w0_checksum();
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let mut accuracies = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, accuracy, grads) = epoch_pass(&pipe, data).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!(
                "operator {} at epoch {epoch}: {msg}",
                pipe.pooling.name()
            )),
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "operator {} produced loss {loss} at epoch {epoch}",
                pipe.pooling.name()
            )));
        }
        losses.push(loss);
        accuracies.push(accuracy);
        // Stop before updating so the parameters that reached the target
        // are the ones reported.
        if cfg.stop_accuracy.is_some_and(|target| accuracy >= target) {
            break;
        }
        apply_step(&mut pipe, &grads, cfg.lr);
    }
    let (final_loss, final_accuracy) = eval_pass(&pipe, data)?;
    losses.push(final_loss);
    accuracies.push(final_accuracy);
    Ok(SeedOutcome {
        seed,
        pipeline: pipe,
        losses,
        accuracies,
        final_accuracy,
        initial_w0_checksum,
    })
}

/// Multi-seed training summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub operator: String,
    pub regime: Regime,
    pub seeds: Vec<u64>,
    pub final_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Population standard deviation over seeds.
    pub std_accuracy: f64,
    pub loss_curves: Vec<Vec<f64>>,
    pub accuracy_curves: Vec<Vec<f64>>,
    pub w0_intact: bool,
}

impl RunReport {
    /// One row per seed plus the shared summary columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("operator,regime,seed,final_accuracy,mean,std\n");
        for (seed, acc) in self.seeds.iter().zip(&self.final_accuracies) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.operator,
                regime_name(self.regime),
                seed,
                acc,
                self.mean_accuracy,
                self.std_accuracy
            ));
        }
        out
    }
}

pub fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Frozen => "frozen",
        Regime::Adapted => "adapted",
    }
}

fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains every seed in the config (sequentially; seeds share no state, so
/// the result equals any concurrent schedule) and aggregates the report.
pub fn train(cfg: &RunConfig, data: &[DatasetExample]) -> Result<RunReport> {
    if cfg.seeds.is_empty() {
        return Err(Error::Invalid("no seeds configured".to_string()));
    }
    let mut outcomes = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        outcomes.push(train_seed(cfg, data, seed)?);
    }
    Ok(report_from_outcomes(cfg, &outcomes))
}

pub fn report_from_outcomes(cfg: &RunConfig, outcomes: &[SeedOutcome]) -> RunReport {
    let finals: Vec<f64> = outcomes.iter().map(|o| o.final_accuracy).collect();
    let (mean, std) = mean_and_population_std(&finals);
    RunReport {
        operator: operator_name(cfg.pooling.operator).to_string(),
        regime: cfg.regime,
        seeds: outcomes.iter().map(|o| o.seed).collect(),
        final_accuracies: finals,
        mean_accuracy: mean,
        std_accuracy: std,
        loss_curves: outcomes.iter().map(|o| o.losses.clone()).collect(),
        accuracy_curves: outcomes.iter().map(|o| o.accuracies.clone()).collect(),
        w0_intact: outcomes.iter().all(SeedOutcome::w0_intact),
    }
}

pub fn operator_name(op: PoolOpKind) -> &'static str {
    match op {
        PoolOpKind::Mean => "mean",
        PoolOpKind::Randk => "randk",
        PoolOpKind::All => "all",
        PoolOpKind::Topk => "topk",
        PoolOpKind::Sag => "sag",
        PoolOpKind::Diff => "diff",
        PoolOpKind::Mincut => "mincut",
        PoolOpKind::Vn => "vn",
    }
}

/// Comparison table across runs.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    /// `(operator, regime, mean, std)` sorted by operator then regime.
    pub rows: Vec<(String, String, f64, f64)>,
    /// Per-operator `var(adapted) / var(frozen)`; `None` when a side is
    /// missing or the frozen variance is zero.
    pub variance_ratios: Vec<(String, Option<f64>)>,
}

impl StabilityReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<10}{:<10}{:>12}{:>12}\n",
            "operator", "regime", "mean", "std"
        );
        for (op, regime, mean, std) in &self.rows {
            out.push_str(&format!("{op:<10}{regime:<10}{mean:>12.4}{std:>12.4}\n"));
        }
        if !self.variance_ratios.is_empty() {
            out.push_str("variance ratio adapted/frozen\n");
            for (op, ratio) in &self.variance_ratios {
                match ratio {
                    Some(r) => out.push_str(&format!("{op:<10}{r:>12.4}\n")),
                    None => out.push_str(&format!("{op:<10}{:>12}\n", "-")),
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("operator,regime,mean,std\n");
        for (op, regime, mean, std) in &self.rows {
            out.push_str(&format!("{op},{regime},{mean},{std}\n"));
        }
        out
    }
}

pub fn stability_report(reports: &[RunReport]) -> Result<StabilityReport> {
    if reports.is_empty() {
        return Err(Error::Invalid("no run reports given".to_string()));
    }
    let mut rows: Vec<(String, String, f64, f64)> = reports
        .iter()
        .map(|r| {
            (
                r.operator.clone(),
                regime_name(r.regime).to_string(),
                r.mean_accuracy,
                r.std_accuracy,
            )
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut operators: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
    operators.dedup();
    let mut variance_ratios = Vec::new();
    for op in operators {
        let find = |regime: Regime| {
            reports
                .iter()
                .find(|r| r.operator == op && r.regime == regime)
                .map(|r| r.std_accuracy * r.std_accuracy)
        };
        let ratio = match (find(Regime::Adapted), find(Regime::Frozen)) {
            (Some(a), Some(f)) if f > 0.0 => Some(a / f),
            _ => None,
        };
        variance_ratios.push((op, ratio));
    }
    Ok(StabilityReport {
        rows,
        variance_ratios,
    })
}

/// Gradient check of every trainable block on a small sample, with the
/// adapter factors randomized so both get nonzero gradients.
pub fn gradcheck(
    cfg: &RunConfig,
    sample: &AttributedGraph,
    label: usize,
    seed: u64,
) -> Result<GradcheckReport> {
    let dims = sample_dims(sample, label);
    let pipe = build_pipeline_with(cfg, &dims, seed, true)?;
    gradcheck_pipeline(&pipe, sample, label)
}

/// Negative-control gradcheck; see
/// [`gradcheck_pipeline_corrupted`].
pub fn gradcheck_corrupted(
    cfg: &RunConfig,
    sample: &AttributedGraph,
    label: usize,
    seed: u64,
    corrupt_block: &str,
) -> Result<GradcheckReport> {
    let dims = sample_dims(sample, label);
    let pipe = build_pipeline_with(cfg, &dims, seed, true)?;
    gradcheck_pipeline_corrupted(&pipe, sample, label, Some(corrupt_block))
}

fn sample_dims(sample: &AttributedGraph, label: usize) -> DataDims {
    DataDims {
        d_in: sample.feature_dim(),
        edge_dim: sample.edges().first().map(|e| e.feat.len()),
        num_classes: (label + 1).max(2),
    }
}

/// A small random graph (6 nodes) with one-dimensional edge features, plus
/// a label, for gradient checking.
pub fn gradcheck_sample(seed: u64) -> (AttributedGraph, usize) {
    let mut rng = DeterministicRng::new(seed.wrapping_mul(0x9e37_79b9).wrapping_add(17));
    let n = 6;
    let d = 4;
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.next_f64() < 0.5 {
                edges.push(Edge {
                    src: a,
                    dst: b,
                    rel: "r".to_string(),
                    feat: vec![rng.uniform(-1.0, 1.0)],
                });
            }
        }
    }
    // Guarantee at least one edge so edge-aware paths are exercised.
    if edges.is_empty() {
        edges.push(Edge {
            src: 0,
            dst: 1,
            rel: "r".to_string(),
            feat: vec![0.5],
        });
    }
    let g = AttributedGraph::new(rng.matrix(n, d, -1.0, 1.0), edges, None, true).unwrap();
    (g, 1)
}

/// Every operator x encoder combination at gradcheck-friendly sizes.
pub fn named_configs() -> Vec<(String, RunConfig)> {
    let operators = [
        PoolOpKind::Mean,
        PoolOpKind::Randk,
        PoolOpKind::All,
        PoolOpKind::Topk,
        PoolOpKind::Sag,
        PoolOpKind::Diff,
        PoolOpKind::Mincut,
        PoolOpKind::Vn,
    ];
    let encoders = [
        EncoderKind::Mlp,
        EncoderKind::Gcn,
        EncoderKind::Attn,
        EncoderKind::Sgformer,
    ];
    let mut out = Vec::new();
    for op in operators {
        for enc in encoders {
            let name = format!("{}+{:?}", operator_name(op), enc).to_lowercase();
            out.push((
                name,
                RunConfig {
                    encoder: EncoderConfig {
                        kind: enc,
                        hidden: 6,
                        layers: 2,
                        alpha: 0.5,
                    },
                    pooling: PoolingConfig {
                        operator: op,
                        k: 3,
                        clusters: 2,
                        rho: 0.6,
                        projector: if op == PoolOpKind::Vn {
                            ProjectorVariant::Vn
                        } else {
                            ProjectorVariant::Bottleneck
                        },
                    },
                    d_llm: 8,
                    regime: Regime::Adapted,
                    adapter: AdapterConfig {
                        rank: 2,
                        alpha: 2.0,
                    },
                    seeds: vec![1],
                    epochs: 1,
                    lr: 0.05,
                    lambda: 1.0,
                    stop_accuracy: None,
                },
            ));
        }
    }
    out
}
