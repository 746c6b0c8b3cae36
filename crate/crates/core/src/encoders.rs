//! Node-embedding backbones feeding the pooling operators.
//!
//! Four kinds share one parameter container:
//!
//! * `mlp` — per-node transform, no adjacency;
//! * `gcn` — `H' = relu(A_hat H W + b)` per layer, final layer linear;
//! * `attn` — single-head attention over each node's incident edges plus
//!   itself, with edge features as additive key modifiers;
//! * `sgformer` — `alpha * gcn(X) + (1 - alpha) * global_attention(X)`,
//!   where the global branch attends over all node pairs.
//!
//! Every forward has a matching backward returning the gradient with respect
//! to the input rows and a parameter-shaped gradient container; all of them
//! are checked against the central-difference oracle in tests.

use serde::{Deserialize, Serialize};

use crate::graph::{normalized_adjacency, AttributedGraph, Edge};
use crate::numerics::{row_softmax_backward, DeterministicRng, Matrix};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Mlp,
    Gcn,
    Attn,
    Sgformer,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttnLayer {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    /// Maps edge features into key space; `None` ignores edge features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_e: Option<Matrix>,
}

/// Parameters for one encoder. `dense` carries the MLP/GCN stack (and the
/// GCN branch of SGFormer), `attn` the attention stack (and the global
/// branch of SGFormer).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderParams {
    pub kind: EncoderKind,
    #[serde(rename = "layers", default, skip_serializing_if = "Vec::is_empty")]
    pub dense: Vec<DenseLayer>,
    #[serde(rename = "attn_layers", default, skip_serializing_if = "Vec::is_empty")]
    pub attn: Vec<AttnLayer>,
    /// SGFormer graph weight in `[0, 1]`; unused by the other kinds.
    #[serde(default)]
    pub alpha: f64,
}

fn init_weight(rows: usize, cols: usize, rng: &mut DeterministicRng) -> Matrix {
    let limit = 1.0 / (rows as f64).sqrt();
    rng.matrix(rows, cols, -limit, limit)
}

fn init_dense(dims: &[usize], rng: &mut DeterministicRng) -> Vec<DenseLayer> {
    dims.windows(2)
        .map(|w| DenseLayer {
            w: init_weight(w[0], w[1], rng),
            b: vec![0.0; w[1]],
        })
        .collect()
}

fn init_attn(dims: &[usize], edge_dim: Option<usize>, rng: &mut DeterministicRng) -> Vec<AttnLayer> {
    dims.windows(2)
        .map(|w| AttnLayer {
            w_q: init_weight(w[0], w[1], rng),
            w_k: init_weight(w[0], w[1], rng),
            w_v: init_weight(w[0], w[1], rng),
            w_e: edge_dim
                .filter(|d| *d > 0)
                .map(|d| init_weight(d, w[1], rng)),
        })
        .collect()
}

impl EncoderParams {
    /// Per-node MLP through `dims = [d_in, ..., d_out]`. Weights drawn
    /// uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn mlp(dims: &[usize], rng: &mut DeterministicRng) -> Self {
        Self {
            kind: EncoderKind::Mlp,
            dense: init_dense(dims, rng),
            attn: Vec::new(),
            alpha: 0.0,
        }
    }

    pub fn gcn(dims: &[usize], rng: &mut DeterministicRng) -> Self {
        Self {
            kind: EncoderKind::Gcn,
            dense: init_dense(dims, rng),
            attn: Vec::new(),
            alpha: 0.0,
        }
    }

    pub fn attn(dims: &[usize], edge_dim: Option<usize>, rng: &mut DeterministicRng) -> Self {
        Self {
            kind: EncoderKind::Attn,
            dense: Vec::new(),
            attn: init_attn(dims, edge_dim, rng),
            alpha: 0.0,
        }
    }

    /// Both branches must end at the same width. `alpha` in `[0, 1]` weighs
    /// the GCN branch.
    pub fn sgformer(
        gcn_dims: &[usize],
        attn_dims: &[usize],
        alpha: f64,
        rng: &mut DeterministicRng,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        if gcn_dims.last() != attn_dims.last() {
            return Err(Error::Dimension(
                "sgformer branches must share the output width".to_string(),
            ));
        }
        Ok(Self {
            kind: EncoderKind::Sgformer,
            dense: init_dense(gcn_dims, rng),
            attn: init_attn(attn_dims, None, rng),
            alpha,
        })
    }

    /// Same shapes, all weights and biases zero. Used as a gradient
    /// container.
    pub fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            dense: self
                .dense
                .iter()
                .map(|l| DenseLayer {
                    w: Matrix::zeros(l.w.rows(), l.w.cols()),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
            attn: self
                .attn
                .iter()
                .map(|l| AttnLayer {
                    w_q: Matrix::zeros(l.w_q.rows(), l.w_q.cols()),
                    w_k: Matrix::zeros(l.w_k.rows(), l.w_k.cols()),
                    w_v: Matrix::zeros(l.w_v.rows(), l.w_v.cols()),
                    w_e: l
                        .w_e
                        .as_ref()
                        .map(|m| Matrix::zeros(m.rows(), m.cols())),
                })
                .collect(),
            alpha: self.alpha,
        }
    }

    /// Output width of the encoder.
    pub fn output_dim(&self) -> usize {
        self.dense
            .last()
            .map(|l| l.w.cols())
            .or_else(|| self.attn.last().map(|l| l.w_v.cols()))
            .unwrap_or(0)
    }

    fn expect_kind(&self, kind: EncoderKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Invalid(format!(
                "encoder kind {:?} where {kind:?} expected",
                self.kind
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Dense chains (MLP and GCN share the layer rule up to the propagation step)
// ---------------------------------------------------------------------------

/// Runs `z_l = prop(h_l) w_l + b_l`, relu between layers, final layer
/// linear. Returns per-layer inputs and pre-activations.
fn chain_forward(
    x: &Matrix,
    layers: &[DenseLayer],
    prop: Option<&Matrix>,
) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    if layers.is_empty() {
        return Err(Error::Invalid("encoder has no layers".to_string()));
    }
    let mut inputs = Vec::with_capacity(layers.len());
    let mut zs = Vec::with_capacity(layers.len());
    let mut h = x.clone();
    for (l, layer) in layers.iter().enumerate() {
        let m = match prop {
            Some(a) => a.matmul(&h)?,
            None => h.clone(),
        };
        let z = m.matmul(&layer.w)?.add_row_broadcast(&layer.b)?;
        inputs.push(h);
        h = if l + 1 < layers.len() {
            z.map(crate::numerics::relu)
        } else {
            z.clone()
        };
        zs.push(z);
    }
    Ok((inputs, zs))
}

fn chain_backward(
    layers: &[DenseLayer],
    prop: Option<&Matrix>,
    inputs: &[Matrix],
    zs: &[Matrix],
    d_out: &Matrix,
) -> Result<(Matrix, Vec<DenseLayer>)> {
    let mut grads: Vec<DenseLayer> = layers
        .iter()
        .map(|l| DenseLayer {
            w: Matrix::zeros(l.w.rows(), l.w.cols()),
            b: vec![0.0; l.b.len()],
        })
        .collect();
    let mut d = d_out.clone();
    for l in (0..layers.len()).rev() {
        let dz = if l + 1 < layers.len() {
            // Through the relu between layers.
            let mut m = d.clone();
            for (v, z) in m.data_mut().iter_mut().zip(zs[l].data()) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
            m
        } else {
            d.clone()
        };
        let m = match prop {
            Some(a) => a.matmul(&inputs[l])?,
            None => inputs[l].clone(),
        };
        grads[l].w = m.transpose().matmul(&dz)?;
        grads[l].b = dz.col_sums();
        let dm = dz.matmul(&layers[l].w.transpose())?;
        d = match prop {
            Some(a) => a.transpose().matmul(&dm)?,
            None => dm,
        };
    }
    Ok((d, grads))
}

/// Per-node transform; row `i` of the output depends only on row `i` of `x`.
pub fn mlp_forward(x: &Matrix, p: &EncoderParams) -> Result<Matrix> {
    p.expect_kind(EncoderKind::Mlp)?;
    let (_, zs) = chain_forward(x, &p.dense, None)?;
    Ok(zs.last().unwrap().clone())
}

pub fn mlp_backward(x: &Matrix, p: &EncoderParams, d_out: &Matrix) -> Result<(Matrix, EncoderParams)> {
    p.expect_kind(EncoderKind::Mlp)?;
    let (inputs, zs) = chain_forward(x, &p.dense, None)?;
    let (dx, dense) = chain_backward(&p.dense, None, &inputs, &zs, d_out)?;
    let mut grads = p.zeros_like();
    grads.dense = dense;
    Ok((dx, grads))
}

/// `h_{l+1} = relu(a_hat h_l w_l + b_l)`, final layer linear.
pub fn gcn_forward(x: &Matrix, a_hat: &Matrix, p: &EncoderParams) -> Result<Matrix> {
    p.expect_kind(EncoderKind::Gcn)?;
    gcn_chain_forward(x, a_hat, &p.dense)
}

pub(crate) fn gcn_chain_forward(x: &Matrix, a_hat: &Matrix, layers: &[DenseLayer]) -> Result<Matrix> {
    let (_, zs) = chain_forward(x, layers, Some(a_hat))?;
    Ok(zs.last().unwrap().clone())
}

pub fn gcn_backward(
    x: &Matrix,
    a_hat: &Matrix,
    p: &EncoderParams,
    d_out: &Matrix,
) -> Result<(Matrix, EncoderParams)> {
    p.expect_kind(EncoderKind::Gcn)?;
    let (dx, dense) = gcn_chain_backward(x, a_hat, &p.dense, d_out)?;
    let mut grads = p.zeros_like();
    grads.dense = dense;
    Ok((dx, grads))
}

pub(crate) fn gcn_chain_backward(
    x: &Matrix,
    a_hat: &Matrix,
    layers: &[DenseLayer],
    d_out: &Matrix,
) -> Result<(Matrix, Vec<DenseLayer>)> {
    let (inputs, zs) = chain_forward(x, layers, Some(a_hat))?;
    chain_backward(layers, Some(a_hat), &inputs, &zs, d_out)
}

// ---------------------------------------------------------------------------
// Local attention over incident edges
// ---------------------------------------------------------------------------

/// Per-node entry list: self first (no edge feature), then incident edges in
/// storage order. A directed edge contributes to both endpoints' lists.
fn neighborhoods(n: usize, edges: &[Edge]) -> Vec<Vec<(usize, Option<usize>)>> {
    let mut lists: Vec<Vec<(usize, Option<usize>)>> = (0..n).map(|i| vec![(i, None)]).collect();
    for (ei, e) in edges.iter().enumerate() {
        lists[e.src].push((e.dst, Some(ei)));
        if e.src != e.dst {
            lists[e.dst].push((e.src, Some(ei)));
        }
    }
    lists
}

/// Edge-feature key modifiers, one row per edge: `feat_e * w_e`.
fn edge_modifiers(edges: &[Edge], layer: &AttnLayer) -> Result<Option<Matrix>> {
    let Some(w_e) = &layer.w_e else {
        return Ok(None);
    };
    let mut m = Matrix::zeros(edges.len(), w_e.cols());
    for (i, e) in edges.iter().enumerate() {
        if e.feat.len() != w_e.rows() {
            return Err(Error::Dimension(format!(
                "edge feature width {} for modifier with {} rows",
                e.feat.len(),
                w_e.rows()
            )));
        }
        for (j, out) in m.row_mut(i).iter_mut().enumerate() {
            *out = e.feat.iter().zip(0..).map(|(f, r)| f * w_e[(r, j)]).sum();
        }
    }
    Ok(Some(m))
}

struct LocalAttnCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    modifiers: Option<Matrix>,
    weights: Vec<Vec<f64>>,
}

/// Per-layer `(pre-activation output, (layer input, cache))` of a stacked
/// attention forward.
type LocalStack = (Vec<Matrix>, Vec<(Matrix, LocalAttnCache)>);
type GlobalStack = (Vec<Matrix>, Vec<(Matrix, Matrix)>);

fn local_attn_layer_forward(
    h: &Matrix,
    layer: &AttnLayer,
    lists: &[Vec<(usize, Option<usize>)>],
    edges: &[Edge],
) -> Result<(Matrix, LocalAttnCache)> {
    let q = h.matmul(&layer.w_q)?;
    let k = h.matmul(&layer.w_k)?;
    let v = h.matmul(&layer.w_v)?;
    let modifiers = edge_modifiers(edges, layer)?;
    let width = q.cols();
    if k.cols() != width {
        return Err(Error::Dimension("w_q and w_k widths differ".to_string()));
    }
    let scale = (width as f64).sqrt();
    let mut out = Matrix::zeros(h.rows(), v.cols());
    let mut weights = Vec::with_capacity(h.rows());
    for i in 0..h.rows() {
        let entries = &lists[i];
        let mut logits = Vec::with_capacity(entries.len());
        for &(j, ei) in entries {
            let mut logit = 0.0;
            for t in 0..width {
                let mut key = k[(j, t)];
                if let (Some(m), Some(ei)) = (&modifiers, ei) {
                    key += m[(ei, t)];
                }
                logit += q[(i, t)] * key;
            }
            logits.push(logit / scale);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut alphas: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = alphas.iter().sum();
        for a in alphas.iter_mut() {
            *a /= sum;
        }
        for (t, &(j, _)) in entries.iter().enumerate() {
            let a = alphas[t];
            for (o, vv) in out.row_mut(i).iter_mut().zip(v.row(j)) {
                *o += a * vv;
            }
        }
        weights.push(alphas);
    }
    Ok((
        out,
        LocalAttnCache {
            q,
            k,
            v,
            modifiers,
            weights,
        },
    ))
}

fn local_attn_layer_backward(
    h: &Matrix,
    layer: &AttnLayer,
    lists: &[Vec<(usize, Option<usize>)>],
    edges: &[Edge],
    cache: &LocalAttnCache,
    d_out: &Matrix,
) -> Result<(Matrix, AttnLayer)> {
    let width = cache.q.cols();
    let scale = (width as f64).sqrt();
    let mut dq = Matrix::zeros(cache.q.rows(), width);
    let mut dk = Matrix::zeros(cache.k.rows(), width);
    let mut dv = Matrix::zeros(cache.v.rows(), cache.v.cols());
    let mut dmod = cache
        .modifiers
        .as_ref()
        .map(|m| Matrix::zeros(m.rows(), m.cols()));
    for i in 0..h.rows() {
        let entries = &lists[i];
        let alphas = &cache.weights[i];
        // d(alpha_t) = <d_out_i, v_j>
        let dalpha: Vec<f64> = entries
            .iter()
            .map(|&(j, _)| {
                d_out
                    .row(i)
                    .iter()
                    .zip(cache.v.row(j))
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        for (t, &(j, _)) in entries.iter().enumerate() {
            let a = alphas[t];
            for (o, g) in dv.row_mut(j).iter_mut().zip(d_out.row(i)) {
                *o += a * g;
            }
        }
        let dot: f64 = alphas.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
        for (t, &(j, ei)) in entries.iter().enumerate() {
            let dlogit = alphas[t] * (dalpha[t] - dot) / scale;
            for c in 0..width {
                let mut key = cache.k[(j, c)];
                if let (Some(m), Some(ei)) = (&cache.modifiers, ei) {
                    key += m[(ei, c)];
                }
                dq[(i, c)] += dlogit * key;
                dk[(j, c)] += dlogit * cache.q[(i, c)];
                if let (Some(dm), Some(ei)) = (&mut dmod, ei) {
                    dm[(ei, c)] += dlogit * cache.q[(i, c)];
                }
            }
        }
    }
    let mut dh = dq.matmul(&layer.w_q.transpose())?;
    dh = dh.add(&dk.matmul(&layer.w_k.transpose())?)?;
    dh = dh.add(&dv.matmul(&layer.w_v.transpose())?)?;
    let d_we = match (&layer.w_e, &dmod) {
        (Some(w_e), Some(dm)) => {
            // dW_E accumulates feat_e^T (x) d(modifier_e) over edges.
            let mut g = Matrix::zeros(w_e.rows(), w_e.cols());
            for (ei, e) in edges.iter().enumerate() {
                for (r, f) in e.feat.iter().enumerate() {
                    for c in 0..w_e.cols() {
                        g[(r, c)] += f * dm[(ei, c)];
                    }
                }
            }
            Some(g)
        }
        _ => None,
    };
    let grads = AttnLayer {
        w_q: h.transpose().matmul(&dq)?,
        w_k: h.transpose().matmul(&dk)?,
        w_v: h.transpose().matmul(&dv)?,
        w_e: d_we,
    };
    Ok((dh, grads))
}

/// Attention convolution: each node attends over itself and its incident
/// edges; edge features shift keys additively. Layers stack with relu
/// between, final layer linear.
pub fn attn_conv_forward(x: &Matrix, edges: &[Edge], p: &EncoderParams) -> Result<Matrix> {
    p.expect_kind(EncoderKind::Attn)?;
    let lists = neighborhoods(x.rows(), edges);
    let (outs, _) = attn_stack_forward(x, &p.attn, &lists, edges)?;
    Ok(outs.last().unwrap().clone())
}

fn attn_stack_forward(
    x: &Matrix,
    layers: &[AttnLayer],
    lists: &[Vec<(usize, Option<usize>)>],
    edges: &[Edge],
) -> Result<LocalStack> {
    if layers.is_empty() {
        return Err(Error::Invalid("encoder has no layers".to_string()));
    }
    let mut h = x.clone();
    let mut outs = Vec::with_capacity(layers.len());
    let mut caches = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let (z, cache) = local_attn_layer_forward(&h, layer, lists, edges)?;
        caches.push((h, cache));
        h = if l + 1 < layers.len() {
            z.map(crate::numerics::relu)
        } else {
            z.clone()
        };
        outs.push(z);
    }
    Ok((outs, caches))
}

pub fn attn_conv_backward(
    x: &Matrix,
    edges: &[Edge],
    p: &EncoderParams,
    d_out: &Matrix,
) -> Result<(Matrix, EncoderParams)> {
    p.expect_kind(EncoderKind::Attn)?;
    let lists = neighborhoods(x.rows(), edges);
    let (outs, caches) = attn_stack_forward(x, &p.attn, &lists, edges)?;
    let mut grads = p.zeros_like();
    let mut d = d_out.clone();
    for l in (0..p.attn.len()).rev() {
        let dz = if l + 1 < p.attn.len() {
            let mut m = d.clone();
            for (v, z) in m.data_mut().iter_mut().zip(outs[l].data()) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
            m
        } else {
            d.clone()
        };
        let (input, cache) = &caches[l];
        let (dh, layer_grads) =
            local_attn_layer_backward(input, &p.attn[l], &lists, edges, cache, &dz)?;
        grads.attn[l] = layer_grads;
        d = dh;
    }
    Ok((d, grads))
}

// ---------------------------------------------------------------------------
// Global attention and the SGFormer combination
// ---------------------------------------------------------------------------

fn global_attn_layer_forward(h: &Matrix, layer: &AttnLayer) -> Result<(Matrix, Matrix)> {
    let q = h.matmul(&layer.w_q)?;
    let k = h.matmul(&layer.w_k)?;
    let v = h.matmul(&layer.w_v)?;
    let scale = (q.cols() as f64).sqrt();
    let s = crate::numerics::row_softmax(&q.matmul(&k.transpose())?.scale(1.0 / scale))?;
    Ok((s.matmul(&v)?, s))
}

fn global_attn_layer_backward(
    h: &Matrix,
    layer: &AttnLayer,
    s: &Matrix,
    d_out: &Matrix,
) -> Result<(Matrix, AttnLayer)> {
    let q = h.matmul(&layer.w_q)?;
    let k = h.matmul(&layer.w_k)?;
    let v = h.matmul(&layer.w_v)?;
    let scale = (q.cols() as f64).sqrt();
    let dv = s.transpose().matmul(d_out)?;
    let ds = d_out.matmul(&v.transpose())?;
    let dz = row_softmax_backward(s, &ds)?.scale(1.0 / scale);
    let dq = dz.matmul(&k)?;
    let dk = dz.transpose().matmul(&q)?;
    let mut dh = dq.matmul(&layer.w_q.transpose())?;
    dh = dh.add(&dk.matmul(&layer.w_k.transpose())?)?;
    dh = dh.add(&dv.matmul(&layer.w_v.transpose())?)?;
    let grads = AttnLayer {
        w_q: h.transpose().matmul(&dq)?,
        w_k: h.transpose().matmul(&dk)?,
        w_v: h.transpose().matmul(&dv)?,
        w_e: None,
    };
    Ok((dh, grads))
}

fn global_attn_forward(x: &Matrix, layers: &[AttnLayer]) -> Result<GlobalStack> {
    if layers.is_empty() {
        return Err(Error::Invalid("encoder has no layers".to_string()));
    }
    let mut h = x.clone();
    let mut outs = Vec::new();
    let mut caches = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let (z, s) = global_attn_layer_forward(&h, layer)?;
        caches.push((h, s));
        h = if l + 1 < layers.len() {
            z.map(crate::numerics::relu)
        } else {
            z.clone()
        };
        outs.push(z);
    }
    Ok((outs, caches))
}

fn global_attn_backward(
    layers: &[AttnLayer],
    outs: &[Matrix],
    caches: &[(Matrix, Matrix)],
    d_out: &Matrix,
) -> Result<(Matrix, Vec<AttnLayer>)> {
    let mut grads = Vec::with_capacity(layers.len());
    let mut d = d_out.clone();
    for l in (0..layers.len()).rev() {
        let dz = if l + 1 < layers.len() {
            let mut m = d.clone();
            for (v, z) in m.data_mut().iter_mut().zip(outs[l].data()) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
            m
        } else {
            d.clone()
        };
        let (input, s) = &caches[l];
        let (dh, layer_grads) = global_attn_layer_backward(input, &layers[l], s, &dz)?;
        grads.push(layer_grads);
        d = dh;
    }
    grads.reverse();
    Ok((d, grads))
}

/// `alpha * gcn(x, a_hat) + (1 - alpha) * global_attention(x)`.
pub fn sgformer_forward(x: &Matrix, a_hat: &Matrix, p: &EncoderParams) -> Result<Matrix> {
    p.expect_kind(EncoderKind::Sgformer)?;
    let gcn = gcn_chain_forward(x, a_hat, &p.dense)?;
    let (attn_outs, _) = global_attn_forward(x, &p.attn)?;
    let attn = attn_outs.last().unwrap();
    gcn.scale(p.alpha).add(&attn.scale(1.0 - p.alpha))
}

pub fn sgformer_backward(
    x: &Matrix,
    a_hat: &Matrix,
    p: &EncoderParams,
    d_out: &Matrix,
) -> Result<(Matrix, EncoderParams)> {
    p.expect_kind(EncoderKind::Sgformer)?;
    let (dx_gcn, dense) = gcn_chain_backward(x, a_hat, &p.dense, &d_out.scale(p.alpha))?;
    let (attn_outs, caches) = global_attn_forward(x, &p.attn)?;
    let (dx_attn, attn) =
        global_attn_backward(&p.attn, &attn_outs, &caches, &d_out.scale(1.0 - p.alpha))?;
    let mut grads = p.zeros_like();
    grads.dense = dense;
    grads.attn = attn;
    Ok((dx_gcn.add(&dx_attn)?, grads))
}

// ---------------------------------------------------------------------------
// Graph-level dispatch
// ---------------------------------------------------------------------------

/// Runs the encoder on a graph's node features, deriving whatever structural
/// input the kind needs.
pub fn forward(g: &AttributedGraph, p: &EncoderParams) -> Result<Matrix> {
    match p.kind {
        EncoderKind::Mlp => mlp_forward(g.node_features(), p),
        EncoderKind::Gcn => gcn_forward(g.node_features(), &normalized_adjacency(g), p),
        EncoderKind::Attn => attn_conv_forward(g.node_features(), g.edges(), p),
        EncoderKind::Sgformer => sgformer_forward(g.node_features(), &normalized_adjacency(g), p),
    }
}

/// Backward of [`forward`]; returns the gradient w.r.t. node features and a
/// parameter-shaped gradient container.
pub fn backward(
    g: &AttributedGraph,
    p: &EncoderParams,
    d_out: &Matrix,
) -> Result<(Matrix, EncoderParams)> {
    match p.kind {
        EncoderKind::Mlp => mlp_backward(g.node_features(), p, d_out),
        EncoderKind::Gcn => gcn_backward(g.node_features(), &normalized_adjacency(g), p, d_out),
        EncoderKind::Attn => attn_conv_backward(g.node_features(), g.edges(), p, d_out),
        EncoderKind::Sgformer => {
            sgformer_backward(g.node_features(), &normalized_adjacency(g), p, d_out)
        }
    }
}
