//! Dense clustering pooling: a row-stochastic assignment matrix
//! `S in R^{N x C}` aggregates nodes into supernodes.
//!
//! DiffPool learns `S` with a GCN and reports a link-prediction loss
//! `||A - S S^T||_F / N^2` plus a mean assignment entropy. MinCutPool
//! predicts `S` with a per-node MLP and reports the relaxed cut ratio
//! `-Tr(S^T A S) / Tr(S^T D S)` plus the orthogonality penalty
//! `||S^T S / ||S^T S||_F - I_C / sqrt(C)||_F`.
//!
//! Loss normalizations are fixed here (LP by `N^2`, entropy by `N`) so the
//! magnitudes stay comparable across graph sizes; the entropy log clamps its
//! argument at 1e-12, which keeps exact one-hot assignments at entropy zero.

use crate::encoders::{gcn_chain_backward, gcn_chain_forward, EncoderKind, EncoderParams};
use crate::graph::normalize_dense;
use crate::numerics::{row_softmax, row_softmax_backward, Matrix};
use crate::{Error, Result};

use super::{AuxLosses, PoolGrad, PoolResult};

const ENTROPY_EPS: f64 = 1e-12;

/// `||A - S S^T||_F / N^2`; zero when `S S^T` reconstructs the adjacency
/// exactly.
pub fn diffpool_link_pred_loss(a: &Matrix, s: &Matrix) -> Result<f64> {
    let n = s.rows();
    if a.rows() != n || a.cols() != n {
        return Err(Error::Dimension(format!(
            "adjacency {}x{} for {} assignment rows",
            a.rows(),
            a.cols(),
            n
        )));
    }
    let residual = a.sub(&s.matmul(&s.transpose())?)?;
    Ok(residual.frobenius_norm() / (n * n) as f64)
}

fn diffpool_link_pred_grad(a: &Matrix, s: &Matrix) -> Result<Matrix> {
    let n = s.rows();
    let residual = a.sub(&s.matmul(&s.transpose())?)?;
    let norm = residual.frobenius_norm();
    if norm == 0.0 {
        return Ok(Matrix::zeros(s.rows(), s.cols()));
    }
    // d||R||_F/dS with R = A - S S^T is -(R + R^T) S / ||R||_F.
    let sym = residual.add(&residual.transpose())?;
    Ok(sym.matmul(s)?.scale(-1.0 / (norm * (n * n) as f64)))
}

/// Mean assignment entropy `(1/N) sum_ic -S_ic ln(max(S_ic, 1e-12))`; zero
/// exactly for one-hot rows, `ln C` for uniform rows.
pub fn diffpool_entropy_loss(s: &Matrix) -> f64 {
    let n = s.rows() as f64;
    let total: f64 = s
        .data()
        .iter()
        .map(|&v| -v * v.max(ENTROPY_EPS).ln())
        .sum();
    total / n
}

fn diffpool_entropy_grad(s: &Matrix) -> Matrix {
    let n = s.rows() as f64;
    s.map(|v| {
        if v > ENTROPY_EPS {
            (-v.ln() - 1.0) / n
        } else {
            -ENTROPY_EPS.ln() / n
        }
    })
}

/// DiffPool: `S = softmax(gcn(H, assign))`, `Z = gcn(H, embed)`, tokens
/// `S^T Z`, coarse adjacency `S^T A S`, plus LP and entropy losses.
///
/// When the graph has fewer nodes than clusters, the cluster count drops to
/// `N` for that instance (`clusters_reduced` is set) by using the leading
/// `N` assignment logits.
pub fn diff_pool(
    h: &Matrix,
    a: &Matrix,
    embed: &EncoderParams,
    assign: &EncoderParams,
    clusters: usize,
) -> Result<PoolResult> {
    let (s, z, c_eff) = diff_pool_parts(h, a, embed, assign, clusters)?;
    let tokens = s.transpose().matmul(&z)?;
    let coarse = s.transpose().matmul(a)?.matmul(&s)?;
    let aux = AuxLosses {
        lp: Some(diffpool_link_pred_loss(a, &s)?),
        entropy: Some(diffpool_entropy_loss(&s)),
        cut: None,
        ortho: None,
    };
    Ok(PoolResult {
        tokens,
        aux,
        selection: None,
        assignment: Some(s),
        coarse_adjacency: Some(coarse),
        clusters_reduced: c_eff < clusters,
    })
}

fn diff_pool_parts(
    h: &Matrix,
    a: &Matrix,
    embed: &EncoderParams,
    assign: &EncoderParams,
    clusters: usize,
) -> Result<(Matrix, Matrix, usize)> {
    if clusters == 0 {
        return Err(Error::Invalid("cluster count must be >= 1".to_string()));
    }
    if assign.kind != EncoderKind::Gcn || embed.kind != EncoderKind::Gcn {
        return Err(Error::Invalid(
            "diff pool expects gcn assign and embed networks".to_string(),
        ));
    }
    if assign.output_dim() != clusters {
        return Err(Error::Dimension(format!(
            "assign network emits {} columns for {clusters} clusters",
            assign.output_dim()
        )));
    }
    if a.rows() != h.rows() || a.cols() != h.rows() {
        return Err(Error::Dimension(format!(
            "adjacency {}x{} for {} nodes",
            a.rows(),
            a.cols(),
            h.rows()
        )));
    }
    let a_hat = normalize_dense(a);
    let c_eff = clusters.min(h.rows());
    let logits = take_columns(&gcn_chain_forward(h, &a_hat, &assign.dense)?, c_eff);
    let s = row_softmax(&logits)?;
    let z = gcn_chain_forward(h, &a_hat, &embed.dense)?;
    Ok((s, z, c_eff))
}

/// Backward of [`diff_pool`] for the tokens plus both aux losses; returns
/// `(dH, embed gradients, assign gradients)`.
pub fn diff_pool_backward(
    h: &Matrix,
    a: &Matrix,
    embed: &EncoderParams,
    assign: &EncoderParams,
    clusters: usize,
    grad: &PoolGrad,
) -> Result<(Matrix, EncoderParams, EncoderParams)> {
    let (s, z, _) = diff_pool_parts(h, a, embed, assign, clusters)?;
    let a_hat = normalize_dense(a);

    // tokens = S^T Z.
    let dz = s.matmul(&grad.d_tokens)?;
    let mut ds = z.matmul(&grad.d_tokens.transpose())?;
    if grad.d_lp != 0.0 {
        ds = ds.add(&diffpool_link_pred_grad(a, &s)?.scale(grad.d_lp))?;
    }
    if grad.d_entropy != 0.0 {
        ds = ds.add(&diffpool_entropy_grad(&s).scale(grad.d_entropy))?;
    }
    let d_logits = row_softmax_backward(&s, &ds)?;
    let d_logits_full = pad_columns(&d_logits, assign.output_dim());

    let (dh_assign, assign_dense) = gcn_chain_backward(h, &a_hat, &assign.dense, &d_logits_full)?;
    let (dh_embed, embed_dense) = gcn_chain_backward(h, &a_hat, &embed.dense, &dz)?;
    let mut assign_grads = assign.zeros_like();
    assign_grads.dense = assign_dense;
    let mut embed_grads = embed.zeros_like();
    embed_grads.dense = embed_dense;
    Ok((dh_assign.add(&dh_embed)?, embed_grads, assign_grads))
}

/// Relaxed cut ratio `-Tr(S^T A S) / Tr(S^T D S)`, in `[-1, 0]`; defined as
/// 0 on graphs with zero total degree.
pub fn mincut_cut_loss(a: &Matrix, s: &Matrix) -> Result<f64> {
    let (num, den) = cut_terms(a, s)?;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(-num / den)
}

fn cut_terms(a: &Matrix, s: &Matrix) -> Result<(f64, f64)> {
    let n = s.rows();
    if a.rows() != n || a.cols() != n {
        return Err(Error::Dimension(format!(
            "adjacency {}x{} for {} assignment rows",
            a.rows(),
            a.cols(),
            n
        )));
    }
    let num = s.transpose().matmul(a)?.matmul(s)?.trace();
    let deg = a.row_sums();
    let den = (0..n)
        .map(|i| deg[i] * s.row(i).iter().map(|v| v * v).sum::<f64>())
        .sum();
    Ok((num, den))
}

fn mincut_cut_grad(a: &Matrix, s: &Matrix) -> Result<Matrix> {
    let (num, den) = cut_terms(a, s)?;
    if den == 0.0 {
        return Ok(Matrix::zeros(s.rows(), s.cols()));
    }
    // d(-num/den) = -(num' den - num den') / den^2 with
    // num' = (A + A^T) S and den' = 2 D S.
    let dnum = a.add(&a.transpose())?.matmul(s)?;
    let deg = a.row_sums();
    let mut dden = s.clone();
    for (i, d) in deg.iter().enumerate() {
        for v in dden.row_mut(i) {
            *v *= 2.0 * d;
        }
    }
    let mut out = Matrix::zeros(s.rows(), s.cols());
    for idx in 0..out.data().len() {
        out.data_mut()[idx] =
            -(dnum.data()[idx] * den - num * dden.data()[idx]) / (den * den);
    }
    Ok(out)
}

/// Orthogonality penalty `||S^T S / ||S^T S||_F - I_C / sqrt(C)||_F`, in
/// `[0, sqrt(2)]`.
pub fn mincut_ortho_loss(s: &Matrix) -> f64 {
    ortho_parts(s).0
}

fn ortho_parts(s: &Matrix) -> (f64, Matrix, f64) {
    let gram = s.transpose().matmul(s).expect("S^T S is always defined");
    let gnorm = gram.frobenius_norm();
    let c = gram.rows();
    let mut m = gram.scale(1.0 / gnorm.max(1e-300));
    let target = 1.0 / (c as f64).sqrt();
    for i in 0..c {
        m[(i, i)] -= target;
    }
    (m.frobenius_norm(), gram, gnorm)
}

fn mincut_ortho_grad(s: &Matrix) -> Result<Matrix> {
    let (ortho, gram, gnorm) = ortho_parts(s);
    if ortho == 0.0 || gnorm == 0.0 {
        return Ok(Matrix::zeros(s.rows(), s.cols()));
    }
    let c = gram.rows();
    let target = 1.0 / (c as f64).sqrt();
    let mut m = gram.scale(1.0 / gnorm);
    for i in 0..c {
        m[(i, i)] -= target;
    }
    // dL/dG = U/g - (U : G) G / g^3 where U = M / ||M||.
    let u = m.scale(1.0 / ortho);
    let ug: f64 = u
        .data()
        .iter()
        .zip(gram.data())
        .map(|(x, y)| x * y)
        .sum();
    let dgram = u
        .scale(1.0 / gnorm)
        .sub(&gram.scale(ug / (gnorm * gnorm * gnorm)))?;
    // G = S^T S, so dS = S (dG + dG^T).
    s.matmul(&dgram.add(&dgram.transpose())?)
}

/// MinCutPool: `S = softmax(mlp(H))`, tokens `S^T H`, cut and orthogonality
/// losses, and a coarse adjacency `S^T A S` with its diagonal zeroed and
/// then symmetrically degree-normalized.
pub fn mincut_pool(
    h: &Matrix,
    a: &Matrix,
    assign_mlp: &EncoderParams,
    clusters: usize,
) -> Result<PoolResult> {
    let (s, c_eff) = mincut_parts(h, a, assign_mlp, clusters)?;
    let tokens = s.transpose().matmul(h)?;
    let raw = s.transpose().matmul(a)?.matmul(&s)?;
    let mut coarse = raw;
    for i in 0..coarse.rows() {
        coarse[(i, i)] = 0.0;
    }
    let deg = coarse.row_sums();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    for i in 0..coarse.rows() {
        for j in 0..coarse.cols() {
            coarse[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let aux = AuxLosses {
        lp: None,
        entropy: None,
        cut: Some(mincut_cut_loss(a, &s)?),
        ortho: Some(mincut_ortho_loss(&s)),
    };
    Ok(PoolResult {
        tokens,
        aux,
        selection: None,
        assignment: Some(s),
        coarse_adjacency: Some(coarse),
        clusters_reduced: c_eff < clusters,
    })
}

fn mincut_parts(
    h: &Matrix,
    a: &Matrix,
    assign_mlp: &EncoderParams,
    clusters: usize,
) -> Result<(Matrix, usize)> {
    if clusters == 0 {
        return Err(Error::Invalid("cluster count must be >= 1".to_string()));
    }
    if assign_mlp.kind != EncoderKind::Mlp {
        return Err(Error::Invalid("mincut assignment must be an mlp".to_string()));
    }
    if assign_mlp.output_dim() != clusters {
        return Err(Error::Dimension(format!(
            "assign network emits {} columns for {clusters} clusters",
            assign_mlp.output_dim()
        )));
    }
    if a.rows() != h.rows() || a.cols() != h.rows() {
        return Err(Error::Dimension(format!(
            "adjacency {}x{} for {} nodes",
            a.rows(),
            a.cols(),
            h.rows()
        )));
    }
    let c_eff = clusters.min(h.rows());
    let logits = take_columns(&crate::encoders::mlp_forward(h, assign_mlp)?, c_eff);
    Ok((row_softmax(&logits)?, c_eff))
}

/// Backward of [`mincut_pool`] for the tokens plus both aux losses; returns
/// `(dH, assignment gradients)`.
pub fn mincut_pool_backward(
    h: &Matrix,
    a: &Matrix,
    assign_mlp: &EncoderParams,
    clusters: usize,
    grad: &PoolGrad,
) -> Result<(Matrix, EncoderParams)> {
    let (s, _) = mincut_parts(h, a, assign_mlp, clusters)?;

    // tokens = S^T H.
    let mut dh = s.matmul(&grad.d_tokens)?;
    let mut ds = h.matmul(&grad.d_tokens.transpose())?;
    if grad.d_cut != 0.0 {
        ds = ds.add(&mincut_cut_grad(a, &s)?.scale(grad.d_cut))?;
    }
    if grad.d_ortho != 0.0 {
        ds = ds.add(&mincut_ortho_grad(&s)?.scale(grad.d_ortho))?;
    }
    let d_logits = row_softmax_backward(&s, &ds)?;
    let d_logits_full = pad_columns(&d_logits, assign_mlp.output_dim());
    let (dh_assign, grads) =
        crate::encoders::mlp_backward(h, assign_mlp, &d_logits_full)?;
    dh = dh.add(&dh_assign)?;
    Ok((dh, grads))
}

fn take_columns(m: &Matrix, cols: usize) -> Matrix {
    if cols == m.cols() {
        return m.clone();
    }
    let mut out = Matrix::zeros(m.rows(), cols);
    for i in 0..m.rows() {
        out.row_mut(i).copy_from_slice(&m.row(i)[..cols]);
    }
    out
}

fn pad_columns(m: &Matrix, cols: usize) -> Matrix {
    if cols == m.cols() {
        return m.clone();
    }
    let mut out = Matrix::zeros(m.rows(), cols);
    for i in 0..m.rows() {
        out.row_mut(i)[..m.cols()].copy_from_slice(m.row(i));
    }
    out
}
