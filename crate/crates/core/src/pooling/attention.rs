//! Global pooling through a learnable latent bank: `K` latent rows attend
//! over all node embeddings with a single cross-attention layer,
//!
//! ```text
//! tokens = softmax((H_lat W_Q)(H_inp W_K)^T / sqrt(d)) (H_inp W_V)
//! ```
//!
//! [`vn_pool`] is exactly [`perceiver_encode`] with the bank's latents as
//! queries and the graph as keys/values; both run the same arithmetic path,
//! so their outputs are bit-identical by construction.

use serde::{Deserialize, Serialize};

use crate::numerics::{row_softmax, row_softmax_backward, DeterministicRng, Matrix};
use crate::{Error, Result};

use super::PoolResult;

/// Learnable latent rows plus the three projection matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VirtualNodeBank {
    /// `K x d` latent bank.
    pub h_vn: Matrix,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

impl VirtualNodeBank {
    /// `k` latents of width `d`, all weights uniform in
    /// `(-1/sqrt(d), 1/sqrt(d))`.
    pub fn init(k: usize, d: usize, rng: &mut DeterministicRng) -> Self {
        let limit = 1.0 / (d as f64).sqrt();
        Self {
            h_vn: rng.matrix(k, d, -limit, limit),
            w_q: rng.matrix(d, d, -limit, limit),
            w_k: rng.matrix(d, d, -limit, limit),
            w_v: rng.matrix(d, d, -limit, limit),
        }
    }

    pub fn token_count(&self) -> usize {
        self.h_vn.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            h_vn: Matrix::zeros(self.h_vn.rows(), self.h_vn.cols()),
            w_q: Matrix::zeros(self.w_q.rows(), self.w_q.cols()),
            w_k: Matrix::zeros(self.w_k.rows(), self.w_k.cols()),
            w_v: Matrix::zeros(self.w_v.rows(), self.w_v.cols()),
        }
    }
}

fn check_widths(x_lat: &Matrix, x_inp: &Matrix, w_q: &Matrix, w_k: &Matrix, w_v: &Matrix) -> Result<()> {
    if x_lat.cols() != w_q.rows() || x_inp.cols() != w_k.rows() || x_inp.cols() != w_v.rows() {
        return Err(Error::Dimension(format!(
            "latent width {} / input width {} against projections {}, {}, {}",
            x_lat.cols(),
            x_inp.cols(),
            w_q.rows(),
            w_k.rows(),
            w_v.rows()
        )));
    }
    if w_q.cols() != w_k.cols() {
        return Err(Error::Dimension(
            "query and key projections end at different widths".to_string(),
        ));
    }
    if x_lat.rows() == 0 || x_inp.rows() == 0 {
        return Err(Error::Dimension("attention over an empty side".to_string()));
    }
    Ok(())
}

/// Cross-attention of latent rows over input rows.
pub fn perceiver_encode(
    x_lat: &Matrix,
    x_inp: &Matrix,
    w_q: &Matrix,
    w_k: &Matrix,
    w_v: &Matrix,
) -> Result<Matrix> {
    let (out, _) = perceiver_parts(x_lat, x_inp, w_q, w_k, w_v)?;
    Ok(out)
}

fn perceiver_parts(
    x_lat: &Matrix,
    x_inp: &Matrix,
    w_q: &Matrix,
    w_k: &Matrix,
    w_v: &Matrix,
) -> Result<(Matrix, Matrix)> {
    check_widths(x_lat, x_inp, w_q, w_k, w_v)?;
    let q = x_lat.matmul(w_q)?;
    let k = x_inp.matmul(w_k)?;
    let v = x_inp.matmul(w_v)?;
    let scale = (w_q.cols() as f64).sqrt();
    let s = row_softmax(&q.matmul(&k.transpose())?.scale(1.0 / scale))?;
    Ok((s.matmul(&v)?, s))
}

/// Gradients of [`perceiver_encode`] with respect to both inputs and all
/// three projections.
pub struct PerceiverGrads {
    pub d_lat: Matrix,
    pub d_inp: Matrix,
    pub d_wq: Matrix,
    pub d_wk: Matrix,
    pub d_wv: Matrix,
}

pub fn perceiver_encode_backward(
    x_lat: &Matrix,
    x_inp: &Matrix,
    w_q: &Matrix,
    w_k: &Matrix,
    w_v: &Matrix,
    d_out: &Matrix,
) -> Result<PerceiverGrads> {
    let (_, s) = perceiver_parts(x_lat, x_inp, w_q, w_k, w_v)?;
    let q = x_lat.matmul(w_q)?;
    let k = x_inp.matmul(w_k)?;
    let v = x_inp.matmul(w_v)?;
    let scale = (w_q.cols() as f64).sqrt();

    let dv = s.transpose().matmul(d_out)?;
    let ds = d_out.matmul(&v.transpose())?;
    let dz = row_softmax_backward(&s, &ds)?.scale(1.0 / scale);
    let dq = dz.matmul(&k)?;
    let dk = dz.transpose().matmul(&q)?;

    Ok(PerceiverGrads {
        d_lat: dq.matmul(&w_q.transpose())?,
        d_inp: dk
            .matmul(&w_k.transpose())?
            .add(&dv.matmul(&w_v.transpose())?)?,
        d_wq: x_lat.transpose().matmul(&dq)?,
        d_wk: x_inp.transpose().matmul(&dk)?,
        d_wv: x_inp.transpose().matmul(&dv)?,
    })
}

/// `K` tokens from the latent bank cross-attending over the node rows.
pub fn vn_pool(h: &Matrix, bank: &VirtualNodeBank) -> Result<PoolResult> {
    let tokens = perceiver_encode(&bank.h_vn, h, &bank.w_q, &bank.w_k, &bank.w_v)?;
    Ok(PoolResult {
        tokens,
        aux: super::AuxLosses::default(),
        selection: None,
        assignment: None,
        coarse_adjacency: None,
        clusters_reduced: false,
    })
}

/// Backward of [`vn_pool`]; returns `(dH, bank gradients)`.
pub fn vn_pool_backward(
    h: &Matrix,
    bank: &VirtualNodeBank,
    d_tokens: &Matrix,
) -> Result<(Matrix, VirtualNodeBank)> {
    let g = perceiver_encode_backward(&bank.h_vn, h, &bank.w_q, &bank.w_k, &bank.w_v, d_tokens)?;
    Ok((
        g.d_inp,
        VirtualNodeBank {
            h_vn: g.d_lat,
            w_q: g.d_wq,
            w_k: g.d_wk,
            w_v: g.d_wv,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{
        central_difference_gradient, relative_error, FD_REL_TOL, FD_STEP,
    };

    #[test]
    fn single_node_tokens_are_value_projection() {
        let mut rng = DeterministicRng::new(1);
        let bank = VirtualNodeBank::init(3, 4, &mut rng);
        let h = rng.matrix(1, 4, -1.0, 1.0);
        let r = vn_pool(&h, &bank).unwrap();
        let expected = h.matmul(&bank.w_v).unwrap();
        for t in 0..3 {
            for c in 0..4 {
                assert!((r.tokens[(t, c)] - expected[(0, c)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identical_rows_collapse_tokens() {
        let mut rng = DeterministicRng::new(2);
        let bank = VirtualNodeBank::init(2, 3, &mut rng);
        let h = Matrix::from_rows(&[vec![0.3, -0.5, 1.0], vec![0.3, -0.5, 1.0]]).unwrap();
        let r = vn_pool(&h, &bank).unwrap();
        let expected = Matrix::row_vector(h.row(0))
            .unwrap()
            .matmul(&bank.w_v)
            .unwrap();
        for t in 0..2 {
            for c in 0..3 {
                assert!((r.tokens[(t, c)] - expected[(0, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_brute_force_attention() {
        // Independent recomputation of the cross-attention on a 2-node
        // instance with dimension 2.
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let bank = VirtualNodeBank {
            h_vn: Matrix::from_rows(&[vec![0.5, -0.5]]).unwrap(),
            w_q: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            w_k: Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            w_v: Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap(),
        };
        // q = (0.5, -0.5); keys: k_0 = (0, 1), k_1 = (2, 0); logits are
        // (q.k)/sqrt(2) = (-0.5, 1.0)/1.41421356...
        let l0 = -0.5 / 2f64.sqrt();
        let l1 = 1.0 / 2f64.sqrt();
        let m = l1;
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        let (a0, a1) = (e0 / (e0 + e1), e1 / (e0 + e1));
        // values: v_0 = (1, 1), v_1 = (0, 2).
        let expect = [a0, a0 + 2.0 * a1];
        let r = vn_pool(&h, &bank).unwrap();
        assert!((r.tokens[(0, 0)] - expect[0]).abs() < 1e-14);
        assert!((r.tokens[(0, 1)] - expect[1]).abs() < 1e-14);
    }

    #[test]
    fn zero_query_projection_ignores_latents() {
        let mut rng = DeterministicRng::new(3);
        let h = rng.matrix(4, 3, -1.0, 1.0);
        let w_k = rng.matrix(3, 3, -1.0, 1.0);
        let w_v = rng.matrix(3, 3, -1.0, 1.0);
        let w_q = Matrix::zeros(3, 3);
        let lat_a = rng.matrix(2, 3, -1.0, 1.0);
        let lat_b = lat_a.scale(7.0);
        let out_a = perceiver_encode(&lat_a, &h, &w_q, &w_k, &w_v).unwrap();
        let out_b = perceiver_encode(&lat_b, &h, &w_q, &w_k, &w_v).unwrap();
        assert!(relative_error(&out_a, &out_b).unwrap() < 1e-15);
    }

    #[test]
    fn vn_pool_equals_perceiver_encode_bitwise() {
        let mut rng = DeterministicRng::new(4);
        for _ in 0..20 {
            let n = 1 + rng.index(8);
            let d = 1 + rng.index(5);
            let k = 1 + rng.index(4);
            let bank = VirtualNodeBank::init(k, d, &mut rng);
            let h = rng.matrix(n, d, -2.0, 2.0);
            let pooled = vn_pool(&h, &bank).unwrap();
            let direct =
                perceiver_encode(&bank.h_vn, &h, &bank.w_q, &bank.w_k, &bank.w_v).unwrap();
            assert_eq!(pooled.tokens, direct);
        }
    }

    #[test]
    fn gradients_match_fd() {
        let mut rng = DeterministicRng::new(5);
        let bank = VirtualNodeBank::init(2, 3, &mut rng);
        let h = rng.matrix(5, 3, -1.0, 1.0);
        let probe = rng.matrix(2, 3, -1.0, 1.0);
        let loss = |hm: &Matrix, bk: &VirtualNodeBank| -> f64 {
            vn_pool(hm, bk)
                .unwrap()
                .tokens
                .hadamard(&probe)
                .unwrap()
                .data()
                .iter()
                .sum()
        };
        let (dh, grads) = vn_pool_backward(&h, &bank, &probe).unwrap();
        let fd_h = central_difference_gradient(|m| loss(m, &bank), &h, FD_STEP).unwrap();
        assert!(relative_error(&fd_h, &dh).unwrap() < FD_REL_TOL);
        for which in ["h_vn", "w_q", "w_k", "w_v"] {
            let target = match which {
                "h_vn" => &bank.h_vn,
                "w_q" => &bank.w_q,
                "w_k" => &bank.w_k,
                _ => &bank.w_v,
            };
            let fd = central_difference_gradient(
                |m| {
                    let mut b2 = bank.clone();
                    match which {
                        "h_vn" => b2.h_vn = m.clone(),
                        "w_q" => b2.w_q = m.clone(),
                        "w_k" => b2.w_k = m.clone(),
                        _ => b2.w_v = m.clone(),
                    }
                    loss(&h, &b2)
                },
                target,
                FD_STEP,
            )
            .unwrap();
            let analytic = match which {
                "h_vn" => &grads.h_vn,
                "w_q" => &grads.w_q,
                "w_k" => &grads.w_k,
                _ => &grads.w_v,
            };
            assert!(
                relative_error(&fd, analytic).unwrap() < FD_REL_TOL,
                "{which} gradient mismatch"
            );
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut rng = DeterministicRng::new(6);
        let bank = VirtualNodeBank::init(2, 3, &mut rng);
        let h = rng.matrix(4, 2, -1.0, 1.0);
        assert!(vn_pool(&h, &bank).is_err());
    }
}
