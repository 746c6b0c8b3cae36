//! Dense matrix arithmetic, activations, deterministic randomness, and the
//! central-difference gradient oracle that validates every hand-written
//! backward pass in this crate.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::DeterministicRng;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Relative-error threshold for analytic-vs-numeric gradient agreement.
pub const FD_REL_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Elementwise activation.
pub fn activation(m: &Matrix, kind: Activation) -> Matrix {
    match kind {
        Activation::Tanh => m.map(f64::tanh),
        Activation::Relu => m.map(relu),
        Activation::Sigmoid => m.map(sigmoid),
    }
}

/// Row-wise softmax with per-row max subtraction, so rows like
/// `[1000, 1001]` stay finite.
pub fn row_softmax(m: &Matrix) -> Result<Matrix> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::Dimension(format!(
            "softmax of empty {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let mut out = m.clone();
    for i in 0..m.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Backward of [`row_softmax`]: given the forward output `s` and the
/// upstream gradient `d_s`, returns the gradient with respect to the logits:
/// `dz_ij = s_ij * (ds_ij - sum_k ds_ik * s_ik)`.
pub fn row_softmax_backward(s: &Matrix, d_s: &Matrix) -> Result<Matrix> {
    if !s.same_shape(d_s) {
        return Err(Error::Dimension(
            "softmax backward shapes differ".to_string(),
        ));
    }
    let mut out = Matrix::zeros(s.rows(), s.cols());
    for i in 0..s.rows() {
        let srow = s.row(i);
        let drow = d_s.row(i);
        let dot: f64 = srow.iter().zip(drow).map(|(a, b)| a * b).sum();
        for (j, o) in out.row_mut(i).iter_mut().enumerate() {
            *o = srow[j] * (drow[j] - dot);
        }
    }
    Ok(out)
}

/// Central-difference gradient of a scalar function of a matrix:
/// entry `(i, j)` is `(f(x + h e_ij) - f(x - h e_ij)) / (2h)`.
///
/// This is the independent oracle used to validate analytic gradients; it
/// never shares code with the backward passes it checks.
pub fn central_difference_gradient<F>(mut f: F, x: &Matrix, h: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> f64,
{
    if h <= 0.0 {
        return Err(Error::Invalid(format!("step must be positive, got {h}")));
    }
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for idx in 0..x.data().len() {
        let orig = probe.data()[idx];
        probe.data_mut()[idx] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[idx] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[idx] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective evaluated to ({fp}, {fm}) while probing flat index {idx}"
            )));
        }
        grad.data_mut()[idx] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// `||a - b||_F / max(||a||_F, ||b||_F, 1e-12)`.
pub fn relative_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension(format!(
            "relative error of {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(relative_error_slice(a.data(), b.data()))
}

/// Slice form of [`relative_error`] for flat parameter blocks.
pub fn relative_error_slice(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}
