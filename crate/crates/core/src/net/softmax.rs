//! Fully-connected softmax classifier and the cross-entropy loss.

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// Weights `(classes, inputs, 1, 1)` and one bias per class. Inputs are the
/// previous layer's maps flattened channel-major (`c`, then `h`, then `w`).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Tensor4,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn classes(&self) -> usize {
        self.weights.shape().n
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape().c
    }
}

/// Logits `(n, classes, 1, 1)` for a batch whose items flatten to `inputs` values.
pub fn dense_forward(input: &Tensor4, params: &DenseParams) -> Result<Tensor4> {
    let s = input.shape();
    if s.item_len() != params.inputs() {
        return Err(Error::dim(
            "dense_forward",
            format!("items have {} values, layer expects {}", s.item_len(), params.inputs()),
        ));
    }
    let (k, m) = (params.classes(), params.inputs());
    let w = params.weights.data();
    let mut out = Tensor4::zeros(Shape4::new(s.n, k, 1, 1));
    for n in 0..s.n {
        let x = input.item(n);
        let dst = out.item_mut(n);
        for (j, o) in dst.iter_mut().enumerate() {
            let row = &w[j * m..(j + 1) * m];
            *o = params.bias[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_params)` of [`dense_forward`].
pub fn dense_backward(
    input: &Tensor4,
    params: &DenseParams,
    grad_logits: &Tensor4,
) -> Result<(Tensor4, DenseParams)> {
    let s = input.shape();
    let (k, m) = (params.classes(), params.inputs());
    grad_logits.expect_shape("dense_backward", Shape4::new(s.n, k, 1, 1))?;
    let w = params.weights.data();
    let mut gx = Tensor4::zeros(s);
    let mut gw = vec![0.0; k * m];
    let mut gb = vec![0.0; k];
    for n in 0..s.n {
        let x = input.item(n);
        let g = grad_logits.item(n);
        let dx = gx.item_mut(n);
        for j in 0..k {
            gb[j] += g[j];
            let row = &w[j * m..(j + 1) * m];
            let grow = &mut gw[j * m..(j + 1) * m];
            for i in 0..m {
                grow[i] += g[j] * x[i];
                dx[i] += g[j] * row[i];
            }
        }
    }
    Ok((
        gx,
        DenseParams {
            weights: Tensor4::from_vec(params.weights.shape(), gw)?,
            bias: gb,
        },
    ))
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax(logits: &Tensor4) -> Tensor4 {
    let s = logits.shape();
    let mut out = logits.clone();
    for n in 0..s.n {
        let row = out.item_mut(n);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Mean cross-entropy of `labels` under `softmax(logits)` and its gradient
/// `(softmax - onehot) / batch`.
pub fn softmax_xent(logits: &Tensor4, labels: &[usize]) -> Result<(f64, Tensor4)> {
    let s = logits.shape();
    if labels.len() != s.n {
        return Err(Error::dim(
            "softmax_xent",
            format!("{} labels for a batch of {}", labels.len(), s.n),
        ));
    }
    let classes = s.item_len();
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut grad = Tensor4::zeros(s);
    let mut loss = 0.0;
    let inv = 1.0 / s.n as f64;
    for (n, &label) in labels.iter().enumerate() {
        let row = logits.item(n);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss -= row[label] - max - log_total;
        let g = grad.item_mut(n);
        for (j, (gj, v)) in g.iter_mut().zip(row).enumerate() {
            let p = (v - max - log_total).exp();
            *gj = (p - if j == label { 1.0 } else { 0.0 }) * inv;
        }
    }
    Ok((loss * inv, grad))
}
