//! Batch-mean losses returning the value and the gradient with respect to the
//! network output.

use super::layer::sigmoid;
use super::Tensor2;
use crate::error::{Error, Result};

/// Mean squared error for a `B×1` prediction.
pub fn mse_loss(pred: &Tensor2, target: &[f64]) -> Result<(f64, Tensor2)> {
    if pred.cols() != 1 || pred.rows() != target.len() {
        return Err(Error::Shape(format!(
            "mse: prediction {}x{} against {} targets",
            pred.rows(),
            pred.cols(),
            target.len()
        )));
    }
    let b = pred.rows().max(1) as f64;
    let mut grad = Tensor2::zeros(pred.rows(), 1);
    let mut total = 0.0;
    for (i, (&p, &y)) in pred.data().iter().zip(target).enumerate() {
        let d = p - y;
        total += d * d;
        grad.data_mut()[i] = 2.0 * d / b;
    }
    Ok((total / b, grad))
}

/// Row-wise softmax.
pub fn softmax(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
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
    out
}

/// Softmax cross-entropy against class indices.
pub fn softmax_ce_loss(logits: &Tensor2, class_idx: &[usize]) -> Result<(f64, Tensor2)> {
    if logits.rows() != class_idx.len() {
        return Err(Error::Shape(format!(
            "cross-entropy: {} logit rows against {} labels",
            logits.rows(),
            class_idx.len()
        )));
    }
    let m = logits.cols();
    if let Some((row, &c)) = class_idx.iter().enumerate().find(|(_, &c)| c >= m) {
        return Err(Error::Shape(format!(
            "cross-entropy: row {row} has class {c}, only {m} classes"
        )));
    }
    let b = logits.rows().max(1) as f64;
    let mut grad = softmax(logits);
    let mut total = 0.0;
    for (r, &c) in class_idx.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += log_sum - row[c];

        let g = grad.row_mut(r);
        g[c] -= 1.0;
        for v in g.iter_mut() {
            *v /= b;
        }
    }
    Ok((total / b, grad))
}

/// Elementwise binary cross-entropy on logits, sigmoid fused.
pub fn bce_loss(logits: &Tensor2, labels: &Tensor2) -> Result<(f64, Tensor2)> {
    if logits.shape() != labels.shape() {
        return Err(Error::Shape(format!(
            "bce: logits {}x{} against labels {}x{}",
            logits.rows(),
            logits.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    if let Some(t) = labels.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(Error::Shape(format!("bce: label {t} is not 0 or 1")));
    }
    let n = logits.data().len().max(1) as f64;
    let mut grad = Tensor2::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for ((g, &z), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(logits.data())
        .zip(labels.data())
    {
        // -[t ln σ(z) + (1-t) ln(1-σ(z))] = max(z,0) - z t + ln(1 + e^{-|z|})
        total += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        *g = (sigmoid(z) - t) / n;
    }
    Ok((total / n, grad))
}
