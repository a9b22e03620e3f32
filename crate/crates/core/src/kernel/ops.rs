use super::{shape_err, KernelError, Tensor};

/// `out = W x + b` for row-major `w` of shape `rows x cols`.
#[inline]
pub fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    for ((o, row), bias) in out.iter_mut().zip(w.chunks_exact(cols)).zip(b) {
        *o = bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// `dx += W^T dy`.
#[inline]
pub fn matvec_transpose_acc(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    for (row, g) in w.chunks_exact(cols).zip(dy) {
        if *g == 0.0 {
            continue;
        }
        for (d, a) in dx.iter_mut().zip(row) {
            *d += a * g;
        }
    }
}

/// `dW += dy x^T`.
#[inline]
pub fn outer_acc(dw: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (row, g) in dw.chunks_exact_mut(cols).zip(dy) {
        if *g == 0.0 {
            continue;
        }
        for (d, xv) in row.iter_mut().zip(x) {
            *d += g * xv;
        }
    }
}

fn check_affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize), KernelError> {
    if w.shape().len() != 2 {
        return Err(shape_err(format!("weight must be 2-D, got {:?}", w.shape())));
    }
    let (k, d) = (w.shape()[0], w.shape()[1]);
    if x.len() != d {
        return Err(shape_err(format!(
            "input has {} values but weight is {k}x{d}",
            x.len()
        )));
    }
    if b.len() != k {
        return Err(shape_err(format!(
            "bias has {} values but weight is {k}x{d}",
            b.len()
        )));
    }
    Ok((k, d))
}

pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    let (k, d) = check_affine(x, w, b)?;
    let mut out = vec![0.0; k];
    matvec_add(w.data(), k, d, x.data(), b.data(), &mut out);
    Ok(Tensor::vector(out))
}

/// Returns `(dx, dW, db)` for `y = W x + b` given upstream `dy`.
pub fn affine_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), KernelError> {
    let (k, d) = (w.rows(), w.cols());
    if x.len() != d || dy.len() != k {
        return Err(shape_err(format!(
            "affine backward: x {} dy {} weight {k}x{d}",
            x.len(),
            dy.len()
        )));
    }
    let mut dx = vec![0.0; d];
    matvec_transpose_acc(w.data(), d, dy.data(), &mut dx);
    let mut dw = Tensor::zeros(w.shape());
    outer_acc(dw.data_mut(), d, dy.data(), x.data());
    Ok((Tensor::vector(dx), dw, dy.clone()))
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, KernelError> {
    if logits.is_empty() {
        return Err(KernelError::Empty("softmax"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>, KernelError> {
    if logits.is_empty() {
        return Err(KernelError::Empty("log_softmax"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|z| z - lse).collect())
}

/// Element-wise sigmoid cross entropy summed over entries.
///
/// Returns the loss and its gradient with respect to the logits (`p - y`).
/// Uses `max(z, 0) - z y + ln(1 + e^{-|z|})`, which never takes `log(0)`.
pub fn sigmoid_cross_entropy(logits: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>), KernelError> {
    if logits.len() != y.len() {
        return Err(shape_err(format!(
            "sigmoid cross entropy: {} logits vs {} labels",
            logits.len(),
            y.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(y.len());
    for (&z, &t) in logits.iter().zip(y) {
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
        grad.push(sigmoid(z) - t);
    }
    Ok((loss, grad))
}

/// `-log softmax(logits)[target]` and its gradient `softmax - onehot`.
pub fn softmax_cross_entropy(
    logits: &[f64],
    target: usize,
) -> Result<(f64, Vec<f64>), KernelError> {
    if target >= logits.len() {
        return Err(KernelError::TargetOutOfRange {
            target,
            classes: logits.len(),
        });
    }
    let logp = log_softmax(logits)?;
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[target] -= 1.0;
    Ok((-logp[target], grad))
}
