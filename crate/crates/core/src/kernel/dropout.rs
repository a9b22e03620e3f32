use rand::Rng;

use super::{shape_err, KernelError};

/// Inverted-dropout mask: each entry is `0` with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(
    len: usize,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<f64>, KernelError> {
    if !(0.0..1.0).contains(&rate) || rate.is_nan() {
        return Err(KernelError::InvalidRate(rate));
    }
    if rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

/// Multiplies `x` by `mask`; with `mask = None` (evaluation) `x` passes through.
pub fn apply_dropout(x: &[f64], mask: Option<&[f64]>) -> Result<Vec<f64>, KernelError> {
    match mask {
        None => Ok(x.to_vec()),
        Some(m) if m.len() == x.len() => Ok(x.iter().zip(m).map(|(a, b)| a * b).collect()),
        Some(m) => Err(shape_err(format!(
            "dropout mask has {} entries for {} inputs",
            m.len(),
            x.len()
        ))),
    }
}
