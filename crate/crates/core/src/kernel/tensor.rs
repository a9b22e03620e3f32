use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{shape_err, KernelError};

/// Row-major dense array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, KernelError> {
        if shape.contains(&0) {
            return Err(shape_err(format!("zero-sized dimension in {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_err(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// 1-D tensor over `data`. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector tensor must be non-empty");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, KernelError> {
        Self::new(vec![rows, cols], data)
    }

    /// Uniform(-s, s) initialization with `s = 1 / sqrt(fan_in)`.
    pub fn uniform_fan_in<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let s = 1.0 / (fan_in.max(1) as f64).sqrt();
        Self::uniform(shape, s, rng)
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() > 1 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), KernelError> {
        if self.shape != other.shape {
            return Err(shape_err(format!(
                "add {:?} += {:?}",
                self.shape, other.shape
            )));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|x| *x *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Storage precision for trained parameters.
///
/// All arithmetic runs in `f64`. `F32` rounds every parameter to the nearest
/// `f32` after each optimizer step, which reproduces single-precision storage
/// without a second kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub fn apply(self, t: &mut Tensor) {
        if self == Precision::F32 {
            t.data_mut()
                .iter_mut()
                .for_each(|x| *x = f64::from(*x as f32));
        }
    }
}

/// A model whose trainable state is an ordered list of tensors.
///
/// The order is the declaration order used by checkpoints, Adam moments and
/// flat gradient vectors. A gradient for a model is another instance of the
/// same model with every tensor holding the partial derivatives.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    fn assign_flat(&mut self, flat: &[f64]) -> Result<(), KernelError> {
        let total = self.num_parameters();
        if flat.len() != total {
            return Err(shape_err(format!(
                "flat vector has {} values, model has {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn f32_precision_rounds() {
        let mut t = Tensor::vector(vec![0.1]);
        Precision::F32.apply(&mut t);
        assert_eq!(t.data()[0], f64::from(0.1_f32));
        let mut u = Tensor::vector(vec![0.1]);
        Precision::F64.apply(&mut u);
        assert_eq!(u.data()[0], 0.1);
    }
}
