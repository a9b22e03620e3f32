use super::{shape_err, KernelError, Parameters, Tensor};

/// Per-feature batch normalization with learned scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    xhat: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        let mut gamma = Tensor::zeros(&[dim]);
        gamma.fill(1.0);
        let mut running_var = Tensor::zeros(&[dim]);
        running_var.fill(1.0);
        Self {
            gamma,
            beta: Tensor::zeros(&[dim]),
            running_mean: Tensor::zeros(&[dim]),
            running_var,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes with batch statistics. Running statistics are untouched;
    /// call [`BatchNorm::update_running`] with the returned cache.
    pub fn forward_train(
        &self,
        xs: &[Vec<f64>],
    ) -> Result<(Vec<Vec<f64>>, BatchNormCache), KernelError> {
        let d = self.dim();
        if xs.is_empty() {
            return Err(KernelError::Empty("batch norm"));
        }
        if let Some(bad) = xs.iter().find(|x| x.len() != d) {
            return Err(shape_err(format!(
                "batch norm over {d} features got a row of {}",
                bad.len()
            )));
        }
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        for x in xs {
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let xhat: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&mean)
                    .zip(&inv_std)
                    .map(|((v, m), s)| (v - m) * s)
                    .collect()
            })
            .collect();
        let ys = xhat.iter().map(|xh| self.scale_shift(xh)).collect();
        Ok((
            ys,
            BatchNormCache {
                xhat,
                inv_std,
                mean,
                var,
            },
        ))
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let m = self.momentum;
        let n = cache.xhat.len() as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for (r, b) in self.running_mean.data_mut().iter_mut().zip(&cache.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.running_var.data_mut().iter_mut().zip(&cache.var) {
            *r = (1.0 - m) * *r + m * b * unbias;
        }
    }

    pub fn forward_eval(&self, x: &[f64]) -> Vec<f64> {
        let xhat: Vec<f64> = x
            .iter()
            .zip(self.running_mean.data())
            .zip(self.running_var.data())
            .map(|((v, m), s)| (v - m) / (s + self.eps).sqrt())
            .collect();
        self.scale_shift(&xhat)
    }

    fn scale_shift(&self, xhat: &[f64]) -> Vec<f64> {
        xhat.iter()
            .zip(self.gamma.data())
            .zip(self.beta.data())
            .map(|((x, g), b)| g * x + b)
            .collect()
    }

    /// Returns input gradients and accumulates `d gamma`, `d beta` into `grad`.
    pub fn backward(
        &self,
        cache: &BatchNormCache,
        dys: &[Vec<f64>],
        grad: &mut BatchNorm,
    ) -> Vec<Vec<f64>> {
        let d = self.dim();
        let n = dys.len() as f64;
        let mut sum_dxhat = vec![0.0; d];
        let mut sum_dxhat_xhat = vec![0.0; d];
        for (dy, xh) in dys.iter().zip(&cache.xhat) {
            for j in 0..d {
                grad.gamma.data_mut()[j] += dy[j] * xh[j];
                grad.beta.data_mut()[j] += dy[j];
                let dxh = dy[j] * self.gamma.data()[j];
                sum_dxhat[j] += dxh;
                sum_dxhat_xhat[j] += dxh * xh[j];
            }
        }
        dys.iter()
            .zip(&cache.xhat)
            .map(|(dy, xh)| {
                (0..d)
                    .map(|j| {
                        let dxh = dy[j] * self.gamma.data()[j];
                        cache.inv_std[j] / n
                            * (n * dxh - sum_dxhat[j] - xh[j] * sum_dxhat_xhat[j])
                    })
                    .collect()
            })
            .collect()
    }
}

impl Parameters for BatchNorm {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.gamma, &self.beta]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalizes_batch() {
        let bn = BatchNorm::new(2);
        let xs = vec![vec![1.0, 10.0], vec![3.0, 10.0]];
        let (ys, _) = bn.forward_train(&xs).unwrap();
        assert!((ys[0][0] + 1.0).abs() < 1e-4);
        assert!((ys[1][0] - 1.0).abs() < 1e-4);
        assert_eq!(ys[0][1], 0.0);
    }

    #[test]
    fn running_stats_track_batches() {
        let mut bn = BatchNorm::new(1);
        bn.momentum = 1.0;
        let (_, cache) = bn.forward_train(&[vec![2.0], vec![4.0]]).unwrap();
        bn.update_running(&cache);
        assert_eq!(bn.running_mean.data(), &[3.0]);
        assert_eq!(bn.running_var.data(), &[2.0]);
        let y = bn.forward_eval(&[3.0]);
        assert!(y[0].abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, d) = (5, 3);
        let mut bn = BatchNorm::new(d);
        bn.gamma = Tensor::uniform(&[d], 1.5, &mut rng);
        bn.beta = Tensor::uniform(&[d], 1.0, &mut rng);
        let w: Vec<Vec<f64>> = (0..n).map(|_| Tensor::uniform(&[d], 1.0, &mut rng).into_data()).collect();
        let mut theta = bn.flatten();
        for _ in 0..n {
            theta.extend(Tensor::uniform(&[d], 2.0, &mut rng).into_data());
        }
        let report = grad_check(
            |th: &[f64]| {
                let mut b = bn.clone();
                b.assign_flat(&th[..2 * d]).unwrap();
                let xs: Vec<Vec<f64>> = th[2 * d..].chunks(d).map(|c| c.to_vec()).collect();
                let (ys, cache) = b.forward_train(&xs).unwrap();
                let loss: f64 = ys
                    .iter()
                    .zip(&w)
                    .map(|(y, wi)| y.iter().zip(wi).map(|(a, c)| (a * c).sin()).sum::<f64>())
                    .sum();
                let dys: Vec<Vec<f64>> = ys
                    .iter()
                    .zip(&w)
                    .map(|(y, wi)| y.iter().zip(wi).map(|(a, c)| c * (a * c).cos()).collect())
                    .collect();
                let mut g = BatchNorm::new(d);
                g.zero_grad();
                let dxs = b.backward(&cache, &dys, &mut g);
                let mut flat = g.flatten();
                flat.extend(dxs.into_iter().flatten());
                (loss, flat)
            },
            &theta,
            1e-3,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
