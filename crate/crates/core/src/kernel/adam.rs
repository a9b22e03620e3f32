use serde::{Deserialize, Serialize};

use super::{shape_err, KernelError, Parameters, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter moment estimates, in the model's declaration order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(model: &P, config: AdamConfig) -> Self {
        let m: Vec<Tensor> = model.tensors().iter().map(|t| t.zeros_like()).collect();
        Self {
            config,
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }
}

/// One bias-corrected Adam update of `model` using `grads`.
pub fn adam_step<P: Parameters + ?Sized>(
    model: &mut P,
    grads: &P,
    state: &mut AdamState,
) -> Result<(), KernelError> {
    let grads = grads.tensors();
    let params = model.tensors_mut();
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape_err(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(&grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(shape_err(format!(
                "adam: parameter {:?} gradient {:?} moment {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
    }
    state.t += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = state.config;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for (((p, g), m), v) in params
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Scalar(Tensor);
    impl Parameters for Scalar {
        fn tensors(&self) -> Vec<&Tensor> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    fn scalar(x: f64) -> Scalar {
        Scalar(Tensor::vector(vec![x]))
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Scalar(Tensor::vector(vec![1.5, -2.0, 0.0]));
        let before = p.0.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        // seed non-zero moments first, then verify they decay under zero grads
        adam_step(&mut p, &Scalar(Tensor::vector(vec![0.0; 3])), &mut st).unwrap();
        assert_eq!(p.0, before);
        assert_eq!(st.steps(), 1);
        assert!(st.first_moments()[0].data().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn moments_decay_toward_zero() {
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &scalar(1.0), &mut st).unwrap();
        let m1 = st.first_moments()[0].data()[0];
        let frozen = p.0.clone();
        // zero gradients still move the parameter via momentum, but the
        // moments themselves shrink geometrically
        adam_step(&mut p, &scalar(0.0), &mut st).unwrap();
        let m2 = st.first_moments()[0].data()[0];
        assert!((m2 - 0.9 * m1).abs() < 1e-15);
        assert_ne!(p.0, frozen);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.0);
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(&p, cfg);
        adam_step(&mut p, &scalar(0.5), &mut st).unwrap();
        assert!((p.0.data()[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn two_step_trace_matches_hand_computation() {
        let lr = 0.01;
        let mut p = scalar(0.0);
        let mut st = AdamState::new(
            &p,
            AdamConfig {
                learning_rate: lr,
                ..AdamConfig::default()
            },
        );
        adam_step(&mut p, &scalar(0.5), &mut st).unwrap();
        adam_step(&mut p, &scalar(-0.5), &mut st).unwrap();

        // hand trace
        let (b1, b2, eps) = (0.9_f64, 0.999_f64, 1e-8_f64);
        let m1 = 0.1 * 0.5;
        let v1 = 0.001 * 0.25;
        let x1 = 0.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + 0.1 * -0.5;
        let v2 = b2 * v1 + 0.001 * 0.25;
        let x2 = x1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert!((p.0.data()[0] - x2).abs() < 1e-15, "{} vs {x2}", p.0.data()[0]);
        assert_eq!(st.steps(), 2);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let g = Scalar(Tensor::vector(vec![1.0, 2.0]));
        assert!(adam_step(&mut p, &g, &mut st).is_err());
        assert_eq!(st.steps(), 0);
    }
}
