use rand::Rng;

use super::ops::{matvec_transpose_acc, outer_acc, sigmoid};
use super::{shape_err, KernelError, Parameters, Tensor};

/// Single LSTM layer.
///
/// The four gate blocks are stacked row-wise in the order input, forget,
/// output, candidate: `w_x` is `4H x D`, `w_h` is `4H x H`, `b` is `4H`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
}

pub const GATES: usize = 4;

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_x: Tensor::zeros(&[GATES * hidden, input]),
            w_h: Tensor::zeros(&[GATES * hidden, hidden]),
            b: Tensor::zeros(&[GATES * hidden]),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let fan_in = input + hidden;
        Self {
            w_x: Tensor::uniform_fan_in(&[GATES * hidden, input], fan_in, rng),
            w_h: Tensor::uniform_fan_in(&[GATES * hidden, hidden], fan_in, rng),
            b: Tensor::uniform_fan_in(&[GATES * hidden], fan_in, rng),
        }
    }

    /// Assemble from per-gate blocks `[input, forget, output, candidate]`.
    pub fn from_blocks(
        w_x: [&Tensor; 4],
        w_h: [&Tensor; 4],
        b: [&Tensor; 4],
    ) -> Result<Self, KernelError> {
        let hidden = b[0].len();
        let input = w_x[0].cols();
        for k in 0..GATES {
            if w_x[k].shape() != [hidden, input] {
                return Err(shape_err(format!(
                    "input block {k} is {:?}, expected [{hidden}, {input}]",
                    w_x[k].shape()
                )));
            }
            if w_h[k].shape() != [hidden, hidden] {
                return Err(shape_err(format!(
                    "hidden block {k} is {:?}, expected [{hidden}, {hidden}]",
                    w_h[k].shape()
                )));
            }
            if b[k].len() != hidden {
                return Err(shape_err(format!(
                    "bias block {k} has {} values, expected {hidden}",
                    b[k].len()
                )));
            }
        }
        let cat = |blocks: [&Tensor; 4]| blocks.iter().flat_map(|t| t.data().to_vec()).collect();
        Ok(Self {
            w_x: Tensor::matrix(GATES * hidden, input, cat(w_x))?,
            w_h: Tensor::matrix(GATES * hidden, hidden, cat(w_h))?,
            b: Tensor::new(vec![GATES * hidden], cat(b))?,
        })
    }

    pub fn input_size(&self) -> usize {
        self.w_x.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.b.len() / GATES
    }
}

impl Parameters for LstmParams {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_x, &self.w_h, &self.b]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.b]
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct LstmStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    gates: Vec<f64>,
    pub c: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn lstm_step_forward(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> LstmStepCache {
    let hs = p.hidden_size();
    let d = p.input_size();
    debug_assert_eq!(x.len(), d);
    debug_assert_eq!(h.len(), hs);
    let mut z = p.b.data().to_vec();
    for ((zi, wx), wh) in z
        .iter_mut()
        .zip(p.w_x.data().chunks_exact(d))
        .zip(p.w_h.data().chunks_exact(hs))
    {
        let mut acc = 0.0;
        for (a, b) in wx.iter().zip(x) {
            acc += a * b;
        }
        for (a, b) in wh.iter().zip(h) {
            acc += a * b;
        }
        *zi += acc;
    }
    for v in &mut z[..3 * hs] {
        *v = sigmoid(*v);
    }
    for v in &mut z[3 * hs..] {
        *v = v.tanh();
    }
    let mut c_new = vec![0.0; hs];
    let mut tanh_c = vec![0.0; hs];
    let mut h_new = vec![0.0; hs];
    for j in 0..hs {
        let (i, f, o, g) = (z[j], z[hs + j], z[2 * hs + j], z[3 * hs + j]);
        c_new[j] = f * c[j] + i * g;
        tanh_c[j] = c_new[j].tanh();
        h_new[j] = o * tanh_c[j];
    }
    LstmStepCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        gates: z,
        c: c_new,
        tanh_c,
        h: h_new,
    }
}

/// Backpropagates `dh`, `dc` (gradients on this step's outputs) through one
/// step. Parameter gradients are accumulated into `grad`; returns
/// `(dx, dh_prev, dc_prev)`.
pub fn lstm_step_backward(
    p: &LstmParams,
    cache: &LstmStepCache,
    dh: &[f64],
    dc: &[f64],
    grad: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hs = p.hidden_size();
    let d = p.input_size();
    let z = &cache.gates;
    let mut dz = vec![0.0; GATES * hs];
    let mut dc_prev = vec![0.0; hs];
    for j in 0..hs {
        let (i, f, o, g) = (z[j], z[hs + j], z[2 * hs + j], z[3 * hs + j]);
        let tc = cache.tanh_c[j];
        let do_ = dh[j] * tc;
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        let di = dct * g;
        let df = dct * cache.c_prev[j];
        let dg = dct * i;
        dc_prev[j] = dct * f;
        dz[j] = di * i * (1.0 - i);
        dz[hs + j] = df * f * (1.0 - f);
        dz[2 * hs + j] = do_ * o * (1.0 - o);
        dz[3 * hs + j] = dg * (1.0 - g * g);
    }
    outer_acc(grad.w_x.data_mut(), d, &dz, &cache.x);
    outer_acc(grad.w_h.data_mut(), hs, &dz, &cache.h_prev);
    grad.b
        .data_mut()
        .iter_mut()
        .zip(&dz)
        .for_each(|(a, b)| *a += b);
    let mut dx = vec![0.0; d];
    matvec_transpose_acc(p.w_x.data(), d, &dz, &mut dx);
    let mut dh_prev = vec![0.0; hs];
    matvec_transpose_acc(p.w_h.data(), hs, &dz, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

/// Shape-checked single step on tensors.
pub fn lstm_cell_step(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    p: &LstmParams,
) -> Result<(Tensor, Tensor), KernelError> {
    let hs = p.hidden_size();
    if x.len() != p.input_size() {
        return Err(shape_err(format!(
            "lstm input has {} values, cell expects {}",
            x.len(),
            p.input_size()
        )));
    }
    if h.len() != hs || c.len() != hs {
        return Err(shape_err(format!(
            "lstm state sizes h={} c={}, cell hidden size {hs}",
            h.len(),
            c.len()
        )));
    }
    let cache = lstm_step_forward(p, x.data(), h.data(), c.data());
    Ok((Tensor::vector(cache.h), Tensor::vector(cache.c)))
}

/// Runs the layer from a zero state over `inputs`.
pub fn lstm_sequence_forward(p: &LstmParams, inputs: &[Vec<f64>]) -> Vec<LstmStepCache> {
    let hs = p.hidden_size();
    let mut h = vec![0.0; hs];
    let mut c = vec![0.0; hs];
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let cache = lstm_step_forward(p, x, &h, &c);
        h.clone_from(&cache.h);
        c.clone_from(&cache.c);
        caches.push(cache);
    }
    caches
}

/// Backpropagation through time. `dh_steps[t]` is the external gradient on
/// the hidden output of step `t`. Returns the gradient for every input.
pub fn lstm_sequence_backward(
    p: &LstmParams,
    caches: &[LstmStepCache],
    dh_steps: &[Vec<f64>],
    grad: &mut LstmParams,
) -> Vec<Vec<f64>> {
    let hs = p.hidden_size();
    let mut dh_next = vec![0.0; hs];
    let mut dc_next = vec![0.0; hs];
    let mut dxs = vec![Vec::new(); caches.len()];
    for t in (0..caches.len()).rev() {
        let dh: Vec<f64> = dh_steps[t]
            .iter()
            .zip(&dh_next)
            .map(|(a, b)| a + b)
            .collect();
        let (dx, dhp, dcp) = lstm_step_backward(p, &caches[t], &dh, &dc_next, grad);
        dxs[t] = dx;
        dh_next = dhp;
        dc_next = dcp;
    }
    dxs
}
