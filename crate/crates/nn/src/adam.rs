use ct2mr_tensor::Tensor;

use crate::{NnError, ParamSet, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second-moment buffers aligned with a [`ParamSet`]'s schema order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    pub(crate) m: Vec<Tensor>,
    pub(crate) v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, hyper: AdamHyper) -> Self {
        let m = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        let v = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            hyper,
            step: 0,
            m,
            v,
        }
    }

    pub(crate) fn from_buffers(
        hyper: AdamHyper,
        step: u64,
        m: Vec<Tensor>,
        v: Vec<Tensor>,
    ) -> Self {
        AdamState { hyper, step, m, v }
    }

    pub(crate) fn buffers(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }
}

/// One bias-corrected Adam update. `grads` must hold one gradient per
/// parameter in schema order (see [`crate::collect_grads`]).
pub fn adam_step(params: &mut ParamSet, grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() {
        return Err(NnError::SchemaCount {
            expected: params.len(),
            found: grads.len(),
        });
    }
    state.step += 1;
    let t = state.step;
    let h = state.hyper;
    let bias1 = 1.0 - (h.beta1 as f64).powi(t as i32);
    let bias2 = 1.0 - (h.beta2 as f64).powi(t as i32);
    let (bias1, bias2) = (bias1 as f32, bias2 as f32);

    for (i, (name, tensor)) in params.iter_mut().enumerate() {
        let g = &grads[i];
        if g.shape() != tensor.shape() {
            return Err(NnError::GradientShape {
                name: name.to_string(),
                expected: tensor.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = tensor.data_mut();
        for j in 0..p.len() {
            let gj = g.data()[j];
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * gj;
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * gj * gj;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            p[j] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
        }
    }
    Ok(())
}
