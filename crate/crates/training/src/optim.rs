//! Adaptive-moment optimizer with decoupled weight decay.

use serde::{Deserialize, Serialize};

use rganet_network::ExtraTensor;
use rganet_tensor::{Gradients, ParamStore, Scalar, Tensor4};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimHyper {
    fn default() -> Self {
        OptimHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// First/second moment accumulators plus the step counter, slot-aligned
/// with a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct OptimizerState<S> {
    pub m: Vec<Tensor4<S>>,
    pub v: Vec<Tensor4<S>>,
    pub step: u64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(store: &ParamStore<S>) -> Self {
        OptimizerState {
            m: store.iter().map(|p| p.value.zeros_like()).collect(),
            v: store.iter().map(|p| p.value.zeros_like()).collect(),
            step: 0,
        }
    }

    /// Serializes as `<name>.m` / `<name>.v` tensors plus a rank-0
    /// `optim.step` counter, for appending to checkpoints.
    pub fn to_extras(&self, store: &ParamStore<S>) -> Vec<ExtraTensor> {
        let mut extras = Vec::with_capacity(2 * store.len() + 1);
        for (i, p) in store.iter().enumerate() {
            extras.push(ExtraTensor {
                name: format!("{}.m", p.name),
                logical_dims: p.logical_dims.clone(),
                data: self.m[i].data().iter().map(|v| v.as64() as f32).collect(),
            });
            extras.push(ExtraTensor {
                name: format!("{}.v", p.name),
                logical_dims: p.logical_dims.clone(),
                data: self.v[i].data().iter().map(|v| v.as64() as f32).collect(),
            });
        }
        extras.push(ExtraTensor {
            name: "optim.step".into(),
            logical_dims: vec![],
            data: vec![self.step as f32],
        });
        extras
    }

    /// Rebuilds moments from checkpoint extras; missing tensors are zeros.
    pub fn from_extras(store: &ParamStore<S>, extras: &[ExtraTensor]) -> Self {
        let mut state = Self::new(store);
        for e in extras {
            if e.name == "optim.step" {
                state.step = e.data.first().copied().unwrap_or(0.0) as u64;
                continue;
            }
            let (base, which) = match e.name.rsplit_once('.') {
                Some((b, "m")) => (b, 0),
                Some((b, "v")) => (b, 1),
                _ => continue,
            };
            if let Some(slot) = store.id(base) {
                let dst = if which == 0 {
                    &mut state.m[slot]
                } else {
                    &mut state.v[slot]
                };
                if e.data.len() == dst.numel() {
                    for (o, &v) in dst.data_mut().iter_mut().zip(e.data.iter()) {
                        *o = S::from64(v as f64);
                    }
                }
            }
        }
        state
    }
}

/// One update: bias-corrected adaptive moments, with the weight-decay term
/// applied directly to the parameter (decoupled from the gradient step):
/// `theta <- theta - lr*wd*theta - lr * m_hat / (sqrt(v_hat) + eps)`.
/// Parameters without gradients keep decaying moments and still receive
/// weight decay.
pub fn optimizer_step<S: Scalar>(
    store: &mut ParamStore<S>,
    grads: &Gradients<S>,
    state: &mut OptimizerState<S>,
    hyper: &OptimHyper,
    lr: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let b1 = S::from64(hyper.beta1);
    let b2 = S::from64(hyper.beta2);
    let one_m_b1 = S::one() - b1;
    let one_m_b2 = S::one() - b2;
    let bc1 = S::one() - S::from64(hyper.beta1.powi(t));
    let bc2 = S::one() - S::from64(hyper.beta2.powi(t));
    let eps = S::from64(hyper.eps);
    let lr_s = S::from64(lr);
    let decay = S::from64(lr * hyper.weight_decay);

    for slot in 0..store.len() {
        let grad = grads.get(slot);
        let m = &mut state.m[slot];
        let v = &mut state.v[slot];
        let theta = store.get_mut(slot);
        for i in 0..theta.numel() {
            let g = grad.map_or(S::zero(), |g| g.data()[i]);
            let mi = b1 * m.data()[i] + one_m_b1 * g;
            let vi = b2 * v.data()[i] + one_m_b2 * g * g;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            let p = theta.data()[i];
            theta.data_mut()[i] = p - decay * p - lr_s * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
