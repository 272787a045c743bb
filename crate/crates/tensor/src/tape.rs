//! Wengert-list reverse-mode differentiation over rank-4 tensors.
//!
//! Operations record their output value, parent references and a
//! vector-Jacobian-product rule onto a [`Tape`]; [`Tape::backward`] replays
//! the list in reverse, visiting each node exactly once. Nodes are appended
//! in topological order by construction, and gradient accumulation follows
//! node/parent order, so backward passes are bit-deterministic.

use std::sync::Arc;

use crate::error::TensorError;
use crate::fft;
use crate::ops;
use crate::params::{Gradients, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Dims4, Tensor4};
use crate::Result;

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Arguments handed to a [`GradFn`] during the backward sweep.
pub struct BackwardArgs<'a, S> {
    /// Gradient of the loss with respect to this node's output.
    pub grad: &'a Tensor4<S>,
    /// Parent values, in parent order.
    pub inputs: &'a [&'a Tensor4<S>],
    /// This node's forward output.
    pub output: &'a Tensor4<S>,
    /// Which parent gradients are actually needed.
    pub needs: &'a [bool],
}

/// Per-operation vector-Jacobian product.
pub trait GradFn<S: Scalar>: Send + Sync {
    fn backward(&self, args: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>>;
}

struct Node<S: Scalar> {
    value: Tensor4<S>,
    parents: Vec<Var>,
    grad_fn: Option<Box<dyn GradFn<S>>>,
    requires_grad: bool,
    param: Option<usize>,
}

/// Recorded forward computation.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

/// Gradients per tape node, produced by [`Tape::backward`]. Interior node
/// gradients are dropped as soon as they have been consumed; leaf gradients
/// are retained.
pub struct BackwardResult<S> {
    grads: Vec<Option<Tensor4<S>>>,
}

impl<S: Scalar> BackwardResult<S> {
    pub fn grad(&self, v: Var) -> Option<&Tensor4<S>> {
        self.grads[v.0].as_ref()
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor4<S> {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> Dims4 {
        self.nodes[v.0].value.dims()
    }

    fn push(
        &mut self,
        value: Tensor4<S>,
        parents: Vec<Var>,
        grad_fn: Option<Box<dyn GradFn<S>>>,
        param: Option<usize>,
        requires_grad: bool,
    ) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            grad_fn,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(
        &mut self,
        value: Tensor4<S>,
        parents: Vec<Var>,
        grad_fn: Box<dyn GradFn<S>>,
    ) -> Var {
        let requires = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(value, parents, Some(grad_fn), None, requires)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, value: Tensor4<S>) -> Var {
        self.push(value, Vec::new(), None, None, true)
    }

    /// Non-differentiable leaf (targets, masks, fixed kernels).
    pub fn constant(&mut self, value: Tensor4<S>) -> Var {
        self.push(value, Vec::new(), None, None, false)
    }

    pub fn scalar_const(&mut self, v: S) -> Var {
        self.constant(Tensor4::scalar(v))
    }

    /// Leaf bound to a parameter slot; its gradient is collected by
    /// [`Tape::collect_param_grads`].
    pub fn param(&mut self, store: &ParamStore<S>, id: usize) -> Var {
        self.push(
            store.get(id).value.clone(),
            Vec::new(),
            None,
            Some(id),
            true,
        )
    }

    // -- elementwise ------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::add(self.value(a), self.value(b))?;
        Ok(self.push_op(v, vec![a, b], Box::new(AddFn)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::sub(self.value(a), self.value(b))?;
        Ok(self.push_op(v, vec![a, b], Box::new(SubFn)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::mul(self.value(a), self.value(b))?;
        Ok(self.push_op(v, vec![a, b], Box::new(MulFn)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = ops::div(self.value(a), self.value(b))?;
        Ok(self.push_op(v, vec![a, b], Box::new(DivFn)))
    }

    /// `k*x + m` with constant coefficients.
    pub fn affine(&mut self, x: Var, k: S, m: S) -> Var {
        let v = ops::affine(self.value(x), k, m);
        self.push_op(v, vec![x], Box::new(AffineFn { k }))
    }

    pub fn scale(&mut self, x: Var, k: S) -> Var {
        self.affine(x, k, S::zero())
    }

    /// Adds a batch-1 tensor to every batch slice.
    pub fn add_bias_n(&mut self, x: Var, b: Var) -> Result<Var> {
        let v = ops::add_bias_n(self.value(x), self.value(b))?;
        Ok(self.push_op(v, vec![x, b], Box::new(AddBiasNFn)))
    }

    /// Multiplies a tensor by a `(1,1,1,1)` scalar node, broadcast.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).scalar_value()?;
        let v = ops::affine(self.value(x), sv, S::zero());
        Ok(self.push_op(v, vec![x, s], Box::new(MulScalarFn)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = ops::sigmoid(self.value(x));
        self.push_op(v, vec![x], Box::new(SigmoidFn))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let v = ops::gelu(self.value(x));
        self.push_op(v, vec![x], Box::new(GeluFn))
    }

    // -- structured -------------------------------------------------------

    pub fn softmax_lastdim(&mut self, x: Var) -> Var {
        let v = ops::softmax_lastdim(self.value(x));
        self.push_op(v, vec![x], Box::new(SoftmaxFn))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: S) -> Result<Var> {
        let v = ops::layer_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push_op(v, vec![x, gamma, beta], Box::new(LayerNormFn { eps })))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let v = ops::linear(self.value(x), self.value(w), Some(self.value(b)))?;
        Ok(self.push_op(v, vec![x, w, b], Box::new(LinearFn)))
    }

    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let v = ops::bmm(self.value(a), self.value(b), ta, tb)?;
        Ok(self.push_op(v, vec![a, b], Box::new(BmmFn { ta, tb })))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let v = ops::conv2d(self.value(x), self.value(w), Some(self.value(b)), stride, pad)?;
        Ok(self.push_op(v, vec![x, w, b], Box::new(Conv2dFn { stride, pad })))
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let v =
            ops::conv_transpose2d(self.value(x), self.value(w), Some(self.value(b)), stride)?;
        Ok(self.push_op(v, vec![x, w, b], Box::new(ConvT2dFn { stride })))
    }

    pub fn depthwise_conv2d(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Result<Var> {
        let v =
            ops::depthwise_conv2d(self.value(x), self.value(w), Some(self.value(b)), pad)?;
        Ok(self.push_op(v, vec![x, w, b], Box::new(DwConvFn { pad })))
    }

    pub fn spectral_mix(
        &mut self,
        x: Var,
        w_re: Var,
        w_im: Var,
        b_re: Var,
        b_im: Var,
    ) -> Result<Var> {
        let v = fft::spectral_mix(
            self.value(x),
            self.value(w_re),
            self.value(w_im),
            self.value(b_re),
            self.value(b_im),
        )?;
        Ok(self.push_op(v, vec![x, w_re, w_im, b_re, b_im], Box::new(SpectralFn)))
    }

    /// Pure data movement: `out[k] = in[plan.map[k]]`. The backward pass is
    /// the matching scatter-add, so any padding / partition / shift built as
    /// a gather differentiates exactly.
    pub fn gather(&mut self, x: Var, plan: Arc<GatherPlan>) -> Result<Var> {
        let v = plan.apply(self.value(x))?;
        Ok(self.push_op(v, vec![x], Box::new(GatherFn { plan })))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let ca = self.value(a).c();
        let v = ops::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push_op(v, vec![a, b], Box::new(ConcatCFn { ca })))
    }

    pub fn slice_channels(&mut self, x: Var, c0: usize, c1: usize) -> Result<Var> {
        let v = ops::slice_channels(self.value(x), c0, c1)?;
        Ok(self.push_op(v, vec![x], Box::new(SliceCFn { c0, c1 })))
    }

    // -- reductions -------------------------------------------------------

    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = Tensor4::scalar(ops::sum_all(self.value(x)));
        self.push_op(v, vec![x], Box::new(SumAllFn))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let v = Tensor4::scalar(ops::mean_all(self.value(x)));
        self.push_op(v, vec![x], Box::new(MeanAllFn))
    }

    // -- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar loss node. Every reachable differentiable
    /// node receives exactly one gradient; leaves keep theirs in the result.
    pub fn backward(&self, loss: Var) -> Result<BackwardResult<S>> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                numel: loss_node.value.numel(),
            });
        }
        let mut grads: Vec<Option<Tensor4<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor4::scalar(S::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || grads[i].is_none() {
                continue;
            }
            let Some(grad_fn) = node.grad_fn.as_ref() else {
                continue; // leaf: keep gradient
            };
            let grad = grads[i].take().unwrap();
            let inputs: Vec<&Tensor4<S>> =
                node.parents.iter().map(|p| &self.nodes[p.0].value).collect();
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|p| self.nodes[p.0].requires_grad)
                .collect();
            let contribs = grad_fn.backward(BackwardArgs {
                grad: &grad,
                inputs: &inputs,
                output: &node.value,
                needs: &needs,
            });
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (p, contrib) in node.parents.iter().zip(contribs) {
                if let Some(contrib) = contrib {
                    debug_assert_eq!(contrib.dims(), self.nodes[p.0].value.dims());
                    match &mut grads[p.0] {
                        Some(g) => g.add_assign(&contrib),
                        slot @ None => *slot = Some(contrib),
                    }
                }
            }
        }
        Ok(BackwardResult { grads })
    }

    /// Folds leaf gradients into parameter-slot gradients.
    pub fn collect_param_grads(
        &self,
        result: &BackwardResult<S>,
        n_slots: usize,
    ) -> Gradients<S> {
        let mut out = Gradients::zeros(n_slots);
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Some(slot), Some(g)) = (node.param, result.grads[i].as_ref()) {
                out.accumulate(slot, g);
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Gather plans
// ---------------------------------------------------------------------------

/// Precomputed index map for a pure data-movement operation.
#[derive(Clone, Debug)]
pub struct GatherPlan {
    pub in_dims: Dims4,
    pub out_dims: Dims4,
    /// For each output element (row-major), the source index in the input.
    pub map: Vec<u32>,
}

impl GatherPlan {
    pub fn new(in_dims: Dims4, out_dims: Dims4, map: Vec<u32>) -> Self {
        let out_numel = out_dims.0 * out_dims.1 * out_dims.2 * out_dims.3;
        let in_numel = in_dims.0 * in_dims.1 * in_dims.2 * in_dims.3;
        assert_eq!(map.len(), out_numel, "gather map length mismatch");
        debug_assert!(map.iter().all(|&m| (m as usize) < in_numel));
        GatherPlan {
            in_dims,
            out_dims,
            map,
        }
    }

    pub fn apply<S: Scalar>(&self, x: &Tensor4<S>) -> Result<Tensor4<S>> {
        if x.dims() != self.in_dims {
            return Err(TensorError::shape(
                "gather",
                format!("input dims {:?} vs plan {:?}", x.dims(), self.in_dims),
            ));
        }
        let (n, c, h, w) = self.out_dims;
        let src = x.data();
        let data = self.map.iter().map(|&i| src[i as usize]).collect();
        Tensor4::from_vec(n, c, h, w, data)
    }

    pub fn scatter_add<S: Scalar>(&self, grad: &Tensor4<S>) -> Tensor4<S> {
        let (n, c, h, w) = self.in_dims;
        let mut out = Tensor4::zeros(n, c, h, w);
        let data = out.data_mut();
        for (&i, &g) in self.map.iter().zip(grad.data().iter()) {
            data[i as usize] = data[i as usize] + g;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// VJP implementations
// ---------------------------------------------------------------------------

fn take_if<S: Scalar>(need: bool, f: impl FnOnce() -> Tensor4<S>) -> Option<Tensor4<S>> {
    if need {
        Some(f())
    } else {
        None
    }
}

struct AddFn;
impl<S: Scalar> GradFn<S> for AddFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![
            take_if(a.needs[0], || a.grad.clone()),
            take_if(a.needs[1], || a.grad.clone()),
        ]
    }
}

struct SubFn;
impl<S: Scalar> GradFn<S> for SubFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![
            take_if(a.needs[0], || a.grad.clone()),
            take_if(a.needs[1], || ops::affine(a.grad, -S::one(), S::zero())),
        ]
    }
}

struct MulFn;
impl<S: Scalar> GradFn<S> for MulFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![
            take_if(a.needs[0], || ops::mul(a.grad, a.inputs[1]).unwrap()),
            take_if(a.needs[1], || ops::mul(a.grad, a.inputs[0]).unwrap()),
        ]
    }
}

struct DivFn;
impl<S: Scalar> GradFn<S> for DivFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let da = take_if(a.needs[0], || ops::div(a.grad, a.inputs[1]).unwrap());
        let db = take_if(a.needs[1], || {
            // d/db (a/b) = -y/b
            let gy = ops::mul(a.grad, a.output).unwrap();
            let q = ops::div(&gy, a.inputs[1]).unwrap();
            ops::affine(&q, -S::one(), S::zero())
        });
        vec![da, db]
    }
}

struct AffineFn<S> {
    k: S,
}
impl<S: Scalar> GradFn<S> for AffineFn<S> {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![take_if(a.needs[0], || {
            ops::affine(a.grad, self.k, S::zero())
        })]
    }
}

struct AddBiasNFn;
impl<S: Scalar> GradFn<S> for AddBiasNFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let db = take_if(a.needs[1], || {
            let (n, c, h, w) = a.grad.dims();
            let chw = c * h * w;
            let mut out = Tensor4::zeros(1, c, h, w);
            for i in 0..n {
                let src = &a.grad.data()[i * chw..(i + 1) * chw];
                for (o, &g) in out.data_mut().iter_mut().zip(src) {
                    *o = *o + g;
                }
            }
            out
        });
        vec![take_if(a.needs[0], || a.grad.clone()), db]
    }
}

struct MulScalarFn;
impl<S: Scalar> GradFn<S> for MulScalarFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let s = a.inputs[1].data()[0];
        let dx = take_if(a.needs[0], || ops::affine(a.grad, s, S::zero()));
        let ds = take_if(a.needs[1], || {
            let p = ops::mul(a.grad, a.inputs[0]).unwrap();
            Tensor4::scalar(ops::sum_all(&p))
        });
        vec![dx, ds]
    }
}

struct SigmoidFn;
impl<S: Scalar> GradFn<S> for SigmoidFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![take_if(a.needs[0], || {
            let mut out = a.grad.clone();
            for (g, &y) in out.data_mut().iter_mut().zip(a.output.data()) {
                *g = *g * y * (S::one() - y);
            }
            out
        })]
    }
}

struct GeluFn;
impl<S: Scalar> GradFn<S> for GeluFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![take_if(a.needs[0], || {
            let mut out = a.grad.clone();
            for (g, &x) in out.data_mut().iter_mut().zip(a.inputs[0].data()) {
                *g = *g * ops::gelu_grad_scalar(x);
            }
            out
        })]
    }
}

struct SoftmaxFn;
impl<S: Scalar> GradFn<S> for SoftmaxFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![take_if(a.needs[0], || {
            ops::softmax_lastdim_vjp(a.output, a.grad)
        })]
    }
}

struct LayerNormFn<S> {
    eps: S,
}
impl<S: Scalar> GradFn<S> for LayerNormFn<S> {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let (dx, dg, db) = ops::layer_norm_vjp(a.inputs[0], a.inputs[1], self.eps, a.grad);
        vec![
            a.needs[0].then_some(dx),
            a.needs[1].then_some(dg),
            a.needs[2].then_some(db),
        ]
    }
}

struct LinearFn;
impl<S: Scalar> GradFn<S> for LinearFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let (dx, dw, db) = ops::linear_vjp(a.inputs[0], a.inputs[1], a.grad);
        vec![
            a.needs[0].then_some(dx),
            a.needs[1].then_some(dw),
            a.needs[2].then_some(db),
        ]
    }
}

struct BmmFn {
    ta: bool,
    tb: bool,
}
impl<S: Scalar> GradFn<S> for BmmFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let (lhs, rhs, g) = (a.inputs[0], a.inputs[1], a.grad);
        let da = take_if(a.needs[0], || {
            if self.ta {
                ops::bmm(rhs, g, self.tb, true).unwrap()
            } else {
                ops::bmm(g, rhs, false, !self.tb).unwrap()
            }
        });
        let db = take_if(a.needs[1], || {
            if self.tb {
                ops::bmm(g, lhs, true, self.ta).unwrap()
            } else {
                ops::bmm(lhs, g, !self.ta, false).unwrap()
            }
        });
        vec![da, db]
    }
}

struct Conv2dFn {
    stride: usize,
    pad: usize,
}
impl<S: Scalar> GradFn<S> for Conv2dFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let x = a.inputs[0];
        let w = a.inputs[1];
        let dx = take_if(a.needs[0], || {
            ops::conv2d_vjp_input(a.grad, w, self.stride, self.pad, x.h(), x.w())
        });
        let dw = take_if(a.needs[1], || {
            ops::conv2d_vjp_weight(x, a.grad, self.stride, self.pad, w.h(), w.w())
        });
        let db = take_if(a.needs[2], || {
            let s = ops::conv2d_vjp_bias(a.grad);
            reshape_like(s, a.inputs[2])
        });
        vec![dx, dw, db]
    }
}

struct ConvT2dFn {
    stride: usize,
}
impl<S: Scalar> GradFn<S> for ConvT2dFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let x = a.inputs[0];
        let w = a.inputs[1];
        let dx = take_if(a.needs[0], || {
            ops::conv_transpose2d_vjp_input(a.grad, w, self.stride, x.h(), x.w())
        });
        let dw = take_if(a.needs[1], || {
            ops::conv_transpose2d_vjp_weight(x, a.grad, self.stride, w.h(), w.w())
        });
        let db = take_if(a.needs[2], || {
            let s = ops::conv2d_vjp_bias(a.grad);
            reshape_like(s, a.inputs[2])
        });
        vec![dx, dw, db]
    }
}

struct DwConvFn {
    pad: usize,
}
impl<S: Scalar> GradFn<S> for DwConvFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let (dx, dw, db) = ops::depthwise_conv2d_vjp(a.inputs[0], a.inputs[1], self.pad, a.grad);
        vec![
            a.needs[0].then_some(dx),
            a.needs[1].then_some(dw),
            a.needs[2].then(|| reshape_like(db, a.inputs[2])),
        ]
    }
}

struct SpectralFn;
impl<S: Scalar> GradFn<S> for SpectralFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let (dx, dwr, dwi, dbr, dbi) =
            fft::spectral_mix_vjp(a.inputs[0], a.inputs[1], a.inputs[2], a.grad);
        vec![
            a.needs[0].then_some(dx),
            a.needs[1].then_some(dwr),
            a.needs[2].then_some(dwi),
            a.needs[3].then(|| reshape_like(dbr, a.inputs[3])),
            a.needs[4].then(|| reshape_like(dbi, a.inputs[4])),
        ]
    }
}

struct GatherFn {
    plan: Arc<GatherPlan>,
}
impl<S: Scalar> GradFn<S> for GatherFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![take_if(a.needs[0], || self.plan.scatter_add(a.grad))]
    }
}

struct ConcatCFn {
    ca: usize,
}
impl<S: Scalar> GradFn<S> for ConcatCFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        let c = a.grad.c();
        vec![
            take_if(a.needs[0], || {
                ops::slice_channels(a.grad, 0, self.ca).unwrap()
            }),
            take_if(a.needs[1], || {
                ops::slice_channels(a.grad, self.ca, c).unwrap()
            }),
        ]
    }
}

struct SliceCFn {
    c0: usize,
    c1: usize,
}
impl<S: Scalar> GradFn<S> for SliceCFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![take_if(a.needs[0], || {
            let n = a.grad.n();
            let mut out = a.inputs[0].zeros_like();
            for ni in 0..n {
                for ci in self.c0..self.c1 {
                    out.plane_mut(ni, ci)
                        .copy_from_slice(a.grad.plane(ni, ci - self.c0));
                }
            }
            out
        })]
    }
}

struct SumAllFn;
impl<S: Scalar> GradFn<S> for SumAllFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![take_if(a.needs[0], || {
            let (n, c, h, w) = a.inputs[0].dims();
            Tensor4::filled(n, c, h, w, a.grad.data()[0])
        })]
    }
}

struct MeanAllFn;
impl<S: Scalar> GradFn<S> for MeanAllFn {
    fn backward(&self, a: BackwardArgs<'_, S>) -> Vec<Option<Tensor4<S>>> {
        vec![take_if(a.needs[0], || {
            let (n, c, h, w) = a.inputs[0].dims();
            let k = a.grad.data()[0] / S::from64(a.inputs[0].numel() as f64);
            Tensor4::filled(n, c, h, w, k)
        })]
    }
}

/// Bias gradients come back as `(1,1,1,len)`; reshape to the parent's actual
/// degenerate layout so accumulation matches.
fn reshape_like<S: Scalar>(t: Tensor4<S>, like: &Tensor4<S>) -> Tensor4<S> {
    let (n, c, h, w) = like.dims();
    t.reshaped(n, c, h, w).expect("bias gradient numel mismatch")
}
