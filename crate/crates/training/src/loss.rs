//! Composite objective: mean squared error plus a weighted structural term,
//! `total = L2 + lambda * (1 - SSIM)` with lambda defaulting to 0.2.

use serde::{Deserialize, Serialize};

use rganet_tensor::{Result, Scalar, Tape, Tensor4, Var};

use crate::ssim::ssim_mean_on_tape;

pub const DEFAULT_LAMBDA: f64 = 0.2;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l2: f64,
    pub ssim_term: f64,
    pub total: f64,
    pub lambda: f64,
}

/// Scalar nodes for (total, l2, ssim_term); differentiable through `pred`.
pub fn loss_total_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    pred: Var,
    target: Var,
    lambda: f64,
) -> Result<(Var, Var, Var)> {
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    let l2 = tape.mean_all(sq);
    let ssim = ssim_mean_on_tape(tape, pred, target)?;
    let ssim_term = tape.affine(ssim, -S::one(), S::one());
    let weighted = tape.scale(ssim_term, S::from64(lambda));
    let total = tape.add(l2, weighted)?;
    Ok((total, l2, ssim_term))
}

/// Loss values only (no gradients).
pub fn loss_total<S: Scalar>(
    pred: &Tensor4<S>,
    target: &Tensor4<S>,
    lambda: f64,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let t = tape.constant(target.clone());
    let (total, l2, ssim_term) = loss_total_on_tape(&mut tape, p, t, lambda)?;
    Ok(LossBreakdown {
        l2: tape.value(l2).scalar_value()?.as64(),
        ssim_term: tape.value(ssim_term).scalar_value()?.as64(),
        total: tape.value(total).scalar_value()?.as64(),
        lambda,
    })
}
