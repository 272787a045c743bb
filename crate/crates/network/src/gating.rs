//! Reciprocal cross-gating skip fusion: encoder and decoder features each
//! produce a sigmoid gate (through an axis-decomposed attention block) that
//! modulates the other, and the fused output sums both gated and ungated
//! pathways.

use rganet_attention::{ada_forward, AdaVars, LnVars};
use rganet_tensor::{Result, Scalar, Tape, TensorError, Var};

/// Dimension alignment for the decoder feature (Eq.-style: transpose conv
/// when coming from a coarser scale, a plain conv at the same scale, or
/// identity for already-aligned callers).
#[derive(Clone, Copy, Debug)]
pub enum AlignVars {
    Identity,
    /// 3x3 conv, padding 1 (same scale).
    Conv { weight: Var, bias: Var },
    /// 2x2 stride-2 transpose conv (one level coarser).
    Deconv { weight: Var, bias: Var },
}

/// Tape handles for one cross-gating block.
#[derive(Clone, Copy, Debug)]
pub struct CrossGateVars {
    pub align: AlignVars,
    pub ln_x: LnVars,
    pub ln_y: LnVars,
    pub ada_x: AdaVars,
    pub ada_y: AdaVars,
}

pub const LN_EPS: f64 = rganet_attention::ada::LN_EPS;

/// The fusion arithmetic alone, with externally supplied gates:
/// `x*gy + y_hat*gx + x + y_hat`.
pub fn cross_gate_fuse<S: Scalar>(
    tape: &mut Tape<S>,
    x_enc: Var,
    y_hat: Var,
    gx: Var,
    gy: Var,
) -> Result<Var> {
    let x_mod = tape.mul(x_enc, gy)?;
    let y_mod = tape.mul(y_hat, gx)?;
    let gated = tape.add(x_mod, y_mod)?;
    let plain = tape.add(x_enc, y_hat)?;
    tape.add(gated, plain)
}

/// Full cross-gating block: align the decoder feature, derive both gates
/// through layer-normed ADA blocks, and fuse reciprocally.
pub fn cross_gate<S: Scalar>(
    tape: &mut Tape<S>,
    x_enc: Var,
    y_dec: Var,
    p: &CrossGateVars,
) -> Result<Var> {
    let y_hat = match p.align {
        AlignVars::Identity => y_dec,
        AlignVars::Conv { weight, bias } => tape.conv2d(y_dec, weight, bias, 1, 1)?,
        AlignVars::Deconv { weight, bias } => tape.conv_transpose2d(y_dec, weight, bias, 2)?,
    };
    if tape.dims(y_hat) != tape.dims(x_enc) {
        return Err(TensorError::shape(
            "cross_gate",
            format!(
                "aligned decoder dims {:?} vs encoder {:?}",
                tape.dims(y_hat),
                tape.dims(x_enc)
            ),
        ));
    }
    let eps = S::from64(LN_EPS);

    let nx = tape.layer_norm(x_enc, p.ln_x.gamma, p.ln_x.beta, eps)?;
    let ax = ada_forward(tape, nx, &p.ada_x)?;
    let gx = tape.sigmoid(ax);

    let ny = tape.layer_norm(y_hat, p.ln_y.gamma, p.ln_y.beta, eps)?;
    let ay = ada_forward(tape, ny, &p.ada_y)?;
    let gy = tape.sigmoid(ay);

    cross_gate_fuse(tape, x_enc, y_hat, gx, gy)
}
