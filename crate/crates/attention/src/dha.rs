//! Dual-stream hybrid attention: a learnable sigmoid blend of a
//! shifted-window branch (augmented with a global spectral path) and a plain
//! local-window branch.

use rganet_tensor::{Result, Scalar, Tape, Var};

use crate::attention::{window_attention, AttentionVars};
use crate::geometry;

/// Tape handles for one DHA layer.
#[derive(Clone, Copy, Debug)]
pub struct DhaVars {
    pub window: (usize, usize),
    /// Raw blend parameter; the blend coefficient is `sigmoid(alpha_raw)`.
    pub alpha_raw: Var,
    pub shift: AttentionVars,
    pub local: AttentionVars,
    pub spec_w_re: Var,
    pub spec_w_im: Var,
    pub spec_b_re: Var,
    pub spec_b_im: Var,
}

/// Frequency-domain branch: FFT per channel, complex 1x1 channel mixing at
/// every frequency, inverse FFT, real part.
pub fn spectral_branch<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    w_re: Var,
    w_im: Var,
    b_re: Var,
    b_im: Var,
) -> Result<Var> {
    tape.spectral_mix(x, w_re, w_im, b_re, b_im)
}

/// Pads to window multiples, applies `f`, crops back.
fn with_window_padding<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    m: usize,
    n: usize,
    f: impl FnOnce(&mut Tape<S>, Var, usize, usize) -> Result<Var>,
) -> Result<Var> {
    let (_, _, h, w) = tape.dims(x);
    let hp = geometry::ceil_mult(h, m);
    let wp = geometry::ceil_mult(w, n);
    let padded = if (hp, wp) != (h, w) {
        tape.gather(x, geometry::plan_pad_symmetric(tape.dims(x), hp, wp))?
    } else {
        x
    };
    let y = f(tape, padded, hp, wp)?;
    if (hp, wp) != (h, w) {
        let plan = geometry::plan_crop(tape.dims(y), h, w);
        tape.gather(y, plan)
    } else {
        Ok(y)
    }
}

/// Local branch: plain window attention, no shift, no mask.
pub fn local_branch<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    window: (usize, usize),
    params: &AttentionVars,
) -> Result<Var> {
    let (m, n) = window;
    with_window_padding(tape, x, m, n, |tape, xp, _, _| {
        let dims = tape.dims(xp);
        let tokens = tape.gather(xp, geometry::plan_window_partition(dims, m, n))?;
        let attended = window_attention(tape, tokens, params, None)?;
        tape.gather(attended, geometry::plan_window_reverse(dims, m, n))
    })
}

/// Shifted branch without the spectral path: cyclic shift, masked window
/// attention, inverse shift. Degenerates to the unshifted computation when
/// the window covers a whole axis.
pub fn shifted_branch<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    window: (usize, usize),
    params: &AttentionVars,
) -> Result<Var> {
    let (m, n) = window;
    with_window_padding(tape, x, m, n, |tape, xp, hp, wp| {
        let sr = geometry::effective_shift(hp, m);
        let sc = geometry::effective_shift(wp, n);
        let dims = tape.dims(xp);
        let shifted = if sr > 0 || sc > 0 {
            tape.gather(xp, geometry::plan_cyclic_shift(dims, sr, sc))?
        } else {
            xp
        };
        let tokens = tape.gather(shifted, geometry::plan_window_partition(dims, m, n))?;
        let mask = if sr > 0 || sc > 0 {
            Some(geometry::shift_attention_mask::<S>(hp, wp, m, n))
        } else {
            None
        };
        let attended = window_attention(tape, tokens, params, mask.as_ref())?;
        let spatial = tape.gather(attended, geometry::plan_window_reverse(dims, m, n))?;
        if sr > 0 || sc > 0 {
            tape.gather(
                spatial,
                geometry::plan_cyclic_shift(dims, hp - sr, wp - sc),
            )
        } else {
            Ok(spatial)
        }
    })
}

/// Full DHA forward: `sigmoid(alpha) * (shifted + spectral) + (1 - sigmoid(alpha)) * local`.
/// Spatial dims are preserved for any input size.
pub fn dha_forward<S: Scalar>(tape: &mut Tape<S>, x: Var, p: &DhaVars) -> Result<Var> {
    let shift_attn = shifted_branch(tape, x, p.window, &p.shift)?;
    let spectral = spectral_branch(tape, x, p.spec_w_re, p.spec_w_im, p.spec_b_re, p.spec_b_im)?;
    let b_shift = tape.add(shift_attn, spectral)?;
    let b_local = local_branch(tape, x, p.window, &p.local)?;

    let alpha = tape.sigmoid(p.alpha_raw);
    let one_minus = tape.affine(alpha, -S::one(), S::one());
    let lhs = tape.mul_scalar(b_shift, alpha)?;
    let rhs = tape.mul_scalar(b_local, one_minus)?;
    tape.add(lhs, rhs)
}
