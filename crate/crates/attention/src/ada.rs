//! Axis-decomposed attention: block attention over contiguous tiles, grid
//! attention over dilated long-range groups, and a gated depthwise FFN, each
//! behind a layer-norm residual stage.

use rganet_tensor::{Result, Scalar, Tape, Var};

use crate::attention::{window_attention, AttentionVars};
use crate::geometry;

pub const LN_EPS: f64 = 1e-6;

/// Gated feed-forward parameters: pointwise expand to `2*ratio*c`, depthwise
/// 3x3, gelu-gated product of the two halves, pointwise project back to `c`.
#[derive(Clone, Copy, Debug)]
pub struct FfnVars {
    pub w_expand: Var,
    pub b_expand: Var,
    pub w_depthwise: Var,
    pub b_depthwise: Var,
    pub w_project: Var,
    pub b_project: Var,
}

/// One layer-norm parameter pair.
#[derive(Clone, Copy, Debug)]
pub struct LnVars {
    pub gamma: Var,
    pub beta: Var,
}

/// Tape handles for one ADA layer.
#[derive(Clone, Copy, Debug)]
pub struct AdaVars {
    pub block_size: (usize, usize),
    pub grid_size: (usize, usize),
    pub ln_block: LnVars,
    pub block: AttentionVars,
    pub ln_grid: LnVars,
    pub grid: AttentionVars,
    pub ln_ffn: LnVars,
    pub ffn: FfnVars,
}

/// Attention within contiguous `p x q` tiles.
pub fn block_attention<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    block: (usize, usize),
    params: &AttentionVars,
) -> Result<Var> {
    let (p, q) = block;
    let (_, _, h, w) = tape.dims(x);
    let hp = geometry::ceil_mult(h, p);
    let wp = geometry::ceil_mult(w, q);
    let padded = if (hp, wp) != (h, w) {
        tape.gather(x, geometry::plan_pad_symmetric(tape.dims(x), hp, wp))?
    } else {
        x
    };
    let dims = tape.dims(padded);
    let tokens = tape.gather(padded, geometry::plan_window_partition(dims, p, q))?;
    let attended = window_attention(tape, tokens, params, None)?;
    let spatial = tape.gather(attended, geometry::plan_window_reverse(dims, p, q))?;
    if (hp, wp) != (h, w) {
        let plan = geometry::plan_crop(tape.dims(spatial), h, w);
        tape.gather(spatial, plan)
    } else {
        Ok(spatial)
    }
}

/// Attention across the dilated `g_h x g_w` groups (tokens sharing a
/// within-cell offset).
pub fn grid_attention<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    grid: (usize, usize),
    params: &AttentionVars,
) -> Result<Var> {
    let (gh, gw) = grid;
    let (_, _, h, w) = tape.dims(x);
    let hp = geometry::ceil_mult(h, gh);
    let wp = geometry::ceil_mult(w, gw);
    let padded = if (hp, wp) != (h, w) {
        tape.gather(x, geometry::plan_pad_symmetric(tape.dims(x), hp, wp))?
    } else {
        x
    };
    let dims = tape.dims(padded);
    let tokens = tape.gather(padded, geometry::plan_grid_partition(dims, gh, gw))?;
    let attended = window_attention(tape, tokens, params, None)?;
    let spatial = tape.gather(attended, geometry::plan_grid_reverse(dims, gh, gw))?;
    if (hp, wp) != (h, w) {
        let plan = geometry::plan_crop(tape.dims(spatial), h, w);
        tape.gather(spatial, plan)
    } else {
        Ok(spatial)
    }
}

/// Gated depthwise FFN, preserving spatial dims.
pub fn gated_ffn<S: Scalar>(tape: &mut Tape<S>, x: Var, f: &FfnVars) -> Result<Var> {
    let expanded = tape.conv2d(x, f.w_expand, f.b_expand, 1, 0)?;
    let mixed = tape.depthwise_conv2d(expanded, f.w_depthwise, f.b_depthwise, 1)?;
    let (_, c2, _, _) = tape.dims(mixed);
    let a = tape.slice_channels(mixed, 0, c2 / 2)?;
    let b = tape.slice_channels(mixed, c2 / 2, c2)?;
    let ga = tape.gelu(a);
    let gated = tape.mul(ga, b)?;
    tape.conv2d(gated, f.w_project, f.b_project, 1, 0)
}

/// The three residual stages:
/// `x1 = x + BlockAttn(LN(x))`, `x2 = x1 + GridAttn(LN(x1))`,
/// `out = x2 + FFN(LN(x2))`.
pub fn ada_forward<S: Scalar>(tape: &mut Tape<S>, x: Var, p: &AdaVars) -> Result<Var> {
    let eps = S::from64(LN_EPS);

    let n1 = tape.layer_norm(x, p.ln_block.gamma, p.ln_block.beta, eps)?;
    let b = block_attention(tape, n1, p.block_size, &p.block)?;
    let x1 = tape.add(x, b)?;

    let n2 = tape.layer_norm(x1, p.ln_grid.gamma, p.ln_grid.beta, eps)?;
    let g = grid_attention(tape, n2, p.grid_size, &p.grid)?;
    let x2 = tape.add(x1, g)?;

    let n3 = tape.layer_norm(x2, p.ln_ffn.gamma, p.ln_ffn.beta, eps)?;
    let f = gated_ffn(tape, n3, &p.ffn)?;
    tape.add(x2, f)
}
