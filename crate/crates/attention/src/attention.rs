//! Multi-head self-attention over token groups with a learned relative
//! position bias: `Softmax(Q K^T / sqrt(d) + B_rel + mask) V`.

use rganet_tensor::{Result, Scalar, Tape, Tensor4, TensorError, Var};

use crate::geometry;

/// Tape handles for one attention layer's parameters.
///
/// `grid` is the token-grid shape (window `m x n`, block `p x q` or grid
/// `g_h x g_w`) that sizes the relative-position bias table.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub bias_table: Var,
    pub heads: usize,
    pub head_dim: usize,
    pub grid: (usize, usize),
}

/// Length of the relative-position bias table for an `m x n` token grid.
pub fn bias_table_len(m: usize, n: usize) -> usize {
    (2 * m - 1) * (2 * n - 1)
}

/// Attention over token groups `(groups, 1, tokens, c)`.
///
/// `mask`, when present, holds one `(tokens, tokens)` additive mask per
/// window position (`(n_windows, 1, tokens, tokens)`); groups cycle through
/// windows in order, i.e. group `g` uses mask `g % n_windows`.
pub fn window_attention<S: Scalar>(
    tape: &mut Tape<S>,
    tokens: Var,
    p: &AttentionVars,
    mask: Option<&Tensor4<S>>,
) -> Result<Var> {
    let (groups, one, t_count, c) = tape.dims(tokens);
    if one != 1 {
        return Err(TensorError::shape(
            "window_attention",
            format!("expected token groups (g,1,t,c), got {:?}", tape.dims(tokens)),
        ));
    }
    if p.heads * p.head_dim != c {
        return Err(TensorError::shape(
            "window_attention",
            format!("heads {} * head_dim {} != channels {}", p.heads, p.head_dim, c),
        ));
    }
    if p.grid.0 * p.grid.1 != t_count {
        return Err(TensorError::shape(
            "window_attention",
            format!("grid {:?} does not cover {} tokens", p.grid, t_count),
        ));
    }

    let q = tape.linear(tokens, p.wq, p.bq)?;
    let k = tape.linear(tokens, p.wk, p.bk)?;
    let v = tape.linear(tokens, p.wv, p.bv)?;

    let split = geometry::plan_split_heads(groups, t_count, c, p.heads);
    let qh = tape.gather(q, split.clone())?;
    let kh = tape.gather(k, split.clone())?;
    let vh = tape.gather(v, split)?;

    let scores = tape.bmm(qh, kh, false, true)?;
    let scale = S::one() / S::from64(p.head_dim as f64).sqrt();
    let scores = tape.scale(scores, scale);

    let bias = {
        let plan = geometry::plan_bias_gather(p.grid.0, p.grid.1, p.heads);
        tape.gather(p.bias_table, plan)?
    };
    let mut scores = tape.add_bias_n(scores, bias)?;

    if let Some(mask) = mask {
        let n_windows = mask.n();
        if groups % n_windows != 0 {
            return Err(TensorError::shape(
                "window_attention",
                format!("{groups} groups not a multiple of {n_windows} masks"),
            ));
        }
        let mut expanded = Tensor4::zeros(groups, p.heads, t_count, t_count);
        for g in 0..groups {
            let src = mask.plane(g % n_windows, 0);
            for hd in 0..p.heads {
                expanded.plane_mut(g, hd).copy_from_slice(src);
            }
        }
        let mask_c = tape.constant(expanded);
        scores = tape.add(scores, mask_c)?;
    }

    let probs = tape.softmax_lastdim(scores);
    let ctx = tape.bmm(probs, vh, false, false)?;
    let merged = tape.gather(
        ctx,
        geometry::plan_merge_heads(groups, t_count, c, p.heads),
    )?;
    tape.linear(merged, p.wo, p.bo)
}
