//! Network assembly: embedding, encoder levels of dual-stream attention
//! blocks, an axis-decomposed bottleneck, cross-gated decoder levels, and
//! the output head with an optional global residual.

use rganet_attention::geometry::{ceil_mult, plan_crop, plan_pad_symmetric};
use rganet_attention::{
    ada_forward, dha_forward, local_branch, shifted_branch, AdaVars, AttentionVars, DhaVars,
    FfnVars, LnVars,
};
use rganet_tensor::{ops, ParamStore, Scalar, Tape, Tensor4, Var};

use crate::config::ModelConfig;
use crate::gating::{cross_gate, AlignVars, CrossGateVars};
use crate::NetworkError;

fn pvar<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    name: &str,
) -> Result<Var, NetworkError> {
    let id = store.id(name).ok_or_else(|| NetworkError::Usage {
        detail: format!("parameter {name} missing from store"),
    })?;
    Ok(tape.param(store, id))
}

fn bind_attention<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    prefix: &str,
    heads: usize,
    head_dim: usize,
    grid: (usize, usize),
) -> Result<AttentionVars, NetworkError> {
    Ok(AttentionVars {
        wq: pvar(tape, store, &format!("{prefix}.wq"))?,
        bq: pvar(tape, store, &format!("{prefix}.bq"))?,
        wk: pvar(tape, store, &format!("{prefix}.wk"))?,
        bk: pvar(tape, store, &format!("{prefix}.bk"))?,
        wv: pvar(tape, store, &format!("{prefix}.wv"))?,
        bv: pvar(tape, store, &format!("{prefix}.bv"))?,
        wo: pvar(tape, store, &format!("{prefix}.wo"))?,
        bo: pvar(tape, store, &format!("{prefix}.bo"))?,
        bias_table: pvar(tape, store, &format!("{prefix}.bias_table"))?,
        heads,
        head_dim,
        grid,
    })
}

fn bind_dha<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    prefix: &str,
    cfg: &ModelConfig,
    c: usize,
) -> Result<DhaVars, NetworkError> {
    let heads = cfg.heads(c);
    Ok(DhaVars {
        window: cfg.window,
        alpha_raw: pvar(tape, store, &format!("{prefix}.alpha_raw"))?,
        shift: bind_attention(
            tape,
            store,
            &format!("{prefix}.shift"),
            heads,
            cfg.head_dim,
            cfg.window,
        )?,
        local: bind_attention(
            tape,
            store,
            &format!("{prefix}.local"),
            heads,
            cfg.head_dim,
            cfg.window,
        )?,
        spec_w_re: pvar(tape, store, &format!("{prefix}.spectral.w_re"))?,
        spec_w_im: pvar(tape, store, &format!("{prefix}.spectral.w_im"))?,
        spec_b_re: pvar(tape, store, &format!("{prefix}.spectral.b_re"))?,
        spec_b_im: pvar(tape, store, &format!("{prefix}.spectral.b_im"))?,
    })
}

fn bind_ln<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    prefix: &str,
) -> Result<LnVars, NetworkError> {
    Ok(LnVars {
        gamma: pvar(tape, store, &format!("{prefix}.gamma"))?,
        beta: pvar(tape, store, &format!("{prefix}.beta"))?,
    })
}

fn bind_ada<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    prefix: &str,
    cfg: &ModelConfig,
    c: usize,
) -> Result<AdaVars, NetworkError> {
    let heads = cfg.heads(c);
    Ok(AdaVars {
        block_size: cfg.block,
        grid_size: cfg.grid,
        ln_block: bind_ln(tape, store, &format!("{prefix}.ln_block"))?,
        block: bind_attention(
            tape,
            store,
            &format!("{prefix}.block"),
            heads,
            cfg.head_dim,
            cfg.block,
        )?,
        ln_grid: bind_ln(tape, store, &format!("{prefix}.ln_grid"))?,
        grid: bind_attention(
            tape,
            store,
            &format!("{prefix}.grid"),
            heads,
            cfg.head_dim,
            cfg.grid,
        )?,
        ln_ffn: bind_ln(tape, store, &format!("{prefix}.ln_ffn"))?,
        ffn: FfnVars {
            w_expand: pvar(tape, store, &format!("{prefix}.ffn.w_expand"))?,
            b_expand: pvar(tape, store, &format!("{prefix}.ffn.b_expand"))?,
            w_depthwise: pvar(tape, store, &format!("{prefix}.ffn.w_depthwise"))?,
            b_depthwise: pvar(tape, store, &format!("{prefix}.ffn.b_depthwise"))?,
            w_project: pvar(tape, store, &format!("{prefix}.ffn.w_project"))?,
            b_project: pvar(tape, store, &format!("{prefix}.ffn.b_project"))?,
        },
    })
}

fn bind_gate<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    level: usize,
    cfg: &ModelConfig,
    c: usize,
) -> Result<CrossGateVars, NetworkError> {
    let prefix = format!("gate{level}");
    Ok(CrossGateVars {
        align: AlignVars::Conv {
            weight: pvar(tape, store, &format!("{prefix}.align.weight"))?,
            bias: pvar(tape, store, &format!("{prefix}.align.bias"))?,
        },
        ln_x: bind_ln(tape, store, &format!("{prefix}.ln_x"))?,
        ln_y: bind_ln(tape, store, &format!("{prefix}.ln_y"))?,
        ada_x: bind_ada(tape, store, &format!("{prefix}.ada_x"), cfg, c)?,
        ada_y: bind_ada(tape, store, &format!("{prefix}.ada_y"), cfg, c)?,
    })
}

/// 3x3 stride-1 embedding of an RGB image into `base_channels` features.
pub fn embed<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    image: Var,
) -> Result<Var, NetworkError> {
    let (_, c, _, _) = tape.dims(image);
    if c != 3 {
        return Err(NetworkError::Tensor(rganet_tensor::TensorError::shape(
            "embed",
            format!("expected 3 input channels, got {c}"),
        )));
    }
    let w = pvar(tape, store, "embed.weight")?;
    let b = pvar(tape, store, "embed.bias")?;
    Ok(tape.conv2d(image, w, b, 1, 1)?)
}

/// 3x3 stride-2 conv halving spatial dims and doubling channels. Odd inputs
/// are reflect-padded to even first.
pub fn downsample<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    weight: Var,
    bias: Var,
) -> Result<Var, NetworkError> {
    let (_, _, h, w) = tape.dims(x);
    let (he, we) = (ceil_mult(h, 2), ceil_mult(w, 2));
    let x = if (he, we) != (h, w) {
        let plan = plan_pad_symmetric(tape.dims(x), he, we);
        tape.gather(x, plan)?
    } else {
        x
    };
    Ok(tape.conv2d(x, weight, bias, 2, 1)?)
}

/// 2x2 stride-2 transpose conv doubling spatial dims and halving channels.
pub fn upsample<S: Scalar>(
    tape: &mut Tape<S>,
    x: Var,
    weight: Var,
    bias: Var,
) -> Result<Var, NetworkError> {
    Ok(tape.conv_transpose2d(x, weight, bias, 2)?)
}

fn encoder_block<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    cfg: &ModelConfig,
    prefix: &str,
    c: usize,
    x: Var,
) -> Result<Var, NetworkError> {
    if cfg.use_dha {
        let vars = bind_dha(tape, store, prefix, cfg, c)?;
        Ok(dha_forward(tape, x, &vars)?)
    } else {
        let vars = bind_attention(
            tape,
            store,
            &format!("{prefix}.attn"),
            cfg.heads(c),
            cfg.head_dim,
            cfg.window,
        )?;
        Ok(shifted_branch(tape, x, cfg.window, &vars)?)
    }
}

fn decoder_block<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    cfg: &ModelConfig,
    prefix: &str,
    c: usize,
    x: Var,
) -> Result<Var, NetworkError> {
    if cfg.use_ada {
        let vars = bind_ada(tape, store, prefix, cfg, c)?;
        Ok(ada_forward(tape, x, &vars)?)
    } else {
        let vars = bind_attention(
            tape,
            store,
            &format!("{prefix}.attn"),
            cfg.heads(c),
            cfg.head_dim,
            cfg.window,
        )?;
        Ok(local_branch(tape, x, cfg.window, &vars)?)
    }
}

/// Full forward pass. Input is `(n, 3, h, w)` in `[0,1]` with
/// `h, w >= 2^levels`; the output is the unclamped restored image of the
/// same dims (clamping is applied at inference only).
pub fn forward<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    cfg: &ModelConfig,
    image: Var,
) -> Result<Var, NetworkError> {
    cfg.validate()?;
    let (_, _, h, w) = tape.dims(image);
    let factor = 1usize << cfg.levels;
    if h < factor || w < factor {
        return Err(NetworkError::Config {
            detail: format!(
                "spatial dims {h}x{w} too small for {} levels (need >= {factor})",
                cfg.levels
            ),
        });
    }
    let (hp, wp) = (ceil_mult(h, factor), ceil_mult(w, factor));
    let padded = if (hp, wp) != (h, w) {
        let plan = plan_pad_symmetric(tape.dims(image), hp, wp);
        tape.gather(image, plan)?
    } else {
        image
    };

    let mut f = embed(tape, store, padded)?;
    let mut skips = Vec::with_capacity(cfg.levels);
    for l in 0..cfg.levels {
        let c = cfg.channels(l);
        for b in 0..cfg.blocks_per_level[l] {
            f = encoder_block(tape, store, cfg, &format!("enc{l}.block{b}"), c, f)?;
        }
        skips.push(f);
        let dw = pvar(tape, store, &format!("down{l}.weight"))?;
        let db = pvar(tape, store, &format!("down{l}.bias"))?;
        f = downsample(tape, f, dw, db)?;
    }

    let cb = cfg.bottleneck_channels();
    for b in 0..cfg.bottleneck_blocks {
        f = decoder_block(tape, store, cfg, &format!("mid.block{b}"), cb, f)?;
    }

    for l in (0..cfg.levels).rev() {
        let c = cfg.channels(l);
        let uw = pvar(tape, store, &format!("up{l}.weight"))?;
        let ub = pvar(tape, store, &format!("up{l}.bias"))?;
        f = upsample(tape, f, uw, ub)?;
        if cfg.use_crossgating {
            let gate = bind_gate(tape, store, l, cfg, c)?;
            f = cross_gate(tape, skips[l], f, &gate)?;
        } else {
            let fw = pvar(tape, store, &format!("fuse{l}.weight"))?;
            let fb = pvar(tape, store, &format!("fuse{l}.bias"))?;
            let cat = tape.concat_channels(skips[l], f)?;
            f = tape.conv2d(cat, fw, fb, 1, 0)?;
        }
        for b in 0..cfg.decoder_blocks_per_level[l] {
            f = decoder_block(tape, store, cfg, &format!("dec{l}.block{b}"), c, f)?;
        }
    }

    let hw = pvar(tape, store, "head.weight")?;
    let hb = pvar(tape, store, "head.bias")?;
    let mut out = tape.conv2d(f, hw, hb, 1, 1)?;
    if cfg.global_residual {
        out = tape.add(out, padded)?;
    }
    if (hp, wp) != (h, w) {
        let plan = plan_crop(tape.dims(out), h, w);
        out = tape.gather(out, plan)?;
    }
    Ok(out)
}

/// Inference: forward on a throwaway tape, clamped to `[0,1]`.
pub fn infer<S: Scalar>(
    store: &ParamStore<S>,
    cfg: &ModelConfig,
    image: &Tensor4<S>,
) -> Result<Tensor4<S>, NetworkError> {
    let mut tape = Tape::new();
    let v = tape.constant(image.clone());
    let out = forward(&mut tape, store, cfg, v)?;
    Ok(ops::clamp(tape.value(out), S::zero(), S::one()))
}
