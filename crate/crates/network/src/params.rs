//! Parameter layout, counting and deterministic initialization.
//!
//! The layout enumeration is the single source of truth for parameter names
//! and logical shapes; init, counting, binding and checkpoint validation all
//! walk it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use rganet_attention::bias_table_len;
use rganet_tensor::{ParamStore, Scalar, Tensor4};

use crate::config::ModelConfig;
use crate::NetworkError;

/// Calls `f(name, logical_dims)` for every parameter of the model.
pub fn visit_params(cfg: &ModelConfig, f: &mut dyn FnMut(String, Vec<u32>)) {
    let c0 = cfg.base_channels as u32;
    f("embed.weight".into(), vec![c0, 3, 3, 3]);
    f("embed.bias".into(), vec![c0]);

    for l in 0..cfg.levels {
        let c = cfg.channels(l);
        for b in 0..cfg.blocks_per_level[l] {
            let prefix = format!("enc{l}.block{b}");
            if cfg.use_dha {
                visit_dha(cfg, &prefix, c, f);
            } else {
                visit_attention(cfg, &format!("{prefix}.attn"), c, cfg.window, f);
            }
        }
        f(
            format!("down{l}.weight"),
            vec![2 * c as u32, c as u32, 3, 3],
        );
        f(format!("down{l}.bias"), vec![2 * c as u32]);
    }

    let cb = cfg.bottleneck_channels();
    for b in 0..cfg.bottleneck_blocks {
        let prefix = format!("mid.block{b}");
        if cfg.use_ada {
            visit_ada(cfg, &prefix, cb, f);
        } else {
            visit_attention(cfg, &format!("{prefix}.attn"), cb, cfg.window, f);
        }
    }

    for l in (0..cfg.levels).rev() {
        let c = cfg.channels(l);
        f(
            format!("up{l}.weight"),
            vec![2 * c as u32, c as u32, 2, 2],
        );
        f(format!("up{l}.bias"), vec![c as u32]);
        if cfg.use_crossgating {
            let prefix = format!("gate{l}");
            f(
                format!("{prefix}.align.weight"),
                vec![c as u32, c as u32, 3, 3],
            );
            f(format!("{prefix}.align.bias"), vec![c as u32]);
            for ln in ["ln_x", "ln_y"] {
                f(format!("{prefix}.{ln}.gamma"), vec![c as u32]);
                f(format!("{prefix}.{ln}.beta"), vec![c as u32]);
            }
            visit_ada(cfg, &format!("{prefix}.ada_x"), c, f);
            visit_ada(cfg, &format!("{prefix}.ada_y"), c, f);
        } else {
            f(
                format!("fuse{l}.weight"),
                vec![c as u32, 2 * c as u32, 1, 1],
            );
            f(format!("fuse{l}.bias"), vec![c as u32]);
        }
        for b in 0..cfg.decoder_blocks_per_level[l] {
            let prefix = format!("dec{l}.block{b}");
            if cfg.use_ada {
                visit_ada(cfg, &prefix, c, f);
            } else {
                visit_attention(cfg, &format!("{prefix}.attn"), c, cfg.window, f);
            }
        }
    }

    f("head.weight".into(), vec![3, c0, 3, 3]);
    f("head.bias".into(), vec![3]);
}

fn visit_attention(
    cfg: &ModelConfig,
    prefix: &str,
    c: usize,
    grid: (usize, usize),
    f: &mut dyn FnMut(String, Vec<u32>),
) {
    let c = c as u32;
    for name in ["wq", "wk", "wv", "wo"] {
        f(format!("{prefix}.{name}"), vec![c, c]);
    }
    for name in ["bq", "bk", "bv", "bo"] {
        f(format!("{prefix}.{name}"), vec![c]);
    }
    let heads = cfg.heads(c as usize) as u32;
    f(
        format!("{prefix}.bias_table"),
        vec![bias_table_len(grid.0, grid.1) as u32, heads],
    );
}

fn visit_dha(cfg: &ModelConfig, prefix: &str, c: usize, f: &mut dyn FnMut(String, Vec<u32>)) {
    f(format!("{prefix}.alpha_raw"), vec![]);
    visit_attention(cfg, &format!("{prefix}.shift"), c, cfg.window, f);
    visit_attention(cfg, &format!("{prefix}.local"), c, cfg.window, f);
    let c = c as u32;
    f(format!("{prefix}.spectral.w_re"), vec![c, c]);
    f(format!("{prefix}.spectral.w_im"), vec![c, c]);
    f(format!("{prefix}.spectral.b_re"), vec![c]);
    f(format!("{prefix}.spectral.b_im"), vec![c]);
}

fn visit_ada(cfg: &ModelConfig, prefix: &str, c: usize, f: &mut dyn FnMut(String, Vec<u32>)) {
    for ln in ["ln_block", "ln_grid", "ln_ffn"] {
        f(format!("{prefix}.{ln}.gamma"), vec![c as u32]);
        f(format!("{prefix}.{ln}.beta"), vec![c as u32]);
    }
    visit_attention(cfg, &format!("{prefix}.block"), c, cfg.block, f);
    visit_attention(cfg, &format!("{prefix}.grid"), c, cfg.grid, f);
    let e = (2 * cfg.ffn_ratio * c) as u32;
    let r = (cfg.ffn_ratio * c) as u32;
    let c = c as u32;
    f(format!("{prefix}.ffn.w_expand"), vec![e, c, 1, 1]);
    f(format!("{prefix}.ffn.b_expand"), vec![e]);
    f(format!("{prefix}.ffn.w_depthwise"), vec![e, 1, 3, 3]);
    f(format!("{prefix}.ffn.b_depthwise"), vec![e]);
    f(format!("{prefix}.ffn.w_project"), vec![c, r, 1, 1]);
    f(format!("{prefix}.ffn.b_project"), vec![c]);
}

/// Closed-form total parameter count (sum of the layout's shape products).
pub fn param_count(cfg: &ModelConfig) -> usize {
    let mut total = 0usize;
    visit_params(cfg, &mut |_, dims| {
        total += dims.iter().map(|&d| d as usize).product::<usize>();
    });
    total
}

/// Maps a logical shape to the rank-4 storage layout: rank 0 -> (1,1,1,1),
/// rank 1 -> (1,1,1,a), rank 2 -> (1,1,o,i), rank 4 -> itself.
pub fn physical_dims(logical: &[u32]) -> Result<(usize, usize, usize, usize), NetworkError> {
    let d: Vec<usize> = logical.iter().map(|&v| v as usize).collect();
    match d.len() {
        0 => Ok((1, 1, 1, 1)),
        1 => Ok((1, 1, 1, d[0])),
        2 => Ok((1, 1, d[0], d[1])),
        4 => Ok((d[0], d[1], d[2], d[3])),
        r => Err(NetworkError::Config {
            detail: format!("unsupported parameter rank {r}"),
        }),
    }
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Standard normal via Box-Muller, truncated to two standard deviations.
fn trunc_normal(rng: &mut ChaCha20Rng, std: f64) -> f64 {
    loop {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

/// Deterministic initialization: truncated normal (std 0.02) for projection
/// and convolution weights, ones for layer-norm gamma, zeros for biases and
/// blend parameters, and a zeroed output head so the global-residual network
/// is the identity at init. Each tensor draws from its own stream keyed by
/// (seed, name), so the result is independent of enumeration order.
pub fn init_params<S: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<S>, NetworkError> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut err = None;
    visit_params(cfg, &mut |name, logical| {
        if err.is_some() {
            return;
        }
        let (n, c, h, w) = match physical_dims(&logical) {
            Ok(d) => d,
            Err(e) => {
                err = Some(e);
                return;
            }
        };
        let numel = n * c * h * w;
        let rank = logical.len();
        let data: Vec<S> = if name == "head.weight" || name == "head.bias" {
            vec![S::zero(); numel]
        } else if name.ends_with(".gamma") {
            vec![S::one(); numel]
        } else if rank >= 2 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ fnv1a64(&name));
            (0..numel)
                .map(|_| S::from64(trunc_normal(&mut rng, 0.02)))
                .collect()
        } else {
            vec![S::zero(); numel]
        };
        let value = Tensor4::from_vec(n, c, h, w, data).expect("layout numel");
        if let Err(e) = store.insert(name, value, logical) {
            err = Some(e.into());
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(store),
    }
}
