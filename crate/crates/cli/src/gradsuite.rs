//! The gradient verification suite: central-difference checks (fp64,
//! step 1e-4) for every differentiable kernel in isolation and through the
//! composite blocks up to the full toy network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rganet_attention::{
    ada_forward, bias_table_len, dha_forward, window_attention, AdaVars, AttentionVars, DhaVars,
    FfnVars, LnVars,
};
use rganet_network::{cross_gate, forward, init_params, AlignVars, CrossGateVars, ModelConfig};
use rganet_tensor::{gradcheck, BuildFn, Tensor4, Var};
use rganet_training::loss_total_on_tape;

pub const FD_STEP: f64 = 1e-4;
pub const TOL_ISOLATED: f64 = 1e-5;
pub const TOL_COMPOSITE: f64 = 1e-3;
pub const TOL_LOSS: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckOutcome {
    pub name: String,
    pub err: f64,
    pub tol: f64,
}

impl GradCheckOutcome {
    pub fn passed(&self) -> bool {
        self.err <= self.tol
    }
}

fn rt(rng: &mut ChaCha8Rng, dims: (usize, usize, usize, usize), lo: f64, hi: f64) -> Tensor4<f64> {
    let (n, c, h, w) = dims;
    let data = (0..n * c * h * w).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor4::from_vec(n, c, h, w, data).unwrap()
}

fn run(name: &str, tol: f64, inputs: &[Tensor4<f64>], build: BuildFn<'_>) -> GradCheckOutcome {
    let err = gradcheck(build, inputs, FD_STEP).expect("gradcheck closure failed");
    GradCheckOutcome {
        name: name.to_string(),
        err,
        tol,
    }
}

// Compact parameter builders: tensors in a fixed order plus a mapping from
// gradcheck leaves back to the var structs.

fn attn_tensors(rng: &mut ChaCha8Rng, c: usize, grid: (usize, usize), heads: usize) -> Vec<Tensor4<f64>> {
    let l = bias_table_len(grid.0, grid.1);
    vec![
        rt(rng, (1, 1, c, c), -0.4, 0.4),
        rt(rng, (1, 1, 1, c), -0.4, 0.4),
        rt(rng, (1, 1, c, c), -0.4, 0.4),
        rt(rng, (1, 1, 1, c), -0.4, 0.4),
        rt(rng, (1, 1, c, c), -0.4, 0.4),
        rt(rng, (1, 1, 1, c), -0.4, 0.4),
        rt(rng, (1, 1, c, c), -0.4, 0.4),
        rt(rng, (1, 1, 1, c), -0.4, 0.4),
        rt(rng, (1, 1, l, heads), -0.4, 0.4),
    ]
}

fn attn_vars(v: &[Var], c: usize, grid: (usize, usize), heads: usize) -> AttentionVars {
    AttentionVars {
        wq: v[0],
        bq: v[1],
        wk: v[2],
        bk: v[3],
        wv: v[4],
        bv: v[5],
        wo: v[6],
        bo: v[7],
        bias_table: v[8],
        heads,
        head_dim: c / heads,
        grid,
    }
}

fn ada_tensors(rng: &mut ChaCha8Rng, c: usize, heads: usize) -> Vec<Tensor4<f64>> {
    let mut out = Vec::new();
    for _ in 0..3 {
        out.push(rt(rng, (1, 1, 1, c), 0.5, 1.5));
        out.push(rt(rng, (1, 1, 1, c), -0.3, 0.3));
    }
    out.extend(attn_tensors(rng, c, (4, 4), heads));
    out.extend(attn_tensors(rng, c, (4, 4), heads));
    let e = 4 * c;
    out.push(rt(rng, (e, c, 1, 1), -0.4, 0.4));
    out.push(rt(rng, (1, 1, 1, e), -0.4, 0.4));
    out.push(rt(rng, (e, 1, 3, 3), -0.4, 0.4));
    out.push(rt(rng, (1, 1, 1, e), -0.4, 0.4));
    out.push(rt(rng, (c, 2 * c, 1, 1), -0.4, 0.4));
    out.push(rt(rng, (1, 1, 1, c), -0.4, 0.4));
    out
}

fn ada_vars(v: &[Var], c: usize, heads: usize) -> AdaVars {
    AdaVars {
        block_size: (4, 4),
        grid_size: (4, 4),
        ln_block: LnVars { gamma: v[0], beta: v[1] },
        ln_grid: LnVars { gamma: v[2], beta: v[3] },
        ln_ffn: LnVars { gamma: v[4], beta: v[5] },
        block: attn_vars(&v[6..15], c, (4, 4), heads),
        grid: attn_vars(&v[15..24], c, (4, 4), heads),
        ffn: FfnVars {
            w_expand: v[24],
            b_expand: v[25],
            w_depthwise: v[26],
            b_depthwise: v[27],
            w_project: v[28],
            b_project: v[29],
        },
    }
}

fn isolated_ops(results: &mut Vec<GradCheckOutcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let x = rt(&mut rng, (1, 2, 5, 6), -1.0, 1.0);
    let w = rt(&mut rng, (3, 2, 3, 3), -1.0, 1.0);
    let b = rt(&mut rng, (1, 1, 1, 3), -1.0, 1.0);
    results.push(run("conv2d", TOL_ISOLATED, &[x.clone(), w, b.clone()], &|t, v| {
        let y = t.conv2d(v[0], v[1], v[2], 2, 1)?;
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));

    let wt = rt(&mut rng, (2, 3, 2, 2), -1.0, 1.0);
    results.push(run(
        "conv_transpose2d",
        TOL_ISOLATED,
        &[x.clone(), wt, b.clone()],
        &|t, v| {
            let y = t.conv_transpose2d(v[0], v[1], v[2], 2)?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
    ));

    let wd = rt(&mut rng, (2, 1, 3, 3), -1.0, 1.0);
    let bd = rt(&mut rng, (1, 1, 1, 2), -1.0, 1.0);
    results.push(run(
        "depthwise_conv2d",
        TOL_ISOLATED,
        &[x.clone(), wd, bd],
        &|t, v| {
            let y = t.depthwise_conv2d(v[0], v[1], v[2], 1)?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
    ));

    let gamma = rt(&mut rng, (1, 1, 1, 2), 0.5, 1.5);
    let beta = rt(&mut rng, (1, 1, 1, 2), -0.5, 0.5);
    results.push(run(
        "layer_norm",
        TOL_ISOLATED,
        &[x.clone(), gamma, beta],
        &|t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
    ));

    results.push(run("softmax", TOL_ISOLATED, &[x.clone()], &|t, v| {
        let y = t.softmax_lastdim(v[0]);
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));

    let lw = rt(&mut rng, (1, 1, 4, 6), -1.0, 1.0);
    let lb = rt(&mut rng, (1, 1, 1, 4), -1.0, 1.0);
    results.push(run("linear", TOL_ISOLATED, &[x.clone(), lw, lb], &|t, v| {
        let y = t.linear(v[0], v[1], v[2])?;
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));

    let a = rt(&mut rng, (2, 2, 3, 4), -1.0, 1.0);
    let bm = rt(&mut rng, (2, 2, 4, 5), -1.0, 1.0);
    results.push(run("bmm", TOL_ISOLATED, &[a, bm], &|t, v| {
        let y = t.bmm(v[0], v[1], false, false)?;
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));

    results.push(run("gelu", TOL_ISOLATED, &[x.clone()], &|t, v| {
        let y = t.gelu(v[0]);
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));

    results.push(run("sigmoid", TOL_ISOLATED, &[x.clone()], &|t, v| {
        let y = t.sigmoid(v[0]);
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));

    let swr = rt(&mut rng, (1, 1, 3, 2), -1.0, 1.0);
    let swi = rt(&mut rng, (1, 1, 3, 2), -1.0, 1.0);
    let sbr = rt(&mut rng, (1, 1, 1, 3), -1.0, 1.0);
    let sbi = rt(&mut rng, (1, 1, 1, 3), -1.0, 1.0);
    results.push(run(
        "spectral_mix",
        TOL_ISOLATED,
        &[x, swr, swi, sbr, sbi],
        &|t, v| {
            let y = t.spectral_mix(v[0], v[1], v[2], v[3], v[4])?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
    ));
}

fn composite_blocks(results: &mut Vec<GradCheckOutcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4048);
    let c = 8;
    let heads = 1;

    // window attention over two 4x4 windows
    let mut inputs = vec![rt(&mut rng, (2, 1, 16, c), -1.0, 1.0)];
    inputs.extend(attn_tensors(&mut rng, c, (4, 4), heads));
    results.push(run("window_attention", TOL_COMPOSITE, &inputs, &|t, v| {
        let p = attn_vars(&v[1..], 8, (4, 4), 1);
        let y = window_attention(t, v[0], &p, None)?;
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));

    // DHA on 1x8x8x8: input + every parameter
    let mut inputs = vec![rt(&mut rng, (1, c, 8, 8), -1.0, 1.0)];
    inputs.push(Tensor4::scalar(0.2)); // alpha_raw
    inputs.push(rt(&mut rng, (1, 1, c, c), -0.4, 0.4));
    inputs.push(rt(&mut rng, (1, 1, c, c), -0.4, 0.4));
    inputs.push(rt(&mut rng, (1, 1, 1, c), -0.4, 0.4));
    inputs.push(rt(&mut rng, (1, 1, 1, c), -0.4, 0.4));
    inputs.extend(attn_tensors(&mut rng, c, (4, 4), heads));
    inputs.extend(attn_tensors(&mut rng, c, (4, 4), heads));
    results.push(run("dha_forward", TOL_COMPOSITE, &inputs, &|t, v| {
        let p = DhaVars {
            window: (4, 4),
            alpha_raw: v[1],
            spec_w_re: v[2],
            spec_w_im: v[3],
            spec_b_re: v[4],
            spec_b_im: v[5],
            shift: attn_vars(&v[6..15], 8, (4, 4), 1),
            local: attn_vars(&v[15..24], 8, (4, 4), 1),
        };
        let y = dha_forward(t, v[0], &p)?;
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));

    // ADA on 1x8x8x8
    let mut inputs = vec![rt(&mut rng, (1, c, 8, 8), -1.0, 1.0)];
    inputs.extend(ada_tensors(&mut rng, c, heads));
    results.push(run("ada_forward", TOL_COMPOSITE, &inputs, &|t, v| {
        let p = ada_vars(&v[1..], 8, 1);
        let y = ada_forward(t, v[0], &p)?;
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));

    // cross-gating with a conv alignment on 1x4x4x4 inputs
    let c = 4;
    let mut inputs = vec![
        rt(&mut rng, (1, c, 4, 4), -1.0, 1.0),
        rt(&mut rng, (1, c, 4, 4), -1.0, 1.0),
        rt(&mut rng, (c, c, 3, 3), -0.3, 0.3),
        rt(&mut rng, (1, 1, 1, c), -0.3, 0.3),
        rt(&mut rng, (1, 1, 1, c), 0.5, 1.5),
        rt(&mut rng, (1, 1, 1, c), -0.3, 0.3),
        rt(&mut rng, (1, 1, 1, c), 0.5, 1.5),
        rt(&mut rng, (1, 1, 1, c), -0.3, 0.3),
    ];
    inputs.extend(ada_tensors(&mut rng, c, 1));
    inputs.extend(ada_tensors(&mut rng, c, 1));
    results.push(run("cross_gate", TOL_COMPOSITE, &inputs, &|t, v| {
        let p = CrossGateVars {
            align: AlignVars::Conv {
                weight: v[2],
                bias: v[3],
            },
            ln_x: LnVars { gamma: v[4], beta: v[5] },
            ln_y: LnVars { gamma: v[6], beta: v[7] },
            ada_x: ada_vars(&v[8..38], 4, 1),
            ada_y: ada_vars(&v[38..68], 4, 1),
        };
        let y = cross_gate(t, v[0], v[1], &p)
            .map_err(|_| rganet_tensor::TensorError::invalid("cross_gate", "forward"))?;
        let sq = t.mul(y, y)?;
        Ok(t.sum_all(sq))
    }));
}

fn loss_and_network(results: &mut Vec<GradCheckOutcome>) {
    let mut rng = ChaCha8Rng::seed_from_u64(6060);

    let pred = rt(&mut rng, (1, 3, 16, 16), 0.05, 0.95);
    let target = rt(&mut rng, (1, 3, 16, 16), 0.05, 0.95);
    results.push(run("loss_total", TOL_LOSS, &[pred], &move |t, v| {
        let tv = t.constant(target.clone());
        let (total, _, _) = loss_total_on_tape(t, v[0], tv, 0.2)?;
        Ok(total)
    }));

    let cfg = ModelConfig::toy();
    let store = init_params::<f64>(&cfg, 99).expect("init");
    for (name, side) in [("network_16", 16usize), ("network_32", 32usize)] {
        let img = rt(&mut rng, (1, 3, side, side), 0.05, 0.95);
        let store_ref = &store;
        let cfg_ref = &cfg;
        results.push(run(name, TOL_COMPOSITE, &[img], &move |t, v| {
            let out = forward(t, store_ref, cfg_ref, v[0])
                .map_err(|_| rganet_tensor::TensorError::invalid("forward", "net"))?;
            let sq = t.mul(out, out)?;
            Ok(t.sum_all(sq))
        }));
    }
}

/// Runs the whole suite and returns one outcome per check.
pub fn run_gradient_suite() -> Vec<GradCheckOutcome> {
    let mut results = Vec::new();
    isolated_ops(&mut results);
    composite_blocks(&mut results);
    loss_and_network(&mut results);
    results
}
