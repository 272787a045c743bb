//! Gradient checks for every differentiable tape operation in isolation.

use std::sync::Arc;

use rand::Rng;
use rganet_tensor::{gradcheck, GatherPlan, ParamStore, Tape, Tensor4, Var};
use rganet_testkit as tk;

const STEP: f64 = 1e-4;

#[test]
fn backward_of_sum_is_ones() {
    let mut rng = tk::rng(20);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 3, 4, 5), -1.0, 1.0);
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let loss = tape.sum_all(v);
    let res = tape.backward(loss).unwrap();
    let g = res.grad(v).unwrap();
    assert!(g.data().iter().all(|&v| v == 1.0));
}

#[test]
fn backward_requires_scalar_loss() {
    let mut tape = Tape::<f64>::new();
    let v = tape.leaf(Tensor4::zeros(1, 1, 2, 2));
    assert!(tape.backward(v).is_err());
}

#[test]
fn unused_parameter_gets_no_gradient() {
    let mut store = ParamStore::<f64>::new();
    store
        .insert("used", Tensor4::scalar(2.0), vec![])
        .unwrap();
    store
        .insert("unused", Tensor4::scalar(3.0), vec![])
        .unwrap();
    let mut tape = Tape::new();
    let used = tape.param(&store, store.id("used").unwrap());
    let _unused = tape.param(&store, store.id("unused").unwrap());
    let loss = tape.mul(used, used).unwrap();
    let res = tape.backward(loss).unwrap();
    let grads = tape.collect_param_grads(&res, store.len());
    assert!(grads.get(store.id("used").unwrap()).is_some());
    assert!(grads.get(store.id("unused").unwrap()).is_none());
}

#[test]
fn gradcheck_quadratic_is_nearly_exact() {
    let mut rng = tk::rng(21);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 3, 3), -1.0, 1.0);
    let err = gradcheck(
        &|tape, vars| {
            let sq = tape.mul(vars[0], vars[0])?;
            Ok(tape.sum_all(sq))
        },
        &[x],
        STEP,
    )
    .unwrap();
    assert!(err <= 1e-8, "quadratic gradcheck err {err}");
}

fn check(build: rganet_tensor::BuildFn<'_>, inputs: &[Tensor4<f64>], tol: f64, what: &str) {
    let err = gradcheck(build, inputs, STEP).unwrap();
    assert!(err <= tol, "{what}: gradcheck err {err} > {tol}");
}

#[test]
fn elementwise_ops_gradcheck() {
    let mut rng = tk::rng(22);
    let a: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 2, 3, 3), -1.0, 1.0);
    let b: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 2, 3, 3), 0.5, 1.5);
    check(
        &|t, v| {
            let s = t.add(v[0], v[1])?;
            let m = t.mul(s, v[0])?;
            Ok(t.mean_all(m))
        },
        &[a.clone(), b.clone()],
        1e-5,
        "add/mul",
    );
    check(
        &|t, v| {
            let d = t.div(v[0], v[1])?;
            let s = t.sub(d, v[1])?;
            let sq = t.mul(s, s)?;
            Ok(t.sum_all(sq))
        },
        &[a.clone(), b.clone()],
        1e-5,
        "div/sub",
    );
    check(
        &|t, v| {
            let y = t.affine(v[0], -1.7, 0.3);
            Ok(t.mean_all(y))
        },
        &[a.clone()],
        1e-8,
        "affine",
    );
    check(
        &|t, v| {
            let g = t.gelu(v[0]);
            let sq = t.mul(g, g)?;
            Ok(t.sum_all(sq))
        },
        &[a.clone()],
        1e-5,
        "gelu",
    );
    check(
        &|t, v| {
            let s = t.sigmoid(v[0]);
            let sq = t.mul(s, s)?;
            Ok(t.sum_all(sq))
        },
        &[a],
        1e-5,
        "sigmoid",
    );
}

#[test]
fn broadcast_ops_gradcheck() {
    let mut rng = tk::rng(23);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (3, 2, 2, 4), -1.0, 1.0);
    let b: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 2, 2, 4), -1.0, 1.0);
    let s: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, 1), -1.0, 1.0);
    check(
        &|t, v| {
            let y = t.add_bias_n(v[0], v[1])?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
        &[x.clone(), b],
        1e-5,
        "add_bias_n",
    );
    check(
        &|t, v| {
            let y = t.mul_scalar(v[0], v[1])?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
        &[x, s],
        1e-5,
        "mul_scalar",
    );
}

#[test]
fn softmax_and_layer_norm_gradcheck() {
    let mut rng = tk::rng(24);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 2, 3, 5), -2.0, 2.0);
    let tgt: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 2, 3, 5), 0.0, 1.0);
    let tgt2 = tgt.clone();
    check(
        &move |t, v| {
            let y = t.softmax_lastdim(v[0]);
            let c = t.constant(tgt2.clone());
            let d = t.sub(y, c)?;
            let sq = t.mul(d, d)?;
            Ok(t.sum_all(sq))
        },
        &[x.clone()],
        1e-5,
        "softmax",
    );

    let gamma: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, 2), 0.5, 1.5);
    let beta: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, 2), -0.5, 0.5);
    check(
        &|t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
        &[x, gamma, beta],
        1e-5,
        "layer_norm",
    );
}

#[test]
fn linear_and_bmm_gradcheck() {
    let mut rng = tk::rng(25);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 1, 4, 3), -1.0, 1.0);
    let w: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 5, 3), -1.0, 1.0);
    let b: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, 5), -1.0, 1.0);
    check(
        &|t, v| {
            let y = t.linear(v[0], v[1], v[2])?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
        &[x, w, b],
        1e-5,
        "linear",
    );

    for (ta, tb) in [(false, false), (false, true), (true, false), (true, true)] {
        let a_dims = if ta { (2, 2, 4, 3) } else { (2, 2, 3, 4) };
        let b_dims = if tb { (2, 2, 5, 4) } else { (2, 2, 4, 5) };
        let av: Tensor4<f64> = tk::rand_tensor(&mut rng, a_dims, -1.0, 1.0);
        let bv: Tensor4<f64> = tk::rand_tensor(&mut rng, b_dims, -1.0, 1.0);
        check(
            &move |t, v| {
                let y = t.bmm(v[0], v[1], ta, tb)?;
                let sq = t.mul(y, y)?;
                Ok(t.sum_all(sq))
            },
            &[av, bv],
            1e-5,
            "bmm",
        );
    }
}

#[test]
fn conv_ops_gradcheck() {
    let mut rng = tk::rng(26);
    // conv2d, including the stated example loss sum(conv(x,w)^2)/2
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 2, 5, 6), -1.0, 1.0);
    let w: Tensor4<f64> = tk::rand_tensor(&mut rng, (3, 2, 3, 3), -1.0, 1.0);
    let b: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, 3), -1.0, 1.0);
    check(
        &|t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 2, 1)?;
            let sq = t.mul(y, y)?;
            let s = t.sum_all(sq);
            Ok(t.affine(s, 0.5, 0.0))
        },
        &[x.clone(), w, b],
        1e-5,
        "conv2d",
    );

    let wt: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 3, 2, 2), -1.0, 1.0);
    let bt: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, 3), -1.0, 1.0);
    check(
        &|t, v| {
            let y = t.conv_transpose2d(v[0], v[1], v[2], 2)?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
        &[x.clone(), wt, bt],
        1e-5,
        "conv_transpose2d",
    );

    let wd: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 1, 3, 3), -1.0, 1.0);
    let bd: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, 2), -1.0, 1.0);
    check(
        &|t, v| {
            let y = t.depthwise_conv2d(v[0], v[1], v[2], 1)?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
        &[x, wd, bd],
        1e-5,
        "depthwise_conv2d",
    );
}

#[test]
fn spectral_mix_gradcheck() {
    let mut rng = tk::rng(27);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 2, 4, 5), -1.0, 1.0);
    let wr: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 3, 2), -1.0, 1.0);
    let wi: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 3, 2), -1.0, 1.0);
    let br: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, 3), -1.0, 1.0);
    let bi: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, 3), -1.0, 1.0);
    check(
        &|t, v| {
            let y = t.spectral_mix(v[0], v[1], v[2], v[3], v[4])?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
        &[x, wr, wi, br, bi],
        1e-5,
        "spectral_mix",
    );
}

#[test]
fn gather_concat_slice_gradcheck() {
    let mut rng = tk::rng(28);
    let in_dims = (1, 2, 3, 4);
    let out_dims = (1, 1, 6, 5);
    let in_numel = 24;
    let map: Vec<u32> = (0..30)
        .map(|_| rng.gen_range(0..in_numel as u32))
        .collect();
    let plan = Arc::new(GatherPlan::new(in_dims, out_dims, map));
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, in_dims, -1.0, 1.0);
    let plan2 = plan.clone();
    check(
        &move |t: &mut Tape<f64>, v: &[Var]| {
            let y = t.gather(v[0], plan2.clone())?;
            let sq = t.mul(y, y)?;
            Ok(t.sum_all(sq))
        },
        &[x.clone()],
        1e-5,
        "gather",
    );

    let b: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 3, 4), -1.0, 1.0);
    check(
        &|t, v| {
            let y = t.concat_channels(v[0], v[1])?;
            let s = t.slice_channels(y, 1, 4)?;
            let sq = t.mul(s, s)?;
            Ok(t.sum_all(sq))
        },
        &[x, b],
        1e-5,
        "concat/slice",
    );
}

#[test]
fn forward_values_are_deterministic_on_tape() {
    let mut rng = tk::rng(29);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 3, 8, 8), -1.0, 1.0);
    let w: Tensor4<f64> = tk::rand_tensor(&mut rng, (3, 3, 3, 3), -1.0, 1.0);
    let b = Tensor4::<f64>::zeros(1, 1, 1, 3);
    let run = || {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let wv = tape.leaf(w.clone());
        let bv = tape.leaf(b.clone());
        let y = tape.conv2d(xv, wv, bv, 1, 1).unwrap();
        let s = tape.softmax_lastdim(y);
        let l = tape.sum_all(s);
        let r = tape.backward(l).unwrap();
        (
            tape.value(s).clone(),
            r.grad(xv).unwrap().clone(),
            r.grad(wv).unwrap().clone(),
        )
    };
    let (a1, g1, gw1) = run();
    let (a2, g2, gw2) = run();
    assert_eq!(a1, a2);
    assert_eq!(g1, g2);
    assert_eq!(gw1, gw2);
}
