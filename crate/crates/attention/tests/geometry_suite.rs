//! Partition / shift / mask geometry against index-enumeration oracles.

use rganet_attention::geometry as geo;
use rganet_tensor::{Tape, Tensor4};
use rganet_testkit as tk;

fn iota(n: usize, c: usize, h: usize, w: usize) -> Tensor4<f64> {
    Tensor4::from_vec(n, c, h, w, (0..n * c * h * w).map(|i| i as f64).collect()).unwrap()
}

#[test]
fn window_partition_single_window_is_row_major_flatten() {
    let x = iota(1, 1, 2, 3);
    let plan = geo::plan_window_partition(x.dims(), 2, 3);
    let tokens = plan.apply(&x).unwrap();
    assert_eq!(tokens.dims(), (1, 1, 6, 1));
    assert_eq!(tokens.data(), x.data());
}

#[test]
fn window_partition_enumerated_example() {
    let x = iota(1, 1, 4, 4);
    let plan = geo::plan_window_partition(x.dims(), 2, 2);
    let tokens = plan.apply(&x).unwrap();
    assert_eq!(tokens.dims(), (4, 1, 4, 1));
    assert_eq!(tokens.plane(0, 0), &[0.0, 1.0, 4.0, 5.0]);
    assert_eq!(tokens.plane(1, 0), &[2.0, 3.0, 6.0, 7.0]);
    assert_eq!(tokens.plane(2, 0), &[8.0, 9.0, 12.0, 13.0]);
    assert_eq!(tokens.plane(3, 0), &[10.0, 11.0, 14.0, 15.0]);
}

#[test]
fn window_round_trip_with_padding_is_identity() {
    let mut rng = tk::rng(40);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 3, 7, 5), -1.0, 1.0);
    let (m, n) = (4, 4);
    let hp = geo::ceil_mult(7, m);
    let wp = geo::ceil_mult(5, n);
    let padded = geo::plan_pad_symmetric(x.dims(), hp, wp).apply(&x).unwrap();
    let tokens = geo::plan_window_partition(padded.dims(), m, n)
        .apply(&padded)
        .unwrap();
    let back = geo::plan_window_reverse(padded.dims(), m, n)
        .apply(&tokens)
        .unwrap();
    assert_eq!(back, padded);
    let cropped = geo::plan_crop(back.dims(), 7, 5).apply(&back).unwrap();
    assert_eq!(cropped, x);
}

#[test]
fn cyclic_shift_example_and_inverse() {
    let x = Tensor4::from_vec(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let shifted = geo::plan_cyclic_shift(x.dims(), 1, 1).apply(&x).unwrap();
    assert_eq!(shifted.data(), &[4.0, 3.0, 2.0, 1.0]);

    let zero = geo::plan_cyclic_shift(x.dims(), 0, 0).apply(&x).unwrap();
    assert_eq!(zero, x);

    let mut rng = tk::rng(41);
    let y: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 2, 5, 7), -1.0, 1.0);
    let s = geo::plan_cyclic_shift(y.dims(), 2, 3).apply(&y).unwrap();
    let back = geo::plan_cyclic_shift(y.dims(), 5 - 2, 7 - 3).apply(&s).unwrap();
    assert_eq!(back, y);
}

#[test]
fn grid_partition_dilated_example_and_whole_map_case() {
    let x = iota(1, 1, 4, 4);
    let plan = geo::plan_grid_partition(x.dims(), 2, 2);
    let tokens = plan.apply(&x).unwrap();
    // 4 groups (one per within-cell offset), 4 tokens each
    assert_eq!(tokens.dims(), (4, 1, 4, 1));
    // group for offset (0,0): positions (0,0), (0,2), (2,0), (2,2)
    assert_eq!(tokens.plane(0, 0), &[0.0, 2.0, 8.0, 10.0]);

    // whole-map grid attention is G_h = h, G_w = w: one group, all tokens
    let whole = geo::plan_grid_partition(x.dims(), 4, 4).apply(&x).unwrap();
    assert_eq!(whole.dims(), (1, 1, 16, 1));
    assert_eq!(whole.data(), x.data());
}

#[test]
fn grid_round_trip_is_identity() {
    let mut rng = tk::rng(42);
    for (h, w, gh, gw) in [(4, 4, 2, 2), (8, 12, 4, 4), (6, 10, 3, 5), (9, 9, 9, 9)] {
        let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 3, h, w), -1.0, 1.0);
        let tokens = geo::plan_grid_partition(x.dims(), gh, gw).apply(&x).unwrap();
        let back = geo::plan_grid_reverse(x.dims(), gh, gw).apply(&tokens).unwrap();
        assert_eq!(back, x);
    }
}

#[test]
fn head_split_merge_round_trip() {
    let mut rng = tk::rng(43);
    let x: Tensor4<f64> = tk::rand_tensor(&mut rng, (3, 1, 5, 8), -1.0, 1.0);
    let split = geo::plan_split_heads(3, 5, 8, 2).apply(&x).unwrap();
    assert_eq!(split.dims(), (3, 2, 5, 4));
    assert_eq!(split.at(2, 1, 3, 2), x.at(2, 0, 3, 6));
    let merged = geo::plan_merge_heads(3, 5, 8, 2).apply(&split).unwrap();
    assert_eq!(merged, x);
}

#[test]
fn shift_mask_zero_cases() {
    // no shift possible: window covers the whole (padded) map
    let m: Tensor4<f64> = geo::shift_attention_mask(4, 4, 4, 4);
    assert!(m.data().iter().all(|&v| v == 0.0));
    // one window per axis but shifted axis only horizontally
    let m2: Tensor4<f64> = geo::shift_attention_mask(2, 8, 2, 2);
    // vertical axis has no shift; horizontal does, so some pairs are masked
    assert!(m2.data().iter().any(|&v| v != 0.0));
}

#[test]
fn shift_mask_matches_region_oracle() {
    // Brute-force oracle: label every post-shift cell with the 3x3 band id of
    // its pre-shift source, then forbid cross-region pairs.
    let (h, w, m, n) = (4usize, 4usize, 2usize, 2usize);
    let (sr, sc) = (1usize, 1usize);
    let band = |i: usize, len: usize, win: usize, s: usize| -> u32 {
        if i < len - win {
            0
        } else if i < len - s {
            1
        } else {
            2
        }
    };
    let mask: Tensor4<f64> = geo::shift_attention_mask(h, w, m, n);
    assert_eq!(mask.dims(), (4, 1, 4, 4));
    for wy in 0..h / m {
        for wx in 0..w / n {
            let wi = wy * (w / n) + wx;
            let mut ids = vec![0u32; m * n];
            for ty in 0..m {
                for tx in 0..n {
                    let y = wy * m + ty;
                    let x = wx * n + tx;
                    let (sy, sx) = ((y + sr) % h, (x + sc) % w);
                    ids[ty * n + tx] = band(sy, h, m, sr) * 3 + band(sx, w, n, sc);
                }
            }
            for i in 0..m * n {
                for j in 0..m * n {
                    let got = mask.at(wi, 0, i, j);
                    if ids[i] == ids[j] {
                        assert_eq!(got, 0.0, "window {wi} pair ({i},{j})");
                    } else {
                        assert!(got <= -1e8, "window {wi} pair ({i},{j})");
                    }
                }
            }
        }
    }
    // diagonal is always unmasked
    for wi in 0..4 {
        for i in 0..4 {
            assert_eq!(mask.at(wi, 0, i, i), 0.0);
        }
    }
}

#[test]
fn padding_round_trip_sweep_exact() {
    // pad -> window partition -> reverse -> crop is the identity for every
    // spatial size in [1, 33] with the toy 4x4 window.
    let mut rng = tk::rng(44);
    for h in 1..=33usize {
        for w in 1..=33usize {
            let x: Tensor4<f32> = tk::rand_tensor(&mut rng, (1, 2, h, w), -1.0, 1.0);
            let hp = geo::ceil_mult(h, 4);
            let wp = geo::ceil_mult(w, 4);
            let padded = geo::plan_pad_symmetric(x.dims(), hp, wp).apply(&x).unwrap();
            let tokens = geo::plan_window_partition(padded.dims(), 4, 4)
                .apply(&padded)
                .unwrap();
            let back = geo::plan_window_reverse(padded.dims(), 4, 4)
                .apply(&tokens)
                .unwrap();
            let crop = geo::plan_crop(back.dims(), h, w).apply(&back).unwrap();
            assert_eq!(crop, x, "h={h} w={w}");
        }
    }
}

#[test]
fn gather_plans_differentiate_through_tape() {
    // padding duplicates sources, so the scatter-add adjoint accumulates
    let x = Tensor4::from_vec(1, 1, 1, 2, vec![3.0_f64, 5.0]).unwrap();
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let plan = geo::plan_pad_symmetric(x.dims(), 1, 4);
    let padded = tape.gather(v, plan).unwrap();
    assert_eq!(tape.value(padded).data(), &[3.0, 5.0, 5.0, 3.0]);
    let loss = tape.sum_all(padded);
    let res = tape.backward(loss).unwrap();
    assert_eq!(res.grad(v).unwrap().data(), &[2.0, 2.0]);
}
