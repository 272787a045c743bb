//! Window attention against a per-pair double-loop oracle.



use rganet_testkit::builders::AttnTensors;
use rand::seq::SliceRandom;
use rganet_attention::{geometry, window_attention};
use rganet_tensor::{Tape, Tensor4};
use rganet_testkit as tk;

/// Textbook attention, one pair at a time.
fn naive_attention(
    tokens: &Tensor4<f64>,
    at: &AttnTensors,
    mask: Option<&Tensor4<f64>>,
) -> Tensor4<f64> {
    let (groups, _, t_count, c) = tokens.dims();
    let heads = at.heads;
    let d = at.head_dim;
    let rel = geometry::rel_pos_index(at.grid.0, at.grid.1);
    let proj = |w: &Tensor4<f64>, b: &Tensor4<f64>, x: &[f64]| -> Vec<f64> {
        (0..c)
            .map(|o| {
                let mut acc = b.data()[o];
                for i in 0..c {
                    acc += w.at(0, 0, o, i) * x[i];
                }
                acc
            })
            .collect()
    };
    let table = &at.tensors[8];
    let mut out = tokens.zeros_like();
    for g in 0..groups {
        let xs: Vec<Vec<f64>> = (0..t_count)
            .map(|t| (0..c).map(|i| tokens.at(g, 0, t, i)).collect())
            .collect();
        let qs: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| proj(&at.tensors[0], &at.tensors[1], x))
            .collect();
        let ks: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| proj(&at.tensors[2], &at.tensors[3], x))
            .collect();
        let vs: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| proj(&at.tensors[4], &at.tensors[5], x))
            .collect();
        let mut ctx = vec![vec![0.0; c]; t_count];
        for hd in 0..heads {
            for i in 0..t_count {
                let mut scores = vec![0.0; t_count];
                for j in 0..t_count {
                    let mut s = 0.0;
                    for k in 0..d {
                        s += qs[i][hd * d + k] * ks[j][hd * d + k];
                    }
                    s /= (d as f64).sqrt();
                    s += table.at(0, 0, rel[i * t_count + j] as usize, hd);
                    if let Some(m) = mask {
                        s += m.at(g % m.n(), 0, i, j);
                    }
                    scores[j] = s;
                }
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|&s| (s - mx).exp()).collect();
                let tot: f64 = exps.iter().sum();
                for j in 0..t_count {
                    let p = exps[j] / tot;
                    for k in 0..d {
                        ctx[i][hd * d + k] += p * vs[j][hd * d + k];
                    }
                }
            }
        }
        for t in 0..t_count {
            let y = proj(&at.tensors[6], &at.tensors[7], &ctx[t]);
            for i in 0..c {
                *out.at_mut(g, 0, t, i) = y[i];
            }
        }
    }
    out
}

fn run_attention(
    tokens: &Tensor4<f64>,
    at: &AttnTensors,
    mask: Option<&Tensor4<f64>>,
) -> Tensor4<f64> {
    let mut tape = Tape::new();
    let t = tape.leaf(tokens.clone());
    let vars = at.leaf(&mut tape);
    let out = window_attention(&mut tape, t, &vars, mask).unwrap();
    tape.value(out).clone()
}

#[test]
fn single_token_windows_compose_v_then_out() {
    let mut rng = tk::rng(50);
    let c = 6;
    let at = AttnTensors::random(&mut rng, c, 2, (1, 1)).zero_bias_table();
    let tokens: Tensor4<f64> = tk::rand_tensor(&mut rng, (5, 1, 1, c), -1.0, 1.0);
    let got = run_attention(&tokens, &at, None);
    // softmax over one element is 1: output = OutProj(VProj(x))
    for g in 0..5 {
        for o in 0..c {
            let mut v = vec![0.0; c];
            for i in 0..c {
                let mut acc = at.tensors[5].data()[i];
                for k in 0..c {
                    acc += at.tensors[4].at(0, 0, i, k) * tokens.at(g, 0, 0, k);
                }
                v[i] = acc;
            }
            let mut y = at.tensors[7].data()[o];
            for i in 0..c {
                y += at.tensors[6].at(0, 0, o, i) * v[i];
            }
            assert!((got.at(g, 0, 0, o) - y).abs() <= 1e-10);
        }
    }
}

#[test]
fn identical_tokens_give_identical_outputs() {
    let mut rng = tk::rng(51);
    let c = 8;
    let at = AttnTensors::random(&mut rng, c, 2, (2, 2)).zero_bias_table();
    let row: Tensor4<f64> = tk::rand_tensor(&mut rng, (1, 1, 1, c), -1.0, 1.0);
    let mut tokens = Tensor4::zeros(1, 1, 4, c);
    for t in 0..4 {
        for i in 0..c {
            *tokens.at_mut(0, 0, t, i) = row.at(0, 0, 0, i);
        }
    }
    let got = run_attention(&tokens, &at, None);
    for t in 1..4 {
        for i in 0..c {
            assert!((got.at(0, 0, t, i) - got.at(0, 0, 0, i)).abs() <= 1e-12);
        }
    }
}

#[test]
fn random_windows_match_naive_oracle() {
    let mut rng = tk::rng(52);
    for (groups, heads, grid) in [(3, 1, (2, 2)), (2, 2, (2, 3)), (4, 4, (4, 4))] {
        let c = heads * 4;
        let at = AttnTensors::random(&mut rng, c, heads, grid);
        let t_count = grid.0 * grid.1;
        let tokens: Tensor4<f64> =
            tk::rand_tensor(&mut rng, (groups, 1, t_count, c), -1.0, 1.0);
        let got = run_attention(&tokens, &at, None);
        let want = naive_attention(&tokens, &at, None);
        assert!(tk::max_rel_diff(&got, &want) <= 1e-6);
    }
}

#[test]
fn masked_attention_matches_naive_oracle() {
    let mut rng = tk::rng(53);
    let heads = 2;
    let c = heads * 4;
    let grid = (2, 2);
    let at = AttnTensors::random(&mut rng, c, heads, grid);
    let mask: Tensor4<f64> = geometry::shift_attention_mask(4, 4, 2, 2);
    // two batch items worth of groups: 8 groups cycling over 4 window masks
    let tokens: Tensor4<f64> = tk::rand_tensor(&mut rng, (8, 1, 4, c), -1.0, 1.0);
    let got = run_attention(&tokens, &at, Some(&mask));
    let want = naive_attention(&tokens, &at, Some(&mask));
    assert!(tk::max_rel_diff(&got, &want) <= 1e-6);
}

#[test]
fn permutation_equivariant_with_zero_bias_and_uniform_mask() {
    let mut rng = tk::rng(54);
    let c = 8;
    let at = AttnTensors::random(&mut rng, c, 2, (2, 3)).zero_bias_table();
    let t_count = 6;
    let tokens: Tensor4<f64> = tk::rand_tensor(&mut rng, (2, 1, t_count, c), -1.0, 1.0);
    let mut perm: Vec<usize> = (0..t_count).collect();
    perm.shuffle(&mut rng);

    let mut permuted = tokens.zeros_like();
    for g in 0..2 {
        for t in 0..t_count {
            for i in 0..c {
                *permuted.at_mut(g, 0, t, i) = tokens.at(g, 0, perm[t], i);
            }
        }
    }
    let base = run_attention(&tokens, &at, None);
    let shuffled = run_attention(&permuted, &at, None);
    for g in 0..2 {
        for t in 0..t_count {
            for i in 0..c {
                let want = base.at(g, 0, perm[t], i);
                assert!((shuffled.at(g, 0, t, i) - want).abs() <= 1e-9);
            }
        }
    }
}
