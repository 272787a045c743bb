//! Partitioning geometry: symmetric padding, cyclic shifts, window / block /
//! grid partitions, head splitting and the shifted-window attention mask.
//!
//! All data movement is expressed as [`GatherPlan`]s so the tape gets exact
//! scatter-add adjoints for free. Partition/reverse pairs are exact inverses
//! on padded inputs.

use std::sync::Arc;

use rganet_tensor::{Dims4, GatherPlan, Scalar, Tensor4};

/// Additive mask value for forbidden attention pairs.
pub const MASK_VALUE: f64 = -1e9;

pub fn ceil_mult(x: usize, m: usize) -> usize {
    x.div_ceil(m) * m
}

/// Edge-inclusive symmetric reflection of index `i` into `[0, len)`.
/// Periodic in `2*len`, so any amount of padding works even for `len == 1`.
#[inline]
fn sym_index(i: usize, len: usize) -> usize {
    let m = i % (2 * len);
    if m < len {
        m
    } else {
        2 * len - 1 - m
    }
}

/// Reflect-pads bottom/right so spatial dims become `(hp, wp)`.
pub fn plan_pad_symmetric(dims: Dims4, hp: usize, wp: usize) -> Arc<GatherPlan> {
    let (n, c, h, w) = dims;
    assert!(hp >= h && wp >= w);
    let mut map = Vec::with_capacity(n * c * hp * wp);
    for ni in 0..n {
        for ci in 0..c {
            let base = ((ni * c + ci) * h) * w;
            for y in 0..hp {
                let sy = sym_index(y, h);
                for x in 0..wp {
                    map.push((base + sy * w + sym_index(x, w)) as u32);
                }
            }
        }
    }
    Arc::new(GatherPlan::new(dims, (n, c, hp, wp), map))
}

/// Top-left crop back to `(h0, w0)`.
pub fn plan_crop(dims: Dims4, h0: usize, w0: usize) -> Arc<GatherPlan> {
    let (n, c, h, w) = dims;
    assert!(h0 <= h && w0 <= w);
    let mut map = Vec::with_capacity(n * c * h0 * w0);
    for ni in 0..n {
        for ci in 0..c {
            let base = ((ni * c + ci) * h) * w;
            for y in 0..h0 {
                for x in 0..w0 {
                    map.push((base + y * w + x) as u32);
                }
            }
        }
    }
    Arc::new(GatherPlan::new(dims, (n, c, h0, w0), map))
}

/// Toroidal roll: `out[y, x] = in[(y + sr) mod h, (x + sc) mod w]`.
pub fn plan_cyclic_shift(dims: Dims4, sr: usize, sc: usize) -> Arc<GatherPlan> {
    let (n, c, h, w) = dims;
    let mut map = Vec::with_capacity(n * c * h * w);
    for ni in 0..n {
        for ci in 0..c {
            let base = ((ni * c + ci) * h) * w;
            for y in 0..h {
                let sy = (y + sr) % h;
                for x in 0..w {
                    map.push((base + sy * w + (x + sc) % w) as u32);
                }
            }
        }
    }
    Arc::new(GatherPlan::new(dims, (n, c, h, w), map))
}

/// Token index inside a window / group tensor: `(groups, 1, tokens, c)`.
pub fn token_dims(dims: Dims4, m: usize, n: usize) -> Dims4 {
    let (b, c, h, w) = dims;
    assert!(h % m == 0 && w % n == 0, "partition must divide padded dims");
    (b * (h / m) * (w / n), 1, m * n, c)
}

/// Contiguous `m x n` tiles, tokens row-major within each tile. Also serves
/// as the block partition.
pub fn plan_window_partition(dims: Dims4, m: usize, n: usize) -> Arc<GatherPlan> {
    let (b, c, h, w) = dims;
    let out = token_dims(dims, m, n);
    let (nh, nw) = (h / m, w / n);
    let mut map = Vec::with_capacity(b * c * h * w);
    for ni in 0..b {
        for wy in 0..nh {
            for wx in 0..nw {
                for ty in 0..m {
                    for tx in 0..n {
                        for ci in 0..c {
                            let y = wy * m + ty;
                            let x = wx * n + tx;
                            map.push((((ni * c + ci) * h + y) * w + x) as u32);
                        }
                    }
                }
            }
        }
    }
    Arc::new(GatherPlan::new(dims, out, map))
}

/// Exact inverse of [`plan_window_partition`].
pub fn plan_window_reverse(dims: Dims4, m: usize, n: usize) -> Arc<GatherPlan> {
    let (b, c, h, w) = dims;
    let tok = token_dims(dims, m, n);
    let (_, _, t_count, _) = tok;
    let nw_cols = w / n;
    let mut map = Vec::with_capacity(b * c * h * w);
    for ni in 0..b {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let g = (ni * (h / m) + y / m) * nw_cols + x / n;
                    let t = (y % m) * n + (x % n);
                    map.push(((g * t_count + t) * c + ci) as u32);
                }
            }
        }
    }
    Arc::new(GatherPlan::new(tok, dims, map))
}

/// Dilated grid partition: the map is viewed as
/// `(g_h, h/g_h, g_w, w/g_w)` and each group holds the `g_h * g_w` tokens
/// sharing a within-cell offset, so group members are spaced a full cell
/// apart (long-range interaction). Token order is row-major over the grid
/// axes.
pub fn grid_token_dims(dims: Dims4, gh: usize, gw: usize) -> Dims4 {
    let (b, c, h, w) = dims;
    assert!(h % gh == 0 && w % gw == 0, "grid must divide padded dims");
    (b * (h / gh) * (w / gw), 1, gh * gw, c)
}

pub fn plan_grid_partition(dims: Dims4, gh: usize, gw: usize) -> Arc<GatherPlan> {
    let (b, c, h, w) = dims;
    let out = grid_token_dims(dims, gh, gw);
    let (cell_h, cell_w) = (h / gh, w / gw);
    let mut map = Vec::with_capacity(b * c * h * w);
    for ni in 0..b {
        for r_in in 0..cell_h {
            for c_in in 0..cell_w {
                for gr in 0..gh {
                    for gc in 0..gw {
                        for ci in 0..c {
                            let y = gr * cell_h + r_in;
                            let x = gc * cell_w + c_in;
                            map.push((((ni * c + ci) * h + y) * w + x) as u32);
                        }
                    }
                }
            }
        }
    }
    Arc::new(GatherPlan::new(dims, out, map))
}

/// Exact inverse of [`plan_grid_partition`].
pub fn plan_grid_reverse(dims: Dims4, gh: usize, gw: usize) -> Arc<GatherPlan> {
    let (b, c, h, w) = dims;
    let tok = grid_token_dims(dims, gh, gw);
    let t_count = gh * gw;
    let (cell_h, cell_w) = (h / gh, w / gw);
    let mut map = Vec::with_capacity(b * c * h * w);
    for ni in 0..b {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let (gr, r_in) = (y / cell_h, y % cell_h);
                    let (gc, c_in) = (x / cell_w, x % cell_w);
                    let g = (ni * cell_h + r_in) * cell_w + c_in;
                    let t = gr * gw + gc;
                    map.push(((g * t_count + t) * c + ci) as u32);
                }
            }
        }
    }
    Arc::new(GatherPlan::new(tok, dims, map))
}

/// `(groups, 1, tokens, heads*d)` to `(groups, heads, tokens, d)`.
pub fn plan_split_heads(groups: usize, tokens: usize, c: usize, heads: usize) -> Arc<GatherPlan> {
    assert!(c % heads == 0);
    let d = c / heads;
    let mut map = Vec::with_capacity(groups * tokens * c);
    for g in 0..groups {
        for hd in 0..heads {
            for t in 0..tokens {
                for di in 0..d {
                    map.push(((g * tokens + t) * c + hd * d + di) as u32);
                }
            }
        }
    }
    Arc::new(GatherPlan::new(
        (groups, 1, tokens, c),
        (groups, heads, tokens, d),
        map,
    ))
}

/// Inverse of [`plan_split_heads`].
pub fn plan_merge_heads(groups: usize, tokens: usize, c: usize, heads: usize) -> Arc<GatherPlan> {
    let d = c / heads;
    let mut map = Vec::with_capacity(groups * tokens * c);
    for g in 0..groups {
        for t in 0..tokens {
            for ch in 0..c {
                let hd = ch / d;
                let di = ch % d;
                map.push((((g * heads + hd) * tokens + t) * d + di) as u32);
            }
        }
    }
    Arc::new(GatherPlan::new(
        (groups, heads, tokens, d),
        (groups, 1, tokens, c),
        map,
    ))
}

/// Relative-position index for an `m x n` token grid: entry `(i, j)` is the
/// row of the bias table for the coordinate difference of tokens i and j.
/// Values lie in `[0, (2m-1)*(2n-1))` and depend only on `(m, n)`.
pub fn rel_pos_index(m: usize, n: usize) -> Vec<u32> {
    let t = m * n;
    let mut idx = Vec::with_capacity(t * t);
    for i in 0..t {
        let (iy, ix) = (i / n, i % n);
        for j in 0..t {
            let (jy, jx) = (j / n, j % n);
            let dy = iy as isize - jy as isize + (m as isize - 1);
            let dx = ix as isize - jx as isize + (n as isize - 1);
            idx.push((dy * (2 * n as isize - 1) + dx) as u32);
        }
    }
    idx
}

/// Gathers a `((2m-1)*(2n-1), heads)` bias table (stored `(1,1,L,heads)`)
/// into a broadcastable `(1, heads, t, t)` bias block.
pub fn plan_bias_gather(m: usize, n: usize, heads: usize) -> Arc<GatherPlan> {
    let t = m * n;
    let l = (2 * m - 1) * (2 * n - 1);
    let rel = rel_pos_index(m, n);
    let mut map = Vec::with_capacity(heads * t * t);
    for hd in 0..heads {
        for i in 0..t {
            for j in 0..t {
                map.push(rel[i * t + j] * heads as u32 + hd as u32);
            }
        }
    }
    Arc::new(GatherPlan::new((1, 1, l, heads), (1, heads, t, t), map))
}

/// Cyclic shift applied by the shifted branch: half the window, but zero
/// along any axis the window already covers (a single window has a single
/// region, so shifting would only wrap tokens pointlessly).
pub fn effective_shift(len: usize, win: usize) -> usize {
    if len > win {
        win / 2
    } else {
        0
    }
}

#[inline]
fn band(i: usize, len: usize, win: usize, shift: usize) -> u32 {
    if i < len - win {
        0
    } else if i < len - shift {
        1
    } else {
        2
    }
}

/// Pre-shift region id of the token that lands at post-shift coordinates
/// `(y, x)`; tokens from different regions must not attend to each other.
fn region_id(y: usize, x: usize, h: usize, w: usize, m: usize, n: usize) -> u32 {
    let sr = effective_shift(h, m);
    let sc = effective_shift(w, n);
    let src_y = (y + sr) % h;
    let src_x = (x + sc) % w;
    band(src_y, h, m, sr) * 3 + band(src_x, w, n, sc)
}

/// Per-window additive attention masks for the shifted configuration on an
/// `h x w` map (`h`, `w` multiples of `m`, `n`). Entries are 0 where both
/// tokens come from the same pre-shift region and `MASK_VALUE` otherwise;
/// with no effective shift all masks are zero.
pub fn shift_attention_mask<S: Scalar>(h: usize, w: usize, m: usize, n: usize) -> Tensor4<S> {
    assert!(h % m == 0 && w % n == 0);
    let (nh, nw) = (h / m, w / n);
    let t = m * n;
    let n_windows = nh * nw;
    let mut mask = Tensor4::zeros(n_windows, 1, t, t);
    let sr = effective_shift(h, m);
    let sc = effective_shift(w, n);
    if sr == 0 && sc == 0 {
        return mask;
    }
    let mut ids = vec![0u32; t];
    for wy in 0..nh {
        for wx in 0..nw {
            let wi = wy * nw + wx;
            for ty in 0..m {
                for tx in 0..n {
                    ids[ty * n + tx] = region_id(wy * m + ty, wx * n + tx, h, w, m, n);
                }
            }
            for i in 0..t {
                for j in 0..t {
                    if ids[i] != ids[j] {
                        *mask.at_mut(wi, 0, i, j) = S::from64(MASK_VALUE);
                    }
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_index_handles_tiny_lengths() {
        assert_eq!((0..4).map(|i| sym_index(i, 1)).collect::<Vec<_>>(), [0; 4]);
        assert_eq!(
            (0..6).map(|i| sym_index(i, 2)).collect::<Vec<_>>(),
            [0, 1, 1, 0, 0, 1]
        );
    }

    #[test]
    fn rel_pos_index_range() {
        let idx = rel_pos_index(3, 2);
        assert_eq!(idx.len(), 36);
        assert!(idx.iter().all(|&v| v < 5 * 3));
        // token relative to itself maps to the center entry
        let center = (2 * 3 - 1 - 1) / 2 * (2 * 2 - 1) + (2 * 2 - 1 - 1) / 2;
        assert_eq!(idx[0], center as u32);
    }
}
