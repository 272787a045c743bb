//! Paired data augmentation: random crop, horizontal flip, 90-degree
//! rotations and mixup. The same geometric transform is always applied to
//! both images of a pair.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use rganet_tensor::{Result, Scalar, Tensor4, TensorError};

/// One (smoky input, clean target) image pair in [0,1] RGB, `(1,3,h,w)`.
#[derive(Clone, Debug)]
pub struct PairedSample {
    pub input: Tensor4<f32>,
    pub target: Tensor4<f32>,
    pub id: String,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub crop_size: usize,
    pub flip_prob: f64,
    /// Random rotation by multiples of 90 degrees.
    pub rotate: bool,
    pub mixup_enabled: bool,
    pub mixup_beta_param: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_size: 64,
            flip_prob: 0.5,
            rotate: true,
            mixup_enabled: false,
            mixup_beta_param: 0.2,
        }
    }
}

pub fn crop<S: Scalar>(x: &Tensor4<S>, oy: usize, ox: usize, size: usize) -> Tensor4<S> {
    let (n, c, _, w) = x.dims();
    let mut out = Tensor4::zeros(n, c, size, size);
    for ni in 0..n {
        for ci in 0..c {
            let src = x.plane(ni, ci);
            let dst = out.plane_mut(ni, ci);
            for y in 0..size {
                let row = &src[(oy + y) * w + ox..(oy + y) * w + ox + size];
                dst[y * size..(y + 1) * size].copy_from_slice(row);
            }
        }
    }
    out
}

pub fn hflip<S: Scalar>(x: &Tensor4<S>) -> Tensor4<S> {
    let (n, c, h, w) = x.dims();
    let mut out = x.clone();
    for ni in 0..n {
        for ci in 0..c {
            let p = out.plane_mut(ni, ci);
            for y in 0..h {
                p[y * w..(y + 1) * w].reverse();
            }
        }
    }
    out
}

/// Counter-clockwise rotation by `k` quarter turns.
pub fn rot90<S: Scalar>(x: &Tensor4<S>, k: usize) -> Tensor4<S> {
    let k = k % 4;
    if k == 0 {
        return x.clone();
    }
    let (n, c, h, w) = x.dims();
    let (oh, ow) = if k % 2 == 0 { (h, w) } else { (w, h) };
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let (ny, nx) = match k {
                        1 => (w - 1 - xx, y),
                        2 => (h - 1 - y, w - 1 - xx),
                        _ => (xx, h - 1 - y),
                    };
                    *out.at_mut(ni, ci, ny, nx) = x.at(ni, ci, y, xx);
                }
            }
        }
    }
    out
}

/// Applies one random crop / flip / rotation draw, identically to input and
/// target.
pub fn augment(
    sample: &PairedSample,
    cfg: &AugmentConfig,
    rng: &mut ChaCha20Rng,
) -> Result<PairedSample> {
    let (_, _, h, w) = sample.input.dims();
    if cfg.crop_size > h || cfg.crop_size > w {
        return Err(TensorError::invalid(
            "augment",
            format!("crop {} larger than image {h}x{w}", cfg.crop_size),
        ));
    }
    let mut input = sample.input.clone();
    let mut target = sample.target.clone();
    if cfg.crop_size < h || cfg.crop_size < w {
        let oy = rng.gen_range(0..=h - cfg.crop_size);
        let ox = rng.gen_range(0..=w - cfg.crop_size);
        input = crop(&input, oy, ox, cfg.crop_size);
        target = crop(&target, oy, ox, cfg.crop_size);
    }
    if cfg.flip_prob > 0.0 && rng.gen_range(0.0..1.0) < cfg.flip_prob {
        input = hflip(&input);
        target = hflip(&target);
    }
    if cfg.rotate {
        let k = rng.gen_range(0..4usize);
        input = rot90(&input, k);
        target = rot90(&target, k);
    }
    Ok(PairedSample {
        input,
        target,
        id: sample.id.clone(),
    })
}

/// Blend of two pairs with a fixed coefficient (1 returns `a` exactly).
pub fn mixup_with_lambda(a: &PairedSample, b: &PairedSample, lambda: f64) -> Result<PairedSample> {
    if a.input.dims() != b.input.dims() {
        return Err(TensorError::shape(
            "mixup",
            format!("dims {:?} vs {:?}", a.input.dims(), b.input.dims()),
        ));
    }
    let blend = |x: &Tensor4<f32>, y: &Tensor4<f32>| -> Tensor4<f32> {
        let l = lambda as f32;
        let mut out = x.clone();
        for (o, &yv) in out.data_mut().iter_mut().zip(y.data()) {
            *o = l * *o + (1.0 - l) * yv;
        }
        out
    };
    Ok(PairedSample {
        input: blend(&a.input, &b.input),
        target: blend(&a.target, &b.target),
        id: format!("{}+{}", a.id, b.id),
    })
}

/// Draws `lambda ~ Beta(beta_param, beta_param)` and blends both inputs and
/// both targets with the same coefficient.
pub fn mixup(
    a: &PairedSample,
    b: &PairedSample,
    beta_param: f64,
    rng: &mut ChaCha20Rng,
) -> Result<PairedSample> {
    let dist = Beta::new(beta_param, beta_param).map_err(|e| {
        TensorError::invalid("mixup", format!("bad beta parameter: {e}"))
    })?;
    let lambda = dist.sample(rng);
    mixup_with_lambda(a, b, lambda)
}
