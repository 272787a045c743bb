//! Structural similarity with the standard 11x11 Gaussian window
//! (sigma 1.5), valid positions only, averaged over channels. Differentiable
//! through the tape for use in the loss; a plain wrapper serves the metrics.

use rganet_tensor::{ops, Result, Scalar, Tape, Tensor4, TensorError, Var};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.0001; // (0.01)^2 for dynamic range 1
pub const SSIM_C2: f64 = 0.0009; // (0.03)^2

/// Normalized 2D Gaussian window, row-major `size*size`.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size - 1) as f64 / 2.0;
    let mut k = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let dy = i as f64 - half;
            let dx = j as f64 - half;
            k.push((-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Per-channel Gaussian blur weight `(c, 1, size, size)`.
fn blur_weight<S: Scalar>(c: usize) -> Tensor4<S> {
    let k = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let mut w = Tensor4::zeros(c, 1, SSIM_WINDOW, SSIM_WINDOW);
    for ci in 0..c {
        for (o, &v) in w.plane_mut(ci, 0).iter_mut().zip(k.iter()) {
            *o = S::from64(v);
        }
    }
    w
}

fn check_dims<S: Scalar>(x: &Tensor4<S>, y: &Tensor4<S>) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(TensorError::shape(
            "ssim",
            format!("dims {:?} vs {:?}", x.dims(), y.dims()),
        ));
    }
    let (_, _, h, w) = x.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(TensorError::shape(
            "ssim",
            format!("spatial dims {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    Ok(())
}

/// Mean SSIM as a differentiable scalar node.
pub fn ssim_mean_on_tape<S: Scalar>(tape: &mut Tape<S>, x: Var, y: Var) -> Result<Var> {
    check_dims(tape.value(x), tape.value(y))?;
    let (_, c, _, _) = tape.dims(x);
    let w = tape.constant(blur_weight::<S>(c));
    let zb = tape.constant(Tensor4::zeros(1, 1, 1, c));
    let blur = |tape: &mut Tape<S>, v: Var| tape.depthwise_conv2d(v, w, zb, 0);

    let mu_x = blur(tape, x)?;
    let mu_y = blur(tape, y)?;
    let xx = tape.mul(x, x)?;
    let yy = tape.mul(y, y)?;
    let xy = tape.mul(x, y)?;
    let bxx = blur(tape, xx)?;
    let byy = blur(tape, yy)?;
    let bxy = blur(tape, xy)?;
    let mxx = tape.mul(mu_x, mu_x)?;
    let myy = tape.mul(mu_y, mu_y)?;
    let mxy = tape.mul(mu_x, mu_y)?;
    let sxx = tape.sub(bxx, mxx)?;
    let syy = tape.sub(byy, myy)?;
    let sxy = tape.sub(bxy, mxy)?;

    let c1 = S::from64(SSIM_C1);
    let c2 = S::from64(SSIM_C2);
    let two = S::from64(2.0);
    let l_num = tape.affine(mxy, two, c1);
    let cs_num = tape.affine(sxy, two, c2);
    let mu_sum = tape.add(mxx, myy)?;
    let l_den = tape.affine(mu_sum, S::one(), c1);
    let s_sum = tape.add(sxx, syy)?;
    let cs_den = tape.affine(s_sum, S::one(), c2);

    let num = tape.mul(l_num, cs_num)?;
    let den = tape.mul(l_den, cs_den)?;
    let map = tape.div(num, den)?;
    Ok(tape.mean_all(map))
}

/// Mean SSIM of two tensors in `[0,1]` (dynamic range 1).
pub fn ssim_mean<S: Scalar>(x: &Tensor4<S>, y: &Tensor4<S>) -> Result<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let s = ssim_mean_on_tape(&mut tape, xv, yv)?;
    Ok(tape.value(s).scalar_value()?.as64())
}

/// Contrast-structure term and full SSIM, both averaged, via pure kernels.
fn ssim_and_cs(x: &Tensor4<f64>, y: &Tensor4<f64>) -> Result<(f64, f64)> {
    check_dims(x, y)?;
    let c = x.c();
    let w = blur_weight::<f64>(c);
    let blur = |v: &Tensor4<f64>| ops::depthwise_conv2d(v, &w, None, 0);
    let mu_x = blur(x)?;
    let mu_y = blur(y)?;
    let bxx = blur(&ops::mul(x, x)?)?;
    let byy = blur(&ops::mul(y, y)?)?;
    let bxy = blur(&ops::mul(x, y)?)?;
    let mut ssim_sum = 0.0;
    let mut cs_sum = 0.0;
    let n = mu_x.numel();
    for i in 0..n {
        let (mx, my) = (mu_x.data()[i], mu_y.data()[i]);
        let sxx = bxx.data()[i] - mx * mx;
        let syy = byy.data()[i] - my * my;
        let sxy = bxy.data()[i] - mx * my;
        let cs = (2.0 * sxy + SSIM_C2) / (sxx + syy + SSIM_C2);
        let l = (2.0 * mx * my + SSIM_C1) / (mx * mx + my * my + SSIM_C1);
        cs_sum += cs;
        ssim_sum += l * cs;
    }
    Ok((ssim_sum / n as f64, cs_sum / n as f64))
}

/// Standard five-scale weights.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// 2x2 mean-pool downsample (trailing odd row/col dropped).
fn downsample2(x: &Tensor4<f64>) -> Tensor4<f64> {
    let (n, c, h, w) = x.dims();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for ni in 0..n {
        for ci in 0..c {
            let src = x.plane(ni, ci);
            let dst = out.plane_mut(ni, ci);
            for y in 0..oh {
                for xx in 0..ow {
                    dst[y * ow + xx] = 0.25
                        * (src[2 * y * w + 2 * xx]
                            + src[2 * y * w + 2 * xx + 1]
                            + src[(2 * y + 1) * w + 2 * xx]
                            + src[(2 * y + 1) * w + 2 * xx + 1]);
                }
            }
        }
    }
    out
}

/// Multi-scale SSIM: the product of contrast-structure terms across scales
/// with the luminance term at the coarsest, using the standard weights.
/// When the image is too small for all five scales (the window must fit at
/// every scale), the leading scales that do fit are used and their weights
/// renormalized; images below one scale are rejected.
pub fn ms_ssim(x: &Tensor4<f64>, y: &Tensor4<f64>) -> Result<f64> {
    check_dims(x, y)?;
    let (_, _, mut h, mut w) = x.dims();
    let mut scales = 0usize;
    while scales < 5 && h >= SSIM_WINDOW && w >= SSIM_WINDOW {
        scales += 1;
        h /= 2;
        w /= 2;
    }
    let weight_sum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let mut cx = x.clone();
    let mut cy = y.clone();
    let mut acc = 1.0;
    for s in 0..scales {
        let (ssim, cs) = ssim_and_cs(&cx, &cy)?;
        let wgt = MS_SSIM_WEIGHTS[s] / weight_sum;
        let term = if s + 1 == scales { ssim } else { cs };
        acc *= term.max(0.0).powf(wgt);
        if s + 1 != scales {
            cx = downsample2(&cx);
            cy = downsample2(&cy);
        }
    }
    Ok(acc)
}
