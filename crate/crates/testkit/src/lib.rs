//! Brute-force reference implementations used as oracles by the test
//! suites. Everything here is written as directly as possible (nested
//! loops, textbook formulas) and stays independent of the kernels under
//! test.

pub mod builders;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rganet_tensor::{ComplexTensor4, Scalar, Tensor4};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor<S: Scalar>(
    rng: &mut ChaCha8Rng,
    dims: (usize, usize, usize, usize),
    lo: f64,
    hi: f64,
) -> Tensor4<S> {
    let (n, c, h, w) = dims;
    let data: Vec<S> = (0..n * c * h * w)
        .map(|_| S::from64(rng.gen_range(lo..hi)))
        .collect();
    Tensor4::from_vec(n, c, h, w, data).unwrap()
}

pub fn max_abs_diff<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| (x.as64() - y.as64()).abs())
        .fold(0.0, f64::max)
}

/// Max elementwise |a-b| / max(1, |a|, |b|).
pub fn max_rel_diff<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| {
            let (x, y) = (x.as64(), y.as64());
            (x - y).abs() / 1.0_f64.max(x.abs()).max(y.abs())
        })
        .fold(0.0, f64::max)
}

/// Quadruple-nested-loop cross-correlation with zero padding.
pub fn naive_conv2d<S: Scalar>(
    x: &Tensor4<S>,
    weight: &Tensor4<S>,
    bias: Option<&Tensor4<S>>,
    stride: usize,
    pad: usize,
) -> Tensor4<S> {
    let (n, c_in, h, w) = x.dims();
    let (c_out, _, kh, kw) = weight.dims();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = Tensor4::zeros(n, c_out, oh, ow);
    for ni in 0..n {
        for co in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b.data()[co].as64());
                    for ci in 0..c_in {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    acc += x.at(ni, ci, iy as usize, ix as usize).as64()
                                        * weight.at(co, ci, ky, kx).as64();
                                }
                            }
                        }
                    }
                    *out.at_mut(ni, co, oy, ox) = S::from64(acc);
                }
            }
        }
    }
    out
}

/// Per-channel convolution via the grouped naive formula.
pub fn naive_depthwise<S: Scalar>(
    x: &Tensor4<S>,
    weight: &Tensor4<S>,
    bias: Option<&Tensor4<S>>,
    pad: usize,
) -> Tensor4<S> {
    let (n, c, h, w) = x.dims();
    let (_, _, kh, kw) = weight.dims();
    let oh = h + 2 * pad - kh + 1;
    let ow = w + 2 * pad - kw + 1;
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |b| b.data()[ci].as64());
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy + ky) as isize - pad as isize;
                            let ix = (ox + kx) as isize - pad as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                acc += x.at(ni, ci, iy as usize, ix as usize).as64()
                                    * weight.at(ci, 0, ky, kx).as64();
                            }
                        }
                    }
                    *out.at_mut(ni, ci, oy, ox) = S::from64(acc);
                }
            }
        }
    }
    out
}

/// O(N^2) direct 2D DFT of every plane (forward, unnormalized).
pub fn naive_dft2(x: &Tensor4<f64>) -> ComplexTensor4<f64> {
    let (n, c, h, w) = x.dims();
    let mut out = ComplexTensor4::zeros(n, c, h, w);
    for ni in 0..n {
        for ci in 0..c {
            for u in 0..h {
                for v in 0..w {
                    let mut acc = Complex::new(0.0, 0.0);
                    for y in 0..h {
                        for xx in 0..w {
                            let ang = -2.0
                                * std::f64::consts::PI
                                * (u as f64 * y as f64 / h as f64
                                    + v as f64 * xx as f64 / w as f64);
                            acc += Complex::new(ang.cos(), ang.sin()) * x.at(ni, ci, y, xx);
                        }
                    }
                    let oi = out.idx(ni, ci, u, v);
                    out.data_mut()[oi] = acc;
                }
            }
        }
    }
    out
}

/// Two-pass mean/variance layer norm over the channel axis per site.
pub fn naive_layer_norm(
    x: &Tensor4<f64>,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Tensor4<f64> {
    let (n, c, h, w) = x.dims();
    let mut out = x.zeros_like();
    for ni in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let mut mean = 0.0;
                for ci in 0..c {
                    mean += x.at(ni, ci, y, xx);
                }
                mean /= c as f64;
                let mut var = 0.0;
                for ci in 0..c {
                    let d = x.at(ni, ci, y, xx) - mean;
                    var += d * d;
                }
                var /= c as f64;
                let inv = 1.0 / (var + eps).sqrt();
                for ci in 0..c {
                    *out.at_mut(ni, ci, y, xx) =
                        (x.at(ni, ci, y, xx) - mean) * inv * gamma[ci] + beta[ci];
                }
            }
        }
    }
    out
}

/// Plain exp/sum row softmax in f64.
pub fn naive_softmax_rows(x: &Tensor4<f64>) -> Tensor4<f64> {
    let w = x.dims().3;
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(w) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
        for v in row.iter_mut() {
            *v = (*v - m).exp() / s;
        }
    }
    out
}

/// erf via Maclaurin series for small |x| and a continued fraction for the
/// tail; independent of libm.
pub fn erf_reference(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 2.0 {
        // erf(x) = 2/sqrt(pi) * sum_{n>=0} (-1)^n x^(2n+1) / (n! (2n+1))
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 1.0;
        while term.abs() > 1e-20 {
            term *= -x2 / n;
            sum += term / (2.0 * n + 1.0);
            n += 1.0;
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        // erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let mut f = 0.0;
        for k in (1..=60).rev() {
            f = (k as f64 / 2.0) / (ax + f);
        }
        let erfc = (-ax * ax).exp() / std::f64::consts::PI.sqrt() / (ax + f);
        let v = 1.0 - erfc;
        if x < 0.0 {
            -v
        } else {
            v
        }
    }
}

/// Per-pixel sliding-window SSIM with an explicit (non-separable) Gaussian
/// window, valid positions only, averaged over channels and batch.
pub fn naive_ssim(x: &Tensor4<f64>, y: &Tensor4<f64>, win: usize, sigma: f64) -> f64 {
    let (n, c, h, w) = x.dims();
    assert!(h >= win && w >= win);
    let mut kernel = vec![0.0; win * win];
    let half = (win - 1) as f64 / 2.0;
    let mut ksum = 0.0;
    for i in 0..win {
        for j in 0..win {
            let dy = i as f64 - half;
            let dx = j as f64 - half;
            let v = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            kernel[i * win + j] = v;
            ksum += v;
        }
    }
    for v in kernel.iter_mut() {
        *v /= ksum;
    }
    let c1 = 0.01_f64.powi(2);
    let c2 = 0.03_f64.powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..=(h - win) {
                for ox in 0..=(w - win) {
                    let (mut mx, mut my) = (0.0, 0.0);
                    for i in 0..win {
                        for j in 0..win {
                            let k = kernel[i * win + j];
                            mx += k * x.at(ni, ci, oy + i, ox + j);
                            my += k * y.at(ni, ci, oy + i, ox + j);
                        }
                    }
                    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
                    for i in 0..win {
                        for j in 0..win {
                            let k = kernel[i * win + j];
                            let dx = x.at(ni, ci, oy + i, ox + j) - mx;
                            let dy = y.at(ni, ci, oy + i, ox + j) - my;
                            sxx += k * dx * dx;
                            syy += k * dy * dy;
                            sxy += k * dx * dy;
                        }
                    }
                    let v = ((2.0 * mx * my + c1) * (2.0 * sxy + c2))
                        / ((mx * mx + my * my + c1) * (sxx + syy + c2));
                    total += v;
                    count += 1;
                }
            }
        }
    }
    total / count as f64
}

/// Published CIEDE2000 reference pairs (Sharma, Wu & Dalal test data):
/// `(L1, a1, b1, L2, a2, b2, expected delta E00)`.
pub const CIEDE2000_REFERENCE_PAIRS: [(f64, f64, f64, f64, f64, f64, f64); 34] = [
    (50.0000, 2.6772, -79.7751, 50.0000, 0.0000, -82.7485, 2.0425),
    (50.0000, 3.1571, -77.2803, 50.0000, 0.0000, -82.7485, 2.8615),
    (50.0000, 2.8361, -74.0200, 50.0000, 0.0000, -82.7485, 3.4412),
    (50.0000, -1.3802, -84.2814, 50.0000, 0.0000, -82.7485, 1.0000),
    (50.0000, -1.1848, -84.8006, 50.0000, 0.0000, -82.7485, 1.0000),
    (50.0000, -0.9009, -85.5211, 50.0000, 0.0000, -82.7485, 1.0000),
    (50.0000, 0.0000, 0.0000, 50.0000, -1.0000, 2.0000, 2.3669),
    (50.0000, -1.0000, 2.0000, 50.0000, 0.0000, 0.0000, 2.3669),
    (50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0009, 7.1792),
    (50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0010, 7.1792),
    (50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0011, 7.2195),
    (50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0012, 7.2195),
    (50.0000, -0.0010, 2.4900, 50.0000, 0.0009, -2.4900, 4.8045),
    (50.0000, -0.0010, 2.4900, 50.0000, 0.0010, -2.4900, 4.8045),
    (50.0000, -0.0010, 2.4900, 50.0000, 0.0011, -2.4900, 4.7461),
    (50.0000, 2.5000, 0.0000, 50.0000, 0.0000, -2.5000, 4.3065),
    (50.0000, 2.5000, 0.0000, 73.0000, 25.0000, -18.0000, 27.1492),
    (50.0000, 2.5000, 0.0000, 61.0000, -5.0000, 29.0000, 22.8977),
    (50.0000, 2.5000, 0.0000, 56.0000, -27.0000, -3.0000, 31.9030),
    (50.0000, 2.5000, 0.0000, 58.0000, 24.0000, 15.0000, 19.4535),
    (50.0000, 2.5000, 0.0000, 50.0000, 3.1736, 0.5854, 1.0000),
    (50.0000, 2.5000, 0.0000, 50.0000, 3.2972, 0.0000, 1.0000),
    (50.0000, 2.5000, 0.0000, 50.0000, 1.8634, 0.5757, 1.0000),
    (50.0000, 2.5000, 0.0000, 50.0000, 3.2592, 0.3350, 1.0000),
    (60.2574, -34.0099, 36.2677, 60.4626, -34.1751, 39.4387, 1.2644),
    (63.0109, -31.0961, -5.8663, 62.8187, -29.7946, -4.0864, 1.2630),
    (61.2901, 3.7196, -5.3901, 61.4292, 2.2480, -4.9620, 1.8731),
    (35.0831, -44.1164, 3.7933, 35.0232, -40.0716, 1.5901, 1.8645),
    (22.7233, 20.0904, -46.6940, 23.0331, 14.9730, -42.5619, 2.0373),
    (36.4612, 47.8580, 18.3852, 36.2715, 50.5065, 21.2231, 1.4146),
    (90.8027, -2.0831, 1.4410, 91.1528, -1.6435, 0.0447, 1.4441),
    (90.9257, -0.5406, -0.9208, 88.6381, -0.8985, -0.7239, 1.5381),
    (6.7747, -0.2908, -2.4247, 5.8714, -0.0985, -2.2286, 0.6377),
    (2.0776, 0.0795, -1.1350, 0.9033, -0.0636, -0.5514, 0.9082),
];
