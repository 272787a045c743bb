//! 2D FFT over the spatial axes and the frequency-domain channel-mixing
//! kernel built on it.
//!
//! Transforms are unnormalized in the forward direction; the inverse applies
//! the `1/(h*w)` factor. Arbitrary (non power-of-two) sizes are supported via
//! rustfft's mixed-radix / Bluestein planner; the correctness bar is the
//! naive-DFT oracle in the test suite, not speed.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::{ComplexTensor4, Tensor4};
use crate::Result;

enum Direction {
    Forward,
    Inverse,
}

/// In-place 2D transform of every (n,c) plane of `buf` (dims `n,c,h,w`).
fn transform_planes<S: Scalar>(buf: &mut ComplexTensor4<S>, dir: Direction) {
    let (n, c, h, w) = buf.dims();
    let mut planner = FftPlanner::<S>::new();
    let (row_fft, col_fft) = match dir {
        Direction::Forward => (planner.plan_fft_forward(w), planner.plan_fft_forward(h)),
        Direction::Inverse => (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h)),
    };
    let mut col = vec![Complex::new(S::zero(), S::zero()); h];
    for ni in 0..n {
        for ci in 0..c {
            let plane = buf.plane_mut(ni, ci);
            // All rows of the plane in one call (chunks of length w).
            row_fft.process(plane);
            for x in 0..w {
                for y in 0..h {
                    col[y] = plane[y * w + x];
                }
                col_fft.process(&mut col);
                for y in 0..h {
                    plane[y * w + x] = col[y];
                }
            }
        }
    }
}

/// Unnormalized forward 2D FFT of each (batch, channel) plane.
pub fn fft2<S: Scalar>(x: &Tensor4<S>) -> ComplexTensor4<S> {
    let (n, c, h, w) = x.dims();
    let mut buf = ComplexTensor4::zeros(n, c, h, w);
    for (o, &v) in buf.data_mut().iter_mut().zip(x.data().iter()) {
        *o = Complex::new(v, S::zero());
    }
    transform_planes(&mut buf, Direction::Forward);
    buf
}

/// Inverse 2D FFT with the `1/(h*w)` factor; returns the real part.
pub fn ifft2<S: Scalar>(x: &ComplexTensor4<S>) -> Tensor4<S> {
    let (n, c, h, w) = x.dims();
    let mut buf = x.clone();
    transform_planes(&mut buf, Direction::Inverse);
    let scale = S::one() / S::from64((h * w) as f64);
    let mut out = Tensor4::zeros(n, c, h, w);
    for (o, v) in out.data_mut().iter_mut().zip(buf.data().iter()) {
        *o = v.re * scale;
    }
    out
}

/// Inverse 2D FFT with the `1/(h*w)` factor, keeping the complex values.
pub fn ifft2_complex<S: Scalar>(x: &ComplexTensor4<S>) -> ComplexTensor4<S> {
    let (_, _, h, w) = x.dims();
    let mut buf = x.clone();
    transform_planes(&mut buf, Direction::Inverse);
    let scale = S::one() / S::from64((h * w) as f64);
    for v in buf.data_mut().iter_mut() {
        *v = Complex::new(v.re * scale, v.im * scale);
    }
    buf
}

/// Unnormalized inverse transform, real part only (the adjoint of [`fft2`]).
fn ifft2_unnormalized_real<S: Scalar>(x: &ComplexTensor4<S>) -> Tensor4<S> {
    let (n, c, h, w) = x.dims();
    let mut buf = x.clone();
    transform_planes(&mut buf, Direction::Inverse);
    let mut out = Tensor4::zeros(n, c, h, w);
    for (o, v) in out.data_mut().iter_mut().zip(buf.data().iter()) {
        *o = v.re;
    }
    out
}

fn check_mix_shapes<S: Scalar>(
    x: &Tensor4<S>,
    w_re: &Tensor4<S>,
    w_im: &Tensor4<S>,
    b_re: &Tensor4<S>,
    b_im: &Tensor4<S>,
) -> Result<(usize, usize)> {
    let c_in = x.c();
    let (wn, wc, c_out, wi) = w_re.dims();
    if wn != 1 || wc != 1 || wi != c_in {
        return Err(TensorError::shape(
            "spectral_mix",
            format!("weight dims {:?} vs {} input channels", w_re.dims(), c_in),
        ));
    }
    if w_im.dims() != w_re.dims() {
        return Err(TensorError::shape(
            "spectral_mix",
            "real/imaginary weight dims differ".to_string(),
        ));
    }
    if b_re.numel() != c_out || b_im.numel() != c_out {
        return Err(TensorError::shape(
            "spectral_mix",
            format!("bias length vs {c_out} output channels"),
        ));
    }
    Ok((c_in, c_out))
}

/// Frequency-domain 1x1 channel mixing:
/// `y = Re( ifft2( W . fft2(x) + b ) )` with a complex weight matrix
/// (given as real/imaginary parts `(1,1,c_out,c_in)`) and complex bias
/// applied at every frequency.
pub fn spectral_mix<S: Scalar>(
    x: &Tensor4<S>,
    w_re: &Tensor4<S>,
    w_im: &Tensor4<S>,
    b_re: &Tensor4<S>,
    b_im: &Tensor4<S>,
) -> Result<Tensor4<S>> {
    let (c_in, c_out) = check_mix_shapes(x, w_re, w_im, b_re, b_im)?;
    let (n, _, h, w) = x.dims();
    let spectrum = fft2(x);
    let mut mixed = ComplexTensor4::zeros(n, c_out, h, w);
    for ni in 0..n {
        for co in 0..c_out {
            let bias = Complex::new(b_re.data()[co], b_im.data()[co]);
            let plane = mixed.plane_mut(ni, co);
            plane.fill(bias);
            for ci in 0..c_in {
                let wv = Complex::new(
                    w_re.data()[co * c_in + ci],
                    w_im.data()[co * c_in + ci],
                );
                for (o, &s) in plane.iter_mut().zip(spectrum.plane(ni, ci)) {
                    *o = *o + wv * s;
                }
            }
        }
    }
    Ok(ifft2(&mixed))
}

/// Gradients of [`spectral_mix`] for (x, w_re, w_im, b_re, b_im).
pub fn spectral_mix_vjp<S: Scalar>(
    x: &Tensor4<S>,
    w_re: &Tensor4<S>,
    w_im: &Tensor4<S>,
    grad: &Tensor4<S>,
) -> (Tensor4<S>, Tensor4<S>, Tensor4<S>, Tensor4<S>, Tensor4<S>) {
    let (n, c_in, h, w) = x.dims();
    let c_out = w_re.h();
    let hw = S::from64((h * w) as f64);

    // gZ = fft2(grad) / (h*w): the adjoint of the normalized inverse FFT.
    let mut gz = fft2(grad);
    let inv_hw = S::one() / hw;
    for v in gz.data_mut().iter_mut() {
        *v = Complex::new(v.re * inv_hw, v.im * inv_hw);
    }

    let spectrum = fft2(x);

    // gX[i] = sum_o conj(W[o,i]) * gZ[o]; gW[o,i] = sum gZ[o] * conj(X[i]).
    let mut gx_spec = ComplexTensor4::zeros(n, c_in, h, w);
    let mut dw_re = w_re.zeros_like();
    let mut dw_im = w_re.zeros_like();
    let mut db_re = Tensor4::zeros(1, 1, 1, c_out);
    let mut db_im = Tensor4::zeros(1, 1, 1, c_out);
    for ni in 0..n {
        for co in 0..c_out {
            let gz_plane = gz.plane(ni, co);
            let mut bias_acc = Complex::new(S::zero(), S::zero());
            for &g in gz_plane.iter() {
                bias_acc = bias_acc + g;
            }
            db_re.data_mut()[co] = db_re.data()[co] + bias_acc.re;
            db_im.data_mut()[co] = db_im.data()[co] + bias_acc.im;
            for ci in 0..c_in {
                let wv = Complex::new(
                    w_re.data()[co * c_in + ci],
                    w_im.data()[co * c_in + ci],
                );
                let wconj = wv.conj();
                let mut w_acc = Complex::new(S::zero(), S::zero());
                let x_plane = spectrum.plane(ni, ci);
                let gx_plane = gx_spec.plane_mut(ni, ci);
                for ((o, &g), &xs) in gx_plane.iter_mut().zip(gz_plane).zip(x_plane) {
                    *o = *o + wconj * g;
                    w_acc = w_acc + g * xs.conj();
                }
                let wi = co * c_in + ci;
                dw_re.data_mut()[wi] = dw_re.data()[wi] + w_acc.re;
                dw_im.data_mut()[wi] = dw_im.data()[wi] + w_acc.im;
            }
        }
    }

    // gx = Re(F^H gX) = (h*w) * normalized inverse = unnormalized inverse.
    let dx = ifft2_unnormalized_real(&gx_spec);
    (dx, dw_re, dw_im, db_re, db_im)
}
