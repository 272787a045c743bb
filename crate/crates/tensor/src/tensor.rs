use num_complex::Complex;

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::Result;

/// Dimensions of a rank-4 tensor: (batch, channels, rows, cols).
pub type Dims4 = (usize, usize, usize, usize);

/// Dense rank-4 real tensor in batch-channel-row-col layout, row-major.
///
/// This is the universal value flowing through the network; vectors and
/// matrices (biases, projection weights) are carried as degenerate shapes
/// such as `(1,1,1,c)` and `(1,1,o,i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<S> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<S>,
}

impl<S: Scalar> Tensor4<S> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        assert!(n >= 1 && c >= 1 && h >= 1 && w >= 1, "tensor dims must be >= 1");
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![S::zero(); n * c * h * w],
        }
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, v: S) -> Self {
        let mut t = Self::zeros(n, c, h, w);
        t.data.fill(v);
        t
    }

    /// Wraps a scalar as a `(1,1,1,1)` tensor.
    pub fn scalar(v: S) -> Self {
        Tensor4 {
            n: 1,
            c: 1,
            h: 1,
            w: 1,
            data: vec![v],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<S>) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(TensorError::invalid(
                "from_vec",
                format!("dims must be >= 1, got ({n},{c},{h},{w})"),
            ));
        }
        if data.len() != n * c * h * w {
            return Err(TensorError::shape(
                "from_vec",
                format!(
                    "data length {} does not match dims ({n},{c},{h},{w})",
                    data.len()
                ),
            ));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    #[inline]
    pub fn dims(&self) -> Dims4 {
        (self.n, self.c, self.h, self.w)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> S {
        self.data[self.idx(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut S {
        let i = self.idx(n, c, h, w);
        &mut self.data[i]
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Row-major `h*w` slice of one (batch, channel) plane.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[S] {
        let start = (n * self.c + c) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [S] {
        let hw = self.h * self.w;
        let start = (n * self.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Reinterprets the tensor with new dims of identical total length.
    pub fn reshaped(mut self, n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if n * c * h * w != self.data.len() {
            return Err(TensorError::shape(
                "reshape",
                format!(
                    "cannot view {} elements as ({n},{c},{h},{w})",
                    self.data.len()
                ),
            ));
        }
        self.n = n;
        self.c = c;
        self.h = h;
        self.w = w;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: vec![S::zero(); self.data.len()],
        }
    }

    /// Reads the single element of a `(1,1,1,1)` tensor.
    pub fn scalar_value(&self) -> Result<S> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                numel: self.numel(),
            });
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// In-place accumulate; dims must match exactly.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + *b;
        }
    }

    pub fn scale_in_place(&mut self, k: S) {
        for v in self.data.iter_mut() {
            *v = *v * k;
        }
    }

    /// Converts element precision.
    pub fn cast<T: Scalar>(&self) -> Tensor4<T> {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&x| T::from64(x.as64())).collect(),
        }
    }
}

/// Rank-4 complex tensor for frequency-domain features.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor4<S> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<Complex<S>>,
}

impl<S: Scalar> ComplexTensor4<S> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        assert!(n >= 1 && c >= 1 && h >= 1 && w >= 1);
        ComplexTensor4 {
            n,
            c,
            h,
            w,
            data: vec![Complex::new(S::zero(), S::zero()); n * c * h * w],
        }
    }

    #[inline]
    pub fn dims(&self) -> Dims4 {
        (self.n, self.c, self.h, self.w)
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> Complex<S> {
        self.data[self.idx(n, c, h, w)]
    }

    #[inline]
    pub fn data(&self) -> &[Complex<S>] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex<S>] {
        &mut self.data
    }

    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[Complex<S>] {
        let hw = self.h * self.w;
        let start = (n * self.c + c) * hw;
        &self.data[start..start + hw]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [Complex<S>] {
        let hw = self.h * self.w;
        let start = (n * self.c + c) * hw;
        &mut self.data[start..start + hw]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_length() {
        assert!(Tensor4::<f64>::from_vec(1, 1, 2, 2, vec![0.0; 3]).is_err());
        assert!(Tensor4::<f64>::from_vec(1, 1, 2, 2, vec![0.0; 4]).is_ok());
        assert!(Tensor4::<f64>::from_vec(0, 1, 2, 2, vec![]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::<f64>::from_vec(1, 2, 2, 3, (0..12).map(|i| i as f64).collect()).unwrap();
        assert_eq!(t.at(0, 0, 0, 0), 0.0);
        assert_eq!(t.at(0, 0, 1, 2), 5.0);
        assert_eq!(t.at(0, 1, 0, 0), 6.0);
        assert_eq!(t.plane(0, 1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }
}
