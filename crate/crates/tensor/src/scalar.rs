use num_traits::Float;
use rustfft::FftNum;

/// Floating-point element type for all tensors.
///
/// Training and inference run in `f32`; gradient checking runs in `f64`.
/// The trait pins the few conversions and special functions the kernels
/// need beyond `num_traits::Float`.
pub trait Scalar:
    Float + FftNum + Default + std::fmt::Display + std::iter::Sum<Self> + Send + Sync + 'static
{
    fn from64(x: f64) -> Self;
    fn as64(self) -> f64;

    /// Error function, evaluated in double precision.
    fn erf(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn erf(self) -> Self {
        libm::erf(self as f64) as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn from64(x: f64) -> Self {
        x
    }

    #[inline]
    fn as64(self) -> f64 {
        self
    }

    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
