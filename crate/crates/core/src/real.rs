//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the solvers are generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(i: usize) -> Self {
        Self::from_usize(i).expect("index representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `|w|^p`, returning exactly zero at `w = 0` so that the support edge stays clean.
#[inline]
pub fn abs_pow<T: Real>(w: T, p: T) -> T {
    if p == T::lit(2.0) {
        return w * w;
    }
    let a = w.abs();
    if a == T::zero() {
        T::zero()
    } else {
        (p * a.ln()).exp()
    }
}

/// Ordinary least squares of `y` on `x`; returns `(slope, intercept, r_squared)`.
pub fn linear_fit<T: Real>(x: &[T], y: &[T]) -> Option<(T, T, T)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == T::zero() { T::one() } else { (sxy * sxy) / (sxx * syy) };
    Some((slope, intercept, r2))
}
