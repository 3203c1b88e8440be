//! Scalar abstraction: all core math is generic over `Real` (f32 or f64).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating-point scalar used by the geometry, mesh and network kernels.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        num_traits::FromPrimitive::from_f64(x).expect("f64 -> scalar conversion")
    }
    fn of_usize(x: usize) -> Self {
        num_traits::FromPrimitive::from_usize(x).expect("usize -> scalar conversion")
    }
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar -> f64 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Euclidean dot product.
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm<R: Real>(a: &[R]) -> R {
    dot(a, a).sqrt()
}

pub fn axpy<R: Real>(alpha: R, x: &[R], y: &mut [R]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale<R: Real>(alpha: R, x: &mut [R]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}
