//! Floating-point scalar abstraction shared by the geometry and radio code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A real scalar the simulator can compute distances and powers in.
///
/// Implemented for `f32` and `f64`. Probabilities and slot counts stay in
/// `f64`/`u64` regardless of the geometry scalar.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or parameter.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

/// Smallest `k` with `2^k >= x`, for `x >= 1`. Returns 0 for `x <= 1`.
///
/// Computed by doubling rather than `log2().ceil()` so that a value a few
/// ulps above a power of two never rounds down.
pub fn ceil_log2<T: Scalar>(x: T) -> u32 {
    let mut k = 0u32;
    let mut r = T::one();
    let two = T::of(2.0);
    while r < x {
        r = r * two;
        k += 1;
    }
    k
}

/// `⌈log2 n⌉` for a node count; 0 for `n <= 1`.
pub fn ceil_log2_count(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}
