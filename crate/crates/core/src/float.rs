//! Float math shims so the crate builds without `std` (via `libm`).

#[cfg(feature = "std")]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    x.sqrt()
}

#[cfg(all(not(feature = "std"), feature = "libm"))]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Fourth root, used by the side-jump estimator weights.
#[inline]
pub fn quartic_root(x: f64) -> f64 {
    sqrt(sqrt(x))
}

#[inline]
pub fn hypot2(x: f64, y: f64) -> f64 {
    sqrt(x * x + y * y)
}
