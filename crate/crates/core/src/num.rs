//! Scalar abstraction used throughout the crate.
//!
//! Everything numeric is generic over [`Scalar`] so the same algorithms run in
//! `f32` or `f64`. The crate root exports `f64` aliases for the common case.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type usable in every algorithm of this crate.
///
/// A blanket impl covers any `Copy` type that is both a `nalgebra::RealField`
/// and convertible to/from primitives, i.e. `f32` and `f64` out of the box.
pub trait Scalar: RealField + FromPrimitive + ToPrimitive + Copy {}

impl<T: RealField + FromPrimitive + ToPrimitive + Copy> Scalar for T {}

/// Shorthand for lossy conversion from `f64` into the working scalar.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert into scalar type")
}

/// Shorthand for conversion from small integers into the working scalar.
#[inline]
pub fn cast_i<T: Scalar>(x: i64) -> T {
    T::from_i64(x).expect("integer constant must convert into scalar type")
}
