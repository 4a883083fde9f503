//! Exact integer combinatorics.
//!
//! The closed-form averaging coefficients mix binomials with powers of
//! `2 cos(theta)`; evaluating the binomials in exact integer arithmetic keeps
//! that path independent from the floating-point linear algebra it is checked
//! against. Overflow is detected, not wrapped.

use crate::error::{Error, Result};

/// Binomial coefficient C(n, k) in exact `i64` arithmetic.
///
/// Returns 0 for k > n. Errors if the exact value exceeds `i64`.
pub fn binomial(n: u32, k: u32) -> Result<i64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: i64 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step.
        acc = acc
            .checked_mul((n - i) as i64)
            .ok_or(Error::CombinatoricOverflow { n, k })?;
        acc /= (i + 1) as i64;
    }
    Ok(acc)
}

/// Factorial n! in exact `i64` arithmetic, with overflow detection.
pub fn factorial(n: u32) -> Result<i64> {
    let mut acc: i64 = 1;
    for i in 2..=n as i64 {
        acc = acc
            .checked_mul(i)
            .ok_or(Error::CombinatoricOverflow { n, k: n })?;
    }
    Ok(acc)
}
