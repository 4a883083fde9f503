//! Finite-level uniform quantizer and the transmission-level schedule.
//!
//! The quantizer maps a real input to an integer symbol in {−M, …, M}:
//! zero inside (−1/2, 1/2), then unit cells with half-integer boundaries
//! (a boundary value belongs to the cell further from zero), clamping at ±M.
//! With M levels a symbol costs ⌈log₂(2M)⌉ bits.

use crate::error::{Error, Result};
use crate::num::{cast, Scalar};

/// Quantizes `y` with half-level count `levels` (= M ≥ 1).
///
/// Returns 0 for |y| < 1/2, otherwise sign(y)·min(⌊|y|+1/2⌋, M). Odd
/// symmetry holds exactly; half-integer inputs round away from zero.
pub fn quantize<T: Scalar>(y: T, levels: u32) -> Result<i64> {
    if levels == 0 {
        return Err(Error::InvalidQuantizer(
            "level count M must be at least 1".into(),
        ));
    }
    let half = cast::<T>(0.5);
    let a = y.abs();
    if a < half {
        return Ok(0);
    }
    let m = cast::<T>(levels as f64);
    let q = if a >= m - half {
        levels as i64
    } else {
        // a < M − 1/2 here, so ⌊a + 1/2⌋ < M fits comfortably in i64.
        (a + half)
            .floor()
            .to_i64()
            .ok_or_else(|| Error::InvalidQuantizer("non-finite quantizer input".into()))?
    };
    Ok(if y < T::zero() { -q } else { q })
}

/// Bits needed per transmitted symbol: ⌈log₂(2M)⌉, computed exactly in
/// integer arithmetic.
pub fn bits_for_levels(levels: u32) -> u32 {
    debug_assert!(levels >= 1);
    // ⌈log₂(2M)⌉ = bit length of 2M − 1.
    64 - (2u64 * levels as u64 - 1).leading_zeros()
}

/// Two-phase level schedule: a reduced level count while the decoder is still
/// filling its output window, then the steady count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelSchedule {
    /// Levels for steps t ≤ switch_after.
    pub initial: u32,
    /// Levels for steps t > switch_after.
    pub steady: u32,
    /// Last step of the initial phase (2m for the standard schedule).
    pub switch_after: usize,
}

impl LevelSchedule {
    pub fn new(initial: u32, steady: u32, switch_after: usize) -> Result<Self> {
        if initial == 0 || steady == 0 {
            return Err(Error::InvalidQuantizer(
                "schedule level counts must be at least 1".into(),
            ));
        }
        Ok(LevelSchedule {
            initial,
            steady,
            switch_after,
        })
    }

    /// Level count in force at step t (t ≥ 1).
    pub fn levels_at(&self, t: usize) -> u32 {
        if t <= self.switch_after {
            self.initial
        } else {
            self.steady
        }
    }

    /// Bits per symbol at step t.
    pub fn bits_at(&self, t: usize) -> u32 {
        bits_for_levels(self.levels_at(t))
    }

    /// Bits per symbol in the steady phase — the schedule's data rate.
    pub fn bits_steady(&self) -> u32 {
        bits_for_levels(self.steady)
    }
}

/// Minimal steady half-level count sufficient for quantized consensus:
/// the smallest integer M with M ≥ |cosθ| + 1/2 (m = 1) or
/// M ≥ 2^{m−1}(1+|cosθ|)^m − 1/2 (m ≥ 2).
pub fn minimal_levels<T: Scalar>(m: usize, theta: T) -> Result<u32> {
    if m < 1 || m > crate::model::MAX_ORDER {
        return Err(Error::OrderOutOfRange {
            m,
            max: crate::model::MAX_ORDER,
        });
    }
    let cos_abs = theta.cos().abs();
    let bound = if m == 1 {
        cos_abs + cast::<T>(0.5)
    } else {
        cast::<T>(2.0f64.powi(m as i32 - 1)) * (T::one() + cos_abs).powi(m as i32)
            - cast::<T>(0.5)
    };
    // The bound lands exactly on an integer at angles like π/3, where the
    // rounded cosine sits one ulp high; snap by 1e−9 so those boundary cases
    // do not cost an extra level (and hence an extra bit).
    let snapped = (bound - cast::<T>(1e-9)).ceil();
    let m_steady = snapped.to_u32().unwrap_or(u32::MAX).max(1);
    Ok(m_steady)
}

/// Standard schedule: 1 level during the first 2m steps (the window-filling
/// phase transmits coarse sign information only), minimal levels afterwards.
pub fn minimal_schedule<T: Scalar>(m: usize, theta: T) -> Result<LevelSchedule> {
    LevelSchedule::new(1, minimal_levels(m, theta)?, 2 * m)
}
