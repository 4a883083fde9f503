//! Encoder/decoder pair for one agent's output channel.
//!
//! Both ends run the same state machine: a window of the last 2m
//! reconstructed outputs, the full-state estimate obtained from it through
//! the recovery matrix, and a geometrically shrinking quantizer scale. The
//! encoder quantizes the scaled innovation (measured output minus one-step
//! prediction) to a symbol; the decoder applies the symbol to an identical
//! state machine. Keeping the arithmetic path identical on both sides makes
//! encoder and decoder estimates bit-equal, which is what lets every receiver
//! of a broadcast symbol stream agree exactly on the sender's estimate.
//!
//! Before the window first fills (t < 2m) there is no prediction: the raw
//! output is quantized absolutely and the full-state estimate stays zero.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::num::{cast, Scalar};
use crate::quantizer::quantize;

/// Shared encoder/decoder state machine.
#[derive(Clone, Debug)]
pub struct CodecState<T: Scalar> {
    m: usize,
    /// Next step index this codec will accept (1-based).
    t: usize,
    /// Scale for the upcoming step; decays by γ after every step.
    p: T,
    gamma: T,
    /// First row of the dynamics matrix (one-step output predictor).
    pred_row: RowDVector<T>,
    /// Output-window recovery matrix.
    recovery: DMatrix<T>,
    /// Last up-to-2m reconstructed outputs, oldest first.
    window: Vec<T>,
    estimate: DVector<T>,
}

/// Everything the encoder produced at one step.
#[derive(Clone, Copy, Debug)]
pub struct EncodeStep<T: Scalar> {
    pub t: usize,
    /// Scale in effect at this step.
    pub scale: T,
    pub symbol: i64,
    /// Scaled innovation fed to the quantizer.
    pub innovation: T,
    /// Quantizer residual Δ = symbol − innovation; the first-coordinate
    /// estimation error is scale·Δ exactly.
    pub quant_error: T,
    /// Reconstructed output (what the decoder will also hold).
    pub reconstructed: T,
    /// Whether the quantizer clamped (|Δ| beyond the half-bin guarantee).
    pub saturated: bool,
}

impl<T: Scalar> CodecState<T> {
    pub fn new(model: &SystemModel<T>, p0: T, gamma: T) -> Result<Self> {
        if p0 <= T::zero() {
            return Err(Error::InvalidParameter {
                name: "p0",
                reason: "initial scale must be positive".into(),
            });
        }
        if gamma <= T::zero() || gamma > T::one() {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: "scale decay must lie in (0, 1]".into(),
            });
        }
        Ok(Self {
            m: model.m,
            t: 1,
            p: p0,
            gamma,
            pred_row: model.a.row(0).into_owned(),
            recovery: model.recovery.clone(),
            window: Vec::with_capacity(2 * model.m),
            estimate: DVector::zeros(2 * model.m),
        })
    }

    /// Step index the codec expects next.
    pub fn step(&self) -> usize {
        self.t
    }

    /// Scale that will be applied at the next step.
    pub fn scale(&self) -> T {
        self.p
    }

    /// Full-state estimate after the most recent step (zero until t = 2m).
    pub fn estimate(&self) -> &DVector<T> {
        &self.estimate
    }

    /// One-step output prediction for the upcoming step (zero while the
    /// window is still filling).
    pub fn predict(&self) -> T {
        if self.t <= 2 * self.m {
            T::zero()
        } else {
            (&self.pred_row * &self.estimate)[0]
        }
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t != self.t {
            return Err(Error::StepOutOfOrder {
                expected: self.t,
                got: t,
            });
        }
        Ok(())
    }

    /// Common tail of encode/decode: fold the reconstructed output into the
    /// window, refresh the estimate once the window is full, decay the scale.
    fn advance(&mut self, reconstructed: T) {
        if self.window.len() == 2 * self.m {
            self.window.remove(0);
        }
        self.window.push(reconstructed);
        if self.window.len() == 2 * self.m {
            let w = DVector::from_column_slice(&self.window);
            self.estimate = &self.recovery * w;
        }
        self.p *= self.gamma;
        self.t += 1;
    }

    /// Quantizes the scaled innovation for step `t` and advances.
    pub fn encoder_step(&mut self, t: usize, y: T, levels: u32) -> Result<EncodeStep<T>> {
        self.check_step(t)?;
        let scale = self.p;
        let pred = self.predict();
        let innovation = (y - pred) / scale;
        let symbol = quantize(innovation, levels)?;
        let quant_error = cast::<T>(symbol as f64) - innovation;
        let saturated =
            quant_error.abs() > cast::<T>(0.5) + cast::<T>(4.0) * T::default_epsilon();
        let reconstructed = pred + scale * cast::<T>(symbol as f64);
        self.advance(reconstructed);
        Ok(EncodeStep {
            t,
            scale,
            symbol,
            innovation,
            quant_error,
            reconstructed,
            saturated,
        })
    }

    /// Applies a received symbol for step `t`; returns the reconstructed
    /// output. Rejects symbols outside the agreed alphabet.
    pub fn decoder_step(&mut self, t: usize, symbol: i64, levels: u32) -> Result<T> {
        self.check_step(t)?;
        if levels < 1 {
            return Err(Error::InvalidQuantizer(format!(
                "level count must be at least 1, got {levels}"
            )));
        }
        if symbol.abs() > levels as i64 {
            return Err(Error::InvalidQuantizer(format!(
                "symbol {symbol} outside alphabet of {levels} levels"
            )));
        }
        let pred = self.predict();
        let reconstructed = pred + self.p * cast::<T>(symbol as f64);
        self.advance(reconstructed);
        Ok(reconstructed)
    }
}
