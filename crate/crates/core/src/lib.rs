//! Quantized distributed consensus for networks of coupled oscillator agents.
//!
//! Each agent is a critically stable 2m-th order discrete-time oscillator
//! stack (m rotation blocks chained through an integrator ladder) that
//! broadcasts a finitely quantized, adaptively scaled innovation of its
//! scalar output to its neighbours. The crate covers the full pipeline:
//!
//! * [`model`] — agent dynamics, output-window state recovery, and the
//!   averaging vector with its closed-form coefficients;
//! * [`quantizer`] — the symmetric mid-rise quantizer, minimal level counts,
//!   and the two-phase level schedule behind the data-rate results;
//! * [`codec`] — the bit-exact encoder/decoder state machine with
//!   geometrically shrinking scale;
//! * [`network`] — weighted graphs, Laplacian spectra, and the modal bases
//!   used by the feasibility constants;
//! * [`gains`] — coefficient recipes, ε-graded coupling gains, and the
//!   explicit feasibility inequalities with the ε halving search;
//! * [`spectral`] — balanced per-mode spectral radii, slope expansions, and
//!   Monte-Carlo verification of the modal power bounds;
//! * [`sim`] — the closed-loop simulation and its summary metrics.
//!
//! Everything is generic over the scalar type through [`Scalar`]
//! (f64 and f32 both work); the `*64` aliases below fix the common case.

pub mod codec;
pub mod combin;
mod dd;
pub mod error;
pub mod gains;
pub mod model;
pub mod network;
pub mod num;
pub mod quantizer;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
pub use num::Scalar;

/// Re-exported so downstream users match the matrix types without pinning
/// their own nalgebra version.
pub use nalgebra;

pub type SystemModel64 = model::SystemModel<f64>;
pub type Network64 = network::Network<f64>;
pub type ModalBasis64 = network::ModalBasis<f64>;
pub type CoeffSet64 = gains::CoeffSet<f64>;
pub type ConstantSet64 = gains::ConstantSet<f64>;
pub type FeasibilityReport64 = gains::FeasibilityReport<f64>;
pub type GainPlan64 = gains::GainPlan<f64>;
pub type PlanOptions64 = gains::PlanOptions<f64>;
pub type CodecState64 = codec::CodecState<f64>;
pub type EncodeStep64 = codec::EncodeStep<f64>;
pub type SpectralReport64 = spectral::SpectralReport<f64>;
pub type SimConfig64 = sim::SimConfig<f64>;
pub type SimTrace64 = sim::SimTrace<f64>;
pub type Metrics64 = sim::Metrics<f64>;
