//! Channel-aided interference alignment for `K`-user single-antenna
//! interference channels.
//!
//! * [`channel`] draws bounded Rayleigh-fading slots, stacks them into
//!   time-extended diagonal channels and simulates noisy reception.
//! * [`alignment`] computes the loop matrices `T` and `T_j^{[i]}`, decides
//!   whether they admit perfect alignment, builds aligning beamformers and
//!   verifies them.
//! * [`pairing`] solves the two-slot combining scheme for three users and
//!   quantifies residual interference when slots match only approximately.
//! * [`delay`] holds the waiting-time analysis and its Monte Carlo checks.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`. Users are labelled `1..=K`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod channel;
pub mod delay;
pub mod error;
pub mod linalg;
pub mod pairing;
pub mod rng;
pub mod scalar;

pub use error::{CaiaError, Result};
pub use scalar::Real;

pub type C64 = num_complex::Complex<f64>;
pub type Slot = channel::ChannelSlot<f64>;
pub type Channel = channel::ExtendedChannel<f64>;
pub type Noise = channel::NoiseModel<f64>;
pub type Structure = alignment::TStructure<f64>;
pub type Solution = alignment::AlignmentSolution<f64>;
pub type Tolerances = alignment::Tolerances<f64>;
pub type Pairing = pairing::PairingSolution<f64>;
pub type Residual = pairing::ResidualReport<f64>;
pub type Matrix = linalg::CMatrix<f64>;
