//! Power-minimizing transmission design for a multiuser downlink assisted by a
//! half-duplex decode-and-forward relay and a reconfigurable intelligent
//! surface (RIS) with discrete phase shifts.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: node geometry, path loss, steering vectors and random
//!   Rician/Rayleigh channel realizations.
//! - [`rates`]: effective channels, relay decoding rate, per-user SINRs and
//!   the feasibility check of the joint power-minimization problem.
//! - [`waterfill`]: BS precoder from the SVD of the composite BS→relay channel
//!   with active-set water-filling.
//! - [`relay`]: relay precoder via uplink-downlink duality or zero-forcing.
//! - [`search`]: blockwise exhaustive coordinate search over the discrete
//!   RIS phase indices.
//! - [`pipeline`]: full solves for relay+RIS and the relay-only / RIS-only
//!   baselines.
//! - [`experiment`]: seeded Monte Carlo sweeps and CSV/JSON output.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod experiment;
pub mod pipeline;
pub mod rates;
pub mod relay;
pub mod search;
pub mod waterfill;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
