//! Joint optimization of transmissive-RIS coefficients, receive beamformers
//! and power allocation for a multi-user MIMO downlink.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: Rician channel synthesis from array geometry.
//! - [`system`]: SINR / rate evaluation and constraint checks.
//! - [`lift`]: real-valued reformulations of the RIS vector and the
//!   receive beamformers (spherical parameterization, derivatives,
//!   majorization constant).
//! - [`surrogate`]: convex surrogates and the three block subproblems.
//! - [`convex`]: a small interior-point solver for the resulting programs.
//! - [`ao`]: the alternating-optimization driver and baselines.
//! - [`bench`]: experiment runner, config parsing and result emission.

pub mod ao;
pub mod bench;
pub mod channel;
pub mod convex;
mod error;
pub mod lift;
pub mod par;
pub mod surrogate;
pub mod system;

pub use error::{Error, Result};

pub use nalgebra::Complex;

/// Complex scalar used throughout.
pub type C64 = Complex<f64>;
