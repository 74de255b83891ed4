//! Downlink ergodic capacity and antenna-port placement for generalized
//! distributed antenna systems DAS(N, L).
//!
//! A DAS(N, L) cell has `N` geographically separated antenna ports, each with
//! `L` co-located antennas and its own transmit power budget. The crate is
//! organised bottom-up:
//!
//! - [`geometry`]: cell regions, user sampling, clamped distances, the
//!   first tier of neighbouring cells and projection back into the cell.
//! - [`channel`]: path loss, log-normal shadowing, Rayleigh fading and the
//!   interference-plus-noise variance seen by a user in the central cell.
//! - [`capacity`]: closed-form per-realization capacities with and without
//!   transmitter CSI, the optimal covariance constructors and a brute-force
//!   covariance search used to certify them.
//! - [`ergodic`]: Monte-Carlo cell-averaged rates, the Jensen lower bound,
//!   edge-SNR calibration, area spectral efficiency and power gains.
//! - [`placement`]: Lloyd-style lower-bound placement, Robbins-Monro
//!   stochastic placement, joint power allocation and minimum-power search.

pub mod capacity;
pub mod channel;
pub mod ergodic;
pub mod error;
pub mod geometry;
pub mod placement;
pub mod rng;

pub use error::{Error, Result};
