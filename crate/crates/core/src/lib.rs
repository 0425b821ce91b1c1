//! Link-level simulator for a stratospheric-platform MIMO-NOMA downlink.
//!
//! The crate models a multi-antenna base station (either a high-altitude
//! platform at 20 km or a terrestrial tower at 25 m) serving single-antenna
//! ground users grouped into NOMA clusters. It is organized as a pipeline:
//!
//! 1. [`geometry`] — planar-array element layout, wave vectors, one-ring
//!    scattering spreads for each user placement;
//! 2. [`channel`] — free-space path loss with log-normal shadowing, LoS
//!    probability, LoS steering vectors, one-ring spatial covariance, and
//!    Karhunen–Loève channel sampling;
//! 3. [`clustering`] — correlation-based user grouping;
//! 4. [`linkproc`] — identity precoding, zero-forcing detection vectors,
//!    in-cluster ordering, and per-user NOMA rates;
//! 5. [`powalloc`] — two-stage power-fraction allocation (QoS/SIC minima,
//!    then fraction-level equalization of the residual budget);
//! 6. [`experiments`] — Monte Carlo harness, metric series, and the
//!    scenario sweeps exposed by the `hapsim` CLI.
//!
//! # Example
//!
//! ```
//! use hapsim_core::geometry::{ArrayGeometry, Orientation};
//!
//! // A 2x2 half-wavelength panel at 2.5 GHz, mounted horizontally.
//! let lambda = hapsim_core::SPEED_OF_LIGHT / 2.5e9;
//! let geom = ArrayGeometry::new(2, 2, 0.5, 0.5, lambda, Orientation::Horizontal).unwrap();
//! assert_eq!(geom.n_elements(), 4);
//! ```

pub mod channel;
pub mod clustering;
pub mod experiments;
pub mod geometry;
pub mod linkproc;
pub mod powalloc;
mod quadrature;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Complex scalar used throughout the crate.
pub type C64 = nalgebra::Complex<f64>;
