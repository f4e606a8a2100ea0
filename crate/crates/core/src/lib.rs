//! Single-particle path superpositions coupled to two distant pointer meters.
//!
//! A photon travels through an interferometer whose left arm carries a
//! presence meter `A` (pointer `x`) and whose right arm carries a
//! polarization meter `B` (pointer `y`). Conditioning on a final detection
//! leaves the meters entangled even though they never interact. This crate
//! computes that entanglement three ways:
//!
//! * exactly, for unit-variance Gaussian meters ([`indicator`]),
//! * by quadrature on a pointer grid for arbitrary meter wavefunctions
//!   ([`meter`], [`dynamics`]),
//! * statistically, from simulated trials with the signed cross-moment
//!   estimator `<tau x y>` ([`sampler`]).
//!
//! [`entanglement`] embeds the postselected meter state in its 2x3
//! dimensional span and reports the partial-transpose negativity.

pub mod complex_text;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod indicator;
pub mod meter;
pub mod qsystem;
pub mod sampler;
pub mod sweep;

pub use error::{Error, Result};
pub use num_complex::Complex64;
