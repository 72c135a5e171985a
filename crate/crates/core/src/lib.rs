//! Multimode cavity optomechanics near avoided crossings.
//!
//! - [`model`]: coupled-mode cavity, mode matrix, susceptibility, reflection.
//! - [`dynamics`]: self-energy, optical spring and damping, Brownian spectra.
//! - [`fit`]: reflection-map, spring/damping, Lorentzian-peak and drift fits.
//! - [`oracle`]: time-domain integration of the coupled equations and ringdown comparison.
//! - [`cli`]: configuration, sweeps and file output behind the `optomech` binary.
//! - [`presets`]: parameter sets of the measured device.
//! - [`units`]: constants and conversions; everything internal is rad/s and meters.

// `!(x > 0.0)` guards deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod fit;
pub mod model;
pub mod oracle;
pub mod presets;
pub mod units;
