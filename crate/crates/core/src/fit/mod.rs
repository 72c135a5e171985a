//! Parameter estimation: Lorentzian slice fits of reflection spectra, static
//! parameter extraction from reflection maps, least-squares fits of spring
//! and damping curves, and linear drift removal.

mod drift;
mod dynamics_fit;
mod grid;
pub mod lsq;
mod peak;
mod slice;
mod static_params;

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::model::ModelError;

pub use drift::{drift_subtract, split_sweep, DriftModel, DriftResult, DriftSample};
pub use dynamics_fit::{fit_dynamics, DynamicsFit, DynamicsPoint, FittedValue, FreeParam};
pub use grid::SpectrumGrid;
pub use peak::{fit_lorentzian_peak, LorentzianPeak};
pub use slice::{depth_from_kappa_in, fit_slice, kappa_in_from_depth, Background, Dip, SliceFitResult};
pub use static_params::{
    extract_static_params, CrossingEstimate, ModeEstimate, Measured, StaticParams, Topology,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no convergence after {iterations} iterations (best residual sum of squares {best_rss:.6e})")]
    NoConvergence {
        iterations: usize,
        best_rss: f64,
        best_x: Vec<f64>,
    },
    #[error("no resonance dips found")]
    NoDips,
    #[error("found {found} dips, {requested} requested")]
    TooFewDips { found: usize, requested: usize },
    #[error("insufficient coverage: {0}")]
    Coverage(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("ambiguous branch assignment: {0}")]
    DegenerateSlopes(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Non-fatal diagnostics attached to fit results.
#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    /// Two dip centers closer than a quarter linewidth.
    UnresolvedPeaks { first: usize, second: usize },
    /// A fitted parameter finished on one of its bounds.
    AtBound(String),
    /// Covariance could not be formed; uncertainties are NaN.
    SingularCovariance,
    /// Free-form diagnostic.
    Note(String),
}

impl std::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitWarning::UnresolvedPeaks { first, second } => {
                write!(f, "dips {first} and {second} are closer than 0.25 FWHM")
            }
            FitWarning::AtBound(p) => write!(f, "parameter {p} is at a bound"),
            FitWarning::SingularCovariance => write!(f, "covariance is singular"),
            FitWarning::Note(s) => f.write_str(s),
        }
    }
}
