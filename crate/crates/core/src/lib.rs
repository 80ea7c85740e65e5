//! Wavelet phase harmonic covariance statistics for stationary 2D fields,
//! with a maximum-entropy Gaussian model and microcanonical synthesis.

pub mod error;
pub mod eval;
pub mod gaussian;
pub mod graph;
pub mod grid;
pub mod harmonics;
pub mod io;
pub mod lbfgs;
pub mod micro;
pub mod wavelet;

pub use error::{Error, Result};
pub use grid::{ComplexField, Domain, Seed, C64};
pub use wavelet::{Channel, ChannelLayout, WaveletBank, WaveletCoeffs};
