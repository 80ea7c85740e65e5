//! Covariance graphs: model presets, foveal edge sets, symmetry-averaged
//! estimation and the Fourier-domain harmonic covariance.

pub mod angular;
pub mod edges;
pub mod estimate;
pub mod fourier;
pub mod gaussianity;
pub mod model;

pub use angular::{angular_energy, angular_fourier_reduce, angular_spectrum_matrix, AngularBlock, ReducedTable};
pub use edges::{build_foveal_edges, Edge, EdgeSet, Vertex};
pub use fourier::{fourier_harmonic_covariance, harmonic_support, FourierHarmonicTable};
pub use gaussianity::{gaussian_sparsity_ratio, gaussianity_report, support_constant, ChannelSparsity, CrossPair, GaussianityConfig, GaussianityReport};
pub use model::{KPairPolicy, ModelName, ModelSpec, OptimizerSettings, SymmetryGroup};
pub use estimate::{
    estimate_covariance, estimate_ensemble, estimate_mean, estimate_table, normalize_correlations, CovarianceTable, StatsPlan,
};
