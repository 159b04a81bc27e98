//! Sphere-cap mass, effective dimensionality and the semantic-proximity test.

pub mod cap;
pub mod dims;
pub mod spp;

pub use cap::{cap_estimate, cap_fraction_analytic, cap_fraction_mc, ln_cap_fraction_analytic, CapEstimate};
pub use dims::{
    covariance_eigenvalues, dim_report, levina_bickel, participation_ratio, pca_variance_dims,
    spectral_effective_rank, two_nn, DimReport, LocalDimEstimator,
};
pub use spp::{spp_test, SppReport};
