//! Covariance geometry on the manifold of SPD matrices under the
//! affine-invariant metric.

mod featurizer;
mod geometry;
mod matrix;
mod mdrm;

pub use featurizer::{FilterScope, ReferencePolicy, TangentConfig, TangentFeaturizer};
pub use geometry::{
    airm_distance, euclidean_mean, exp_map, log_map, pca_spatial_filter, riemannian_mean, scm, scm_of,
    tangent_norm, tangent_vectorize, unupper, upper, upper_len, MeanOptions, RiemannianMean, SpatialFilter,
    TangentSpace, TangentVector,
};
pub use matrix::{expm, invsqrtm, logm, symmetrize, SpdMatrix, SINGULAR_RTOL};
pub use mdrm::Mdrm;
