//! Spatial weights and the lag operator.

pub mod lag;
pub mod weights;

pub use lag::{lag_derivative_terms, lag_transform, LagAlgebra, LagTerms};
pub use weights::{
    build_band_weights, build_inverse_distance_weights, build_knn_weights, row_normalize,
    Construction, SpatialWeights,
};
