//! Channel knowledge map grids and the linear observation model `y = Ax + n`.
//!
//! A [`CkmGrid`] stores gains in dB with an affine pixel mapping; a
//! [`DegradationSpec`] describes the operator `A` (identity, row selector,
//! block average, or zero) plus Gaussian noise. [`materialize_matrix`] builds
//! the dense `A` at oracle scale so every operator implementation can be
//! checked against an explicit matrix product.

mod degrade;
mod error;
mod grid;
pub mod io;
mod value_map;

pub use degrade::{
    apply_degradation, apply_degradation_with, materialize_matrix, pad_observation,
    DegradationKind, DegradationSpec, Observation, ORACLE_PIXEL_CAP,
};
pub use error::{GridError, Result};
pub use grid::CkmGrid;
pub use value_map::{gain_of_pixel, pixel_of_gain, ValueMap};

/// Row-major vectorization of a 2-D pixel array, the order `materialize_matrix`
/// assumes.
pub fn vectorize(image: &ndarray::Array2<f64>) -> Vec<f64> {
    image.iter().copied().collect()
}
