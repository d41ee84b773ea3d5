use thiserror::Error;

use crate::geometry::Vec2;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is singular (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("singular values coincide; no characteristic directions")]
    ConformalMatrix,

    /// `index` is the last orbit index that was computed inside the domain
    /// (negative for the backward leg).
    #[error("orbit escaped the computational domain after index {index}")]
    Escaped { index: i64, point: Vec2 },

    #[error("map is not invertible: {0}")]
    NonInvertible(String),

    #[error("invalid map definition: {0}")]
    InvalidMap(String),

    #[error("Pliss hypothesis violated: {0}")]
    EmptyHypothesis(String),

    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("splitting estimate degenerate (angle {angle:e})")]
    DegenerateAngle { angle: f64 },

    #[error("nearest-neighbour match exceeds mesh tolerance ({distance:e} > {tolerance:e})")]
    MeshTooCoarse { distance: f64, tolerance: f64 },

    #[error("point is not a hyperbolic saddle")]
    NotASaddle,

    #[error("eigendirections are degenerate (angle {angle:e})")]
    EigenDegenerate { angle: f64 },

    #[error("crossing type undetermined: {0}")]
    Undetermined(String),

    #[error("parameter bracket invalid: {0}")]
    BracketInvalid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
