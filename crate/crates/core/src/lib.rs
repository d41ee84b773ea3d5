//! Numerical tools for the projective derivative cocycle of planar
//! diffeomorphisms: critical points and directions, dominated splittings,
//! invariant manifolds and tangencies.

pub mod cocycle;
pub mod criticality;
pub mod domination;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod manifolds;
pub mod samples;

pub use error::{Error, Result};
