//! Numerical laboratory for the stability of the Riesz-Sobolev inequality
//! near balls: interval sets and their flow, grid masks with Steiner
//! symmetrization, star-shaped sets on sphere grids, spectral constants of the
//! second variation, affine balancing and orbit distances.

pub mod balancing;
pub mod error;
pub mod experiments;
pub mod flow1d;
pub mod grid_set;
pub mod interval_set;
pub mod orbit_distance;
pub mod quad;
pub mod spectral;
pub mod sphere;
pub mod star_set;

pub use error::{Error, Result};
