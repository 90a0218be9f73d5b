//! Isotropic stable processes killed on leaving a cone.

pub mod cone_geometry;
pub mod error;
pub mod fractional_grid_solver;
pub mod killed_mc;
pub(crate) mod quad;
pub mod stable_density;
pub mod stable_sampler;
pub mod stats;

pub use error::{Error, Result};
