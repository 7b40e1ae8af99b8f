//! Ground-truth generation: finite-difference Poisson solving on the unit
//! square and manufactured solutions with a numerical surface Laplacian on
//! the unit sphere.

mod dd;
mod poisson;
mod sphere;

pub use poisson::*;
pub use sphere::*;
