//! Numerical laboratory for a planar horseshoe with an internal homoclinic
//! tangency: the map and its hyperbolic splitting, invariant manifolds by
//! graph transform, symbolic coding onto the full 3-shift, and equilibrium
//! states of Hölder potentials.

pub mod error;
pub mod map_core;
pub mod splitting;
pub mod induced;
pub mod manifolds;
pub mod coding;
pub mod thermo;

pub use error::{Error, Result};
pub use map_core::{Mat2, MapParams, Point};
