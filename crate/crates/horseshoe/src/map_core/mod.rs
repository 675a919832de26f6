//! The piecewise map, its inverse and derivatives, parameter validation and
//! the constants ledger.

pub mod builder;
pub mod certificate;
pub mod geom;
pub mod map;
pub mod params;
pub mod validate;

pub use builder::{build_orbit, theta_point, Orbit};
pub use certificate::{Certificate, Constant, Provenance};
pub use geom::{Mat2, Point};
pub use map::*;
pub use params::MapParams;
pub use validate::{validate, ValidationReport, Verdict};
