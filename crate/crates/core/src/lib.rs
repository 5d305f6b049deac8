//! Numerics for the fractional Yamabe problem with isolated singularities:
//! the cylindrical nonlocal operator, periodic Delaunay profiles, bubble
//! interaction integrals, balancing and Toda-type reduced systems, and
//! weighted residual norms of the assembled approximate solution.

pub mod acceptance;
pub mod assembly;
pub mod delaunay;
pub mod error;
pub mod fit;
pub mod fracops;
pub mod interactions;
pub mod interp;
pub mod quad;
pub mod reduced_system;
pub mod special;

pub use error::{Error, Result, Stage};
pub use fracops::ProblemParams;
