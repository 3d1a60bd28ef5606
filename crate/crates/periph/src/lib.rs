//! periph: peripheral holonomy of deformed representations of cusped
//! 3-manifold groups into PGL(n, C).
//!
//! The crate deforms a base representation along prescribed longitude
//! eigenvalue-ratio targets, reads the induced meridian response through a
//! continued flag decoration, and applies a one-sided discreteness
//! certificate to the resulting log-modulus lattice data. A small embedded
//! corpus of figure-eight-knot representations anchors the test suite and
//! the CLI.

pub mod cli;
pub mod corpus8;
pub mod cxmat;
pub mod defsolve;
pub mod error;
pub mod flagdec;
pub mod fpgroup;
pub mod latcrit;
pub mod repio;
pub mod symlift;

pub use error::{Error, Result};
