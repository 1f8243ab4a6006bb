#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Nonlocal Bellman-Isaacs operators on bounded domains with exterior data.
//!
//! The crate evaluates singular Lévy operators, checks kernel ellipticity
//! conditions, certifies barrier functions near the boundary, solves the
//! Dirichlet problem by a monotone discrete Perron iteration, and measures
//! the regularity of computed solutions.

pub mod error;
pub mod barriers;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod kernels;
pub mod nonlocal_op;
pub mod perron;
pub mod quadrature;
pub mod regularity;

pub use error::{Error, Result};
