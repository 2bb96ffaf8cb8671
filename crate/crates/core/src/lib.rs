//! Swing option valuation under mean-reverting factor dynamics with
//! exponential jumps, by finite differences on the HJB PIDE.

pub mod boundary;
pub mod config;
pub mod contract;
pub mod diagnostics;
pub mod error;
pub mod factor;
pub mod grid;
pub mod mc;
pub mod policy;
pub mod quadrature;
pub mod solver;
pub mod tridiag;

pub use error::{Result, SwingError};
