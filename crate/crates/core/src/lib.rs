//! Neumann functions of divergence-form elliptic systems with rough
//! coefficients: hexahedral discretization, constrained solves, kernel
//! construction, analytic references, and empirical estimate checks.

pub mod coeff;
pub mod config;
pub mod discretize;
pub mod error;
pub mod estimates;
pub mod experiment;
pub mod field;
pub mod kernel;
pub mod krylov;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod quadrature;
pub mod report;
pub mod solve;

pub use error::{Error, Result};
