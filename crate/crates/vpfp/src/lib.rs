//! Fourier-spectral simulation and linear analysis of the one-dimensional
//! Vlasov-Poisson equation with nonlinear Fokker-Planck collisions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod initial;
pub mod kinematics;
pub mod multipliers;
pub mod output;
pub mod reduce;
pub mod spectral;
pub mod volterra;

pub use error::{Result, VpfpError};
