//! Numerical evaluation of the homogenized bulk and surface energy densities
//! of first-order structured deformations in periodic media.
//!
//! * [`density`]: periodic densities `W(x, xi)` and `psi(x, lambda, nu)`.
//! * [`sbv`]: discrete SBV fields and energy assembly.
//! * [`bulk`]: the bulk cell problem `m_k(A, B)` and `H_hom(A, B)`.
//! * [`surface`]: the surface cell problem via minimum cut and `h_hom(lambda, nu)`.
//! * [`approx`]: explicit approximating and recovery sequences.
//! * [`oracle`]: brute-force references used to certify the solvers.
//! * [`config`], [`store`], [`run`]: experiment orchestration and output.

pub mod error;
pub mod matrix;
pub mod density;
pub mod sbv;
pub mod projection;
pub(crate) mod assemble;
pub mod estimate;
pub mod bulk;
pub mod maxflow;
pub mod surface;
pub mod approx;
pub mod oracle;
pub mod config;
pub mod store;
pub mod run;

pub use error::{Error, Result};
pub use matrix::Mat;
