//! Simulation and verification toolkit for the merged diffusion
//!
//! ```text
//! dX = v_d tanh(kappa X) dt + sigma dW,    kappa = v_d / sigma^2
//! ```
//!
//! The process is the single-noise merge of two oppositely biased Wiener
//! processes. Its transition law is a two-component Gaussian mixture whose
//! weights depend on the starting point, and its mean squared displacement
//! does not depend on the start time or the start position.
//!
//! Modules:
//! - [`params`], [`rng`], [`path`]: parameter objects, reproducible streams, trajectories.
//! - [`analytic`]: closed-form densities, moments, the exact sampler and drift-family checks.
//! - [`sde`]: Euler-Maruyama and stochastic Heun integrators.
//! - [`walk`]: the site-dependent random walk and its exact finite-time law.
//! - [`fpe`]: Crank-Nicolson solver for the forward equation.
//! - [`stats`]: ensemble estimators, distances and order fitting.
//! - [`verify`]: the check battery used by the command-line `verify` command.

pub mod analytic;
pub mod error;
pub mod fpe;
pub mod params;
pub mod path;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod special;
pub mod stats;
pub mod verify;
pub mod walk;

pub use error::{Error, Result};
pub use params::{params_from_physical, PhysicalParams, ProcessParams};
pub use path::{Path, Provenance};
pub use rng::{substream, RngStream};
