//! Basis-network solver for multi-query inverse problems in parametric
//! differential equations.
//!
//! The workflow has two phases. Offline, a dense tanh network (the basis body
//! `R`) is trained together with a multi-readout linear layer `L` so that the
//! outputs of `R` span the solution space of a parametric ODE/PDE over a
//! distribution of parameters. Online, `R` is frozen; each new inverse problem
//! is solved by optimizing only a fresh readout layer plus trainable parameter
//! estimates (or small unknown-term sub-networks) against observed data.
//!
//! Residual derivatives are obtained with truncated second-order Taylor
//! (hyper-dual) forward passes, which yield the value, two directional first
//! derivatives and one mixed second derivative of every basis output in a
//! single sweep. Training gradients are computed by a fixed-structure
//! reverse pass that treats the four Taylor channels as ordinary
//! intermediates.

pub mod cli;
pub mod error;
pub mod hyperdual;
pub mod network;
pub mod offline;
pub mod online;
pub mod optimize;
pub mod oracle;
pub mod problems;

pub use error::{Error, Result};
