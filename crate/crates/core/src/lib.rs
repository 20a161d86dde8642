//! Numerical laboratory for the Bennati-Dragulescu-Yakovenko wealth-exchange
//! model: the agent process, its mean-field ODE system, the kinetic
//! epsilon-exchange equation, the nonlinear Fokker-Planck limit with its
//! Robin boundary condition, and the linearization around equilibrium.

pub mod agent;
pub mod diagnostics;
pub mod epsilon;
pub mod error;
pub mod fokker_planck;
pub mod harness;
pub mod linearized;
pub mod meanfield;
pub mod model;
pub mod timeline;

pub use error::{Error, Result};
pub use model::{GridFunction, ModelParams, Pmf};
