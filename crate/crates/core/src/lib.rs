//! Certified exponential convergence-rate bounds for finite
//! inhomogeneous continuous-time Markov chains, with a transient solver
//! to validate every certificate empirically.

pub mod bound;
pub mod diffineq;
pub mod error;
pub mod export;
pub mod lognorm;
pub mod lyapunov;
pub mod matrices;
pub mod model;
pub mod presets;
pub mod transient;
