//! Ease-in-ease-out transfer for reinforcement learning across homotopy
//! classes: geometry and homotopy oracles, the W∞ metric, navigation and
//! joint-angle environments, a REINFORCE engine, barrier curricula and an
//! experiment harness.

pub mod curriculum;
pub mod envs;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod homotopy;
pub mod rl;
pub mod wasserstein;

pub use error::{Error, Result};
