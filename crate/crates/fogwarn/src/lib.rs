//! Deterministic simulator for fog-node vehicular collision warning.
//!
//! The crate models the uplink of a roadside fog node: vehicles report their
//! kinematic status once per slot, packets suffer stable-distributed latency
//! and Bernoulli loss, and the fog node runs a trajectory-calibrated collision
//! warning pipeline (TCCW) or one of two uncalibrated baselines (CBW, FWC).
//! Predicted warnings are scored against a ground-truth oracle by precision
//! and recall.

pub mod channel;
pub mod error;
pub mod fog;
pub mod metrics;
pub mod sim;
pub mod stable;
pub mod trajectory;

pub use error::{Error, Result};
