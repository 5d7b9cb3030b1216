//! Minimal evolution times of pulse-based state preparation on linear
//! chains of silicon spin qubits.

pub mod cost;
pub mod device;
pub mod error;
pub mod gates;
pub mod grape;
pub mod haar;
pub mod linalg;
pub mod met;
pub mod propagation;

pub use cost::{evaluate, CostFunction, PauliSum};
pub use device::{ControlSchedule, DeviceParams};
pub use error::{Error, Result};
pub use propagation::{propagate, PropagationOptions, PropagationResult, StateVector};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
