//! Density estimation for stretched highways: nonlinear state-space models,
//! Lipschitz constants, L-infinity observer synthesis, simulation, and
//! EKF/UKF baselines.

pub mod error;
pub mod filters;
pub mod io;
pub mod linalg;
pub mod lipschitz;
pub mod model;
pub mod presets;
pub mod scenario;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use model::{build_model, GreenshieldParams, HighwayConfig, HighwaySpec, ModeledSystem, OffRamp, TrafficMode};
