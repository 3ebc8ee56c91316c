//! Joint trajectory, cooperation and beamforming design for UAV-assisted
//! cooperative downlink, solved by successive convex approximation.

pub mod channel;
pub mod baselines;
pub mod ccp;
pub mod cone;
pub mod dcp;
pub mod error;
pub mod harness;
pub mod model;
pub mod scenario;
pub mod sdr;
pub mod units;

pub use error::{Error, Result};
