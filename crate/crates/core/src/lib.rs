pub mod covariance;
pub mod downlink;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod scenario;
pub mod linalg;
pub mod precoding;
pub mod radar;
pub mod sensing;

pub use error::{Error, Result};
