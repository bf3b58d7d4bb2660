//! Rate-relevance trade-offs for the multi-layer information bottleneck.
//!
//! - [`prob`]: finite-alphabet distributions, channels and information measures.
//! - [`closed_form`]: rate-relevance functions of the binary and Gaussian models.
//! - [`oracle`]: numerical rate-relevance function of arbitrary finite joints.
//! - [`multilayer`]: region bounds, membership, successive refinability and the pair certificate.
//! - [`codesim`]: nested random coding at small blocklengths with exact relevance.

pub mod closed_form;
pub mod codesim;
pub mod error;
pub mod multilayer;
pub mod oracle;
pub mod prob;

pub use error::{Error, Result};
