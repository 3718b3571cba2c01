//! Principal-component peeling for bump hunting: PCA, one-shot quantile
//! peels of leading or trailing components, the statistics of the covariance
//! that survives a peel, and checks of how those statistics are ordered.

pub mod app;
pub mod covstats;
pub mod elliptical;
pub mod error;
pub mod gapsel;
pub mod ingest;
pub mod matrix;
pub mod nfl;
pub mod peel;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
