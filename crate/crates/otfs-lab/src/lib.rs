pub mod autodiff;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod modem;
pub mod neural;
pub mod pipeline;
pub mod receivers;
pub mod report;
pub mod rng;
pub mod transforms;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
