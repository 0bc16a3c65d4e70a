pub mod error;
pub mod jet;
pub mod spectral;

pub use error::{Error, Result};
pub mod geometry;
pub mod io;
pub mod limiting;
pub mod initial;
pub mod nodes;
pub mod column;
pub mod layer;
pub mod interior;
pub mod expansion;
pub mod channel;
pub mod corrector;
pub mod residual;
pub mod diagnostics;
pub mod config;
pub mod verify;
