pub mod asymptotics;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod fields;
pub mod potential;
pub mod profiles;
pub mod semigroup;
pub mod series;
pub mod special;
mod spectral;

pub use error::{PksError, Result};
