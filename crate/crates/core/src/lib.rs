//! Particle laboratory for McKean–Vlasov SDEs on domains.

pub mod error;
pub mod expr;
pub mod lyapunov;
pub mod measure;
pub mod model;
pub mod reduce;
pub mod report;
pub mod rng;
pub mod lions;
pub mod simulate;
pub mod analysis;
pub mod cli;

pub use error::{Error, Result};
