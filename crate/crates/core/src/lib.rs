pub mod blocks;
pub mod config;
pub mod driver;
pub mod dump;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod field;
pub mod fit;
pub mod geometry;
pub mod grid;
pub mod ledger;
pub mod mollify;
pub mod norms;
pub mod operators;
pub mod perturbation;
pub mod quad;
pub mod report;
pub mod reynolds;
pub mod scenario;
pub mod spectral;
pub mod state;
pub mod timefield;
pub mod verify;

pub use error::{CiwError, Result};
