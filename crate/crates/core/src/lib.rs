pub mod cli;
pub mod error;
pub mod forecast;
pub mod frc;
pub mod network;
pub mod oscillator;
pub mod pipeline;
pub mod plot;
pub mod stability;
pub mod sweep;
pub mod trainer;

pub use error::{Error, Result};
