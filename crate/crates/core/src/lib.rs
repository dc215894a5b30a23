pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod diffeo;
pub mod error;
pub mod field;
pub mod io;
pub mod lifting;
pub mod rollout;
pub mod solvers;

pub use error::{Error, Result};
