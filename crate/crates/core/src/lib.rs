pub mod autodiff;
pub mod datagen;
pub mod eki;
pub mod error;
pub mod linalg;
pub mod problems;
pub mod runner;
pub mod selftest;
pub mod stats;
pub mod surrogate;

pub use error::{Error, Result};
