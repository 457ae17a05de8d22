pub mod ablation;
pub mod autodiff;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod persist;
pub mod pipeline;
pub mod propagation;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
