pub mod agreement;
pub mod canon;
pub mod codegen;
pub mod error;
pub mod exec;
pub mod lexer;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod provider;
pub mod report;
pub mod testgen;

pub use error::{Error, Result};
