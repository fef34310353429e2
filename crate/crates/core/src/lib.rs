pub mod body_model;
pub mod canonical;
pub mod error;
pub mod fields;
pub mod losses;
pub mod math;
pub mod pipeline;
pub mod render;
pub mod workbench;

pub use error::{Error, Result};
