pub mod augmentation;
pub mod autodiff;
pub mod corpus;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod parallel;
pub mod pipeline;
pub mod text;
pub mod training;

pub use error::{Error, Result};
