//! Declarative training procedures and a leave-one-subject-out benchmark
//! harness for wearable human-activity-recognition models.

pub mod data;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod models;
pub mod protocol;
pub mod util;

pub use error::{Error, Result};
