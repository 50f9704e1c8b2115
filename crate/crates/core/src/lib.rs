//! Batch harness for scoring the veracity of short political statements with
//! large language models: corpus loading, prompt rendering, model access,
//! reply parsing, thresholding, calibration, metrics and follow-up studies.

pub mod calibration;
pub mod corpus;
pub mod error;
pub mod evidence;
pub mod gateway;
pub mod parser;
pub mod prompts;
pub mod runner;
pub mod scoring;
pub mod studies;
pub mod verdicts;

pub use error::{Error, Result};
