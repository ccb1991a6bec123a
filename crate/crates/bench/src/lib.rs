//! Scene generation, a scripted model stand-in, and the evaluation matrix.

pub mod matrix;
pub mod metrics;
pub mod report;
pub mod scenes;
pub mod scripted;
