//! Offline tooling around the core odometry library: dataset simulation,
//! file formats, run configuration, the windowed pipeline driver, trajectory
//! evaluation and map export.

pub mod ate;
pub mod config;
pub mod export;
pub mod formats;
pub mod pipeline;
pub mod sim;
