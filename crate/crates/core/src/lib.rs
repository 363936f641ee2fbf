//! Lidar-inertial continuous-time odometry and mapping core.
//!
//! The crate is organized around an octree of multi-scale surfels that is
//! updated incrementally with Welford-style moment arithmetic. Raw lidar
//! points are motion-compensated with IMU-propagated poses, associated to
//! surfels across voxel scales, and fed together with IMU preintegration
//! factors into a sliding-window MAP solver. A pose graph over keyframes
//! handles loop closure.
//!
//! Everything here is pure computation over `alloc` collections; file
//! formats, the simulator and the CLI live in the companion `slict-cli`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod deskew;
pub mod estimator;
pub mod geometry;
pub mod posegraph;
pub mod preint;
pub mod surfel;

pub use geometry::{Mat3, Pose, Rotation, Timestamp, Vec3};
