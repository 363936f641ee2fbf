//! Sliding-window synchronizer and MAP solver.
//!
//! Multi-lidar streams are merged into fixed-period scan bundles, each
//! bundle adds a handful of state knots to the window, and the window is
//! optimized by an iterated deskew / associate / Levenberg-Marquardt loop
//! over preintegration and point-to-surfel factors. Full windows are
//! marginalized into keyframes.

mod factors;
mod solve;
mod sync;
mod window;

pub use factors::{pts_factor_eval, FactorCounts, PtsFactorEval};
pub use solve::{OptimizeReport, SolveError};
pub use sync::{ScanBundle, StreamBuffers, SyncConfig, SyncError};
pub use window::{
    KeyframeThresholds, MarginalizeOutcome, SlidingWindow, SolverConfig, WindowError,
};
