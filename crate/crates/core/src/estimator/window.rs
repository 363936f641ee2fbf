//! Sliding-window state bookkeeping and marginalization.
//!
//! The window holds a fixed number of scan bundles. Each admitted bundle
//! appends evenly spaced state knots initialized by IMU propagation and one
//! preintegration per knot interval. Optimization alternates deskew and
//! association against a frozen map with a damped Gauss-Newton pass over all
//! knots. When the window is full the oldest bundle is marginalized: its
//! knots leave the window, a diagonal prior re-anchors the new head, and the
//! bundle's deskewed cloud is offered as a keyframe.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use crate::deskew::{associate, deskew_to_frame_end, DeskewError, PropagatedPoseSeq, RawPoint};
use crate::geometry::{Pose, Timestamp, Vec3};
use crate::preint::{
    preintegrate, propagate, slice_interval, ImuNoise, PreintError, Preintegration, StateEstimate,
    Vec15,
};
use crate::surfel::SurfelMap;

use super::solve::{lm_optimize, HeadPrior, OptimizeReport, SolveError};
use super::sync::{ScanBundle, SyncConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Deskew / associate / solve alternations per window.
    pub outer_iterations: usize,
    /// Damped Gauss-Newton step budget per outer iteration.
    pub inner_iterations: usize,
    /// Point-to-surfel measurement sigma (meters).
    pub lidar_sigma: f64,
    /// Huber threshold on the raw plane distance (meters).
    pub huber_delta: f64,
    pub lambda_init: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            outer_iterations: 3,
            inner_iterations: 8,
            lidar_sigma: 0.05,
            huber_delta: 0.1,
            lambda_init: 1e-4,
        }
    }
}

/// Keyframe admission rule: a pose is admitted when every one of its
/// `neighbors` nearest existing keyframes differs by more than the
/// translation or the rotation threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeThresholds {
    pub translation: f64,
    /// Radians.
    pub rotation: f64,
    pub neighbors: usize,
}

impl Default for KeyframeThresholds {
    fn default() -> Self {
        KeyframeThresholds {
            translation: 0.5,
            rotation: 0.3,
            neighbors: 5,
        }
    }
}

pub fn keyframe_admission(pose: &Pose, existing: &[Pose], thr: &KeyframeThresholds) -> bool {
    if existing.is_empty() {
        return true;
    }
    let mut by_dist: Vec<(f64, usize)> = existing
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.translation - pose.translation).norm(), i))
        .collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    by_dist.iter().take(thr.neighbors).all(|&(dist, i)| {
        dist > thr.translation || existing[i].rotation.angle_to(&pose.rotation) > thr.rotation
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum WindowError {
    Preint(PreintError),
    Solve(SolveError),
    Deskew(DeskewError),
    /// Bundle start does not match the window tail.
    NonContiguous { expected: Timestamp, got: Timestamp },
    /// Bundle IMU does not cover one of its knot intervals.
    ImuCoverage { t0: Timestamp, t1: Timestamp },
    Empty,
}

impl fmt::Display for WindowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowError::Preint(e) => write!(f, "{e}"),
            WindowError::Solve(e) => write!(f, "{e}"),
            WindowError::Deskew(e) => write!(f, "{e}"),
            WindowError::NonContiguous { expected, got } => {
                write!(f, "bundle starts at {got}, window ends at {expected}")
            }
            WindowError::ImuCoverage { t0, t1 } => {
                write!(f, "bundle IMU does not cover knot interval [{t0}, {t1}]")
            }
            WindowError::Empty => write!(f, "window is empty"),
        }
    }
}

impl From<PreintError> for WindowError {
    fn from(e: PreintError) -> Self {
        WindowError::Preint(e)
    }
}

impl From<SolveError> for WindowError {
    fn from(e: SolveError) -> Self {
        WindowError::Solve(e)
    }
}

impl From<DeskewError> for WindowError {
    fn from(e: DeskewError) -> Self {
        WindowError::Deskew(e)
    }
}

/// Result of marginalizing the oldest bundle.
#[derive(Debug, Clone)]
pub struct MarginalizeOutcome {
    /// Whether the nearest-neighbor rule admits this pose as a keyframe.
    pub admitted: bool,
    pub keyframe_pose: Pose,
    pub keyframe_time: Timestamp,
    /// Motion-compensated cloud in the keyframe body frame.
    pub cloud: Vec<Vec3>,
    /// Knot states removed from the window head, oldest first.
    pub dropped: Vec<(Timestamp, StateEstimate)>,
}

pub struct SlidingWindow {
    sync: SyncConfig,
    solver: SolverConfig,
    noise: ImuNoise,
    initial: StateEstimate,
    knot_times: Vec<Timestamp>,
    states: Vec<StateEstimate>,
    preints: Vec<Preintegration>,
    bundles: VecDeque<ScanBundle>,
    prior: Option<HeadPrior>,
}

impl SlidingWindow {
    pub fn new(
        sync: SyncConfig,
        solver: SolverConfig,
        noise: ImuNoise,
        initial: StateEstimate,
    ) -> Self {
        SlidingWindow {
            sync,
            solver,
            noise,
            initial,
            knot_times: Vec::new(),
            states: Vec::new(),
            preints: Vec::new(),
            bundles: VecDeque::new(),
            prior: None,
        }
    }

    pub fn num_knots(&self) -> usize {
        self.states.len()
    }

    pub fn num_bundles(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_full(&self) -> bool {
        self.bundles.len() >= self.sync.window_bundles
    }

    pub fn knot_times(&self) -> &[Timestamp] {
        &self.knot_times
    }

    pub fn states(&self) -> &[StateEstimate] {
        &self.states
    }

    pub fn knot_poses(&self) -> Vec<(Timestamp, Pose)> {
        self.knot_times
            .iter()
            .zip(&self.states)
            .map(|(t, x)| (*t, x.pose()))
            .collect()
    }

    pub fn latest_state(&self) -> Option<&StateEstimate> {
        self.states.last()
    }

    /// Append one bundle: knots at even subdivisions of its span, states by
    /// IMU propagation from the window tail, one preintegration per interval.
    pub fn admit_bundle(&mut self, bundle: ScanBundle) -> Result<(), WindowError> {
        let eps = self.sync.sweep_period * 1e-6;
        if self.states.is_empty() {
            self.knot_times.push(bundle.t_start);
            self.states.push(self.initial);
        } else {
            let tail = *self.knot_times.last().expect("non-empty");
            if (bundle.t_start - tail).abs() > eps {
                return Err(WindowError::NonContiguous {
                    expected: tail,
                    got: bundle.t_start,
                });
            }
        }
        let k = self.sync.knots_per_bundle;
        let span = bundle.t_end - bundle.t_start;
        for j in 1..=k {
            let t_m = *self.knot_times.last().expect("non-empty");
            let t = if j == k {
                bundle.t_end
            } else {
                bundle.t_start + span * j as f64 / k as f64
            };
            let samples = slice_interval(&bundle.imu, t_m.max(bundle.imu[0].t), t)
                .ok_or(WindowError::ImuCoverage { t0: t_m, t1: t })?;
            let last = *self.states.last().expect("non-empty");
            let pre = preintegrate(&samples, &last.bias_gyro, &last.bias_accel, &self.noise)?;
            let (_, next) = propagate(&last, &samples, &self.noise)?;
            self.knot_times.push(t);
            self.states.push(next);
            self.preints.push(pre);
        }
        self.bundles.push_back(bundle);
        Ok(())
    }

    /// Stitched IMU-propagated poses over the given interval range, each
    /// interval propagated from its own knot state.
    fn propagated_seq(&self, intervals: core::ops::Range<usize>) -> Result<PropagatedPoseSeq, WindowError> {
        let k = self.sync.knots_per_bundle;
        let mut entries: Vec<(Timestamp, Pose)> = Vec::new();
        for i in intervals {
            let bundle = &self.bundles[i / k];
            let (t0, t1) = (self.knot_times[i], self.knot_times[i + 1]);
            let samples = slice_interval(&bundle.imu, t0.max(bundle.imu[0].t), t1)
                .ok_or(WindowError::ImuCoverage { t0, t1 })?;
            let (seq, _) = propagate(&self.states[i], &samples, &self.noise)?;
            for &(t, pose) in seq.entries() {
                if entries.last().map_or(true, |&(lt, _)| t > lt) {
                    entries.push((t, pose));
                }
            }
        }
        PropagatedPoseSeq::new(entries).map_err(WindowError::from)
    }

    /// Rebuild preintegrations whose linearization bias drifted too far from
    /// the current estimate.
    fn relinearize_preints(&mut self) -> Result<(), WindowError> {
        let k = self.sync.knots_per_bundle;
        for i in 0..self.preints.len() {
            if self.preints[i].bias_deviation(&self.states[i])
                <= Preintegration::RELINEARIZE_THRESHOLD
            {
                continue;
            }
            let bundle = &self.bundles[i / k];
            let (t0, t1) = (self.knot_times[i], self.knot_times[i + 1]);
            let samples = slice_interval(&bundle.imu, t0.max(bundle.imu[0].t), t1)
                .ok_or(WindowError::ImuCoverage { t0, t1 })?;
            let x = &self.states[i];
            self.preints[i] =
                preintegrate(&samples, &x.bias_gyro, &x.bias_accel, &self.noise)?;
        }
        Ok(())
    }

    /// Alternate deskew / association against the frozen `map` with a damped
    /// Gauss-Newton pass over all knots.
    pub fn optimize(&mut self, map: &SurfelMap) -> Result<OptimizeReport, WindowError> {
        if self.states.is_empty() {
            return Err(WindowError::Solve(SolveError::EmptyWindow));
        }
        let intervals: Vec<(Timestamp, Timestamp)> = self
            .knot_times
            .windows(2)
            .map(|w| (w[0], w[1]))
            .collect();
        let points: Vec<RawPoint> = self
            .bundles
            .iter()
            .flat_map(|b| b.points.iter().copied())
            .collect();

        let mut report = OptimizeReport {
            outer_iterations: 0,
            inner_iterations: 0,
            initial_cost: 0.0,
            final_cost: 0.0,
            factor_counts: Default::default(),
            associations: 0,
            dropped_points: 0,
        };
        for outer in 0..self.solver.outer_iterations {
            self.relinearize_preints()?;
            let seq = self.propagated_seq(0..self.preints.len())?;
            let assoc = associate(&points, &seq, &intervals, map);
            let out = lm_optimize(
                &mut self.states,
                &self.preints,
                &assoc,
                self.prior.as_ref(),
                &self.noise,
                &self.solver,
            )?;
            if outer == 0 {
                report.initial_cost = out.initial_cost;
            }
            report.final_cost = out.final_cost;
            report.inner_iterations += out.iterations;
            report.outer_iterations += 1;
            report.factor_counts = out.counts;
            report.associations = assoc.total();
            report.dropped_points = assoc.dropped;
        }
        Ok(report)
    }

    /// Drop the oldest bundle and its knots. The state at the bundle end
    /// becomes the new head and is re-anchored with a diagonal prior; the
    /// bundle's cloud is motion-compensated into that state's body frame and
    /// offered as a keyframe under the nearest-neighbor rule.
    pub fn marginalize(
        &mut self,
        existing_keyframes: &[Pose],
        thr: &KeyframeThresholds,
    ) -> Result<MarginalizeOutcome, WindowError> {
        if self.bundles.is_empty() {
            return Err(WindowError::Empty);
        }
        let k = self.sync.knots_per_bundle;
        let seq = self.propagated_seq(0..k)?;
        let bundle = self.bundles.pop_front().expect("non-empty");
        let cloud = deskew_to_frame_end(&bundle.points, &seq)?;

        let keyframe_time = self.knot_times[k];
        let keyframe_pose = self.states[k].pose();
        let dropped: Vec<(Timestamp, StateEstimate)> = self
            .knot_times
            .drain(0..k)
            .zip(self.states.drain(0..k))
            .collect();
        self.preints.drain(0..k);

        let mut sqrt_info = Vec15::zeros();
        for i in 0..3 {
            sqrt_info[i] = 1e2; // rotation
            sqrt_info[3 + i] = 1e1; // velocity
            sqrt_info[6 + i] = 1e2; // position
            sqrt_info[9 + i] = 1e2; // gyro bias
            sqrt_info[12 + i] = 1e1; // accel bias
        }
        self.prior = Some(HeadPrior {
            reference: self.states[0],
            sqrt_info,
        });

        Ok(MarginalizeOutcome {
            admitted: keyframe_admission(&keyframe_pose, existing_keyframes, thr),
            keyframe_pose,
            keyframe_time,
            cloud,
            dropped,
        })
    }
}
