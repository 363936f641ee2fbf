//! Stream buffering and bundle extraction.
//!
//! The window progresses on the primary lidar's sweep period. Each slide
//! extracts all lidar points and IMU samples in `[t_k - period, t_k)` and
//! merges them into one time-sorted bundle. IMU samples at exactly the
//! bundle boundaries are synthesized by linear interpolation so knot
//! intervals can be integrated without gaps.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::fmt;

use crate::deskew::RawPoint;
use crate::geometry::Timestamp;
use crate::preint::{slice_interval, ImuSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncConfig {
    pub primary_lidar_id: u32,
    /// Sweep period of the primary lidar (seconds).
    pub sweep_period: f64,
    /// State knots added per bundle (2..=8).
    pub knots_per_bundle: usize,
    /// Bundles held in the sliding window.
    pub window_bundles: usize,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            primary_lidar_id: 0,
            sweep_period: 0.1,
            knots_per_bundle: 4,
            window_bundles: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyncError {
    /// Gap between consecutive IMU samples exceeds twice the nominal period.
    ImuGap { at: Timestamp, gap: f64 },
    /// IMU stream does not cover the requested window.
    ImuCoverage { t_start: Timestamp, t_end: Timestamp },
}

impl fmt::Display for SyncError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyncError::ImuGap { at, gap } => write!(f, "IMU gap of {gap} s at t = {at}"),
            SyncError::ImuCoverage { t_start, t_end } => {
                write!(f, "IMU stream does not cover [{t_start}, {t_end}]")
            }
        }
    }
}

/// One synchronized slice of all inputs.
#[derive(Debug, Clone)]
pub struct ScanBundle {
    /// All lidar points in `[t_start, t_end)`, sorted by time.
    pub points: Vec<RawPoint>,
    /// IMU samples covering `[t_start, t_end]` (boundary samples
    /// interpolated).
    pub imu: Vec<ImuSample>,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
}

/// Ordered per-lidar point buffers plus the IMU buffer.
#[derive(Debug, Default)]
pub struct StreamBuffers {
    lidar: BTreeMap<u32, VecDeque<RawPoint>>,
    imu: VecDeque<ImuSample>,
}

impl StreamBuffers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_point(&mut self, p: RawPoint) {
        self.lidar.entry(p.lidar_id).or_default().push_back(p);
    }

    pub fn push_imu(&mut self, s: ImuSample) {
        self.imu.push_back(s);
    }

    pub fn imu_len(&self) -> usize {
        self.imu.len()
    }

    /// Latest primary-lidar timestamp seen so far.
    pub fn primary_front(&self, cfg: &SyncConfig) -> Option<Timestamp> {
        self.lidar
            .get(&cfg.primary_lidar_id)
            .and_then(|q| q.back())
            .map(|p| p.time)
    }

    /// Extract the bundle ending at `t_k`. Returns `Ok(None)` when the
    /// primary sweep or the IMU stream has not arrived yet (stall, no
    /// bundle); data inconsistencies are errors.
    pub fn sync_extract(
        &mut self,
        t_k: Timestamp,
        cfg: &SyncConfig,
    ) -> Result<Option<ScanBundle>, SyncError> {
        let t_start = t_k - cfg.sweep_period;
        let eps = cfg.sweep_period * 1e-6;

        // stall until the primary sweep is complete
        match self.primary_front(cfg) {
            Some(latest) if latest >= t_k - cfg.sweep_period * 0.5 => {}
            _ => return Ok(None),
        }
        // stall until IMU covers the window
        let covered = self
            .imu
            .front()
            .zip(self.imu.back())
            .map(|(a, b)| a.t <= t_start + eps && b.t >= t_k - eps)
            .unwrap_or(false);
        if !covered {
            return Ok(None);
        }

        let mut points = Vec::new();
        for queue in self.lidar.values_mut() {
            while let Some(front) = queue.front() {
                if front.time >= t_k {
                    break;
                }
                let p = queue.pop_front().expect("front checked");
                if p.time >= t_start {
                    points.push(p);
                }
            }
        }
        points.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.lidar_id.cmp(&b.lidar_id)));

        let imu_slice: Vec<ImuSample> = self.imu.iter().cloned().collect();
        let window: Vec<&ImuSample> = imu_slice
            .iter()
            .filter(|s| s.t >= t_start - eps && s.t <= t_k + eps)
            .collect();
        if window.len() >= 2 {
            let gaps: Vec<f64> = window.windows(2).map(|w| w[1].t - w[0].t).collect();
            let mut sorted = gaps.clone();
            sorted.sort_by(f64::total_cmp);
            let nominal = sorted[sorted.len() / 2];
            for (i, g) in gaps.iter().enumerate() {
                if *g > 2.0 * nominal {
                    return Err(SyncError::ImuGap {
                        at: window[i].t,
                        gap: *g,
                    });
                }
            }
        }
        let imu = slice_interval(&imu_slice, t_start.max(imu_slice[0].t), t_k)
            .ok_or(SyncError::ImuCoverage { t_start, t_end: t_k })?;

        // trim consumed IMU history, keeping one sample before t_k for the
        // next bundle's boundary interpolation
        while self.imu.len() > 1 && self.imu[1].t <= t_k {
            self.imu.pop_front();
        }

        Ok(Some(ScanBundle {
            points,
            imu,
            t_start,
            t_end: t_k,
        }))
    }
}
