//! Motion compensation and two-stage point-to-surfel association.

use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{pose_interpolate, Pose, Timestamp, Vec3};
use crate::surfel::SurfelMap;

/// One raw lidar return, in the body frame at its own sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub position: Vec3,
    pub time: Timestamp,
    pub lidar_id: u32,
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeskewError {
    /// Point timestamp outside the propagated pose coverage.
    OutOfRange { time: Timestamp },
    /// Pose sequence timestamps not strictly increasing.
    UnorderedPoses,
}

impl fmt::Display for DeskewError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeskewError::OutOfRange { time } => {
                write!(f, "timestamp {time} outside propagated pose coverage")
            }
            DeskewError::UnorderedPoses => write!(f, "pose timestamps not strictly increasing"),
        }
    }
}

/// Dense sequence of IMU-propagated poses over one stretch of time.
#[derive(Debug, Clone, Default)]
pub struct PropagatedPoseSeq {
    entries: Vec<(Timestamp, Pose)>,
}

impl PropagatedPoseSeq {
    pub fn new(entries: Vec<(Timestamp, Pose)>) -> Result<Self, DeskewError> {
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(DeskewError::UnorderedPoses);
        }
        Ok(PropagatedPoseSeq { entries })
    }

    pub fn entries(&self) -> &[(Timestamp, Pose)] {
        &self.entries
    }

    pub fn first_time(&self) -> Option<Timestamp> {
        self.entries.first().map(|e| e.0)
    }

    pub fn last_time(&self) -> Option<Timestamp> {
        self.entries.last().map(|e| e.0)
    }

    pub fn covers(&self, t: Timestamp) -> bool {
        match (self.entries.first(), self.entries.last()) {
            (Some(a), Some(b)) => a.0 <= t && t <= b.0,
            _ => false,
        }
    }

    /// Interpolated pose at `t`: the two bracketing entries are found by
    /// binary search and blended with slerp / linear translation.
    pub fn pose_at(&self, t: Timestamp) -> Result<Pose, DeskewError> {
        if !self.covers(t) {
            return Err(DeskewError::OutOfRange { time: t });
        }
        let idx = self.entries.partition_point(|e| e.0 <= t);
        if idx == 0 {
            return Ok(self.entries[0].1);
        }
        if idx == self.entries.len() {
            return Ok(self.entries[idx - 1].1);
        }
        let (ta, pa) = &self.entries[idx - 1];
        let (tb, pb) = &self.entries[idx];
        let s = (t - ta) / (tb - ta);
        Ok(pose_interpolate(pa, pb, s))
    }
}

/// One successful point-to-surfel association.
#[derive(Debug, Clone, Copy)]
pub struct PtsCoeff {
    /// Raw point, body frame at its own sample time.
    pub point: Vec3,
    /// Surfel normal (unit).
    pub normal: Vec3,
    /// Surfel mean.
    pub mean: Vec3,
    /// Fraction of the point's time within its knot interval.
    pub s: f64,
    /// Index of the knot interval the point falls into.
    pub interval_index: usize,
    /// Octree depth of the associated surfel.
    pub scale_depth: u8,
    pub weight: f64,
}

/// Associations bucketed per knot interval.
#[derive(Debug, Clone, Default)]
pub struct AssociationSet {
    buckets: Vec<Vec<PtsCoeff>>,
    /// Points whose timestamp fell outside the pose coverage.
    pub dropped: usize,
}

impl AssociationSet {
    pub fn new(num_intervals: usize) -> Self {
        AssociationSet {
            buckets: alloc::vec![Vec::new(); num_intervals],
            dropped: 0,
        }
    }

    pub fn interval(&self, m: usize) -> &[PtsCoeff] {
        &self.buckets[m]
    }

    pub fn num_intervals(&self) -> usize {
        self.buckets.len()
    }

    pub fn total(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PtsCoeff> {
        self.buckets.iter().flatten()
    }

    fn push(&mut self, c: PtsCoeff) {
        self.buckets[c.interval_index].push(c);
    }
}

/// Deskew one point: interpolate the propagated pose at its timestamp and
/// return its world coordinates together with the fraction of its timestamp
/// within the knot interval `(t_m, t_m1)` (distinct from the interpolation
/// bracket fraction).
pub fn deskew_point(
    p: &RawPoint,
    poses: &PropagatedPoseSeq,
    interval: (Timestamp, Timestamp),
) -> Result<(Vec3, f64), DeskewError> {
    let pose = poses.pose_at(p.time)?;
    let world = pose.transform_point(&p.position);
    let s = (p.time - interval.0) / (interval.1 - interval.0);
    Ok((world, s))
}

/// Deskew a cloud into the body frame at the end of the pose coverage.
pub fn deskew_to_frame_end(
    points: &[RawPoint],
    poses: &PropagatedPoseSeq,
) -> Result<Vec<Vec3>, DeskewError> {
    let t_end = poses.last_time().ok_or(DeskewError::OutOfRange { time: 0.0 })?;
    let end_inv = poses.pose_at(t_end)?.inverse();
    points
        .iter()
        .map(|p| {
            let pose = poses.pose_at(p.time)?;
            Ok(end_inv.transform_point(&pose.transform_point(&p.position)))
        })
        .collect()
}

/// Two-stage association over a frozen map snapshot.
///
/// `intervals` are the knot intervals tiling the pose coverage; each point is
/// bucketed by timestamp. Points outside the pose coverage are counted in
/// `dropped` rather than extrapolated. A point may yield several coefficients,
/// one per qualifying surfel scale.
pub fn associate(
    points: &[RawPoint],
    poses: &PropagatedPoseSeq,
    intervals: &[(Timestamp, Timestamp)],
    map: &SurfelMap,
) -> AssociationSet {
    let mut set = AssociationSet::new(intervals.len());
    let d_max = map.config().max_plane_dist;
    for p in points {
        let Some(m) = intervals
            .iter()
            .position(|&(a, b)| a <= p.time && (p.time < b || (p.time == b)))
        else {
            set.dropped += 1;
            continue;
        };
        let Ok((world, s)) = deskew_point(p, poses, intervals[m]) else {
            set.dropped += 1;
            continue;
        };
        for cand in map.query_candidates(&world) {
            let d = cand.attributes.normal.dot(&(world - cand.attributes.mean));
            if d.abs() < d_max {
                set.push(PtsCoeff {
                    point: p.position,
                    normal: cand.attributes.normal,
                    mean: cand.attributes.mean,
                    s,
                    interval_index: m,
                    scale_depth: cand.key.depth,
                    weight: 1.0,
                });
            }
        }
    }
    set
}
