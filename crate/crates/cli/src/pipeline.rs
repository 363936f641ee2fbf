//! Offline odometry driver: feeds recorded streams through the sliding
//! window estimator, maintains the keyframe map, and optionally closes loops
//! over the keyframe graph.
//!
//! The run is single threaded and fully deterministic: identical inputs and
//! configuration produce byte-identical trajectory output.

use std::time::Instant;

use slict_core::deskew::RawPoint;
use slict_core::estimator::{ScanBundle, SlidingWindow, StreamBuffers, SyncError, WindowError};
use slict_core::geometry::pose_interpolate;
use slict_core::posegraph::{
    detect_loop, icp_point_to_plane, optimize_pose_graph, rebuild_map, IcpConfig, Keyframe,
    PoseGraphEdge, PoseGraphError,
};
use slict_core::preint::{ImuSample, StateEstimate};
use slict_core::surfel::SurfelMap;
use slict_core::{Pose, Rotation, Vec3};

use crate::config::RunConfig;
use crate::export::TimingRecord;

#[derive(Debug)]
pub enum PipelineError {
    Sync(SyncError),
    Window(WindowError),
    PoseGraph(PoseGraphError),
    /// The input streams cannot start a run (no scans, no IMU, or no
    /// stationary stretch for initialization).
    BadInput(String),
}

impl core::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PipelineError::Sync(e) => write!(f, "stream sync failed: {e}"),
            PipelineError::Window(e) => write!(f, "window estimation failed: {e}"),
            PipelineError::PoseGraph(e) => write!(f, "pose graph failed: {e}"),
            PipelineError::BadInput(m) => write!(f, "bad input: {m}"),
        }
    }
}

impl std::error::Error for PipelineError {}

impl From<SyncError> for PipelineError {
    fn from(e: SyncError) -> Self {
        PipelineError::Sync(e)
    }
}

impl From<WindowError> for PipelineError {
    fn from(e: WindowError) -> Self {
        PipelineError::Window(e)
    }
}

impl From<PoseGraphError> for PipelineError {
    fn from(e: PoseGraphError) -> Self {
        PipelineError::PoseGraph(e)
    }
}

pub struct PipelineResult {
    /// Knot poses in time order, loop corrected when closure is enabled.
    pub trajectory: Vec<(f64, Pose)>,
    pub keyframes: Vec<Keyframe>,
    pub edges: Vec<PoseGraphEdge>,
    pub timing: Vec<TimingRecord>,
    pub map: SurfelMap,
    pub loops_closed: usize,
}

/// Trajectory sample expressed relative to a keyframe so pose-graph
/// corrections carry over to the dense output.
struct AnchoredPose {
    time: f64,
    keyframe: usize,
    relative: Pose,
}

/// Mean gyro rate and gravity-compensated mean specific force over the
/// leading stationary stretch, used as the initial biases. Assumes the
/// platform starts level; a tilted start folds gravity into the accel bias.
fn static_biases(imu: &[ImuSample], secs: f64, gravity: &Vec3) -> Result<(Vec3, Vec3), PipelineError> {
    let t0 = imu
        .first()
        .ok_or_else(|| PipelineError::BadInput("empty IMU stream".into()))?
        .t;
    let window: Vec<&ImuSample> = imu.iter().take_while(|s| s.t <= t0 + secs).collect();
    if window.len() < 10 {
        return Err(PipelineError::BadInput(format!(
            "only {} IMU samples in the {secs} s initialization stretch",
            window.len()
        )));
    }
    let n = window.len() as f64;
    let gyro = window.iter().map(|s| s.gyro).sum::<Vec3>() / n;
    let accel = window.iter().map(|s| s.accel).sum::<Vec3>() / n + gravity;
    Ok((gyro, accel))
}

/// Keep at most `max` points, evenly spaced in the time-sorted order.
fn subsample(points: &mut Vec<RawPoint>, max: usize) {
    if max == 0 || points.len() <= max {
        return;
    }
    let n = points.len();
    let kept: Vec<RawPoint> = (0..max).map(|i| points[i * n / max]).collect();
    *points = kept;
}

/// Deskew a bundle into world points using interpolation between the
/// window's current knot poses. Used to seed the map before the first
/// optimization.
fn bundle_to_world(bundle: &ScanBundle, knots: &[(f64, Pose)]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(bundle.points.len());
    for p in &bundle.points {
        let Some(i) = knots[..knots.len() - 1]
            .iter()
            .zip(&knots[1..])
            .position(|((a, _), (b, _))| *a <= p.time && p.time <= *b)
        else {
            continue;
        };
        let (ta, pa) = &knots[i];
        let (tb, pb) = &knots[i + 1];
        let s = (p.time - ta) / (tb - ta);
        let pose = pose_interpolate(pa, pb, s);
        out.push(pose.transform_point(&p.position));
    }
    out
}

struct LoopCandidate {
    edge: PoseGraphEdge,
}

/// Try to close a loop for the newest keyframe. Returns the verified edge.
fn try_close_loop(keyframes: &[Keyframe], cfg: &RunConfig) -> Option<LoopCandidate> {
    let query = keyframes.len() - 1;
    let cand = detect_loop(keyframes, query, &cfg.loop_cfg)?;
    let q = &keyframes[query];
    let c = &keyframes[cand];
    let init = c.pose.inverse().compose(&q.pose);
    let icp = icp_point_to_plane(
        &q.cloud,
        &c.cloud,
        &init,
        &IcpConfig {
            max_corr_dist: 1.0,
            ..IcpConfig::default()
        },
    )
    .ok()?;
    if icp.fitness > cfg.loop_cfg.fitness_threshold {
        return None;
    }
    Some(LoopCandidate {
        edge: PoseGraphEdge {
            from: cand,
            to: query,
            relative: icp.transform,
            rot_weight: 20.0,
            trans_weight: 20.0,
        },
    })
}

/// Run the full odometry pipeline over recorded streams.
///
/// Scans must be body-frame points (extrinsics already applied), IMU strictly
/// increasing. When loop closure is enabled, accepted loops are accumulated
/// as graph edges and one pose-graph solve at the end of the run corrects
/// keyframes, trajectory and map.
pub fn run_odometry(
    cfg: &RunConfig,
    scans: &[RawPoint],
    imu: &[ImuSample],
) -> Result<PipelineResult, PipelineError> {
    if scans.is_empty() {
        return Err(PipelineError::BadInput("empty scan stream".into()));
    }
    let mut initial = StateEstimate::identity();
    initial.rot = Rotation::from_axis_angle(&Vec3::z(), cfg.init_yaw);
    initial.pos = cfg.init_position;
    let (bias_gyro, bias_accel) = static_biases(imu, cfg.static_init_secs, &cfg.imu.gravity)?;
    initial.bias_gyro = bias_gyro;
    initial.bias_accel = bias_accel;

    let mut buffers = StreamBuffers::new();
    for p in scans {
        buffers.push_point(*p);
    }
    for s in imu {
        buffers.push_imu(s.clone());
    }

    let mut window = SlidingWindow::new(cfg.sync.clone(), cfg.solver.clone(), cfg.imu.clone(), initial);
    let mut map = SurfelMap::new(cfg.map.clone());
    let mut keyframes: Vec<Keyframe> = Vec::new();
    let mut edges: Vec<PoseGraphEdge> = Vec::new();
    let mut loop_edges: Vec<PoseGraphEdge> = Vec::new();
    let mut anchored: Vec<AnchoredPose> = Vec::new();
    let mut timing: Vec<TimingRecord> = Vec::new();

    let period = cfg.sync.sweep_period;
    let t_base = scans
        .iter()
        .filter(|p| p.lidar_id == cfg.sync.primary_lidar_id)
        .map(|p| p.time)
        .fold(f64::INFINITY, f64::min);
    if !t_base.is_finite() {
        return Err(PipelineError::BadInput("no primary lidar points".into()));
    }
    let t_last = imu.last().expect("checked nonempty").t;

    let anchor = |keyframes: &[Keyframe], time: f64, pose: &Pose| {
        let keyframe = keyframes.len().saturating_sub(1);
        let relative = match keyframes.last() {
            Some(k) => k.pose.between(pose),
            None => *pose,
        };
        AnchoredPose {
            time,
            keyframe,
            relative,
        }
    };

    let mut window_index = 0usize;
    let mut sweep = 1usize;
    loop {
        let t_k = t_base + sweep as f64 * period;
        if t_k > t_last + period * 1e-6 {
            break;
        }
        sweep += 1;
        let loop_start = Instant::now();
        let Some(mut bundle) = buffers.sync_extract(t_k, &cfg.sync)? else {
            continue;
        };
        subsample(&mut bundle.points, cfg.max_points_per_bundle);
        let bootstrap = map.is_empty();
        let raw_points = bootstrap.then(|| bundle.points.clone());
        window.admit_bundle(bundle)?;

        if let Some(points) = raw_points {
            // first bundle defines the world frame: deskew by IMU-propagated
            // knot poses and treat it as keyframe zero
            let knots = window.knot_poses();
            let world = bundle_to_world(
                &ScanBundle {
                    points,
                    imu: Vec::new(),
                    t_start: knots.first().expect("knots exist").0,
                    t_end: knots.last().expect("knots exist").0,
                },
                &knots,
            );
            let (kf_time, kf_pose) = *knots.last().expect("knots exist");
            let body: Vec<Vec3> = world
                .iter()
                .map(|p| kf_pose.inverse().transform_point(p))
                .collect();
            map.insert_cloud(&world, &kf_pose.translation);
            map.refresh_attributes();
            keyframes.push(Keyframe {
                index: 0,
                pose: kf_pose,
                time: kf_time,
                cloud: body,
            });
            continue;
        }

        let solve_start = Instant::now();
        let report = window.optimize(&map)?;
        let dt_solve = solve_start.elapsed();

        if window.is_full() {
            let kf_poses: Vec<Pose> = keyframes.iter().map(|k| k.pose).collect();
            let out = window.marginalize(&kf_poses, &cfg.keyframe)?;
            for (t, state) in &out.dropped {
                anchored.push(anchor(&keyframes, *t, &state.pose()));
            }
            if out.admitted {
                let index = keyframes.len();
                if let Some(prev) = keyframes.last() {
                    edges.push(PoseGraphEdge {
                        from: prev.index,
                        to: index,
                        relative: prev.pose.between(&out.keyframe_pose),
                        rot_weight: 10.0,
                        trans_weight: 10.0,
                    });
                }
                let world: Vec<Vec3> = out
                    .cloud
                    .iter()
                    .map(|p| out.keyframe_pose.transform_point(p))
                    .collect();
                map.insert_cloud(&world, &out.keyframe_pose.translation);
                map.refresh_attributes();
                keyframes.push(Keyframe {
                    index,
                    pose: out.keyframe_pose,
                    time: out.keyframe_time,
                    cloud: out.cloud,
                });
                if cfg.loop_enabled {
                    if let Some(found) = try_close_loop(&keyframes, cfg) {
                        loop_edges.push(found.edge);
                    }
                }
            }
        }

        timing.push(TimingRecord {
            window_index,
            t_k,
            dt_loop_ms: loop_start.elapsed().as_secs_f64() * 1e3,
            dt_solve_ms: dt_solve.as_secs_f64() * 1e3,
            num_factors: report.factor_counts.total(),
        });
        window_index += 1;
    }

    // drain the remaining window into the trajectory
    for (t, pose) in window.knot_poses() {
        if anchored.last().is_none_or(|a| t > a.time) {
            anchored.push(anchor(&keyframes, t, &pose));
        }
    }

    let loops_closed = loop_edges.len();
    if cfg.loop_enabled && !loop_edges.is_empty() && keyframes.len() >= 2 {
        let mut all = edges.clone();
        all.extend(loop_edges.iter().cloned());
        let mut poses: Vec<Pose> = keyframes.iter().map(|k| k.pose).collect();
        optimize_pose_graph(&mut poses, &all, 25)?;
        for (k, p) in keyframes.iter_mut().zip(&poses) {
            k.pose = *p;
        }
        map = rebuild_map(&keyframes, cfg.map.clone());
        edges = all;
    } else {
        edges.extend(loop_edges);
    }

    let trajectory: Vec<(f64, Pose)> = anchored
        .iter()
        .map(|a| {
            let base = keyframes
                .get(a.keyframe)
                .map(|k| k.pose)
                .unwrap_or_else(Pose::identity);
            (a.time, base.compose(&a.relative))
        })
        .collect();

    Ok(PipelineResult {
        trajectory,
        keyframes,
        edges,
        timing,
        map,
        loops_closed,
    })
}
