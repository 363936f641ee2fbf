//! Synthetic dataset generator: analytic worlds, smooth trajectories,
//! ray-cast multi-lidar scans and IMU streams with ground truth.
//!
//! Trajectories are sums of sinusoids per position and Euler channel,
//! multiplied by a C2 start envelope so every run begins with a stationary
//! stretch for bias initialization. All randomness comes from one seeded
//! ChaCha stream, so a dataset is a pure function of its config.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slict_core::deskew::RawPoint;
use slict_core::preint::ImuSample;
use slict_core::{Pose, Rotation, Vec3};

use crate::config::RunConfig;
use crate::formats;

/// Finite planar patch: corner plus two orthogonal edge vectors.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub corner: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
}

impl Rect {
    pub fn normal(&self) -> Vec3 {
        self.edge_u.cross(&self.edge_v).normalize()
    }

    /// Distance along the ray to the hit, if any.
    fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let n = self.edge_u.cross(&self.edge_v);
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&(self.corner - origin)) / denom;
        if t <= 1e-9 {
            return None;
        }
        let h = origin + dir * t - self.corner;
        let a = h.dot(&self.edge_u) / self.edge_u.norm_squared();
        let b = h.dot(&self.edge_v) / self.edge_v.norm_squared();
        if (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) {
            Some(t)
        } else {
            None
        }
    }

    /// Signed distance of a point to the rect's supporting plane.
    pub fn plane_distance(&self, p: &Vec3) -> f64 {
        self.normal().dot(&(p - self.corner))
    }
}

#[derive(Debug, Clone, Default)]
pub struct WorldModel {
    pub rects: Vec<Rect>,
}

impl WorldModel {
    pub fn add_rect(&mut self, corner: Vec3, edge_u: Vec3, edge_v: Vec3) {
        assert!(edge_u.cross(&edge_v).norm() > 1e-12, "degenerate face");
        self.rects.push(Rect {
            corner,
            edge_u,
            edge_v,
        });
    }

    /// Six faces of an axis-aligned box spanning `min..max`.
    pub fn add_box(&mut self, min: Vec3, max: Vec3) {
        let d = max - min;
        let ex = Vec3::new(d.x, 0.0, 0.0);
        let ey = Vec3::new(0.0, d.y, 0.0);
        let ez = Vec3::new(0.0, 0.0, d.z);
        self.add_rect(min, ex, ey); // bottom
        self.add_rect(min + ez, ex, ey); // top
        self.add_rect(min, ex, ez); // y = min
        self.add_rect(min + ey, ex, ez); // y = max
        self.add_rect(min, ey, ez); // x = min
        self.add_rect(min + ex, ey, ez); // x = max
    }

    /// Nearest hit distance along the ray, up to `max_range`.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<f64> {
        self.rects
            .iter()
            .filter_map(|r| r.raycast(origin, dir))
            .filter(|t| *t <= max_range)
            .min_by(f64::total_cmp)
    }

    /// Distance of a point to the closest face plane among faces whose patch
    /// contains the point's projection. Used by tests as a point-on-surface
    /// oracle.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        self.rects
            .iter()
            .filter_map(|r| {
                let h = p - r.corner;
                let a = h.dot(&r.edge_u) / r.edge_u.norm_squared();
                let b = h.dot(&r.edge_v) / r.edge_v.norm_squared();
                let margin = 1e-6;
                ((-margin..=1.0 + margin).contains(&a) && (-margin..=1.0 + margin).contains(&b))
                    .then(|| r.plane_distance(p).abs())
            })
            .min_by(f64::total_cmp)
            .unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorldPreset {
    /// Closed 8 x 8 x 3 m box room.
    Room,
    /// Rectangular circuit: outer shell with an inner block, corridor width 4 m.
    CorridorLoop,
    /// Room with an added grid of small wall panels, mixing surfel scales.
    TwoScale,
}

impl WorldPreset {
    pub fn build(self) -> WorldModel {
        let mut w = WorldModel::default();
        match self {
            WorldPreset::Room => {
                w.add_box(Vec3::new(-4.0, -4.0, 0.0), Vec3::new(4.0, 4.0, 3.0));
            }
            WorldPreset::CorridorLoop => {
                w.add_box(Vec3::new(-10.0, -10.0, 0.0), Vec3::new(10.0, 10.0, 3.0));
                w.add_box(Vec3::new(-6.0, -6.0, 0.0), Vec3::new(6.0, 6.0, 3.0));
            }
            WorldPreset::TwoScale => {
                w.add_box(Vec3::new(-4.0, -4.0, 0.0), Vec3::new(4.0, 4.0, 3.0));
                // small panels jutting from the x = 4 wall
                for i in 0..6 {
                    for j in 0..2 {
                        let y = -3.0 + i as f64 * 1.1;
                        let z = 0.7 + j as f64 * 1.1;
                        w.add_rect(
                            Vec3::new(3.7, y, z),
                            Vec3::new(0.0, 0.5, 0.0),
                            Vec3::new(0.0, 0.0, 0.5),
                        );
                        // side faces so the panel is visible edge-on
                        w.add_rect(
                            Vec3::new(3.7, y, z),
                            Vec3::new(0.3, 0.0, 0.0),
                            Vec3::new(0.0, 0.0, 0.5),
                        );
                        w.add_rect(
                            Vec3::new(3.7, y + 0.5, z),
                            Vec3::new(0.3, 0.0, 0.0),
                            Vec3::new(0.0, 0.0, 0.5),
                        );
                    }
                }
            }
        }
        w
    }

    pub fn name(self) -> &'static str {
        match self {
            WorldPreset::Room => "room",
            WorldPreset::CorridorLoop => "corridor-loop",
            WorldPreset::TwoScale => "two-scale",
        }
    }
}

/// One sinusoid term `amp * sin(freq * t + phase)`.
#[derive(Debug, Clone, Copy)]
pub struct Sinusoid {
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
}

/// `offset + sum of sinusoids`, with analytic derivatives.
#[derive(Debug, Clone, Default)]
pub struct Channel {
    pub offset: f64,
    pub terms: Vec<Sinusoid>,
}

impl Channel {
    pub fn constant(offset: f64) -> Self {
        Channel {
            offset,
            terms: Vec::new(),
        }
    }

    /// Value and first two derivatives at `t`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let mut v = self.offset;
        let mut dv = 0.0;
        let mut ddv = 0.0;
        for s in &self.terms {
            let arg = s.freq * t + s.phase;
            v += s.amp * arg.sin();
            dv += s.amp * s.freq * arg.cos();
            ddv -= s.amp * s.freq * s.freq * arg.sin();
        }
        (v, dv, ddv)
    }
}

/// Quintic smoothstep envelope: 0 before `start`, 1 after `start + ramp`,
/// C2 everywhere.
fn envelope(t: f64, start: f64, ramp: f64) -> (f64, f64, f64) {
    let x = (t - start) / ramp;
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let e = ((6.0 * x - 15.0) * x + 10.0) * x * x * x;
    let de = ((30.0 * x - 60.0) * x + 30.0) * x * x / ramp;
    let dde = ((120.0 * x - 180.0) * x + 60.0) * x / (ramp * ramp);
    (e, de, dde)
}

/// Smooth trajectory: position and ZYX Euler angles (yaw, pitch, roll) as
/// sinusoid sums, scaled by a start envelope so motion begins only after a
/// stationary stretch at the channel offsets.
#[derive(Debug, Clone)]
pub struct TrajectorySpec {
    pub pos: [Channel; 3],
    /// Yaw, pitch, roll (radians). Offsets should be zero so the platform
    /// starts level.
    pub euler: [Channel; 3],
    pub duration: f64,
    /// Stationary stretch before the envelope starts rising (seconds).
    pub start_delay: f64,
    /// Envelope rise time (seconds).
    pub ramp: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TrajectorySample {
    pub pose: Pose,
    pub velocity: Vec3,
    /// World-frame acceleration.
    pub acceleration: Vec3,
    /// Body-frame angular rate.
    pub angular_rate: Vec3,
}

impl TrajectorySpec {
    /// Closed-form pose and derivatives at `t`.
    pub fn eval(&self, t: f64) -> Result<TrajectorySample, String> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(format!("t = {t} outside [0, {}]", self.duration));
        }
        let (e, de, dde) = envelope(t, self.start_delay, self.ramp);
        // channel value with the envelope applied to the deviation from the
        // offset, keeping the start exactly at the offsets
        let scaled = |c: &Channel| {
            let (v, dv, ddv) = c.eval(t);
            let dev = v - c.offset;
            (
                c.offset + e * dev,
                de * dev + e * dv,
                dde * dev + 2.0 * de * dv + e * ddv,
            )
        };
        let [px, py, pz] = [&self.pos[0], &self.pos[1], &self.pos[2]].map(scaled);
        let [yaw, pitch, roll] = [&self.euler[0], &self.euler[1], &self.euler[2]].map(scaled);

        let (psi, dpsi) = (yaw.0, yaw.1);
        let (theta, dtheta) = (pitch.0, pitch.1);
        let (phi, dphi) = (roll.0, roll.1);
        let rot = Rotation::from_axis_angle(&Vec3::z(), psi)
            .compose(&Rotation::from_axis_angle(&Vec3::y(), theta))
            .compose(&Rotation::from_axis_angle(&Vec3::x(), phi));
        // body rate of the ZYX Euler parametrization
        let angular_rate = Vec3::new(
            dphi - dpsi * theta.sin(),
            dtheta * phi.cos() + dpsi * theta.cos() * phi.sin(),
            -dtheta * phi.sin() + dpsi * theta.cos() * phi.cos(),
        );
        Ok(TrajectorySample {
            pose: Pose::new(rot, Vec3::new(px.0, py.0, pz.0)),
            velocity: Vec3::new(px.1, py.1, pz.1),
            acceleration: Vec3::new(px.2, py.2, pz.2),
            angular_rate,
        })
    }

    /// Specific force the IMU measures at `t` under `gravity`.
    pub fn specific_force(&self, t: f64, gravity: &Vec3) -> Result<Vec3, String> {
        let s = self.eval(t)?;
        Ok(s.pose.rotation.inverse().rotate(&(s.acceleration - gravity)))
    }
}

/// Per-lidar sensing model.
#[derive(Debug, Clone)]
pub struct LidarConfig {
    pub id: u32,
    pub channels: usize,
    /// Azimuth steps per sweep; per-point timestamps are linear in the
    /// column index, so sweep skew is present by construction.
    pub columns: usize,
    /// Sweeps per second.
    pub rate: f64,
    pub max_range: f64,
    pub range_sigma: f64,
    pub elevation_min: f64,
    pub elevation_max: f64,
    /// Mounting pose, body <- sensor.
    pub extrinsic: Pose,
}

#[derive(Debug, Clone)]
pub struct ImuSimConfig {
    pub rate: f64,
    pub gyro_sigma: f64,
    pub accel_sigma: f64,
    pub gyro_bias: Vec3,
    pub accel_bias: Vec3,
    pub gravity: Vec3,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub lidars: Vec<LidarConfig>,
    pub imu: ImuSimConfig,
    pub seed: u64,
}

impl SimConfig {
    /// Primary 10 Hz lidar plus a tilted, slower secondary; 400 Hz IMU.
    pub fn default_rig(seed: u64, noisy: bool) -> Self {
        let f = if noisy { 1.0 } else { 0.0 };
        SimConfig {
            lidars: vec![
                LidarConfig {
                    id: 0,
                    channels: 12,
                    columns: 96,
                    rate: 10.0,
                    max_range: 40.0,
                    range_sigma: 0.01 * f,
                    elevation_min: -0.5,
                    elevation_max: 0.5,
                    extrinsic: Pose::identity(),
                },
                LidarConfig {
                    id: 1,
                    channels: 4,
                    columns: 48,
                    rate: 5.0,
                    max_range: 40.0,
                    range_sigma: 0.01 * f,
                    elevation_min: -1.2,
                    elevation_max: -0.3,
                    extrinsic: Pose::new(
                        Rotation::from_axis_angle(&Vec3::y(), 0.3),
                        Vec3::new(0.1, 0.0, -0.05),
                    ),
                },
            ],
            imu: ImuSimConfig {
                rate: 400.0,
                gyro_sigma: 2e-3 * f,
                accel_sigma: 2e-2 * f,
                gyro_bias: Vec3::new(2e-3, -1e-3, 1.5e-3) * f,
                accel_bias: Vec3::new(2e-2, -1e-2, 1.5e-2) * f,
                gravity: Vec3::new(0.0, 0.0, -9.81),
            },
            seed,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two uniform draws
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// One sweep of one lidar starting at `t0`. Points are in the sensor frame,
/// timestamps linear across columns.
pub fn raycast_scan(
    world: &WorldModel,
    traj: &TrajectorySpec,
    lidar: &LidarConfig,
    t0: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RawPoint>, String> {
    let period = 1.0 / lidar.rate;
    let mut points = Vec::new();
    for col in 0..lidar.columns {
        let t = t0 + period * col as f64 / lidar.columns as f64;
        let body = traj.eval(t)?.pose;
        let sensor_pose = body.compose(&lidar.extrinsic);
        let az = TAU * col as f64 / lidar.columns as f64;
        for ch in 0..lidar.channels {
            let el = if lidar.channels == 1 {
                0.5 * (lidar.elevation_min + lidar.elevation_max)
            } else {
                lidar.elevation_min
                    + (lidar.elevation_max - lidar.elevation_min) * ch as f64
                        / (lidar.channels - 1) as f64
            };
            let dir_sensor = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let dir_world = sensor_pose.rotation.rotate(&dir_sensor);
            let Some(range) = world.raycast(&sensor_pose.translation, &dir_world, lidar.max_range)
            else {
                continue;
            };
            let noisy = range + lidar.range_sigma * gaussian(rng);
            points.push(RawPoint {
                position: dir_sensor * noisy,
                time: t,
                lidar_id: lidar.id,
                intensity: 1.0,
            });
        }
    }
    Ok(points)
}

/// Everything a run needs, in memory.
pub struct Dataset {
    /// Sensor-frame points from all lidars, merged and time sorted.
    pub scans: Vec<RawPoint>,
    pub imu: Vec<ImuSample>,
    pub ground_truth: Vec<(f64, Pose)>,
}

pub fn generate(
    world: &WorldModel,
    traj: &TrajectorySpec,
    cfg: &SimConfig,
) -> Result<Dataset, String> {
    let mut scans = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for lidar in &cfg.lidars {
        let period = 1.0 / lidar.rate;
        let sweeps = (traj.duration / period).floor() as usize;
        for k in 0..sweeps {
            let t0 = k as f64 * period;
            if t0 + period > traj.duration {
                break;
            }
            scans.extend(raycast_scan(world, traj, lidar, t0, &mut rng)?);
        }
    }
    scans.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.lidar_id.cmp(&b.lidar_id)));

    let n_imu = (traj.duration * cfg.imu.rate).floor() as usize;
    let mut imu = Vec::with_capacity(n_imu + 1);
    for i in 0..=n_imu {
        let t = i as f64 / cfg.imu.rate;
        let s = traj.eval(t)?;
        let f = traj.specific_force(t, &cfg.imu.gravity)?;
        imu.push(ImuSample {
            t,
            gyro: s.angular_rate
                + cfg.imu.gyro_bias
                + Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng))
                    * cfg.imu.gyro_sigma,
            accel: f
                + cfg.imu.accel_bias
                + Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng))
                    * cfg.imu.accel_sigma,
        });
    }

    let gt_rate = 200.0;
    let n_gt = (traj.duration * gt_rate).floor() as usize;
    let ground_truth = (0..=n_gt)
        .map(|i| {
            let t = i as f64 / gt_rate;
            traj.eval(t).map(|s| (t, s.pose))
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Dataset {
        scans,
        imu,
        ground_truth,
    })
}

/// Write `scans.csv`, `imu.csv`, `groundtruth.tum` and `manifest.txt` into
/// `dir`.
pub fn write_dataset(
    dir: &Path,
    data: &Dataset,
    cfg: &SimConfig,
    world_name: &str,
    duration: f64,
) -> Result<(), crate::formats::FormatError> {
    formats::write_scan_log(&dir.join("scans.csv"), &data.scans)?;
    formats::write_imu_log(&dir.join("imu.csv"), &data.imu)?;
    formats::write_trajectory(&dir.join("groundtruth.tum"), &data.ground_truth)?;
    let mut m = String::new();
    let mut kv = |k: &str, v: String| writeln!(m, "{k}={v}").expect("string write");
    kv("world", world_name.into());
    kv("seed", cfg.seed.to_string());
    kv("duration", duration.to_string());
    kv("imu.rate", cfg.imu.rate.to_string());
    kv("scan.count", data.scans.len().to_string());
    kv("imu.count", data.imu.len().to_string());
    for l in &cfg.lidars {
        kv(&format!("lidar{}.rate", l.id), l.rate.to_string());
        kv(&format!("lidar{}.beams", l.id), (l.channels * l.columns).to_string());
    }
    std::fs::write(dir.join("manifest.txt"), m).map_err(|e| crate::formats::FormatError::Io {
        path: dir.join("manifest.txt").display().to_string(),
        source: e,
    })
}

/// Seed the run configuration with the rig's extrinsics and start pose.
pub fn apply_rig_to_config(run: &mut RunConfig, sim: &SimConfig, traj: &TrajectorySpec) {
    run.extrinsics = sim
        .lidars
        .iter()
        .map(|l| (l.id, l.extrinsic))
        .collect();
    run.init_position = Vec3::new(
        traj.pos[0].offset,
        traj.pos[1].offset,
        traj.pos[2].offset,
    );
    run.init_yaw = traj.euler[0].offset;
}

/// Run configuration tuned for the synthetic rigs, with data and output
/// paths relative to the dataset directory.
pub fn default_run_config(preset: WorldPreset, sim: &SimConfig, traj: &TrajectorySpec) -> RunConfig {
    let mut run = RunConfig::default();
    run.map.leaf_size = 0.25;
    run.map.max_depth = 4;
    run.map.search_radius = 0.25;
    // tight association gate and fine scales only: coarse surfels blend
    // structure across corners at room scale and bias the fit
    run.map.max_plane_dist = 0.03;
    run.map.enabled_depths = 0b11;
    run.sync.sweep_period = 0.1;
    run.sync.knots_per_bundle = 4;
    run.sync.window_bundles = 2;
    run.solver.outer_iterations = 2;
    run.solver.inner_iterations = 4;
    run.keyframe.translation = 0.1;
    run.keyframe.rotation = 0.1;
    run.max_points_per_bundle = 450;
    run.loop_enabled = preset == WorldPreset::CorridorLoop;
    run.paths.scans = Some("scans.csv".into());
    run.paths.imu = Some("imu.csv".into());
    run.paths.trajectory = Some("trajectory.tum".into());
    run.paths.timing = Some("timing.csv".into());
    run.paths.ply = Some("map.ply".into());
    run.paths.g2o = Some("graph.g2o".into());
    apply_rig_to_config(&mut run, sim, traj);
    run
}

/// The preset's reference trajectory for a given duration.
pub fn preset_trajectory(preset: WorldPreset, duration: f64) -> TrajectorySpec {
    match preset {
        WorldPreset::Room => room_trajectory(duration),
        WorldPreset::CorridorLoop => corridor_trajectory(duration),
        WorldPreset::TwoScale => two_scale_trajectory(duration),
    }
}

/// Gentle wandering inside the room preset.
pub fn room_trajectory(duration: f64) -> TrajectorySpec {
    TrajectorySpec {
        pos: [
            Channel {
                offset: 0.0,
                terms: vec![
                    Sinusoid { amp: 1.6, freq: 0.35, phase: 0.0 },
                    Sinusoid { amp: 0.5, freq: 0.9, phase: 1.0 },
                ],
            },
            Channel {
                offset: 0.0,
                terms: vec![
                    Sinusoid { amp: 1.4, freq: 0.45, phase: 1.2 },
                    Sinusoid { amp: 0.4, freq: 0.7, phase: 2.1 },
                ],
            },
            Channel {
                offset: 1.4,
                terms: vec![Sinusoid { amp: 0.25, freq: 0.6, phase: 0.4 }],
            },
        ],
        euler: [
            Channel {
                offset: 0.0,
                terms: vec![Sinusoid { amp: 0.7, freq: 0.3, phase: 0.0 }],
            },
            Channel {
                offset: 0.0,
                terms: vec![Sinusoid { amp: 0.12, freq: 0.5, phase: 0.9 }],
            },
            Channel {
                offset: 0.0,
                terms: vec![Sinusoid { amp: 0.1, freq: 0.4, phase: 1.7 }],
            },
        ],
        duration,
        start_delay: 1.2,
        ramp: 1.5,
    }
}

/// Circuit around the inner block of the corridor-loop preset.
pub fn corridor_trajectory(duration: f64) -> TrajectorySpec {
    // a rounded square lap between the inner block and the outer shell:
    // first plus third harmonic bulges the circle out at the diagonals
    let lap = duration - 3.0;
    let w = TAU / lap;
    let half_pi = std::f64::consts::FRAC_PI_2;
    TrajectorySpec {
        pos: [
            Channel {
                offset: 7.1,
                terms: vec![
                    // constant -7.1 term (freq 0, phase pi/2) recenters the
                    // lap on the origin while the start stays at x = 7.1
                    Sinusoid { amp: -7.1, freq: 0.0, phase: half_pi },
                    Sinusoid { amp: 8.0, freq: w, phase: half_pi },
                    Sinusoid { amp: -0.9, freq: 3.0 * w, phase: half_pi },
                ],
            },
            Channel {
                offset: 0.0,
                terms: vec![
                    Sinusoid { amp: 8.0, freq: w, phase: 0.0 },
                    Sinusoid { amp: 0.9, freq: 3.0 * w, phase: 0.0 },
                ],
            },
            Channel {
                offset: 1.4,
                terms: vec![Sinusoid { amp: 0.1, freq: 0.8, phase: 0.3 }],
            },
        ],
        euler: [
            Channel {
                offset: 0.0,
                terms: vec![Sinusoid { amp: 0.5, freq: 0.25, phase: 0.0 }],
            },
            Channel::constant(0.0),
            Channel::constant(0.0),
        ],
        duration,
        start_delay: 1.2,
        ramp: 1.5,
    }
}

/// Slow pan in front of the panel wall of the two-scale preset.
pub fn two_scale_trajectory(duration: f64) -> TrajectorySpec {
    TrajectorySpec {
        pos: [
            Channel {
                offset: 0.5,
                terms: vec![Sinusoid { amp: 1.0, freq: 0.4, phase: 0.0 }],
            },
            Channel {
                offset: 0.0,
                terms: vec![Sinusoid { amp: 2.0, freq: 0.3, phase: 0.7 }],
            },
            Channel {
                offset: 1.4,
                terms: vec![Sinusoid { amp: 0.2, freq: 0.5, phase: 0.2 }],
            },
        ],
        euler: [
            Channel {
                offset: 0.0,
                terms: vec![Sinusoid { amp: 0.4, freq: 0.35, phase: 0.0 }],
            },
            Channel {
                offset: 0.0,
                terms: vec![Sinusoid { amp: 0.08, freq: 0.6, phase: 1.1 }],
            },
            Channel::constant(0.0),
        ],
        duration,
        start_delay: 1.2,
        ramp: 1.5,
    }
}
