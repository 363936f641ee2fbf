//! Plain-text `key=value` run configuration.
//!
//! Every knob of the pipeline lives here. Parsing is strict: unknown keys
//! are rejected and values are validated, so a typo cannot silently fall
//! back to a default. `serialize` emits every key in a fixed order and
//! round-trips through `parse`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use slict_core::estimator::{SolverConfig, SyncConfig};
use slict_core::estimator::KeyframeThresholds;
use slict_core::posegraph::LoopConfig;
use slict_core::preint::ImuNoise;
use slict_core::surfel::MapConfig;
use slict_core::{Pose, Rotation, Vec3};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for {key}: {message}")]
    InvalidValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("line {line}: expected key=value, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
}

/// File paths, all optional; unset paths serialize as empty values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IoPaths {
    pub scans: Option<String>,
    pub imu: Option<String>,
    pub trajectory: Option<String>,
    pub timing: Option<String>,
    pub ply: Option<String>,
    pub g2o: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub map: MapConfig,
    pub sync: SyncConfig,
    pub solver: SolverConfig,
    pub imu: ImuNoise,
    pub keyframe: KeyframeThresholds,
    pub loop_enabled: bool,
    pub loop_cfg: LoopConfig,
    /// World-frame starting position of the platform.
    pub init_position: Vec3,
    pub init_yaw: f64,
    /// Leading stationary stretch used to estimate the gyro bias (seconds).
    pub static_init_secs: f64,
    /// Point budget per bundle after deterministic subsampling; 0 keeps all.
    pub max_points_per_bundle: usize,
    /// Mounting pose (body <- sensor) per lidar id.
    pub extrinsics: BTreeMap<u32, Pose>,
    pub paths: IoPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            map: MapConfig::default(),
            sync: SyncConfig::default(),
            solver: SolverConfig::default(),
            imu: ImuNoise::default(),
            keyframe: KeyframeThresholds::default(),
            loop_enabled: false,
            loop_cfg: LoopConfig::default(),
            init_position: Vec3::zeros(),
            init_yaw: 0.0,
            static_init_secs: 1.0,
            max_points_per_bundle: 0,
            extrinsics: BTreeMap::new(),
            paths: IoPaths::default(),
        }
    }
}

fn depths_to_list(mask: u32, max_depth: u8) -> String {
    let mut parts = Vec::new();
    for d in 0..=max_depth {
        if mask & (1 << d) != 0 {
            parts.push(d.to_string());
        }
    }
    parts.join(",")
}

fn list_to_depths(s: &str, max_depth: u8) -> Result<u32, String> {
    let mut mask = 0u32;
    for part in s.split(',') {
        let d: u8 = part
            .trim()
            .parse()
            .map_err(|_| format!("invalid depth {part:?}"))?;
        if d > max_depth {
            return Err(format!("depth {d} exceeds max_depth {max_depth}"));
        }
        mask |= 1 << d;
    }
    if mask == 0 {
        return Err("no depths enabled".into());
    }
    Ok(mask)
}

fn pose_to_value(p: &Pose) -> String {
    let (w, x, y, z) = p.rotation.quaternion();
    format!(
        "{} {} {} {} {} {} {}",
        p.translation.x, p.translation.y, p.translation.z, x, y, z, w
    )
}

fn value_to_pose(s: &str) -> Result<Pose, String> {
    let v: Result<Vec<f64>, _> = s.split_whitespace().map(str::parse).collect();
    let v = v.map_err(|_| format!("invalid pose {s:?}"))?;
    if v.len() != 7 {
        return Err(format!("pose needs 7 numbers, got {}", v.len()));
    }
    let norm = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(format!("quaternion norm {norm} not unit"));
    }
    Ok(Pose::new(
        Rotation::from_quat(v[6], v[3], v[4], v[5]),
        Vec3::new(v[0], v[1], v[2]),
    ))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        // enabled_depths may arrive before max_depth; resolve at the end
        let mut depths_value: Option<(usize, String)> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() || row.starts_with('#') {
                continue;
            }
            let Some((key, value)) = row.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line,
                    text: row.into(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |message: String| ConfigError::InvalidValue {
                line,
                key: key.into(),
                message,
            };
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| bad(format!("{value:?}")))?
                };
            }
            match key {
                "map.leaf_size" => cfg.map.leaf_size = num!(),
                "map.max_depth" => cfg.map.max_depth = num!(),
                "map.min_points" => cfg.map.min_points = num!(),
                "map.min_planarity" => cfg.map.min_planarity = num!(),
                "map.search_radius" => cfg.map.search_radius = num!(),
                "map.max_plane_dist" => cfg.map.max_plane_dist = num!(),
                "map.enabled_depths" => depths_value = Some((line, value.into())),
                "sync.primary_lidar_id" => cfg.sync.primary_lidar_id = num!(),
                "sync.sweep_period" => cfg.sync.sweep_period = num!(),
                "sync.knots_per_bundle" => cfg.sync.knots_per_bundle = num!(),
                "sync.window_bundles" => cfg.sync.window_bundles = num!(),
                "solver.outer_iterations" => cfg.solver.outer_iterations = num!(),
                "solver.inner_iterations" => cfg.solver.inner_iterations = num!(),
                "solver.lidar_sigma" => cfg.solver.lidar_sigma = num!(),
                "solver.huber_delta" => cfg.solver.huber_delta = num!(),
                "solver.lambda_init" => cfg.solver.lambda_init = num!(),
                "imu.gyro_noise" => cfg.imu.gyro_noise = num!(),
                "imu.accel_noise" => cfg.imu.accel_noise = num!(),
                "imu.gyro_walk" => cfg.imu.gyro_walk = num!(),
                "imu.accel_walk" => cfg.imu.accel_walk = num!(),
                "imu.gravity_z" => cfg.imu.gravity = Vec3::new(0.0, 0.0, num!()),
                "keyframe.translation" => cfg.keyframe.translation = num!(),
                "keyframe.rotation" => cfg.keyframe.rotation = num!(),
                "keyframe.neighbors" => cfg.keyframe.neighbors = num!(),
                "loop.enabled" => {
                    cfg.loop_enabled = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad(format!("expected true/false, got {value:?}"))),
                    }
                }
                "loop.k_nearest" => cfg.loop_cfg.k_nearest = num!(),
                "loop.min_time_gap" => cfg.loop_cfg.min_time_gap = num!(),
                "loop.fitness_threshold" => cfg.loop_cfg.fitness_threshold = num!(),
                "init.x" => cfg.init_position.x = num!(),
                "init.y" => cfg.init_position.y = num!(),
                "init.z" => cfg.init_position.z = num!(),
                "init.yaw" => cfg.init_yaw = num!(),
                "run.static_init_secs" => cfg.static_init_secs = num!(),
                "run.max_points_per_bundle" => cfg.max_points_per_bundle = num!(),
                "data.scans" => cfg.paths.scans = (!value.is_empty()).then(|| value.into()),
                "data.imu" => cfg.paths.imu = (!value.is_empty()).then(|| value.into()),
                "out.trajectory" => {
                    cfg.paths.trajectory = (!value.is_empty()).then(|| value.into())
                }
                "out.timing" => cfg.paths.timing = (!value.is_empty()).then(|| value.into()),
                "out.ply" => cfg.paths.ply = (!value.is_empty()).then(|| value.into()),
                "out.g2o" => cfg.paths.g2o = (!value.is_empty()).then(|| value.into()),
                _ => {
                    if let Some(id) = key
                        .strip_prefix("lidar")
                        .and_then(|rest| rest.strip_suffix(".extrinsic"))
                        .and_then(|id| id.parse::<u32>().ok())
                    {
                        cfg.extrinsics.insert(id, value_to_pose(value).map_err(bad)?);
                    } else {
                        return Err(ConfigError::UnknownKey {
                            line,
                            key: key.into(),
                        });
                    }
                }
            }
        }
        if let Some((line, value)) = depths_value {
            cfg.map.enabled_depths =
                list_to_depths(&value, cfg.map.max_depth).map_err(|message| {
                    ConfigError::InvalidValue {
                        line,
                        key: "map.enabled_depths".into(),
                        message,
                    }
                })?;
        } else {
            cfg.map.enabled_depths = MapConfig::all_depths(cfg.map.max_depth);
        }
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.map.leaf_size <= 0.0 {
            return Err("map.leaf_size must be positive".into());
        }
        if self.map.max_depth > 20 {
            return Err("map.max_depth unreasonably large".into());
        }
        if !(0.0..=1.0).contains(&self.map.min_planarity) {
            return Err("map.min_planarity must lie in [0, 1]".into());
        }
        if self.sync.sweep_period <= 0.0 {
            return Err("sync.sweep_period must be positive".into());
        }
        if !(2..=8).contains(&self.sync.knots_per_bundle) {
            return Err("sync.knots_per_bundle must lie in 2..=8".into());
        }
        if self.sync.window_bundles == 0 {
            return Err("sync.window_bundles must be positive".into());
        }
        if self.solver.lidar_sigma <= 0.0 || self.solver.huber_delta <= 0.0 {
            return Err("solver sigma and huber threshold must be positive".into());
        }
        if self.imu.gravity.z >= 0.0 {
            return Err("imu.gravity_z must be negative".into());
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<String>| p.clone().unwrap_or_default();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("string write");
        kv("map.leaf_size", self.map.leaf_size.to_string());
        kv("map.max_depth", self.map.max_depth.to_string());
        kv("map.min_points", self.map.min_points.to_string());
        kv("map.min_planarity", self.map.min_planarity.to_string());
        kv("map.search_radius", self.map.search_radius.to_string());
        kv("map.max_plane_dist", self.map.max_plane_dist.to_string());
        kv(
            "map.enabled_depths",
            depths_to_list(self.map.enabled_depths, self.map.max_depth),
        );
        kv("sync.primary_lidar_id", self.sync.primary_lidar_id.to_string());
        kv("sync.sweep_period", self.sync.sweep_period.to_string());
        kv("sync.knots_per_bundle", self.sync.knots_per_bundle.to_string());
        kv("sync.window_bundles", self.sync.window_bundles.to_string());
        kv("solver.outer_iterations", self.solver.outer_iterations.to_string());
        kv("solver.inner_iterations", self.solver.inner_iterations.to_string());
        kv("solver.lidar_sigma", self.solver.lidar_sigma.to_string());
        kv("solver.huber_delta", self.solver.huber_delta.to_string());
        kv("solver.lambda_init", self.solver.lambda_init.to_string());
        kv("imu.gyro_noise", self.imu.gyro_noise.to_string());
        kv("imu.accel_noise", self.imu.accel_noise.to_string());
        kv("imu.gyro_walk", self.imu.gyro_walk.to_string());
        kv("imu.accel_walk", self.imu.accel_walk.to_string());
        kv("imu.gravity_z", self.imu.gravity.z.to_string());
        kv("keyframe.translation", self.keyframe.translation.to_string());
        kv("keyframe.rotation", self.keyframe.rotation.to_string());
        kv("keyframe.neighbors", self.keyframe.neighbors.to_string());
        kv("loop.enabled", self.loop_enabled.to_string());
        kv("loop.k_nearest", self.loop_cfg.k_nearest.to_string());
        kv("loop.min_time_gap", self.loop_cfg.min_time_gap.to_string());
        kv(
            "loop.fitness_threshold",
            self.loop_cfg.fitness_threshold.to_string(),
        );
        kv("init.x", self.init_position.x.to_string());
        kv("init.y", self.init_position.y.to_string());
        kv("init.z", self.init_position.z.to_string());
        kv("init.yaw", self.init_yaw.to_string());
        kv("run.static_init_secs", self.static_init_secs.to_string());
        kv(
            "run.max_points_per_bundle",
            self.max_points_per_bundle.to_string(),
        );
        for (id, pose) in &self.extrinsics {
            kv(&format!("lidar{id}.extrinsic"), pose_to_value(pose));
        }
        kv("data.scans", path(&self.paths.scans));
        kv("data.imu", path(&self.paths.imu));
        kv("out.trajectory", path(&self.paths.trajectory));
        kv("out.timing", path(&self.paths.timing));
        kv("out.ply", path(&self.paths.ply));
        kv("out.g2o", path(&self.paths.g2o));
        s
    }
}
