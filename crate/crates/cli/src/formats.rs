//! Dataset file formats: scan and IMU CSV logs and TUM trajectory files.
//!
//! All parsers are strict: a malformed row fails with its line number, and
//! per-stream timestamps must be monotonic. Writers use fixed precision so
//! re-running a generation step is byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use slict_core::deskew::RawPoint;
use slict_core::preint::ImuSample;
use slict_core::{Pose, Rotation, Vec3};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_field<T: core::str::FromStr>(
    s: &str,
    path: &Path,
    line: usize,
    what: &str,
) -> Result<T, FormatError> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what}: {s:?}")))
}

pub const SCAN_HEADER: &str = "t,lidar_id,x,y,z,intensity";
pub const IMU_HEADER: &str = "t,wx,wy,wz,ax,ay,az";

/// Write a scan log. Point coordinates are expected in the sensor frame.
pub fn write_scan_log(path: &Path, points: &[RawPoint]) -> Result<(), FormatError> {
    let mut out = String::with_capacity(points.len() * 64 + 32);
    out.push_str(SCAN_HEADER);
    out.push('\n');
    for p in points {
        writeln!(
            out,
            "{:.9},{},{:.6},{:.6},{:.6},{:.3}",
            p.time, p.lidar_id, p.position.x, p.position.y, p.position.z, p.intensity
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Parse a scan log and re-express each point in the body frame through its
/// lidar's mounting extrinsic. Lidars missing from `extrinsics` mount at the
/// identity.
pub fn parse_scan_log(
    path: &Path,
    extrinsics: &BTreeMap<u32, Pose>,
) -> Result<Vec<RawPoint>, FormatError> {
    let text = read(path)?;
    let mut points = Vec::new();
    let mut last_time: BTreeMap<u32, f64> = BTreeMap::new();
    for (idx, row) in text.lines().enumerate() {
        let line = idx + 1;
        if line == 1 {
            if row.trim() != SCAN_HEADER {
                return Err(parse_err(path, line, format!("expected header {SCAN_HEADER:?}")));
            }
            continue;
        }
        if row.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 6 {
            return Err(parse_err(path, line, format!("expected 6 fields, got {}", f.len())));
        }
        let time: f64 = parse_field(f[0], path, line, "timestamp")?;
        let lidar_id: u32 = parse_field(f[1], path, line, "lidar id")?;
        let x: f64 = parse_field(f[2], path, line, "x")?;
        let y: f64 = parse_field(f[3], path, line, "y")?;
        let z: f64 = parse_field(f[4], path, line, "z")?;
        let intensity: f64 = parse_field(f[5], path, line, "intensity")?;
        if let Some(prev) = last_time.insert(lidar_id, time) {
            if time < prev {
                return Err(parse_err(
                    path,
                    line,
                    format!("lidar {lidar_id} time {time} decreases below {prev}"),
                ));
            }
        }
        let sensor = Vec3::new(x, y, z);
        let position = match extrinsics.get(&lidar_id) {
            Some(t) => t.transform_point(&sensor),
            None => sensor,
        };
        points.push(RawPoint {
            position,
            time,
            lidar_id,
            intensity,
        });
    }
    Ok(points)
}

pub fn write_imu_log(path: &Path, samples: &[ImuSample]) -> Result<(), FormatError> {
    let mut out = String::with_capacity(samples.len() * 80 + 32);
    out.push_str(IMU_HEADER);
    out.push('\n');
    for s in samples {
        writeln!(
            out,
            "{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            s.t, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn parse_imu_log(path: &Path) -> Result<Vec<ImuSample>, FormatError> {
    let text = read(path)?;
    let mut samples: Vec<ImuSample> = Vec::new();
    for (idx, row) in text.lines().enumerate() {
        let line = idx + 1;
        if line == 1 {
            if row.trim() != IMU_HEADER {
                return Err(parse_err(path, line, format!("expected header {IMU_HEADER:?}")));
            }
            continue;
        }
        if row.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = row.split(',').collect();
        if f.len() != 7 {
            return Err(parse_err(path, line, format!("expected 7 fields, got {}", f.len())));
        }
        let t: f64 = parse_field(f[0], path, line, "timestamp")?;
        if let Some(prev) = samples.last() {
            if t <= prev.t {
                return Err(parse_err(
                    path,
                    line,
                    format!("time {t} does not increase past {}", prev.t),
                ));
            }
        }
        let v: Result<Vec<f64>, _> = f[1..]
            .iter()
            .map(|s| parse_field(s, path, line, "value"))
            .collect();
        let v = v?;
        samples.push(ImuSample {
            t,
            gyro: Vec3::new(v[0], v[1], v[2]),
            accel: Vec3::new(v[3], v[4], v[5]),
        });
    }
    Ok(samples)
}

/// Write a trajectory as TUM rows `timestamp tx ty tz qx qy qz qw`.
pub fn write_trajectory(path: &Path, poses: &[(f64, Pose)]) -> Result<(), FormatError> {
    let mut out = String::with_capacity(poses.len() * 96);
    for (t, pose) in poses {
        let (w, x, y, z) = pose.rotation.quaternion();
        writeln!(
            out,
            "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            t, pose.translation.x, pose.translation.y, pose.translation.z, x, y, z, w
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn parse_trajectory(path: &Path) -> Result<Vec<(f64, Pose)>, FormatError> {
    let text = read(path)?;
    let mut poses: Vec<(f64, Pose)> = Vec::new();
    for (idx, row) in text.lines().enumerate() {
        let line = idx + 1;
        if row.trim().is_empty() || row.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = row.split_whitespace().collect();
        if f.len() != 8 {
            return Err(parse_err(path, line, format!("expected 8 fields, got {}", f.len())));
        }
        let v: Result<Vec<f64>, _> = f
            .iter()
            .map(|s| parse_field(s, path, line, "value"))
            .collect();
        let v = v?;
        if let Some((prev, _)) = poses.last() {
            if v[0] <= *prev {
                return Err(parse_err(
                    path,
                    line,
                    format!("time {} does not increase past {prev}", v[0]),
                ));
            }
        }
        let norm = (v[4] * v[4] + v[5] * v[5] + v[6] * v[6] + v[7] * v[7]).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(parse_err(path, line, format!("quaternion norm {norm} not unit")));
        }
        poses.push((
            v[0],
            Pose::new(
                Rotation::from_quat(v[7], v[4], v[5], v[6]),
                Vec3::new(v[1], v[2], v[3]),
            ),
        ));
    }
    Ok(poses)
}
