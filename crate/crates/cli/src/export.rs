//! Result export: PLY map dumps, pose-graph files and per-window timing.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use slict_core::posegraph::PoseGraphEdge;
use slict_core::surfel::SurfelMap;
use slict_core::Pose;

use crate::formats::FormatError;

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write the map's leaf voxel means as a binary little-endian PLY point
/// cloud. Intensity carries the per-voxel point count.
pub fn write_ply(path: &Path, map: &SurfelMap) -> Result<(), FormatError> {
    let leaves: Vec<_> = map.leaf_nodes().collect();
    let mut out = Vec::with_capacity(256 + leaves.len() * 16);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property float intensity\nend_header\n",
        leaves.len()
    )
    .expect("vec write");
    for (_, stats) in leaves {
        let m = stats.mean();
        for v in [m.x as f32, m.y as f32, m.z as f32, stats.n as f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Write vertices and relative-pose edges in g2o text form
/// (`VERTEX_SE3:QUAT`, `EDGE_SE3:QUAT`). Edge information matrices are
/// diagonal, from the squared scalar weights.
pub fn write_g2o(path: &Path, poses: &[Pose], edges: &[PoseGraphEdge]) -> Result<(), FormatError> {
    let mut out = String::new();
    for (i, pose) in poses.iter().enumerate() {
        let (w, x, y, z) = pose.rotation.quaternion();
        writeln!(
            out,
            "VERTEX_SE3:QUAT {i} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            pose.translation.x, pose.translation.y, pose.translation.z, x, y, z, w
        )
        .expect("string write");
    }
    for e in edges {
        let (w, x, y, z) = e.relative.rotation.quaternion();
        let it = e.trans_weight * e.trans_weight;
        let ir = e.rot_weight * e.rot_weight;
        write!(
            out,
            "EDGE_SE3:QUAT {} {} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            e.from,
            e.to,
            e.relative.translation.x,
            e.relative.translation.y,
            e.relative.translation.z,
            x,
            y,
            z,
            w
        )
        .expect("string write");
        // upper triangle of the 6x6 information, translation before rotation
        let diag = [it, it, it, ir, ir, ir];
        for r in 0..6 {
            for c in r..6 {
                let v = if r == c { diag[r] } else { 0.0 };
                write!(out, " {v:.9}").expect("string write");
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// One solved window's bookkeeping for the timing log.
#[derive(Debug, Clone, Copy)]
pub struct TimingRecord {
    pub window_index: usize,
    pub t_k: f64,
    pub dt_loop_ms: f64,
    pub dt_solve_ms: f64,
    pub num_factors: usize,
}

pub fn write_timing(path: &Path, records: &[TimingRecord]) -> Result<(), FormatError> {
    let mut out = String::from("window_index,t_k,dt_loop_ms,dt_solve_ms,num_factors\n");
    for r in records {
        writeln!(
            out,
            "{},{:.9},{:.3},{:.3},{}",
            r.window_index, r.t_k, r.dt_loop_ms, r.dt_solve_ms, r.num_factors
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}
