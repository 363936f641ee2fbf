//! Keyframe pose graph: loop detection, point-to-plane alignment and
//! graph relaxation.
//!
//! Keyframes store their motion-compensated cloud in the body frame.
//! Candidate loops are picked among the spatially nearest keyframes with a
//! minimum time separation, verified by point-to-plane ICP against a surfel
//! map of the candidate's cloud, and accepted below a fitness threshold. The
//! graph of odometry and loop edges is relaxed with Levenberg-Marquardt, the
//! first pose held fixed.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix3x6, SMatrix, Vector6};

use crate::geometry::{right_jacobian_inv, skew, Mat3, Pose, Rotation, Timestamp, Vec3};
use crate::surfel::{MapConfig, SurfelMap};

#[derive(Debug, Clone)]
pub struct Keyframe {
    pub index: usize,
    pub pose: Pose,
    pub time: Timestamp,
    /// Motion-compensated cloud, body frame.
    pub cloud: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    /// Spatially nearest keyframes considered per query.
    pub k_nearest: usize,
    /// Minimum time separation between query and candidate (seconds).
    pub min_time_gap: f64,
    /// Reject alignments whose inlier RMS plane distance exceeds this.
    pub fitness_threshold: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            k_nearest: 10,
            min_time_gap: 30.0,
            fitness_threshold: 0.3,
        }
    }
}

/// Pick a loop candidate for `query`: the oldest of the `k_nearest`
/// spatially closest keyframes at least `min_time_gap` older.
pub fn detect_loop(keyframes: &[Keyframe], query: usize, cfg: &LoopConfig) -> Option<usize> {
    let q = &keyframes[query];
    let mut near: Vec<(f64, usize)> = keyframes
        .iter()
        .enumerate()
        .filter(|(i, k)| *i != query && q.time - k.time >= cfg.min_time_gap)
        .map(|(i, k)| ((k.pose.translation - q.pose.translation).norm(), i))
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(cfg.k_nearest);
    near.into_iter()
        .map(|(_, i)| i)
        .min_by(|a, b| keyframes[*a].time.total_cmp(&keyframes[*b].time))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoseGraphError {
    /// Not enough correspondences to constrain the alignment.
    InsufficientOverlap,
    /// Damped normal equations could not be factorized.
    Singular,
    EmptyGraph,
}

impl fmt::Display for PoseGraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoseGraphError::InsufficientOverlap => {
                write!(f, "too few correspondences for alignment")
            }
            PoseGraphError::Singular => write!(f, "pose graph normal equations singular"),
            PoseGraphError::EmptyGraph => write!(f, "pose graph has no poses"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Correspondence gate on the plane distance (meters).
    pub max_corr_dist: f64,
    pub min_correspondences: usize,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 30,
            max_corr_dist: 0.5,
            min_correspondences: 50,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IcpResult {
    /// Refined transform mapping source-frame points into the target frame.
    pub transform: Pose,
    /// Inlier RMS plane distance (meters).
    pub fitness: f64,
    pub inliers: usize,
}

/// Point-to-plane ICP of `source` onto a surfel map of `target`, starting
/// from `init` (target <- source).
pub fn icp_point_to_plane(
    source: &[Vec3],
    target: &[Vec3],
    init: &Pose,
    cfg: &IcpConfig,
) -> Result<IcpResult, PoseGraphError> {
    let map_cfg = MapConfig {
        max_plane_dist: cfg.max_corr_dist,
        search_radius: 0.2,
        ..MapConfig::default()
    };
    let mut map = SurfelMap::new(map_cfg);
    map.insert_cloud(target, &Vec3::zeros());
    map.refresh_attributes();

    let mut t = *init;
    let mut fitness = f64::INFINITY;
    let mut inliers = 0;
    for _ in 0..cfg.max_iterations {
        let mut h = SMatrix::<f64, 6, 6>::zeros();
        let mut g = Vector6::zeros();
        let mut sq_sum = 0.0;
        inliers = 0;
        let r_mat = t.rotation.matrix();
        for p in source {
            let world = t.transform_point(p);
            // finest qualifying surfel wins
            let Some(best) = map
                .query_candidates(&world)
                .into_iter()
                .min_by_key(|c| c.key.depth)
            else {
                continue;
            };
            let n = best.attributes.normal;
            let d = n.dot(&(world - best.attributes.mean));
            if d.abs() >= cfg.max_corr_dist {
                continue;
            }
            let mut j = Matrix3x6::zeros();
            j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-r_mat * skew(p)));
            j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Mat3::identity());
            let row = n.transpose() * j;
            h += row.transpose() * row;
            g -= row.transpose() * d;
            sq_sum += d * d;
            inliers += 1;
        }
        if inliers < cfg.min_correspondences {
            return Err(PoseGraphError::InsufficientOverlap);
        }
        fitness = libm::sqrt(sq_sum / inliers as f64);
        let mut damped = h;
        for k in 0..6 {
            damped[(k, k)] += 1e-9 + 1e-6 * h[(k, k)];
        }
        let Some(chol) = Cholesky::new(damped) else {
            return Err(PoseGraphError::Singular);
        };
        let delta = chol.solve(&g);
        t = Pose::new(
            t.rotation
                .compose(&Rotation::exp(&Vec3::new(delta[0], delta[1], delta[2]))),
            t.translation + Vec3::new(delta[3], delta[4], delta[5]),
        );
        if delta.norm() < 1e-10 {
            break;
        }
    }
    Ok(IcpResult {
        transform: t,
        fitness,
        inliers,
    })
}

/// One relative-pose constraint `from -> to`, whitened by scalar weights.
#[derive(Debug, Clone, Copy)]
pub struct PoseGraphEdge {
    pub from: usize,
    pub to: usize,
    /// Measured relative pose of `to` in the frame of `from`.
    pub relative: Pose,
    pub rot_weight: f64,
    pub trans_weight: f64,
}

/// Residual and Jacobians of one edge, `(dtheta, dp)` per endpoint,
/// rotations perturbed on the right.
pub fn edge_residual(
    edge: &PoseGraphEdge,
    from: &Pose,
    to: &Pose,
) -> (Vector6<f64>, SMatrix<f64, 6, 6>, SMatrix<f64, 6, 6>) {
    let rp_t = from.rotation.inverse();
    let rel_rot = rp_t.compose(&to.rotation);
    let r_rot = edge.relative.rotation.inverse().compose(&rel_rot).log();
    let dp = rp_t.rotate(&(to.translation - from.translation));
    let r_trans = dp - edge.relative.translation;

    let jri = right_jacobian_inv(&r_rot);
    let mut j_from = SMatrix::<f64, 6, 6>::zeros();
    j_from
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-jri * rel_rot.inverse().matrix() * edge.rot_weight));
    j_from.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(&dp) * edge.trans_weight));
    j_from
        .fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(-rp_t.matrix() * edge.trans_weight));

    let mut j_to = SMatrix::<f64, 6, 6>::zeros();
    j_to.fixed_view_mut::<3, 3>(0, 0).copy_from(&(jri * edge.rot_weight));
    j_to.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(rp_t.matrix() * edge.trans_weight));

    let mut r = Vector6::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&(r_rot * edge.rot_weight));
    r.fixed_rows_mut::<3>(3).copy_from(&(r_trans * edge.trans_weight));
    (r, j_from, j_to)
}

fn graph_cost(poses: &[Pose], edges: &[PoseGraphEdge]) -> f64 {
    0.5 * edges
        .iter()
        .map(|e| edge_residual(e, &poses[e.from], &poses[e.to]).0.norm_squared())
        .sum::<f64>()
}

/// Relax all poses but the first, which fixes the gauge.
pub fn optimize_pose_graph(
    poses: &mut [Pose],
    edges: &[PoseGraphEdge],
    max_iterations: usize,
) -> Result<f64, PoseGraphError> {
    if poses.is_empty() {
        return Err(PoseGraphError::EmptyGraph);
    }
    if poses.len() == 1 || edges.is_empty() {
        return Ok(graph_cost(poses, edges));
    }
    let dim = 6 * (poses.len() - 1);
    let block = |i: usize| (i - 1) * 6; // pose 0 carries no unknowns
    let mut cost = graph_cost(poses, edges);
    let mut lambda = 1e-6_f64;

    for _ in 0..max_iterations {
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut g = DVector::<f64>::zeros(dim);
        for e in edges {
            let (r, jf, jt) = edge_residual(e, &poses[e.from], &poses[e.to]);
            let mut blocks: Vec<(usize, SMatrix<f64, 6, 6>)> = Vec::new();
            if e.from > 0 {
                blocks.push((block(e.from), jf));
            }
            if e.to > 0 {
                blocks.push((block(e.to), jt));
            }
            for (bi, ji) in &blocks {
                let gi = ji.transpose() * r;
                for k in 0..6 {
                    g[bi + k] -= gi[k];
                }
                for (bj, jj) in &blocks {
                    let hij = ji.transpose() * jj;
                    for a in 0..6 {
                        for b in 0..6 {
                            h[(bi + a, bj + b)] += hij[(a, b)];
                        }
                    }
                }
            }
        }

        let mut accepted = false;
        for _ in 0..8 {
            let mut damped = h.clone();
            for k in 0..dim {
                damped[(k, k)] += lambda * h[(k, k)].max(1e-9);
            }
            let Some(chol) = Cholesky::new(damped) else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&g);
            let candidate: Vec<Pose> = poses
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if i == 0 {
                        return *p;
                    }
                    let d = delta.fixed_rows::<6>(block(i));
                    Pose::new(
                        p.rotation.compose(&Rotation::exp(&Vec3::new(d[0], d[1], d[2]))),
                        p.translation + Vec3::new(d[3], d[4], d[5]),
                    )
                })
                .collect();
            let new_cost = graph_cost(&candidate, edges);
            if new_cost <= cost {
                poses.copy_from_slice(&candidate);
                let rel = (cost - new_cost) / cost.max(1e-18);
                cost = new_cost;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if rel < 1e-12 {
                    return Ok(cost);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(cost)
}

/// Rebuild a surfel map from scratch out of the keyframe clouds at their
/// current poses.
pub fn rebuild_map(keyframes: &[Keyframe], cfg: MapConfig) -> SurfelMap {
    let mut map = SurfelMap::new(cfg);
    for k in keyframes {
        let world: Vec<Vec3> = k.cloud.iter().map(|p| k.pose.transform_point(p)).collect();
        map.insert_cloud(&world, &k.pose.translation);
    }
    map.refresh_attributes();
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_vec(rng: &mut StdRng, s: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
            rng.gen_range(-s..s),
        )
    }

    fn rand_pose(rng: &mut StdRng, rot: f64, trans: f64) -> Pose {
        Pose::new(Rotation::exp(&rand_vec(rng, rot)), rand_vec(rng, trans))
    }

    #[test]
    fn edge_residual_zero_when_consistent() {
        let mut rng = StdRng::seed_from_u64(81);
        for _ in 0..20 {
            let a = rand_pose(&mut rng, 1.0, 3.0);
            let rel = rand_pose(&mut rng, 0.5, 1.0);
            let b = a.compose(&rel);
            let edge = PoseGraphEdge {
                from: 0,
                to: 1,
                relative: rel,
                rot_weight: 2.0,
                trans_weight: 3.0,
            };
            let (r, _, _) = edge_residual(&edge, &a, &b);
            assert!(r.norm() < 1e-10, "{}", r.norm());
        }
    }

    #[test]
    fn edge_jacobians_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(82);
        let h = 1e-7;
        for trial in 0..100 {
            let a = rand_pose(&mut rng, 1.0, 3.0);
            let b = rand_pose(&mut rng, 1.0, 3.0);
            let edge = PoseGraphEdge {
                from: 0,
                to: 1,
                relative: rand_pose(&mut rng, 0.8, 1.5),
                rot_weight: rng.gen_range(0.5..2.0),
                trans_weight: rng.gen_range(0.5..2.0),
            };
            let (r0, jf, jt) = edge_residual(&edge, &a, &b);
            for k in 0..6 {
                let perturb = |p: &Pose, k: usize, e: f64| {
                    let mut d = Vector6::<f64>::zeros();
                    d[k] = e;
                    Pose::new(
                        p.rotation.compose(&Rotation::exp(&Vec3::new(d[0], d[1], d[2]))),
                        p.translation + Vec3::new(d[3], d[4], d[5]),
                    )
                };
                let fd_f = (edge_residual(&edge, &perturb(&a, k, h), &b).0
                    - edge_residual(&edge, &perturb(&a, k, -h), &b).0)
                    / (2.0 * h);
                assert!(
                    (fd_f - jf.column(k)).norm() < 1e-5 * fd_f.norm().max(1.0),
                    "trial {trial} from col {k}: {fd_f:?} vs {:?}",
                    jf.column(k)
                );
                let fd_t = (edge_residual(&edge, &a, &perturb(&b, k, h)).0
                    - edge_residual(&edge, &a, &perturb(&b, k, -h)).0)
                    / (2.0 * h);
                assert!(
                    (fd_t - jt.column(k)).norm() < 1e-5 * fd_t.norm().max(1.0),
                    "trial {trial} to col {k}"
                );
            }
            let _ = r0;
        }
    }

    /// Poses around a circle; odometry edges carry a small systematic bias
    /// so the chain drifts, one loop edge ties the last pose back to the
    /// first with the true relative.
    fn drifted_circle(n: usize) -> (Vec<Pose>, Vec<Pose>, Vec<PoseGraphEdge>) {
        let radius = 10.0;
        let truth: Vec<Pose> = (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * core::f64::consts::TAU;
                Pose::new(
                    Rotation::exp(&Vec3::new(0.0, 0.0, a)),
                    Vec3::new(radius * a.cos(), radius * a.sin(), 0.0),
                )
            })
            .collect();
        let bias = Pose::new(
            Rotation::exp(&Vec3::new(0.0, 0.0, 2e-3)),
            Vec3::new(5e-3, -3e-3, 2e-3),
        );
        let mut edges = Vec::new();
        let mut drifted = alloc::vec![truth[0]];
        for i in 1..n {
            let rel = truth[i - 1].between(&truth[i]).compose(&bias);
            edges.push(PoseGraphEdge {
                from: i - 1,
                to: i,
                relative: rel,
                rot_weight: 1.0,
                trans_weight: 1.0,
            });
            let prev = *drifted.last().unwrap();
            drifted.push(prev.compose(&rel));
        }
        edges.push(PoseGraphEdge {
            from: 0,
            to: n - 1,
            relative: truth[0].between(&truth[n - 1]),
            rot_weight: 20.0,
            trans_weight: 20.0,
        });
        (truth, drifted, edges)
    }

    #[test]
    fn loop_edge_removes_drift() {
        let (truth, mut poses, edges) = drifted_circle(60);
        let before = (poses[59].translation - truth[59].translation).norm();
        assert!(before > 0.2, "drift should be visible, got {before}");
        optimize_pose_graph(&mut poses, &edges, 50).unwrap();
        let after = (poses[59].translation - truth[59].translation).norm();
        assert!(
            after < 0.1 * before,
            "endpoint error {after} vs drift {before}"
        );
        // gauge held
        assert_eq!(poses[0].translation, truth[0].translation);
        assert!(poses[0].rotation.angle_to(&truth[0].rotation) < 1e-15);
    }

    #[test]
    fn duplicate_edges_leave_consistent_solution_unchanged() {
        let (_, mut poses, mut edges) = drifted_circle(30);
        let mut twice = poses.clone();
        optimize_pose_graph(&mut poses, &edges, 50).unwrap();
        let dup: Vec<PoseGraphEdge> = edges.clone();
        edges.extend(dup);
        optimize_pose_graph(&mut twice, &edges, 50).unwrap();
        for (a, b) in poses.iter().zip(&twice) {
            assert!((a.translation - b.translation).norm() < 1e-6);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-6);
        }
    }

    fn room_cloud(rng: &mut StdRng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| match rng.gen_range(0..3) {
                0 => Vec3::new(rng.gen_range(-4.0..3.5), rng.gen_range(-4.0..3.5), 0.0),
                1 => Vec3::new(4.0, rng.gen_range(-4.0..3.5), rng.gen_range(0.5..3.0)),
                _ => Vec3::new(rng.gen_range(-4.0..3.5), 4.0, rng.gen_range(0.5..3.0)),
            })
            .collect()
    }

    #[test]
    fn icp_recovers_known_offset() {
        let mut rng = StdRng::seed_from_u64(83);
        let target = room_cloud(&mut rng, 6000);
        let truth = Pose::new(
            Rotation::exp(&Vec3::new(0.01, -0.02, 0.05)),
            Vec3::new(0.15, -0.1, 0.08),
        );
        // source points expressed in a frame displaced by `truth`
        let source: Vec<Vec3> = room_cloud(&mut rng, 2000)
            .iter()
            .map(|p| truth.inverse().transform_point(p))
            .collect();
        let out =
            icp_point_to_plane(&source, &target, &Pose::identity(), &IcpConfig::default())
                .unwrap();
        assert!(out.fitness < 0.02, "fitness {}", out.fitness);
        assert!(
            (out.transform.translation - truth.translation).norm() < 0.01,
            "trans err {}",
            (out.transform.translation - truth.translation).norm()
        );
        assert!(out.transform.rotation.angle_to(&truth.rotation) < 0.01);
    }

    #[test]
    fn icp_insufficient_overlap_errors() {
        let mut rng = StdRng::seed_from_u64(84);
        let target = room_cloud(&mut rng, 4000);
        // a handful of points far away from any target geometry
        let source: Vec<Vec3> = (0..100)
            .map(|_| Vec3::new(50.0, 50.0, 50.0) + rand_vec(&mut rng, 1.0))
            .collect();
        let out = icp_point_to_plane(&source, &target, &Pose::identity(), &IcpConfig::default());
        assert!(matches!(out, Err(PoseGraphError::InsufficientOverlap)), "{out:?}");
    }

    #[test]
    fn detect_loop_respects_time_gap() {
        let mk = |i: usize, t: f64, x: f64| Keyframe {
            index: i,
            pose: Pose::new(Rotation::identity(), Vec3::new(x, 0.0, 0.0)),
            time: t,
            cloud: Vec::new(),
        };
        // out and back: the end of the trajectory revisits the start
        let mut kfs: Vec<Keyframe> = (0..40)
            .map(|i| {
                let t = i as f64 * 2.0;
                let x = if i < 20 { i as f64 } else { (39 - i) as f64 };
                mk(i, t, x)
            })
            .collect();
        let cfg = LoopConfig::default();
        let hit = detect_loop(&kfs, 39, &cfg);
        assert_eq!(hit, Some(0), "closest old keyframe at the start");
        // recent keyframes only: no candidate satisfies the gap
        kfs.truncate(10);
        assert_eq!(detect_loop(&kfs, 9, &cfg), None);
    }

    #[test]
    fn rebuild_map_places_surfels_at_world_planes() {
        let mut rng = StdRng::seed_from_u64(85);
        let pose = Pose::new(
            Rotation::exp(&Vec3::new(0.0, 0.0, 0.4)),
            Vec3::new(1.0, 2.0, 0.0),
        );
        let world = room_cloud(&mut rng, 8000);
        let body: Vec<Vec3> = world.iter().map(|p| pose.inverse().transform_point(p)).collect();
        let kf = Keyframe {
            index: 0,
            pose,
            time: 0.0,
            cloud: body,
        };
        let map = rebuild_map(&[kf], MapConfig::default());
        // floor surfels sit at z = 0 with vertical normals
        let probe = Vec3::new(0.5, 0.5, 0.0);
        let cands = map.query_candidates(&probe);
        assert!(!cands.is_empty());
        for c in cands {
            assert_relative_eq!(c.attributes.normal.z.abs(), 1.0, epsilon = 1e-3);
            assert!(c.attributes.mean.z.abs() < 1e-3);
        }
    }
}
