use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slict_cli::sim::{
    self, generate, raycast_scan, room_trajectory, SimConfig, WorldPreset,
};
use slict_core::Vec3;

#[test]
fn trajectory_derivatives_match_finite_differences() {
    let traj = room_trajectory(30.0);
    let h = 1e-6;
    for i in 0..200 {
        let t = 0.5 + 28.0 * i as f64 / 200.0;
        let s = traj.eval(t).unwrap();
        let before = traj.eval(t - h).unwrap();
        let after = traj.eval(t + h).unwrap();

        let fd_vel = (after.pose.translation - before.pose.translation) / (2.0 * h);
        assert!((fd_vel - s.velocity).norm() < 1e-5, "t={t} velocity");

        let fd_acc = (after.velocity - before.velocity) / (2.0 * h);
        assert!((fd_acc - s.acceleration).norm() < 1e-4, "t={t} acceleration");

        // body rate: R(t)^T dR/dt via the log of the relative rotation
        let fd_rate = before
            .pose
            .rotation
            .inverse()
            .compose(&after.pose.rotation)
            .log()
            / (2.0 * h);
        assert!(
            (fd_rate - s.angular_rate).norm() < 1e-5,
            "t={t} angular rate: fd {fd_rate:?} an {:?}",
            s.angular_rate
        );
    }
}

#[test]
fn trajectory_starts_stationary_and_level() {
    let traj = room_trajectory(30.0);
    for i in 0..12 {
        let t = 0.1 * i as f64;
        let s = traj.eval(t).unwrap();
        assert!(s.velocity.norm() < 1e-12, "moving at t={t}");
        assert!(s.angular_rate.norm() < 1e-12, "rotating at t={t}");
        assert!(s.pose.rotation.angle() < 1e-12, "tilted at t={t}");
    }
    // and it does move later
    assert!(traj.eval(10.0).unwrap().velocity.norm() > 0.1);
}

#[test]
fn specific_force_is_gravity_reaction_at_rest() {
    let traj = room_trajectory(30.0);
    let g = Vec3::new(0.0, 0.0, -9.81);
    let f = traj.specific_force(0.5, &g).unwrap();
    assert!((f - Vec3::new(0.0, 0.0, 9.81)).norm() < 1e-12);
}

#[test]
fn noiseless_scan_points_lie_on_world_surfaces() {
    let world = WorldPreset::Room.build();
    let traj = room_trajectory(30.0);
    let cfg = SimConfig::default_rig(5, false);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for lidar in &cfg.lidars {
        let points = raycast_scan(&world, &traj, lidar, 4.0, &mut rng).unwrap();
        let budget = lidar.channels * lidar.columns;
        assert!(points.len() > budget / 2, "lidar {} too sparse", lidar.id);
        for p in &points {
            let body_pose = traj.eval(p.time).unwrap().pose;
            let world_pt = body_pose
                .compose(&lidar.extrinsic)
                .transform_point(&p.position);
            assert!(
                world.surface_distance(&world_pt) < 1e-9,
                "lidar {} point off surface by {}",
                lidar.id,
                world.surface_distance(&world_pt)
            );
        }
    }
}

#[test]
fn scan_timestamps_are_linear_in_column() {
    let world = WorldPreset::Room.build();
    let traj = room_trajectory(30.0);
    let cfg = SimConfig::default_rig(5, false);
    let lidar = &cfg.lidars[0];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points = raycast_scan(&world, &traj, lidar, 2.0, &mut rng).unwrap();
    let step = 1.0 / (lidar.rate * lidar.columns as f64);
    for p in &points {
        let k = (p.time - 2.0) / step;
        assert!((k - k.round()).abs() < 1e-9, "off-grid stamp {}", p.time);
    }
}

#[test]
fn generation_is_deterministic_in_the_seed() {
    let world = WorldPreset::Room.build();
    let traj = room_trajectory(12.0);
    let cfg = SimConfig::default_rig(9, true);
    let a = generate(&world, &traj, &cfg).unwrap();
    let b = generate(&world, &traj, &cfg).unwrap();
    assert_eq!(a.scans.len(), b.scans.len());
    for (x, y) in a.scans.iter().zip(&b.scans) {
        assert_eq!(x.position, y.position);
        assert_eq!(x.time, y.time);
    }
    for (x, y) in a.imu.iter().zip(&b.imu) {
        assert_eq!(x.gyro, y.gyro);
        assert_eq!(x.accel, y.accel);
    }

    let other = SimConfig::default_rig(10, true);
    let c = generate(&world, &traj, &other).unwrap();
    assert!(a.scans.iter().zip(&c.scans).any(|(x, y)| x.position != y.position));
}

#[test]
fn corridor_world_traversal_stays_inside_the_ring() {
    let world = WorldPreset::CorridorLoop.build();
    let traj = sim::corridor_trajectory(60.0);
    for i in 0..600 {
        let t = i as f64 * 0.1;
        let p = traj.eval(t).unwrap().pose.translation;
        let inside_outer = p.x.abs() < 10.0 && p.y.abs() < 10.0;
        let outside_inner = p.x.abs() > 6.0 || p.y.abs() > 6.0;
        assert!(inside_outer && outside_inner, "t={t} leaves corridor at {p:?}");
        assert!(p.z > 0.2 && p.z < 2.8);
        // walls visible on both sides
        assert!(world.raycast(&p, &Vec3::x(), 50.0).is_some());
    }
}

#[test]
fn dataset_files_and_manifest_are_written() {
    let dir = std::env::temp_dir().join(format!("slict-sim-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let world = WorldPreset::Room.build();
    let traj = room_trajectory(11.0);
    let cfg = SimConfig::default_rig(2, true);
    let data = generate(&world, &traj, &cfg).unwrap();
    sim::write_dataset(&dir, &data, &cfg, "room", 11.0).unwrap();
    for f in ["scans.csv", "imu.csv", "groundtruth.tum", "manifest.txt"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("world=room"));
    assert!(manifest.contains("seed=2"));
    assert!(manifest.contains(&format!("scan.count={}", data.scans.len())));
}
