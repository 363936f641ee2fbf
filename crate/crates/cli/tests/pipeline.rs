use slict_cli::ate::{evaluate_ate, Align};
use slict_cli::pipeline::{run_odometry, PipelineError};
use slict_cli::sim::{self, SimConfig, WorldPreset};
use slict_core::deskew::RawPoint;

/// Sensor-frame simulator output re-expressed in the body frame, as the scan
/// parser would do with the configured extrinsics.
fn body_frame_scans(data: &sim::Dataset, cfg: &SimConfig) -> Vec<RawPoint> {
    data.scans
        .iter()
        .map(|p| {
            let ext = cfg
                .lidars
                .iter()
                .find(|l| l.id == p.lidar_id)
                .expect("known lidar")
                .extrinsic;
            RawPoint {
                position: ext.transform_point(&p.position),
                ..*p
            }
        })
        .collect()
}

#[test]
fn tracks_a_short_noiseless_room_run() {
    let preset = WorldPreset::Room;
    let world = preset.build();
    let traj = sim::preset_trajectory(preset, 10.0);
    let sim_cfg = SimConfig::default_rig(21, false);
    let data = sim::generate(&world, &traj, &sim_cfg).unwrap();
    let run_cfg = sim::default_run_config(preset, &sim_cfg, &traj);

    let scans = body_frame_scans(&data, &sim_cfg);
    let out = run_odometry(&run_cfg, &scans, &data.imu).unwrap();
    assert!(out.trajectory.len() > 300, "only {} poses", out.trajectory.len());
    assert!(!out.keyframes.is_empty());
    assert!(!out.timing.is_empty());

    let report = evaluate_ate(&out.trajectory, &data.ground_truth, 0.01, Align::None).unwrap();
    assert!(report.rmse < 5e-3, "rmse {}", report.rmse);

    // the stationary lead-in must stay pinned at the starting pose
    for (t, pose) in out.trajectory.iter().filter(|(t, _)| *t < 1.0) {
        assert!(
            (pose.translation - run_cfg.init_position).norm() < 1e-3,
            "moved to {:?} at t={t}",
            pose.translation
        );
    }
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let preset = WorldPreset::Room;
    let world = preset.build();
    let traj = sim::preset_trajectory(preset, 8.0);
    let sim_cfg = SimConfig::default_rig(22, true);
    let data = sim::generate(&world, &traj, &sim_cfg).unwrap();
    let run_cfg = sim::default_run_config(preset, &sim_cfg, &traj);
    let scans = body_frame_scans(&data, &sim_cfg);

    let a = run_odometry(&run_cfg, &scans, &data.imu).unwrap();
    let b = run_odometry(&run_cfg, &scans, &data.imu).unwrap();
    assert_eq!(a.trajectory.len(), b.trajectory.len());
    for (x, y) in a.trajectory.iter().zip(&b.trajectory) {
        assert_eq!(x.0.to_bits(), y.0.to_bits());
        assert_eq!(x.1.translation, y.1.translation);
        assert_eq!(x.1.rotation.quaternion(), y.1.rotation.quaternion());
    }
}

#[test]
fn empty_streams_are_rejected() {
    let preset = WorldPreset::Room;
    let traj = sim::preset_trajectory(preset, 10.0);
    let sim_cfg = SimConfig::default_rig(23, false);
    let run_cfg = sim::default_run_config(preset, &sim_cfg, &traj);
    assert!(matches!(
        run_odometry(&run_cfg, &[], &[]),
        Err(PipelineError::BadInput(_))
    ));
}
