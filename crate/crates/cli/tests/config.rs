use slict_cli::config::{ConfigError, RunConfig};
use slict_core::{Pose, Rotation, Vec3};

#[test]
fn default_round_trips_through_serialize_and_parse() {
    let cfg = RunConfig::default();
    let text = cfg.serialize();
    let back = RunConfig::parse(&text).unwrap();
    assert_eq!(cfg, back);
}

#[test]
fn tuned_config_round_trips() {
    let mut cfg = RunConfig::default();
    cfg.map.leaf_size = 0.25;
    cfg.map.max_depth = 4;
    cfg.map.enabled_depths = 0b110;
    cfg.solver.inner_iterations = 11;
    cfg.loop_enabled = true;
    cfg.loop_cfg.fitness_threshold = 0.25;
    cfg.init_position = Vec3::new(1.0, -2.0, 0.5);
    cfg.max_points_per_bundle = 450;
    cfg.extrinsics.insert(
        1,
        Pose::new(
            Rotation::from_axis_angle(&Vec3::y(), 0.3),
            Vec3::new(0.1, 0.0, -0.05),
        ),
    );
    cfg.paths.scans = Some("scans.csv".into());
    cfg.paths.g2o = Some("graph.g2o".into());
    let back = RunConfig::parse(&cfg.serialize()).unwrap();
    assert_eq!(back.map.enabled_depths, 0b110);
    assert_eq!(back.solver.inner_iterations, 11);
    assert!(back.loop_enabled);
    assert_eq!(back.paths.g2o.as_deref(), Some("graph.g2o"));
    let ext = back.extrinsics.get(&1).unwrap();
    assert!((ext.translation - Vec3::new(0.1, 0.0, -0.05)).norm() < 1e-9);
    assert!(ext.rotation.angle_to(&cfg.extrinsics[&1].rotation) < 1e-9);
}

#[test]
fn unknown_key_is_rejected_with_line_number() {
    let err = RunConfig::parse("map.leaf_size=0.1\nmap.leaf_sizee=0.2\n").unwrap_err();
    match err {
        ConfigError::UnknownKey { line, key } => {
            assert_eq!(line, 2);
            assert_eq!(key, "map.leaf_sizee");
        }
        other => panic!("expected UnknownKey, got {other}"),
    }
}

#[test]
fn malformed_line_is_rejected() {
    assert!(matches!(
        RunConfig::parse("just a stray line\n"),
        Err(ConfigError::Malformed { line: 1, .. })
    ));
}

#[test]
fn invalid_values_are_rejected() {
    assert!(matches!(
        RunConfig::parse("map.leaf_size=banana\n"),
        Err(ConfigError::InvalidValue { .. })
    ));
    assert!(matches!(
        RunConfig::parse("map.leaf_size=-1\n"),
        Err(ConfigError::Invalid(_))
    ));
    assert!(matches!(
        RunConfig::parse("imu.gravity_z=9.81\n"),
        Err(ConfigError::Invalid(_))
    ));
    assert!(matches!(
        RunConfig::parse("loop.enabled=maybe\n"),
        Err(ConfigError::InvalidValue { .. })
    ));
}

#[test]
fn depths_list_resolves_against_later_max_depth() {
    // enabled_depths appears before max_depth; parse must still accept 5
    let cfg = RunConfig::parse("map.enabled_depths=1,5\nmap.max_depth=5\n").unwrap();
    assert_eq!(cfg.map.enabled_depths, 0b100010);
    assert!(matches!(
        RunConfig::parse("map.enabled_depths=7\nmap.max_depth=5\n"),
        Err(ConfigError::InvalidValue { .. })
    ));
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let cfg = RunConfig::parse("# a comment\n\nmap.leaf_size=0.2\n").unwrap();
    assert_eq!(cfg.map.leaf_size, 0.2);
}

#[test]
fn extrinsic_requires_unit_quaternion() {
    assert!(matches!(
        RunConfig::parse("lidar0.extrinsic=0 0 0 0 0 0 0.5\n"),
        Err(ConfigError::InvalidValue { .. })
    ));
}
