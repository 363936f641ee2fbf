//! Command line front end: dataset simulation, odometry runs, trajectory
//! evaluation and ablation sweeps.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use slict_cli::ate::{evaluate_ate, Align};
use slict_cli::config::RunConfig;
use slict_cli::export::{write_g2o, write_ply, write_timing};
use slict_cli::formats::{parse_imu_log, parse_scan_log, parse_trajectory, write_trajectory};
use slict_cli::pipeline::{run_odometry, PipelineResult};
use slict_cli::sim;

#[derive(Parser)]
#[command(name = "slict", about = "Multi-scale surfel lidar-inertial odometry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum World {
    Room,
    CorridorLoop,
    TwoScale,
}

impl World {
    fn preset(self) -> sim::WorldPreset {
        match self {
            World::Room => sim::WorldPreset::Room,
            World::CorridorLoop => sim::WorldPreset::CorridorLoop,
            World::TwoScale => sim::WorldPreset::TwoScale,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignArg {
    None,
    Rigid,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth and a run config.
    Sim {
        #[arg(long, value_enum)]
        world: World,
        /// Trajectory length in seconds.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Sensor noise and biases on or off.
        #[arg(long, value_enum, default_value = "on")]
        noise: Switch,
        /// Dataset directory to create.
        #[arg(long)]
        output: PathBuf,
    },
    /// Run odometry over a recorded dataset.
    Run(RunArgs),
    /// Compare an estimated trajectory against ground truth.
    Eval {
        /// Dataset directory holding groundtruth.tum.
        #[arg(long)]
        dataset: PathBuf,
        /// Estimated trajectory in TUM format.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_enum, default_value = "none")]
        align: AlignArg,
        /// Timestamp matching tolerance in seconds.
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
    },
    /// Run matched configurations that differ in one setting and compare.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Which setting to toggle between the two runs.
        #[arg(long, value_enum, default_value = "loop-closure")]
        axis: AblateAxis,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory; relative data paths resolve against it.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory; relative output paths resolve against it.
    /// Defaults to the dataset directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the config's loop closure switch.
    #[arg(long = "loop-closure", value_enum)]
    loop_closure: Option<Switch>,
    /// Reserved for stochastic pipeline variants; the default pipeline is
    /// deterministic and ignores it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the config's per-bundle point budget.
    #[arg(long)]
    max_points_per_bundle: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblateAxis {
    /// Loop closure on versus off.
    LoopClosure,
    /// All map scales versus the finest scale only.
    Depths,
}

fn resolve(base: &Path, rel: &Option<String>) -> Option<PathBuf> {
    rel.as_ref().map(|r| base.join(r))
}

fn load_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(s) = args.loop_closure {
        cfg.loop_enabled = matches!(s, Switch::On);
    }
    if let Some(n) = args.max_points_per_bundle {
        cfg.max_points_per_bundle = n;
    }
    Ok(cfg)
}

fn execute_run(cfg: &RunConfig, dataset: &Path, output: &Path) -> Result<PipelineResult> {
    let scans_path = resolve(dataset, &cfg.paths.scans)
        .context("config does not set data.scans")?;
    let imu_path = resolve(dataset, &cfg.paths.imu).context("config does not set data.imu")?;
    let scans = parse_scan_log(&scans_path, &cfg.extrinsics)?;
    let imu = parse_imu_log(&imu_path)?;
    let result = run_odometry(cfg, &scans, &imu)?;

    std::fs::create_dir_all(output)
        .with_context(|| format!("creating {}", output.display()))?;
    if let Some(p) = resolve(output, &cfg.paths.trajectory) {
        write_trajectory(&p, &result.trajectory)?;
    }
    if let Some(p) = resolve(output, &cfg.paths.timing) {
        write_timing(&p, &result.timing)?;
    }
    if let Some(p) = resolve(output, &cfg.paths.ply) {
        write_ply(&p, &result.map)?;
    }
    if let Some(p) = resolve(output, &cfg.paths.g2o) {
        let poses: Vec<_> = result.keyframes.iter().map(|k| k.pose).collect();
        write_g2o(&p, &poses, &result.edges)?;
    }
    Ok(result)
}

fn report_ate(dataset: &Path, trajectory: &Path, align: Align, tol: f64) -> Result<f64> {
    let truth = parse_trajectory(&dataset.join("groundtruth.tum"))?;
    let est = parse_trajectory(trajectory)?;
    let report = evaluate_ate(&est, &truth, tol, align)?;
    println!(
        "matched {} poses: rmse {:.4} m, mean {:.4} m, median {:.4} m, max {:.4} m",
        report.matched, report.rmse, report.mean, report.median, report.max
    );
    println!(
        "per-axis rms: x {:.4} m, y {:.4} m, z {:.4} m",
        report.per_axis.x, report.per_axis.y, report.per_axis.z
    );
    Ok(report.rmse)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Sim {
            world,
            duration,
            seed,
            noise,
            output,
        } => {
            if duration < 10.0 {
                bail!("duration must be at least 10 s for initialization and motion");
            }
            let preset = world.preset();
            let model = preset.build();
            let traj = sim::preset_trajectory(preset, duration);
            let cfg = sim::SimConfig::default_rig(seed, matches!(noise, Switch::On));
            let data = sim::generate(&model, &traj, &cfg).map_err(anyhow::Error::msg)?;
            std::fs::create_dir_all(&output)
                .with_context(|| format!("creating {}", output.display()))?;
            sim::write_dataset(&output, &data, &cfg, preset.name(), duration)?;
            let run = sim::default_run_config(preset, &cfg, &traj);
            std::fs::write(output.join("run.cfg"), run.serialize())?;
            println!(
                "wrote {} scan points, {} IMU samples, {} ground truth poses to {}",
                data.scans.len(),
                data.imu.len(),
                data.ground_truth.len(),
                output.display()
            );
        }
        Command::Run(args) => {
            let cfg = load_run_config(&args)?;
            let output = args.output.clone().unwrap_or_else(|| args.dataset.clone());
            let result = execute_run(&cfg, &args.dataset, &output)?;
            println!(
                "estimated {} poses, {} keyframes, {} loop closures",
                result.trajectory.len(),
                result.keyframes.len(),
                result.loops_closed
            );
        }
        Command::Eval {
            dataset,
            trajectory,
            align,
            tol,
        } => {
            let align = match align {
                AlignArg::None => Align::None,
                AlignArg::Rigid => Align::Rigid,
            };
            report_ate(&dataset, &trajectory, align, tol)?;
        }
        Command::Ablate { run, axis } => {
            let base = load_run_config(&run)?;
            let output = run.output.clone().unwrap_or_else(|| run.dataset.clone());
            let (label_a, cfg_a, label_b, cfg_b) = match axis {
                AblateAxis::LoopClosure => {
                    let mut on = base.clone();
                    on.loop_enabled = true;
                    let mut off = base;
                    off.loop_enabled = false;
                    ("loop-on", on, "loop-off", off)
                }
                AblateAxis::Depths => {
                    // candidate queries serve depths 1..=max_depth, so the
                    // finest usable scale is depth 1, not the depth-0 leaves
                    let mut multi = base.clone();
                    multi.map.enabled_depths =
                        slict_core::surfel::MapConfig::all_depths(multi.map.max_depth);
                    let mut single = base;
                    single.map.enabled_depths = 0b10;
                    ("all-depths", multi, "finest-only", single)
                }
            };
            for (label, mut cfg) in [(label_a, cfg_a), (label_b, cfg_b)] {
                let dir = output.join(label);
                // keep per-variant outputs separate
                cfg.paths.trajectory = Some("trajectory.tum".into());
                let result = execute_run(&cfg, &run.dataset, &dir)?;
                println!(
                    "{label}: {} poses, {} keyframes, {} loops",
                    result.trajectory.len(),
                    result.keyframes.len(),
                    result.loops_closed
                );
                if dir.join("../groundtruth.tum").exists() || run.dataset.join("groundtruth.tum").exists()
                {
                    print!("{label} ate: ");
                    report_ate(&run.dataset, &dir.join("trajectory.tum"), Align::None, 0.01)?;
                }
            }
        }
    }
    Ok(())
}
