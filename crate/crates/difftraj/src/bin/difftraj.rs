//! Command-line workflow: expert data generation, denoiser training,
//! filtered planning, closed-loop evaluation, and SVG plotting.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data or I/O error,
//! 3 planner returned an empty plan.

use clap::{Args, Parser, Subcommand};
use difftraj::ckpt::{load_checkpoint, save_checkpoint};
use difftraj::compose::{ComposedDenoiser, CompositionFile, Member};
use difftraj::datagen::{build_dataset, sample_starts, DatagenConfig, Dataset};
use difftraj::denoiser::{Conditioning, Denoiser, NormStats};
use difftraj::eval::{evaluate, EvalConfig, EvalReport};
use difftraj::filter::FilterConfig;
use difftraj::geom::Pose;
use difftraj::model::LearnedDenoiser;
use difftraj::mpc::MpcConfig;
use difftraj::plan::{conditioning_for, plan, PlanConfig};
use difftraj::plot::{scene_svg, velocity_svg, write_svg, PlotSeries, PALETTE};
use difftraj::sample::{SampleMethod, SamplerConfig, SEED_STRIDE};
use difftraj::scene::SceneSpec;
use difftraj::scenes;
use difftraj::schedule::NoiseSchedule;
use difftraj::traj::Trajectory;
use difftraj::train::{train, TrainConfig};
use difftraj::vehicle::VehicleParams;
use difftraj::{Error, Result};
use ndarray::Array2;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "difftraj", version, about = "Diffusion-based trajectory planning toolkit")]
struct Cli {
    /// Cap worker threads (defaults to the machine's core count).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate MPC expert demonstrations for a scene.
    GenData(GenDataArgs),
    /// Train a trajectory denoiser on a demonstration dataset.
    Train(TrainArgs),
    /// Plan one trajectory with a model or a composition.
    Plan(PlanArgs),
    /// Evaluate a planner closed-loop over held-out starts.
    Eval(EvalArgs),
    /// Render scenes and trajectories as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Built-in scene name or scene JSON path.
    #[arg(long)]
    scene: String,
    /// Number of start poses to attempt.
    #[arg(long, default_value_t = 200)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
    /// Reference speed for the expert (m/s).
    #[arg(long, default_value_t = 0.5)]
    v_ref: f64,
    /// Reject starts whose reference path is longer than this (m).
    #[arg(long, default_value_t = 5.5)]
    max_path_len: f64,
    /// Goal pose "x,y,phi"; defaults to the built-in toy goal.
    #[arg(long)]
    goal: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Input dataset path.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1500)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    channels: usize,
    /// Scene whose bounds fix the normalization; required when the model
    /// will be composed with others trained on the same map.
    #[arg(long)]
    scene: Option<String>,
}

#[derive(Args)]
struct PlanArgs {
    /// Checkpoint path (single-model planning).
    #[arg(long, conflicts_with = "compose")]
    ckpt: Option<PathBuf>,
    /// Composition config path (multi-model planning).
    #[arg(long)]
    compose: Option<PathBuf>,
    #[arg(long)]
    scene: String,
    /// Start pose "x,y,phi".
    #[arg(long)]
    start: String,
    /// Goal pose "x,y,phi"; defaults to the built-in toy goal.
    #[arg(long)]
    goal: Option<String>,
    /// Candidates per attempt (N_filter).
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    retries: usize,
    #[arg(long, default_value_t = 8)]
    ddim_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the safety filter and return the first sample.
    #[arg(long)]
    no_filter: bool,
    /// Write the planned trajectory as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render the plan over the scene.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Print per-candidate filter diagnostics as JSON lines.
    #[arg(long)]
    explain: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, conflicts_with = "compose")]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    compose: Option<PathBuf>,
    #[arg(long)]
    scene: String,
    /// Number of held-out start poses.
    #[arg(long, default_value_t = 100)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output report path.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    no_filter: bool,
    #[arg(long, default_value_t = 5.5)]
    max_path_len: f64,
    #[arg(long)]
    goal: Option<String>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    scene: String,
    /// Trajectory JSON files to overlay (repeatable).
    #[arg(long = "traj")]
    trajs: Vec<PathBuf>,
    /// Evaluation report whose planned runs should be counted in the title.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output scene SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Optional velocity-profile SVG path.
    #[arg(long)]
    velocity: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string() }));
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => 1,
        _ => 2,
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Plan(a) => plan_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Plot(a) => plot_cmd(a),
    }
}

fn load_scene(name: &str) -> Result<SceneSpec> {
    if let Some(scene) = scenes::builtin(name) {
        return Ok(scene);
    }
    let path = Path::new(name);
    if !path.exists() {
        return Err(Error::invalid(format!(
            "unknown scene '{name}': not a built-in and not a file"
        )));
    }
    SceneSpec::load(path)
}

fn parse_pose(s: &str) -> Result<Pose> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::invalid(format!("pose '{s}' must be x,y,phi")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("pose component '{p}' is not a number")))
        })
        .collect::<Result<_>>()?;
    Pose::from_xy_yaw(nums[0], nums[1], nums[2])
}

fn parse_goal(goal: &Option<String>) -> Result<Pose> {
    match goal {
        Some(s) => parse_pose(s),
        None => Ok(scenes::toy_goal()),
    }
}

/// FNV-1a over the serialized config, recorded in manifests.
fn config_hash(config: &serde_json::Value) -> String {
    let bytes = config.to_string().into_bytes();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Write `<out>.manifest.json` recording command, seed, version, and the
/// full config. Content depends only on the arguments, so identical
/// invocations produce identical manifests.
fn write_manifest(out: &Path, command: &str, seed: u64, config: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "command": command,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": config_hash(&config),
        "config": config,
    });
    let path = manifest_path(out);
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn gen_data(a: GenDataArgs) -> Result<u8> {
    let scene = load_scene(&a.scene)?;
    let goal = parse_goal(&a.goal)?;
    let params = VehicleParams::default();
    let cfg = DatagenConfig::default();
    let mpc = MpcConfig {
        v_ref: a.v_ref,
        // Dynamic scenes blend tracking with the avoidance penalty; pure
        // avoidance (gamma = 1) has no progress incentive and never
        // reaches the goal.
        gamma: if scene.dynamic.is_empty() { 0.0 } else { 0.5 },
        ..MpcConfig::default()
    };
    let starts = sample_starts(
        &scene,
        &goal,
        a.starts,
        a.seed,
        &params,
        &cfg,
        Some(a.max_path_len),
    );
    let (dataset, failures) = build_dataset(&scene, &starts, &goal, &mpc, &params, &cfg);
    if dataset.demos.is_empty() {
        return Err(Error::invalid("no demonstration succeeded; check the scene"));
    }
    dataset.save(&a.out)?;
    write_manifest(
        &a.out,
        "gen-data",
        a.seed,
        json!({
            "scene": a.scene,
            "scene_hash": format!("{:016x}", scene.hash()),
            "starts": a.starts,
            "demos": dataset.demos.len(),
            "v_ref": a.v_ref,
            "max_path_len": a.max_path_len,
            "gamma": mpc.gamma,
            "horizon": cfg.horizon,
            "dt": cfg.dt,
        }),
    )?;
    println!(
        "{}",
        json!({
            "demos": dataset.demos.len(),
            "failures": failures.len(),
            "out": a.out,
        })
    );
    Ok(0)
}

fn train_cmd(a: TrainArgs) -> Result<u8> {
    let dataset = Dataset::load(&a.data)?;
    let norm_override = match &a.scene {
        Some(name) => {
            let scene = load_scene(name)?;
            let (x0, y0, x1, y1) = scene.bounds();
            Some(NormStats::from_bounds(x0, y0, x1, y1)?)
        }
        None => None,
    };
    let cfg = TrainConfig {
        steps: a.steps,
        seed: a.seed,
        net: difftraj::model::UNetConfig {
            channels: a.channels,
            horizon: dataset.horizon,
            ..difftraj::model::UNetConfig::default()
        },
        ..TrainConfig::default()
    };
    let (denoiser, report) = train(&dataset, &cfg, norm_override)?;
    save_checkpoint(&denoiser, &a.out)?;
    write_manifest(
        &a.out,
        "train",
        a.seed,
        json!({
            "data": a.data,
            "steps": a.steps,
            "channels": a.channels,
            "scene": a.scene,
            "n_params": report.n_params,
            "horizon": dataset.horizon,
            "dt": dataset.dt,
        }),
    )?;
    println!(
        "{}",
        json!({
            "n_params": report.n_params,
            "final_loss": report.losses.last(),
            "out": a.out,
        })
    );
    Ok(0)
}

/// A single checkpoint or a composition, loaded behind one denoiser.
enum AnyDenoiser {
    Single(LearnedDenoiser),
    Composed(ComposedDenoiser<LearnedDenoiser>),
}

impl Denoiser for AnyDenoiser {
    fn epsilon(&self, tau_t: &Array2<f64>, t: usize, cond: &Conditioning) -> Array2<f64> {
        match self {
            AnyDenoiser::Single(d) => d.epsilon(tau_t, t, cond),
            AnyDenoiser::Composed(d) => d.epsilon(tau_t, t, cond),
        }
    }
    fn schedule(&self) -> &NoiseSchedule {
        match self {
            AnyDenoiser::Single(d) => d.schedule(),
            AnyDenoiser::Composed(d) => d.schedule(),
        }
    }
    fn horizon(&self) -> usize {
        match self {
            AnyDenoiser::Single(d) => d.horizon(),
            AnyDenoiser::Composed(d) => d.horizon(),
        }
    }
    fn norm(&self) -> &NormStats {
        match self {
            AnyDenoiser::Single(d) => d.norm(),
            AnyDenoiser::Composed(d) => d.norm(),
        }
    }
}

/// Load the planner model(s) and build the sampling conditioning for one
/// start/goal pair. Returns the denoiser, the conditioning, and the
/// trajectory interval.
fn load_planner(
    ckpt: Option<&Path>,
    compose: Option<&Path>,
    scene: &SceneSpec,
    start: &Pose,
    goal: &Pose,
) -> Result<(AnyDenoiser, Conditioning, f64)> {
    let load = |path: &Path| {
        load_checkpoint(path).map_err(|e| match e {
            Error::Io(io) => Error::format(0, format!("cannot read checkpoint {}: {io}", path.display())),
            other => other,
        })
    };
    match (ckpt, compose) {
        (Some(path), None) => {
            let d = load(path)?;
            let cond = conditioning_for(scene, start, goal, d.horizon(), d.dt);
            let dt = d.dt;
            Ok((AnyDenoiser::Single(d), cond, dt))
        }
        (None, Some(path)) => {
            let file = CompositionFile::load(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let mut members = Vec::new();
            let mut dt = 0.1;
            let mut horizon = 0;
            for m in &file.members {
                let d = load(&base.join(&m.model))?;
                dt = d.dt;
                horizon = d.horizon();
                let mut cond = conditioning_for(scene, start, goal, horizon, dt);
                cond.use_obstacle = m.use_obstacle && cond.obstacle.is_some();
                members.push(Member {
                    denoiser: d,
                    cond,
                    nu: m.nu,
                });
            }
            let composed = ComposedDenoiser::new(members, file.nu_uncond, file.uncond_source)?;
            let cond = conditioning_for(scene, start, goal, horizon, dt);
            Ok((AnyDenoiser::Composed(composed), cond, dt))
        }
        _ => Err(Error::invalid("pass exactly one of --ckpt or --compose")),
    }
}

fn plan_cmd(a: PlanArgs) -> Result<u8> {
    let scene = load_scene(&a.scene)?;
    let start = parse_pose(&a.start)?;
    let goal = parse_goal(&a.goal)?;
    let (denoiser, cond, dt) =
        load_planner(a.ckpt.as_deref(), a.compose.as_deref(), &scene, &start, &goal)?;
    let cfg = PlanConfig {
        sampler: SamplerConfig {
            method: SampleMethod::Ddim {
                steps: a.ddim_steps,
            },
            seed: a.seed,
            // Learned models emit normalized data in [-1, 1]; clamping the
            // clean estimate keeps imperfect predictions on-manifold, and
            // warm-starting keeps the first reverse steps on-distribution.
            clip_x0: Some(1.0),
            warm_start: true,
        },
        filter: FilterConfig {
            n_filter: a.n,
            n_retry: a.retries,
            dt,
            ..FilterConfig::default()
        },
        use_filter: !a.no_filter,
        dt,
    };
    let params = VehicleParams::default();
    let outcome = plan(&denoiser, &cond, &scene, &cfg, &params)?;
    if a.explain {
        for (i, d) in outcome.report.diagnostics.iter().enumerate() {
            println!("{}", json!({ "candidate": i, "diag": d }));
        }
    }
    let Some(traj) = outcome.trajectory else {
        eprintln!(
            "{}",
            json!({
                "error": "planner returned an empty plan",
                "attempts": outcome.report.attempts,
            })
        );
        return Ok(3);
    };
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&traj)?)?;
        write_manifest(
            out,
            "plan",
            a.seed,
            json!({
                "scene": a.scene,
                "start": a.start,
                "goal": a.goal,
                "n": a.n,
                "retries": a.retries,
                "ddim_steps": a.ddim_steps,
                "filter": !a.no_filter,
            }),
        )?;
    }
    if let Some(svg_path) = &a.svg {
        let svg = scene_svg(
            &scene,
            &[PlotSeries {
                traj: &traj,
                label: "plan".into(),
                color: PALETTE[0],
            }],
        );
        write_svg(&svg, svg_path)?;
    }
    println!(
        "{}",
        json!({
            "attempts": outcome.report.attempts,
            "selected": outcome.report.selected,
            "poses": traj.poses.len(),
            "out": a.out,
        })
    );
    Ok(0)
}

fn eval_cmd(a: EvalArgs) -> Result<u8> {
    let scene = load_scene(&a.scene)?;
    let goal = parse_goal(&a.goal)?;
    let params = VehicleParams::default();
    let datagen = DatagenConfig::default();
    let starts = sample_starts(
        &scene,
        &goal,
        a.starts,
        // Offset from the datagen stream so evaluation starts are held out.
        a.seed.wrapping_add(0x5EED_0FF5),
        &params,
        &datagen,
        Some(a.max_path_len),
    );
    if starts.is_empty() {
        return Err(Error::invalid("no feasible start poses in this scene"));
    }
    // Probe the model once to learn horizon and dt.
    let probe = load_planner(
        a.ckpt.as_deref(),
        a.compose.as_deref(),
        &scene,
        &starts[0],
        &goal,
    )?;
    let dt = probe.2;
    let base_cfg = PlanConfig {
        sampler: SamplerConfig {
            method: SampleMethod::Ddim { steps: 8 },
            seed: a.seed,
            clip_x0: Some(1.0),
            warm_start: true,
        },
        filter: FilterConfig {
            dt,
            ..FilterConfig::default()
        },
        use_filter: !a.no_filter,
        dt,
    };
    let run_stride = (base_cfg.filter.n_filter * base_cfg.filter.n_retry) as u64;
    let ckpt = a.ckpt.clone();
    let compose = a.compose.clone();
    let report = evaluate(
        &starts,
        |i, start| {
            let (denoiser, cond, _) =
                load_planner(ckpt.as_deref(), compose.as_deref(), &scene, start, &goal)?;
            let cfg = PlanConfig {
                sampler: SamplerConfig {
                    seed: a
                        .seed
                        .wrapping_add((i as u64 * run_stride).wrapping_mul(SEED_STRIDE)),
                    ..base_cfg.sampler
                },
                ..base_cfg
            };
            Ok(plan(&denoiser, &cond, &scene, &cfg, &params)?.trajectory)
        },
        &scene,
        &EvalConfig::default(),
        &params,
    )?;
    report.save(&a.report)?;
    write_manifest(
        &a.report,
        "eval",
        a.seed,
        json!({
            "scene": a.scene,
            "starts": a.starts,
            "filter": !a.no_filter,
            "max_path_len": a.max_path_len,
        }),
    )?;
    println!(
        "{}",
        json!({
            "n_runs": report.n_runs,
            "f_rate": report.f_rate,
            "c_rate": report.c_rate,
            "mean_plan_time": report.mean_plan_time,
            "mean_tracking_error": report.mean_tracking_error,
            "danger": report.danger,
            "report": a.report,
        })
    );
    Ok(0)
}

fn plot_cmd(a: PlotArgs) -> Result<u8> {
    let scene = load_scene(&a.scene)?;
    let mut trajs: Vec<(String, Trajectory)> = Vec::new();
    for path in &a.trajs {
        let text = std::fs::read_to_string(path)?;
        let traj: Trajectory = serde_json::from_str(&text)?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "traj".into());
        trajs.push((label, traj));
    }
    if let Some(report_path) = &a.report {
        let report = EvalReport::load(report_path)?;
        println!(
            "{}",
            json!({
                "report_runs": report.n_runs,
                "f_rate": report.f_rate,
                "c_rate": report.c_rate,
            })
        );
    }
    let series: Vec<PlotSeries> = trajs
        .iter()
        .enumerate()
        .map(|(i, (label, traj))| PlotSeries {
            traj,
            label: label.clone(),
            color: PALETTE[i % PALETTE.len()],
        })
        .collect();
    write_svg(&scene_svg(&scene, &series), &a.out)?;
    if let Some(vel) = &a.velocity {
        write_svg(&velocity_svg(&series), vel)?;
    }
    println!("{}", json!({ "out": a.out, "series": series.len() }));
    Ok(0)
}
