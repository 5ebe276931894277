//! `ggp`: fit, execute, roll out and inspect graph movement primitives, or serve live
//! teaching sessions.

mod config;
mod perturb;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ggp_core::engine::{
    execute_dual_tick, reached_goal, rollout_ensemble, run_execution, start_state, vector_field, FieldBounds,
    FieldPolicy, RolloutConfig, TickRecord,
};
use ggp_core::gp::DEFAULT_JITTER;
use ggp_core::impedance::{Gains, ImpedanceController, SafetyLimits, SimConfig};
use ggp_core::io::{self, ReadOptions};
use ggp_core::{CouplingConfig, DemoOptions, DualArmState, GpBaselineModel, GraphModel, KernelMode, KernelParams};
use nalgebra::DVector;

use config::{pick, FileConfig};
use perturb::Script;

#[derive(Debug, Parser)]
#[command(name = "ggp", version, about = "Graph Gaussian Process movement primitives on a simulated impedance arm")]
struct Cli {
    /// TOML file with default values for any flag (keys use `_`).
    #[arg(long, global = true, env = "GGP_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a graph model from a trajectory file.
    Fit(FitArgs),
    /// Execute a model on the simulated arm and write the tick trace.
    Exec(ExecArgs),
    /// Kinematic noisy rollouts: per-step statistics plus terminal distances.
    Rollout(RolloutArgs),
    /// Sample the attractor field of a 2-D model on a grid.
    Field(FieldArgs),
    /// Execute two models on coupled arms.
    Bimanual(BimanualArgs),
    /// Serve live teaching sessions over WebSocket.
    Serve(ServeArgs),
    /// Write the synthetic self-crossing letter-B stroke.
    LetterB(LetterBArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Pose,
    Time,
    PoseTime,
}

impl From<Mode> for KernelMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Pose => KernelMode::PoseOnly,
            Mode::Time => KernelMode::TimeOnly,
            Mode::PoseTime => KernelMode::PoseTime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FieldMode {
    Ggp,
    Gp,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Trajectory CSV (`t,x1..xD` or positions only).
    input: PathBuf,
    /// Model file to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Position length scale [m].
    #[arg(long, env = "GGP_LAMBDA_POS")]
    lambda_pos: Option<f64>,
    /// Time length scale [s].
    #[arg(long, env = "GGP_LAMBDA_TIME")]
    lambda_time: Option<f64>,
    #[arg(long, value_enum, env = "GGP_MODE")]
    mode: Option<Mode>,
    /// Sample period assumed when the file has no time column [s].
    #[arg(long, env = "GGP_SYNTH_DT")]
    synth_dt: Option<f64>,
    /// Largest accepted jump between consecutive samples [m].
    #[arg(long, env = "GGP_MAX_GAP")]
    max_gap: Option<f64>,
    /// Re-interpolate the demonstration onto this period before fitting [s].
    #[arg(long, env = "GGP_RESAMPLE_DT")]
    resample_dt: Option<f64>,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Nominal isotropic stiffness [N/m].
    #[arg(long, env = "GGP_STIFFNESS")]
    stiffness: Option<f64>,
    /// Simulation step [s].
    #[arg(long, env = "GGP_DT")]
    dt: Option<f64>,
    /// Tick budget.
    #[arg(long, env = "GGP_TICKS")]
    ticks: Option<usize>,
}

#[derive(Debug, Args)]
struct ExecArgs {
    model: PathBuf,
    /// Trace CSV to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Start position `x1,..,xD`; defaults to the first node.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<f64>>,
    /// Force windows `start_tick,end_tick,arm,f1..fD`.
    #[arg(long)]
    perturb: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Debug, Args)]
struct RolloutArgs {
    model: PathBuf,
    /// Per-step mean/std CSV to write.
    #[arg(short, long)]
    out: PathBuf,
    /// Terminal-distance CSV; defaults to `<out stem>.terminal.csv`.
    #[arg(long)]
    terminal_out: Option<PathBuf>,
    #[arg(long, env = "GGP_N")]
    n: Option<usize>,
    #[arg(long, env = "GGP_STEPS")]
    steps: Option<usize>,
    /// Noise standard deviation [m].
    #[arg(long, env = "GGP_NOISE")]
    noise: Option<f64>,
    #[arg(long, env = "GGP_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum, env = "GGP_TIME_BELIEF")]
    time_belief: Option<OnOff>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct FieldArgs {
    model: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Time belief as a fraction of the model's duration, 0 at the first node.
    #[arg(long, default_value_t = 0.0)]
    tb: f64,
    #[arg(long, value_enum, default_value = "ggp")]
    mode: FieldMode,
    /// Grid points per axis.
    #[arg(long, env = "GGP_GRID")]
    grid: Option<usize>,
    /// `xmin,ymin,xmax,ymax`; defaults to the unit workspace.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    bounds: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct BimanualArgs {
    left: PathBuf,
    right: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Coupling stiffness [N/m]; 0 decouples the arms.
    #[arg(long, env = "GGP_COUPLING")]
    coupling: Option<f64>,
    /// Desired `x_right - x_left`; defaults to the difference of the start nodes.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    offset: Option<Vec<f64>>,
    /// Force windows with an arm column, 0 = left, 1 = right.
    #[arg(long)]
    perturb: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "GGP_HOST")]
    host: Option<String>,
    #[arg(long, env = "GGP_PORT")]
    port: Option<u16>,
    /// Simulation rate [Hz].
    #[arg(long, env = "GGP_RATE")]
    rate: Option<f64>,
    /// Tick broadcast rate [Hz].
    #[arg(long, env = "GGP_TICK_RATE")]
    tick_rate: Option<f64>,
    /// Drag spring [N/m].
    #[arg(long, env = "GGP_K_DRAG")]
    k_drag: Option<f64>,
}

#[derive(Debug, Args)]
struct LetterBArgs {
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Drawing time [s].
    #[arg(long, default_value_t = io::LETTER_B_DURATION)]
    duration: f64,
}

const DEFAULT_TICKS: usize = 20_000;
const DEFAULT_GRID: usize = 40;
const DEFAULT_PORT: u16 = 8765;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Fit(a) => fit(a, &file),
        Command::Exec(a) => exec(a, &file),
        Command::Rollout(a) => rollout(a, &file),
        Command::Field(a) => field(a, &file),
        Command::Bimanual(a) => bimanual(a, &file),
        Command::Serve(a) => serve(a, &file),
        Command::LetterB(a) => letter_b(a),
    }
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<GraphModel> {
    io::load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn fit(a: FitArgs, file: &FileConfig) -> anyhow::Result<()> {
    let defaults = KernelParams::default();
    let mode = match a.mode {
        Some(m) => m.into(),
        None => match &file.mode {
            Some(s) => s.parse::<KernelMode>()?,
            None => defaults.mode,
        },
    };
    let params = KernelParams::new(
        pick(a.lambda_pos, file.lambda_pos, defaults.lambda_pos),
        pick(a.lambda_time, file.lambda_time, defaults.lambda_time),
        mode,
    )?;
    let opts = ReadOptions {
        synth_dt: pick(a.synth_dt, file.synth_dt, io::DEFAULT_SYNTH_DT),
        demo: DemoOptions {
            max_gap: Some(pick(a.max_gap, file.max_gap, ggp_core::demo::DEFAULT_MAX_GAP)),
        },
    };
    let traj = io::read_trajectory(&a.input, &opts).with_context(|| format!("reading {}", a.input.display()))?;
    let demo = match a.resample_dt.or(file.resample_dt) {
        Some(dt) => traj.demo.resample(dt)?,
        None => traj.demo,
    };
    let model = GraphModel::fit(&demo, params)?;
    io::save_model(&a.out, &model)?;
    println!(
        "fitted {} nodes ({}-D, {}) -> {}",
        model.n_nodes(),
        model.dim(),
        params.mode,
        a.out.display()
    );
    Ok(())
}

struct Sim {
    controller: ImpedanceController,
    sim: SimConfig,
    ticks: usize,
}

fn sim_setup(a: &SimArgs, file: &FileConfig, dim: usize) -> anyhow::Result<Sim> {
    let k = pick(a.stiffness, file.stiffness, ggp_core::impedance::DEFAULT_STIFFNESS);
    let controller = ImpedanceController::new(Gains::isotropic(dim, k)?, SafetyLimits::default_for(dim))?;
    let sim = SimConfig::new(1.0, pick(a.dt, file.dt, SimConfig::default().dt))?;
    Ok(Sim {
        controller,
        sim,
        ticks: pick(a.ticks, file.ticks, DEFAULT_TICKS),
    })
}

fn start_or_default(start: Option<Vec<f64>>, model: &GraphModel) -> anyhow::Result<Vec<f64>> {
    let s = start.unwrap_or_else(|| model.start_pos().to_vec());
    if s.len() != model.dim() {
        bail!("start has {} components, model is {}-D", s.len(), model.dim());
    }
    Ok(s)
}

fn exec(a: ExecArgs, file: &FileConfig) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let dim = model.dim();
    let s = sim_setup(&a.sim, file, dim)?;
    let script = match &a.perturb {
        Some(p) => Script::load(p, dim, 1)?,
        None => Script::default(),
    };
    let start = start_state(&model, &start_or_default(a.start, &model)?)?;
    let trace = run_execution(&model, start, &s.controller, &s.sim, s.ticks, true, |k, _| {
        script.force(k, 0, dim)
    })?;
    write(&a.out, &io::format_trace(&trace.records))?;
    let d = dist(trace.final_state.x.as_slice(), model.goal_pos());
    println!(
        "{} after {} ticks, {:.6} m from goal -> {}",
        if trace.converged { "converged" } else { "not converged" },
        trace.ticks,
        d,
        a.out.display()
    );
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn terminal_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "rollout".into());
    out.with_file_name(format!("{stem}.terminal.csv"))
}

fn rollout(a: RolloutArgs, file: &FileConfig) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let d = RolloutConfig::default();
    let time_belief = match a.time_belief {
        Some(v) => v == OnOff::On,
        None => file.time_belief.unwrap_or(d.use_time_belief),
    };
    let cfg = RolloutConfig {
        n_rollouts: pick(a.n, file.n, d.n_rollouts),
        n_steps: pick(a.steps, file.steps, d.n_steps),
        noise_std: pick(a.noise, file.noise, d.noise_std),
        seed: pick(a.seed, file.seed, d.seed),
        use_time_belief: time_belief,
    };
    let start = start_or_default(a.start, &model)?;
    let stats = rollout_ensemble(&model, &start, &cfg)?;
    let terminal = a.terminal_out.unwrap_or_else(|| terminal_path(&a.out));
    write(&a.out, &io::format_stats(&stats))?;
    write(&terminal, &io::format_terminal(&stats))?;
    println!(
        "{} rollouts x {} steps, terminal mean {:.6} max {:.6} -> {}, {}",
        cfg.n_rollouts,
        cfg.n_steps,
        stats.mean_terminal(),
        stats.max_terminal(),
        a.out.display(),
        terminal.display()
    );
    Ok(())
}

fn field(a: FieldArgs, file: &FileConfig) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    if model.dim() != 2 {
        bail!("field sampling needs a 2-D model, got {}-D", model.dim());
    }
    if !(0.0..=1.0).contains(&a.tb) {
        bail!("--tb is a fraction of the duration in [0, 1], got {}", a.tb);
    }
    let b = a.bounds.unwrap_or_else(|| vec![0.0, 0.0, 1.0, 1.0]);
    if b.len() != 4 {
        bail!("--bounds takes xmin,ymin,xmax,ymax");
    }
    let bounds = FieldBounds::new([b[0], b[1]], [b[2], b[3]])?;
    let n = pick(a.grid, file.grid, DEFAULT_GRID);
    let t_b = model.start_time() + a.tb * (model.goal_time() - model.start_time());
    let samples = match a.mode {
        FieldMode::Ggp => vector_field(FieldPolicy::Ggp(&model), &bounds, (n, n), t_b)?,
        FieldMode::Gp => {
            let gp = GpBaselineModel::from_graph(&model, model.params().lambda_pos, DEFAULT_JITTER)?;
            vector_field(FieldPolicy::Gp(&gp), &bounds, (n, n), t_b)?
        }
    };
    write(&a.out, &io::format_field(&samples))?;
    println!("{} samples at t_b = {t_b:.4} s -> {}", samples.len(), a.out.display());
    Ok(())
}

fn bimanual(a: BimanualArgs, file: &FileConfig) -> anyhow::Result<()> {
    let left = load_model(&a.left)?;
    let right = load_model(&a.right)?;
    if left.dim() != right.dim() {
        bail!("arm models differ in dimension: {} vs {}", left.dim(), right.dim());
    }
    let dim = left.dim();
    let s = sim_setup(&a.sim, file, dim)?;
    let k_c = pick(a.coupling, file.coupling, ggp_core::coupling::DEFAULT_COUPLING_STIFFNESS);
    let offset = match a.offset {
        Some(o) if o.len() != dim => bail!("offset has {} components, models are {dim}-D", o.len()),
        Some(o) => DVector::from_vec(o),
        None => DVector::from_column_slice(right.start_pos()) - DVector::from_column_slice(left.start_pos()),
    };
    let coupling = if k_c == 0.0 {
        CouplingConfig::disabled(dim)
    } else {
        CouplingConfig::isotropic(dim, k_c, offset)?
    };
    let script = match &a.perturb {
        Some(p) => Script::load(p, dim, 2)?,
        None => Script::default(),
    };
    let mut dual = DualArmState::new(
        start_state(&left, left.start_pos())?,
        start_state(&right, right.start_pos())?,
    )?;
    let mut records = Vec::new();
    let mut ticks = 0;
    let done = |d: &DualArmState| reached_goal(&left, &d.left) && reached_goal(&right, &d.right);
    while ticks < s.ticks && !done(&dual) {
        let (fl, fr) = (script.force(ticks, 0, dim), script.force(ticks, 1, dim));
        let out = execute_dual_tick([&left, &right], &dual, &s.controller, &coupling, [&fl, &fr], &s.sim)?;
        dual = out.state;
        ticks += 1;
        records.push(TickRecord {
            time: ticks as f64 * s.sim.dt,
            arms: out.records.to_vec(),
        });
    }
    write(&a.out, &io::format_trace(&records))?;
    println!(
        "{} after {ticks} ticks -> {}",
        if done(&dual) { "both arms converged" } else { "not converged" },
        a.out.display()
    );
    Ok(())
}

fn serve(a: ServeArgs, file: &FileConfig) -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let host = a.host.or_else(|| file.host.clone()).unwrap_or_else(|| "127.0.0.1".into());
    let port = pick(a.port, file.port, DEFAULT_PORT);
    let rate = pick(a.rate, file.rate, ggp_teach::session::DEFAULT_SIM_RATE);
    let tick_rate = pick(a.tick_rate, file.tick_rate, ggp_teach::session::DEFAULT_TICK_RATE);
    let mut cfg = ggp_teach::SessionConfig::with_rates(rate, tick_rate).map_err(anyhow::Error::msg)?;
    cfg.k_drag = pick(a.k_drag, file.k_drag, cfg.k_drag);
    if !(cfg.k_drag.is_finite() && cfg.k_drag > 0.0) {
        bail!("k_drag must be positive, got {}", cfg.k_drag);
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        log::info!("listening on ws://{}", listener.local_addr()?);
        ggp_teach::serve(listener, cfg).await?;
        Ok(())
    })
}

fn letter_b(a: LetterBArgs) -> anyhow::Result<()> {
    let b = io::generate_letter_b_timed(a.points, a.duration)?;
    io::write_trajectory(&a.out, &b.demo, Some("letter-b"))?;
    println!(
        "{} points, crossing at ({:.6}, {:.6}) on segments {} and {} -> {}",
        b.demo.len(),
        b.intersection[0],
        b.intersection[1],
        b.first_pass,
        b.second_pass,
        a.out.display()
    );
    Ok(())
}
