mod commands;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Reactive formation control for robot swarms.
#[derive(Debug, Parser)]
#[command(name = "swarmsynth", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the abstraction, solve the GR(1) game and write the strategy.
    Synth(SynthArgs),
    /// Synthesize, probe every strategy transition with the QP controller
    /// and prune infeasible ones until the strategy is feasible.
    Refine(RefineArgs),
    /// Run the closed loop and monitor it.
    Simulate(SimulateArgs),
    /// Check a strategy file exhaustively against the game.
    Verify(VerifyArgs),
    /// Render a trajectory CSV over the world as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// World file (JSON).
    #[arg(long)]
    world: PathBuf,
    /// GR(1) specification file.
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ControlArgs {
    /// Optional JSON file with QpConfig fields; flags below override it.
    #[arg(long)]
    qp_config: Option<PathBuf>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long)]
    d_g: Option<f64>,
    #[arg(long)]
    d_f: Option<f64>,
    #[arg(long)]
    d_o: Option<f64>,
    #[arg(long)]
    w_delta1: Option<f64>,
    /// Keep robots inside the grid with extra barrier rows.
    #[arg(long)]
    workspace_bounds: bool,
    #[arg(long, default_value_t = 2.0)]
    mu: f64,
    /// User-defined convergence time T_ud, in seconds.
    #[arg(long, default_value_t = 4.0)]
    t_ud: f64,
    /// Integration step, in seconds.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RefineArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    control: ControlArgs,
    #[arg(long, default_value_t = 1)]
    probe_budget: usize,
    /// Jitter half-width for the extra probes, in meters.
    #[arg(long, default_value_t = 0.05)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    control: ControlArgs,
    /// Strategy file from `synth` or `refine`; synthesized afresh if absent.
    #[arg(long)]
    strategy: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lines of `step=K var=bool`.
    #[arg(long, conflicts_with = "falsify_prob")]
    battery_script: Option<PathBuf>,
    /// Per-step probability of proposing each env variable false.
    #[arg(long)]
    falsify_prob: Option<f64>,
    /// Independent runs with seeds seed, seed+1, ...; run k > 0 writes into
    /// `<out>/run-k`.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    strategy: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Trajectory CSV written by `simulate`.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    world: PathBuf,
    #[arg(long, short, default_value = "trajectory.svg")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SWARM_LTL_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a.model.world, &a.model.spec, &a.out),
        Command::Refine(a) => commands::refine(&a.model.world, &a.model.spec, &a.control, a.probe_budget, a.jitter, a.seed, &a.out),
        Command::Simulate(a) => commands::simulate(commands::SimulateRequest {
            world: &a.model.world,
            spec: &a.model.spec,
            control: &a.control,
            strategy: a.strategy.as_deref(),
            steps: a.steps,
            seed: a.seed,
            battery_script: a.battery_script.as_deref(),
            falsify_prob: a.falsify_prob,
            runs: a.runs,
            out: &a.out,
        }),
        Command::Verify(a) => commands::verify(&a.model.world, &a.model.spec, &a.strategy),
        Command::Plot(a) => commands::plot(&a.trajectory, &a.world, &a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
