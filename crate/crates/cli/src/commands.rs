use std::fmt;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use swarmsynth::abstraction::{build_from_config, Dfts};
use swarmsynth::qp::QpConfig;
use swarmsynth::sim::{
    generate_schedule, parse_env_script, refine_loop, run_missions, ControllerConfig, EnvSchedule, MissionContext,
    RefineOptions, SimConfig,
};
use swarmsynth::spec::{parse_gr1, Gr1Spec};
use swarmsynth::synthesis::{synthesize, verify_strategy, GameStructure, Strategy, StrategyFile, SynthesisError};
use swarmsynth::world::WorldConfig;

use crate::output::{write_csv, write_trace};
use crate::ControlArgs;

#[derive(Debug)]
pub enum CliError {
    /// Bad input files or flags.
    Input(String),
    Unrealizable(String),
    /// A monitor flagged a violation or the run was aborted.
    Violation(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Unrealizable(_) => 2,
            CliError::Violation(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Unrealizable(m) => write!(f, "unrealizable: {m}"),
            CliError::Violation(m) => write!(f, "{m}"),
        }
    }
}

fn input<E: fmt::Display>(ctx: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{ctx}: {e}"))
}

type Result<T> = std::result::Result<T, CliError>;

struct Model {
    cfg: WorldConfig,
    spec: Gr1Spec,
    dfts: Dfts,
}

fn load_model(world: &Path, spec: &Path) -> Result<Model> {
    let cfg = WorldConfig::load(world).map_err(input(&world.display().to_string()))?;
    let text = fs::read_to_string(spec).map_err(input(&spec.display().to_string()))?;
    let spec_doc = parse_gr1(&text).map_err(input(&spec.display().to_string()))?;
    spec_doc
        .check_atoms(&cfg.sys_atoms())
        .map_err(input(&spec.display().to_string()))?;
    let dfts = build_from_config(&cfg).map_err(input("abstraction"))?;
    Ok(Model {
        cfg,
        spec: spec_doc,
        dfts,
    })
}

fn synth_error(e: SynthesisError) -> CliError {
    match e {
        SynthesisError::InitialNotWinning(m) => CliError::Unrealizable(m),
        other => CliError::Input(other.to_string()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(input("serialization"))?;
    fs::write(path, text + "\n").map_err(input(&path.display().to_string()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(input(&dir.display().to_string()))
}

fn controller(args: &ControlArgs) -> Result<(ControllerConfig, SimConfig)> {
    let mut qp = match &args.qp_config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(input(&p.display().to_string()))?;
            serde_json::from_str::<QpConfig>(&text).map_err(input(&p.display().to_string()))?
        }
        None => QpConfig::default(),
    };
    let overrides = [
        (&mut qp.u_max, args.u_max),
        (&mut qp.d_g, args.d_g),
        (&mut qp.d_f, args.d_f),
        (&mut qp.d_o, args.d_o),
        (&mut qp.w_delta1, args.w_delta1),
    ];
    for (slot, v) in overrides {
        if let Some(v) = v {
            *slot = v;
        }
    }
    qp.workspace_bounds |= args.workspace_bounds;
    let ctrl = ControllerConfig::new(qp, args.mu, args.t_ud).map_err(input("controller"))?;
    let sim = SimConfig {
        dt: args.dt,
        t_ud: args.t_ud,
        ..SimConfig::default()
    };
    sim.validate().map_err(input("simulation"))?;
    Ok((ctrl, sim))
}

pub fn synth(world: &Path, spec: &Path, out: &Path) -> Result<()> {
    let m = load_model(world, spec)?;
    let syn = synthesize(&m.dfts, &m.spec).map_err(synth_error)?;
    let verification = verify_strategy(&syn.game, &syn.strategy);
    ensure_dir(out)?;
    write_json(&out.join("strategy.json"), &syn.strategy.export(&syn.game, &m.dfts))?;
    write_json(&out.join("dfts.json"), &m.dfts.export())?;
    let report = json!({
        "realizable": true,
        "dfts_states": m.dfts.num_states(),
        "dfts_transitions": m.dfts.transitions().count(),
        "positions": syn.game.num_positions(),
        "winning_positions": syn.solution.winning.count_ones(..),
        "outer_iterations": syn.solution.outer_iterations,
        "strategy_nodes": syn.strategy.nodes().len(),
        "verification": verification,
    });
    write_json(&out.join("synthesis.json"), &report)?;
    println!(
        "realizable: {} strategy nodes, verification {}",
        syn.strategy.nodes().len(),
        if verification.passed() { "passed" } else { "FAILED" }
    );
    if !verification.passed() {
        return Err(CliError::Violation("extracted strategy failed verification".into()));
    }
    Ok(())
}

pub fn refine(
    world: &Path,
    spec: &Path,
    control: &ControlArgs,
    probe_budget: usize,
    jitter: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let m = load_model(world, spec)?;
    let (ctrl, sim) = controller(control)?;
    let opts = RefineOptions {
        probe_budget,
        jitter,
        seed,
        ..RefineOptions::default()
    };
    let res = refine_loop(&m.cfg, &m.spec, &sim, &ctrl, &opts).map_err(input("refine"))?;
    ensure_dir(out)?;
    write_json(&out.join("refine.json"), &res.report)?;
    write_json(&out.join("dfts.json"), &res.dfts.export())?;
    println!(
        "{} rounds, {} transitions probed, {} pruned",
        res.report.rounds,
        res.report.probed_transitions,
        res.report.pruned.len()
    );
    for p in &res.report.pruned {
        println!("pruned {} -[{}]-> {} ({:?})", p.from, p.action, p.to, p.outcome);
    }
    match res.synthesis {
        Some(syn) => {
            write_json(&out.join("strategy.json"), &syn.strategy.export(&syn.game, &res.dfts))?;
            println!("realizable");
            Ok(())
        }
        None => Err(CliError::Unrealizable(
            res.report.failure.unwrap_or_else(|| "after pruning".into()),
        )),
    }
}

fn load_strategy(path: &Path, game: &GameStructure, dfts: &Dfts) -> Result<Strategy> {
    let text = fs::read_to_string(path).map_err(input(&path.display().to_string()))?;
    let file: StrategyFile = serde_json::from_str(&text).map_err(input(&path.display().to_string()))?;
    file.into_strategy(game, dfts).map_err(input(&path.display().to_string()))
}

pub struct SimulateRequest<'a> {
    pub world: &'a Path,
    pub spec: &'a Path,
    pub control: &'a ControlArgs,
    pub strategy: Option<&'a Path>,
    pub steps: usize,
    pub seed: u64,
    pub battery_script: Option<&'a Path>,
    pub falsify_prob: Option<f64>,
    pub runs: usize,
    pub out: &'a Path,
}

pub fn simulate(req: SimulateRequest<'_>) -> Result<()> {
    let m = load_model(req.world, req.spec)?;
    let (ctrl, sim) = controller(req.control)?;
    let sim = SimConfig {
        max_symbolic_steps: req.steps,
        seed: req.seed,
        ..sim
    };
    let game = GameStructure::from_dfts(&m.dfts, &m.spec).map_err(synth_error)?;
    let strategy = match req.strategy {
        Some(p) => {
            let s = load_strategy(p, &game, &m.dfts)?;
            if !verify_strategy(&game, &s).passed() {
                return Err(CliError::Input(format!("{}: strategy does not verify against the model", p.display())));
            }
            s
        }
        None => synthesize(&m.dfts, &m.spec).map_err(synth_error)?.strategy,
    };
    let runs = req.runs.max(1);
    let schedules: Vec<EnvSchedule> = (0..runs as u64)
        .map(|k| -> Result<EnvSchedule> {
            if let Some(path) = req.battery_script {
                let text = fs::read_to_string(path).map_err(input(&path.display().to_string()))?;
                parse_env_script(&text, &m.spec.env_vars).map_err(input(&path.display().to_string()))
            } else if let Some(p) = req.falsify_prob {
                generate_schedule(&m.spec, req.seed.wrapping_add(k), req.steps, p).map_err(input("schedule"))
            } else {
                Ok(EnvSchedule::always_true(m.spec.env_vars.clone()))
            }
        })
        .collect::<Result<_>>()?;
    let ctx = MissionContext {
        world: &m.cfg,
        dfts: &m.dfts,
        game: &game,
        strategy: &strategy,
    };
    let results = run_missions(ctx, &schedules, &sim, &ctrl);
    let mut failures = Vec::new();
    for (k, res) in results.into_iter().enumerate() {
        let res = res.map_err(|e| CliError::Violation(format!("run {k}: {e}")))?;
        let dir = if k == 0 { req.out.to_path_buf() } else { req.out.join(format!("run-{k}")) };
        ensure_dir(&dir)?;
        let csv_path = dir.join("trajectory.csv");
        let file = fs::File::create(&csv_path).map_err(input(&csv_path.display().to_string()))?;
        write_csv(file, m.cfg.catalog.robots(), &res.log).map_err(input(&csv_path.display().to_string()))?;
        let trace_path = dir.join("trace.txt");
        let file = fs::File::create(&trace_path).map_err(input(&trace_path.display().to_string()))?;
        write_trace(file, &m.dfts, &game, &res.log).map_err(input(&trace_path.display().to_string()))?;
        write_json(&dir.join("monitor.json"), &res.report)?;
        let r = &res.report;
        println!(
            "run {k}: {} steps, min distance {:.4}, min obstacle margin {:.4}, violations {}{}",
            r.steps_completed,
            r.min_pairwise_distance,
            r.min_obstacle_margin,
            r.total_violations(),
            r.aborted.as_ref().map(|a| format!(", aborted: {a}")).unwrap_or_default()
        );
        if !r.clean() {
            failures.push(k);
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation(format!("monitor violations in runs {failures:?}")))
    }
}

pub fn verify(world: &Path, spec: &Path, strategy: &Path) -> Result<()> {
    let m = load_model(world, spec)?;
    let game = GameStructure::from_dfts(&m.dfts, &m.spec).map_err(synth_error)?;
    let s = load_strategy(strategy, &game, &m.dfts)?;
    let report = verify_strategy(&game, &s);
    println!("{}", serde_json::to_string_pretty(&report).map_err(input("serialization"))?);
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Violation("strategy verification failed".into()))
    }
}

pub fn plot(trajectory: &Path, world: &Path, out: &Path) -> Result<()> {
    let cfg = WorldConfig::load(world).map_err(input(&world.display().to_string()))?;
    let file = fs::File::open(trajectory).map_err(input(&trajectory.display().to_string()))?;
    let traj = crate::plot::read_trajectory(file).map_err(input(&trajectory.display().to_string()))?;
    let svg = crate::plot::render_svg(&cfg, &traj);
    fs::write(out, svg).map_err(input(&out.display().to_string()))
}
