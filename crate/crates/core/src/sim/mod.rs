//! Closed-loop simulation: the QP controller drives the swarm between the
//! waypoints chosen by the strategy, while monitors check every sample.

mod refine;
mod schedule;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use refine::{refine_loop, PrunedEdge, RefineOptions, RefineReport};
pub use schedule::{generate_schedule, parse_env_script, EnvSchedule, ScheduleMode};

use crate::abstraction::Dfts;
use crate::geometry::{h_formation, h_separation, h_waypoint, ControlInput, Formation, SwarmState, Vec2};
use crate::qp::{build_qp, fxt_params, solve_qp, split_solution, FxtParams, QpConfig, QpError, QpScene, QpStatus, SolverOptions};
use crate::synthesis::{GameStructure, Strategy};
use crate::world::{label_e, Cell, WorldConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("environment schedule: {0}")]
    Schedule(String),
    #[error("environment assumption violated: {0}")]
    Assumption(String),
    #[error("strategy has no reaction at node {node} for env {env}")]
    StrategyMiss { node: usize, env: usize },
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("{0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub t_ud: f64,
    pub max_symbolic_steps: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            t_ud: 4.0,
            max_symbolic_steps: 200,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_ud.is_finite() && self.t_ud / self.dt >= 100.0) {
            return Err(SimError::InvalidConfig(format!(
                "T_ud / dt must be at least 100, got {} / {}",
                self.t_ud, self.dt
            )));
        }
        Ok(())
    }
}

/// Controller parameters shared by every segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub qp: QpConfig,
    pub fxt: FxtParams,
    pub solver: SolverOptions,
}

impl ControllerConfig {
    pub fn new(qp: QpConfig, mu: f64, t_ud: f64) -> Result<Self, SimError> {
        qp.validate()?;
        Ok(ControllerConfig {
            qp,
            fxt: fxt_params(mu, t_ud)?,
            solver: SolverOptions::default(),
        })
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig::new(QpConfig::default(), 2.0, 4.0).expect("default controller is valid")
    }
}

pub fn integrate(state: &SwarmState, u: &ControlInput, dt: f64) -> SwarmState {
    state.integrate(u, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub positions: Vec<Vec2>,
    pub inputs: Vec<Vec2>,
    pub target_cell: Option<Cell>,
    pub formation: String,
    pub delta1: f64,
    pub delta2: f64,
    pub status: QpStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentOutcome {
    Reached,
    DeadlineExceeded,
    QpInfeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// One sample per controller step; the final (reached) state is not
    /// included.
    pub samples: Vec<Sample>,
    pub outcome: SegmentOutcome,
    pub final_state: SwarmState,
    pub elapsed: f64,
    pub max_delta1: f64,
}

/// A motion target: centroid waypoint and formation.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub w: Vec2,
    pub formation: &'a Formation,
    pub cell: Option<Cell>,
}

pub fn target_reached(state: &SwarmState, target: &Target<'_>, cfg: &QpConfig) -> bool {
    let x = state.positions();
    h_waypoint(state.centroid(), target.w, cfg.d_g) <= 0.0
        && target
            .formation
            .pairs()
            .all(|((i, j), fij)| h_formation(x[i] - x[j], fij, cfg.d_f) <= 0.0)
}

/// Drives `state` towards `target` until it is reached, the deadline
/// passes, or the QP stops being solvable. Sample times start at zero.
pub fn run_symbolic_step(
    state: &SwarmState,
    target: Target<'_>,
    scene: QpScene<'_>,
    ctrl: &ControllerConfig,
    dt: f64,
    t_ud: f64,
) -> Result<Segment, SimError> {
    let r = state.len();
    let mut x = state.clone();
    let mut samples = Vec::new();
    let mut max_delta1 = f64::NEG_INFINITY;
    let mut k = 0usize;
    let outcome = loop {
        let t = k as f64 * dt;
        if target_reached(&x, &target, &ctrl.qp) {
            break SegmentOutcome::Reached;
        }
        if t > t_ud {
            break SegmentOutcome::DeadlineExceeded;
        }
        let qp = build_qp(&x, target.w, target.formation, scene, &ctrl.qp, &ctrl.fxt)?;
        let sol = solve_qp(&qp, ctrl.solver)?;
        let (u, d1, d2) = split_solution(&sol.z, r);
        let ok = sol.is_optimal();
        let u = if ok { u } else { vec![Vec2::ZERO; r] };
        samples.push(Sample {
            t,
            positions: x.positions().to_vec(),
            inputs: u.clone(),
            target_cell: target.cell,
            formation: target.formation.id().to_string(),
            delta1: if ok { d1 } else { f64::NAN },
            delta2: if ok { d2 } else { f64::NAN },
            status: sol.status,
        });
        if !ok {
            break SegmentOutcome::QpInfeasible;
        }
        max_delta1 = max_delta1.max(d1);
        x = integrate(&x, &ControlInput::new(u), dt);
        k += 1;
    };
    Ok(Segment {
        samples,
        outcome,
        final_state: x,
        elapsed: k as f64 * dt,
        max_delta1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    /// Dfts state before the step.
    pub from: usize,
    pub env: usize,
    pub action: usize,
    /// Dfts state after the step.
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub samples: Vec<Sample>,
    pub symbolic_trace: Vec<TraceEntry>,
    pub output_word: Vec<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub steps_completed: usize,
    pub samples: usize,
    pub min_pairwise_distance: f64,
    /// Minimum over samples, robots and obstacles of `(x-η)ᵀP(x-η) - 1`.
    pub min_obstacle_margin: f64,
    pub reach_times: Vec<f64>,
    pub segment_max_delta1: Vec<f64>,
    pub reach_deadline_violations: usize,
    pub collision_violations: usize,
    pub obstacle_violations: usize,
    pub sys_safety_violations: usize,
    pub goal_visit_indices: Vec<Vec<usize>>,
    pub delta1_positive_steps: usize,
    /// Samples whose centroid lies in an obstacle-labeled cell; reported,
    /// not counted as a violation.
    pub centroid_obstacle_samples: usize,
    pub aborted: Option<String>,
}

impl MonitorReport {
    pub fn new(goals: usize) -> Self {
        MonitorReport {
            steps_completed: 0,
            samples: 0,
            min_pairwise_distance: f64::INFINITY,
            min_obstacle_margin: f64::INFINITY,
            reach_times: Vec::new(),
            segment_max_delta1: Vec::new(),
            reach_deadline_violations: 0,
            collision_violations: 0,
            obstacle_violations: 0,
            sys_safety_violations: 0,
            goal_visit_indices: vec![Vec::new(); goals],
            delta1_positive_steps: 0,
            centroid_obstacle_samples: 0,
            aborted: None,
        }
    }

    pub fn total_violations(&self) -> usize {
        self.reach_deadline_violations + self.collision_violations + self.obstacle_violations + self.sys_safety_violations
    }

    /// No violations and no abort.
    pub fn clean(&self) -> bool {
        self.total_violations() == 0 && self.aborted.is_none()
    }
}

/// Per-sample safety monitors.
#[derive(Debug, Clone, Copy)]
pub struct SampleMonitor<'a> {
    pub world: &'a WorldConfig,
    pub d_o: f64,
}

impl SampleMonitor<'_> {
    pub fn observe(&self, positions: &[Vec2], report: &mut MonitorReport) {
        report.samples += 1;
        let mut collided = false;
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                let xij = positions[i] - positions[j];
                report.min_pairwise_distance = report.min_pairwise_distance.min(xij.norm());
                if h_separation(xij, self.d_o) < 0.0 {
                    collided = true;
                }
            }
        }
        if collided {
            report.collision_violations += 1;
        }
        let mut hit = false;
        for &x in positions {
            for obs in self.world.world.obstacles() {
                let b = obs.barrier(x);
                report.min_obstacle_margin = report.min_obstacle_margin.min(b);
                if b < 0.0 {
                    hit = true;
                }
            }
        }
        if hit {
            report.obstacle_violations += 1;
        }
        let c = positions.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / positions.len() as f64);
        if let Ok(cell) = self.world.world.cell_of_point(c) {
            if self.world.world.is_obstacle(cell) {
                report.centroid_obstacle_samples += 1;
            }
        }
    }
}

/// The models a mission runs against.
#[derive(Debug, Clone, Copy)]
pub struct MissionContext<'a> {
    pub world: &'a WorldConfig,
    pub dfts: &'a Dfts,
    pub game: &'a GameStructure,
    pub strategy: &'a Strategy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionResult {
    pub log: TrajectoryLog,
    pub report: MonitorReport,
}

impl MissionContext<'_> {
    fn scene(&self) -> QpScene<'_> {
        QpScene {
            obstacles: self.world.world.obstacles(),
            bounds: Some(self.world.world.bounds()),
        }
    }

    fn waypoint(&self, state: usize) -> Result<(Vec2, &Formation, Cell), SimError> {
        let s = self.dfts.states()[state];
        let w = self
            .world
            .world
            .waypoint_of_cell(s.cell)
            .map_err(|e| SimError::Model(e.to_string()))?;
        Ok((w, self.world.catalog.formation(s.formation), s.cell))
    }

    fn word_letter(&self, state: usize, env: usize) -> BTreeSet<String> {
        let mut w = self.dfts.labels(state).clone();
        w.extend(label_e(&self.game.env_valuation(env)));
        w
    }

    fn record_goals(&self, step: usize, position: usize, report: &mut MonitorReport) {
        for (j, goal) in self.game.sys_justice().iter().enumerate() {
            if goal.contains(position) {
                report.goal_visit_indices[j].push(step);
            }
        }
        if !self.game.safe().contains(position) {
            report.sys_safety_violations += 1;
        }
    }
}

/// Runs the closed loop for up to `sim.max_symbolic_steps` symbolic steps.
pub fn run_mission(
    ctx: MissionContext<'_>,
    schedule: &EnvSchedule,
    sim: &SimConfig,
    ctrl: &ControllerConfig,
) -> Result<MissionResult, SimError> {
    sim.validate()?;
    if schedule.vars != ctx.game.env_vars() {
        return Err(SimError::Schedule(format!(
            "schedule variables {:?} differ from the game's {:?}",
            schedule.vars,
            ctx.game.env_vars()
        )));
    }
    let game = ctx.game;
    let strategy = ctx.strategy;
    let monitor = SampleMonitor {
        world: ctx.world,
        d_o: ctrl.qp.d_o,
    };
    let mut log = TrajectoryLog::default();
    let mut report = MonitorReport::new(game.sys_justice().len());
    if sim.max_symbolic_steps == 0 {
        return Ok(MissionResult { log, report });
    }

    let s0 = ctx.dfts.initial();
    let initial_envs: Vec<u32> = game.initial().iter().map(|&p| game.env_of(p) as u32).collect();
    let e0 = schedule
        .resolve(0, None, &initial_envs)
        .ok_or_else(|| SimError::Assumption("no initial environment valuation satisfies ENV_INIT".into()))?;
    let mut node = strategy
        .initial_for_env(e0)
        .ok_or(SimError::StrategyMiss { node: usize::MAX, env: e0 })?;
    let (w0, f0, _) = ctx.waypoint(s0)?;
    let mut x = f0.place_at(w0);
    log.output_word.push(ctx.word_letter(s0, e0));
    ctx.record_goals(0, game.position(s0, e0), &mut report);

    let mut offset = 0usize;
    let mut env = e0;
    for step in 1..=sim.max_symbolic_steps {
        let position = strategy.nodes()[node].position;
        let from = game.state_of(position);
        let e = schedule
            .resolve(step, Some(env), game.env_moves(position))
            .ok_or_else(|| SimError::Assumption(format!("no environment move at step {step}")))?;
        let edge = strategy.step(node, e).ok_or(SimError::StrategyMiss { node, env: e })?;
        let to = game.state_of(strategy.nodes()[edge.next].position);
        if ctx.dfts.delta(from, edge.action) != Some(to) {
            return Err(SimError::Model(format!("strategy step {from} -[{}]-> {to} is not a Dfts transition", edge.action)));
        }
        let (w, f, cell) = ctx.waypoint(to)?;
        let target = Target {
            w,
            formation: f,
            cell: Some(cell),
        };
        let seg = run_symbolic_step(&x, target, ctx.scene(), ctrl, sim.dt, sim.t_ud)?;
        for mut s in seg.samples {
            monitor.observe(&s.positions, &mut report);
            s.t = offset as f64 * sim.dt;
            offset += 1;
            log.samples.push(s);
        }
        report.segment_max_delta1.push(seg.max_delta1);
        if seg.max_delta1 > 0.0 {
            report.delta1_positive_steps += 1;
        }
        x = seg.final_state;
        match seg.outcome {
            SegmentOutcome::Reached => {}
            SegmentOutcome::DeadlineExceeded => {
                report.reach_deadline_violations += 1;
                report.aborted = Some(format!("step {step}: deadline exceeded towards {}", ctx.dfts.describe_state(to)));
                break;
            }
            SegmentOutcome::QpInfeasible => {
                report.aborted = Some(format!("step {step}: QP infeasible towards {}", ctx.dfts.describe_state(to)));
                break;
            }
        }
        report.reach_times.push(seg.elapsed);
        log.symbolic_trace.push(TraceEntry {
            step,
            from,
            env: e,
            action: edge.action,
            to,
        });
        log.output_word.push(ctx.word_letter(to, e));
        ctx.record_goals(step, game.position(to, e), &mut report);
        report.steps_completed = step;
        node = edge.next;
        env = e;
    }
    // the resting state at the end of the mission
    monitor.observe(x.positions(), &mut report);
    Ok(MissionResult { log, report })
}

/// Runs independent missions, one per schedule, in parallel. Results keep
/// the order of `schedules`.
pub fn run_missions(
    ctx: MissionContext<'_>,
    schedules: &[EnvSchedule],
    sim: &SimConfig,
    ctrl: &ControllerConfig,
) -> Vec<Result<MissionResult, SimError>> {
    schedules.par_iter().map(|s| run_mission(ctx, s, sim, ctrl)).collect()
}

/// Replays `trace` through the Dfts, starting from the initial state.
pub fn replay_trace(dfts: &Dfts, trace: &[TraceEntry]) -> Result<Vec<usize>, String> {
    let mut s = dfts.initial();
    let mut states = vec![s];
    for e in trace {
        if e.from != s {
            return Err(format!("step {}: trace starts at {} but the Dfts is at {s}", e.step, e.from));
        }
        s = dfts
            .delta(s, e.action)
            .ok_or_else(|| format!("step {}: action {} undefined at {s}", e.step, e.action))?;
        if s != e.to {
            return Err(format!("step {}: trace reaches {} but the Dfts reaches {s}", e.step, e.to));
        }
        states.push(s);
    }
    Ok(states)
}
