use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_symbolic_step, ControllerConfig, SegmentOutcome, SimConfig, SimError, Target};
use crate::abstraction::{build_from_config, Dfts};
use crate::geometry::{SwarmState, Vec2};
use crate::qp::QpScene;
use crate::spec::Gr1Spec;
use crate::synthesis::{synthesize, Synthesis, SynthesisError};
use crate::world::WorldConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    /// Probes per transition; the first uses the exact formation, the rest
    /// are jittered.
    pub probe_budget: usize,
    /// Half-width of the uniform per-coordinate jitter, in meters.
    pub jitter: f64,
    pub seed: u64,
    pub max_rounds: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            probe_budget: 1,
            jitter: 0.05,
            seed: 0,
            max_rounds: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedEdge {
    pub round: usize,
    pub from: String,
    pub action: String,
    pub to: String,
    pub outcome: SegmentOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub rounds: usize,
    pub probes: usize,
    pub probed_transitions: usize,
    pub pruned: Vec<PrunedEdge>,
    pub realizable: bool,
    /// Why synthesis failed, when it did.
    pub failure: Option<String>,
}

pub struct RefineResult {
    pub dfts: Dfts,
    pub synthesis: Option<Synthesis>,
    pub report: RefineReport,
}

/// Transitions `(state, action)` used by reachable strategy nodes.
fn strategy_transitions(syn: &Synthesis) -> BTreeSet<(usize, usize)> {
    let st = &syn.strategy;
    let mut seen = vec![false; st.nodes().len()];
    let mut stack: Vec<usize> = st.initial().to_vec();
    let mut out = BTreeSet::new();
    while let Some(k) = stack.pop() {
        if std::mem::replace(&mut seen[k], true) {
            continue;
        }
        let from = syn.game.state_of(st.nodes()[k].position);
        for e in st.edges(k) {
            out.insert((from, e.action));
            stack.push(e.next);
        }
    }
    out
}

fn probe(
    cfg: &WorldConfig,
    dfts: &Dfts,
    (s, a): (usize, usize),
    sim: &SimConfig,
    ctrl: &ControllerConfig,
    opts: &RefineOptions,
) -> Result<Option<SegmentOutcome>, SimError> {
    let t = dfts.delta(s, a).ok_or_else(|| SimError::Model(format!("action {a} undefined at {s}")))?;
    let place = |k: usize| -> Result<(Vec2, usize), SimError> {
        let st = dfts.states()[k];
        let w = cfg.world.waypoint_of_cell(st.cell).map_err(|e| SimError::Model(e.to_string()))?;
        Ok((w, st.formation))
    };
    let (ws, fs) = place(s)?;
    let (wt, ft) = place(t)?;
    let start = cfg.catalog.formation(fs).place_at(ws);
    let target = Target {
        w: wt,
        formation: cfg.catalog.formation(ft),
        cell: Some(dfts.states()[t].cell),
    };
    let scene = QpScene {
        obstacles: cfg.world.obstacles(),
        bounds: Some(cfg.world.bounds()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((s as u64) << 32 | a as u64));
    for k in 0..opts.probe_budget.max(1) {
        let x0 = if k == 0 {
            start.clone()
        } else {
            let j = opts.jitter;
            let moved = start
                .positions()
                .iter()
                .map(|&p| p + Vec2::new(rng.random_range(-j..=j), rng.random_range(-j..=j)))
                .collect();
            SwarmState::new(moved).map_err(|e| SimError::Model(e.to_string()))?
        };
        let seg = run_symbolic_step(&x0, target, scene, ctrl, sim.dt, sim.t_ud)?;
        if seg.outcome != SegmentOutcome::Reached {
            return Ok(Some(seg.outcome));
        }
    }
    Ok(None)
}

/// Probes every transition of the synthesized strategy with the QP
/// controller, prunes the failing ones and re-synthesizes until all probes
/// pass or the pruned model becomes unrealizable.
pub fn refine_loop(
    cfg: &WorldConfig,
    spec: &Gr1Spec,
    sim: &SimConfig,
    ctrl: &ControllerConfig,
    opts: &RefineOptions,
) -> Result<RefineResult, SimError> {
    if opts.probe_budget == 0 {
        return Err(SimError::InvalidConfig("probe budget must be at least 1".into()));
    }
    sim.validate()?;
    let mut dfts = build_from_config(cfg).map_err(|e| SimError::Model(e.to_string()))?;
    let mut report = RefineReport {
        rounds: 0,
        probes: 0,
        probed_transitions: 0,
        pruned: Vec::new(),
        realizable: false,
        failure: None,
    };
    // outcome per (from, action), kept across rounds
    let mut verdicts: BTreeMap<(usize, usize), Option<SegmentOutcome>> = BTreeMap::new();
    loop {
        report.rounds += 1;
        let syn = match synthesize(&dfts, spec) {
            Ok(s) => s,
            Err(e @ SynthesisError::InitialNotWinning(_)) => {
                report.failure = Some(e.to_string());
                return Ok(RefineResult {
                    dfts,
                    synthesis: None,
                    report,
                });
            }
            Err(e) => return Err(SimError::Model(e.to_string())),
        };
        let todo: Vec<(usize, usize)> = strategy_transitions(&syn)
            .into_iter()
            .filter(|k| !verdicts.contains_key(k))
            .collect();
        let results: Vec<Result<Option<SegmentOutcome>, SimError>> =
            todo.par_iter().map(|&k| probe(cfg, &dfts, k, sim, ctrl, opts)).collect();
        report.probed_transitions += todo.len();
        report.probes += todo.len() * opts.probe_budget;
        let mut failed = Vec::new();
        for (k, res) in todo.into_iter().zip(results) {
            let v = res?;
            if let Some(outcome) = v {
                failed.push((k, outcome));
            }
            verdicts.insert(k, v);
        }
        if failed.is_empty() || report.rounds >= opts.max_rounds {
            report.realizable = failed.is_empty();
            if !failed.is_empty() {
                report.failure = Some(format!("round limit {} reached", opts.max_rounds));
            }
            return Ok(RefineResult {
                dfts,
                synthesis: Some(syn),
                report,
            });
        }
        for ((s, a), outcome) in failed {
            let t = dfts.delta(s, a).expect("probed transitions exist");
            log::info!(
                "pruning {} -[{}]-> {} ({outcome:?})",
                dfts.describe_state(s),
                dfts.action_name(a),
                dfts.describe_state(t)
            );
            report.pruned.push(PrunedEdge {
                round: report.rounds,
                from: dfts.describe_state(s),
                action: dfts.action_name(a),
                to: dfts.describe_state(t),
                outcome,
            });
            dfts = dfts.prune_transition(s, a).map_err(|e| SimError::Model(e.to_string()))?;
        }
    }
}
