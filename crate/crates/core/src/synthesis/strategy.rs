use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::game::GameStructure;
use super::solver::Gr1Solution;
use super::SynthesisError;
use crate::abstraction::{Dfts, ExportedState};
use crate::world::{Cell, EnvValuation};

/// A strategy node: game position plus the index of the goal being pursued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StrategyNode {
    pub position: usize,
    pub goal: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyEdge {
    pub env: usize,
    pub action: usize,
    pub next: usize,
}

/// Finite-memory Mealy machine. Node `k`'s outgoing edges are keyed by the
/// next env valuation.
#[derive(Debug, Clone)]
pub struct Strategy {
    nodes: Vec<StrategyNode>,
    index: HashMap<StrategyNode, usize>,
    edges: Vec<Vec<StrategyEdge>>,
    initial: Vec<usize>,
    n_env: usize,
    goals: usize,
}

impl Strategy {
    /// Assembles a strategy from raw parts, checking indices.
    pub fn from_parts(
        nodes: Vec<StrategyNode>,
        edges: Vec<Vec<StrategyEdge>>,
        initial: Vec<usize>,
        n_env: usize,
        goals: usize,
    ) -> Result<Self, SynthesisError> {
        let bad = |m: String| Err(SynthesisError::MalformedStrategy(m));
        if edges.len() != nodes.len() {
            return bad("edge table length differs from node count".into());
        }
        if let Some(n) = nodes.iter().find(|n| n.goal >= goals) {
            return bad(format!("goal index {} out of range", n.goal));
        }
        if edges.iter().flatten().any(|e| e.next >= nodes.len() || e.env >= n_env) {
            return bad("edge refers to an unknown node or env valuation".into());
        }
        if initial.iter().any(|&i| i >= nodes.len()) {
            return bad("initial node out of range".into());
        }
        let mut index = HashMap::new();
        for (k, n) in nodes.iter().enumerate() {
            if index.insert(*n, k).is_some() {
                return bad(format!("duplicate node {n:?}"));
            }
        }
        let mut edges = edges;
        for es in &mut edges {
            es.sort_by_key(|e| e.env);
            if es.windows(2).any(|w| w[0].env == w[1].env) {
                return bad("two edges for the same env valuation".into());
            }
        }
        Ok(Strategy {
            nodes,
            index,
            edges,
            initial,
            n_env,
            goals,
        })
    }

    pub fn nodes(&self) -> &[StrategyNode] {
        &self.nodes
    }

    pub fn node_index(&self, node: StrategyNode) -> Option<usize> {
        self.index.get(&node).copied()
    }

    pub fn edges(&self, node: usize) -> &[StrategyEdge] {
        &self.edges[node]
    }

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    pub fn num_env(&self) -> usize {
        self.n_env
    }

    pub fn num_goals(&self) -> usize {
        self.goals
    }

    /// The reaction at `node` to env valuation `env`.
    pub fn step(&self, node: usize, env: usize) -> Option<StrategyEdge> {
        self.edges[node].iter().find(|e| e.env == env).copied()
    }

    /// Initial node for the env valuation observed at start.
    pub fn initial_for_env(&self, env: usize) -> Option<usize> {
        self.initial.iter().copied().find(|&k| self.nodes[k].position % self.n_env == env)
    }

    /// Copy with one edge redirected; used to build broken strategies.
    pub fn with_redirected_edge(&self, node: usize, env: usize, action: usize, next: usize) -> Strategy {
        let mut s = self.clone();
        if let Some(e) = s.edges[node].iter_mut().find(|e| e.env == env) {
            e.action = action;
            e.next = next;
        }
        s
    }

    /// Copy with an extra node appended; returns the new node's index.
    pub fn with_node(&self, node: StrategyNode, edges: Vec<StrategyEdge>) -> (Strategy, usize) {
        let mut s = self.clone();
        let k = s.nodes.len();
        s.nodes.push(node);
        s.index.insert(node, k);
        s.edges.push(edges);
        (s, k)
    }
}

/// Extracts a strategy from a solved game. Memory is the index of the goal
/// currently pursued; responses descend that goal's rank, and ties are
/// broken by the lowest action index.
pub fn extract_strategy(game: &GameStructure, solution: &Gr1Solution) -> Result<Strategy, SynthesisError> {
    let goals = game.sys_justice().len();
    let n_env = game.num_env();
    if let Some(v) = game.initial_violations().first() {
        return Err(SynthesisError::InitialNotWinning(v.clone()));
    }
    for &p in game.initial() {
        if !solution.is_winning(p) {
            return Err(SynthesisError::InitialNotWinning(format!(
                "position {} (state {}, env {}) is not winning",
                p,
                game.state_of(p),
                game.env_valuation(game.env_of(p))
            )));
        }
    }
    // Rank tables per goal.
    let ranks: Vec<Vec<Option<(usize, usize)>>> = solution
        .layers
        .iter()
        .map(|l| (0..game.num_positions()).map(|p| l.rank_of(p)).collect())
        .collect();

    let mut nodes = Vec::new();
    let mut index = HashMap::new();
    let mut edges: Vec<Vec<StrategyEdge>> = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern = |n: StrategyNode, nodes: &mut Vec<StrategyNode>, queue: &mut VecDeque<usize>| -> usize {
        *index.entry(n).or_insert_with(|| {
            nodes.push(n);
            queue.push_back(nodes.len() - 1);
            nodes.len() - 1
        })
    };
    let initial: Vec<usize> = game
        .initial()
        .iter()
        .map(|&p| intern(StrategyNode { position: p, goal: 0 }, &mut nodes, &mut queue))
        .collect();

    while let Some(k) = queue.pop_front() {
        let StrategyNode { position: p, goal: j } = nodes[k];
        let mut m = j;
        for _ in 0..goals {
            if !game.sys_justice()[m].contains(p) {
                break;
            }
            m = (m + 1) % goals;
        }
        let s = game.state_of(p);
        let mut out = Vec::new();
        for &e2 in game.env_moves(p) {
            let e2 = e2 as usize;
            let succ: Vec<(usize, usize)> = game
                .sys_moves(s, e2)
                .iter()
                .map(|&(a, t)| (a as usize, game.position(t as usize, e2)))
                .filter(|&(_, q)| solution.is_winning(q))
                .collect();
            // If goal m can be met right away, do so and make progress on the
            // following goal; otherwise descend the rank of goal m.
            let m_next = (m + 1) % goals;
            let meets = |q: usize| game.sys_justice()[m].contains(q);
            let ranks = &ranks;
            let by_rank = |g: usize| move |&(a, q): &(usize, usize)| ranks[g][q].map(|r| (r, a, q));
            let best = if succ.iter().any(|&(_, q)| meets(q)) {
                succ.iter().filter(|&&(_, q)| meets(q)).filter_map(by_rank(m_next)).min()
            } else {
                succ.iter().filter_map(by_rank(m)).min()
            };
            let Some((_, action, q)) = best else {
                return Err(SynthesisError::Internal(format!(
                    "no winning response at position {p} for env {e2}"
                )));
            };
            let next = intern(StrategyNode { position: q, goal: m }, &mut nodes, &mut queue);
            out.push(StrategyEdge { env: e2, action, next });
        }
        if edges.len() <= k {
            edges.resize(k + 1, Vec::new());
        }
        edges[k] = out;
    }
    edges.resize(nodes.len(), Vec::new());
    Strategy::from_parts(nodes, edges, initial, n_env, goals)
}

/// Structured strategy dump, tied to a DFTS by its state list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyFile {
    pub env_vars: Vec<String>,
    pub goals: usize,
    pub states: Vec<ExportedState>,
    pub nodes: Vec<ExportedNode>,
    pub initial: Vec<usize>,
    pub transitions: Vec<ExportedTransition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedNode {
    pub state: usize,
    pub cell: Cell,
    pub formation: String,
    pub env: EnvValuation,
    pub goal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedTransition {
    pub from: usize,
    pub env: EnvValuation,
    pub action: String,
    pub to: usize,
}

impl Strategy {
    pub fn export(&self, game: &GameStructure, dfts: &Dfts) -> StrategyFile {
        let d = dfts.export();
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let s = game.state_of(n.position);
                ExportedNode {
                    state: s,
                    cell: d.states[s].cell,
                    formation: d.states[s].formation.clone(),
                    env: game.env_valuation(game.env_of(n.position)),
                    goal: n.goal,
                }
            })
            .collect();
        let transitions = self
            .edges
            .iter()
            .enumerate()
            .flat_map(|(k, es)| {
                es.iter().map(move |e| ExportedTransition {
                    from: k,
                    env: game.env_valuation(e.env),
                    action: dfts.action_name(e.action),
                    to: e.next,
                })
            })
            .collect();
        StrategyFile {
            env_vars: game.env_vars().to_vec(),
            goals: self.goals,
            states: d.states,
            nodes,
            initial: self.initial.clone(),
            transitions,
        }
    }
}

impl StrategyFile {
    /// Rebuilds the strategy against `game`/`dfts`; fails if the file was
    /// produced for a different abstraction.
    pub fn into_strategy(&self, game: &GameStructure, dfts: &Dfts) -> Result<Strategy, SynthesisError> {
        if !dfts.matches_states(&self.states) {
            return Err(SynthesisError::Mismatch("strategy states differ from the abstraction".into()));
        }
        if self.env_vars != game.env_vars() {
            return Err(SynthesisError::Mismatch("strategy env variables differ from the spec".into()));
        }
        let check_env = |v: &EnvValuation| -> Result<usize, SynthesisError> {
            if v.0.len() != self.env_vars.len() || self.env_vars.iter().any(|k| v.get(k).is_none()) {
                return Err(SynthesisError::Mismatch(format!("env valuation `{v}` does not match the env variables")));
            }
            Ok(v.to_bits(&self.env_vars))
        };
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            if n.state >= dfts.num_states() {
                return Err(SynthesisError::Mismatch(format!("unknown state {}", n.state)));
            }
            nodes.push(StrategyNode {
                position: game.position(n.state, check_env(&n.env)?),
                goal: n.goal,
            });
        }
        let mut edges = vec![Vec::new(); nodes.len()];
        for t in &self.transitions {
            let action = dfts
                .action_by_name(&t.action)
                .ok_or_else(|| SynthesisError::Mismatch(format!("unknown action `{}`", t.action)))?;
            let from = edges
                .get_mut(t.from)
                .ok_or_else(|| SynthesisError::MalformedStrategy(format!("unknown node {}", t.from)))?;
            from.push(StrategyEdge {
                env: check_env(&t.env)?,
                action,
                next: t.to,
            });
        }
        Strategy::from_parts(nodes, edges, self.initial.clone(), game.num_env(), self.goals)
    }
}
