use std::collections::VecDeque;

use fixedbitset::FixedBitSet;
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;

use super::game::GameStructure;
use super::strategy::Strategy;

/// A path `prefix` from an initial node followed by a `cycle` that repeats
/// forever. Node indices refer to the strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lasso {
    /// The system goal that the cycle never visits.
    pub goal: usize,
    pub prefix: Vec<usize>,
    pub cycle: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerificationReport {
    pub reachable_nodes: usize,
    pub product_edges: usize,
    /// Reachable nodes whose position violates SYS_SAFETY.
    pub safety_violations: Vec<usize>,
    /// `(node, env)` pairs the environment may play with no strategy edge.
    pub missing_transitions: Vec<(usize, usize)>,
    /// `(node, env)` pairs whose edge is not a legal system move.
    pub invalid_transitions: Vec<(usize, usize)>,
    pub counterexample: Option<Lasso>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.safety_violations.is_empty()
            && self.missing_transitions.is_empty()
            && self.invalid_transitions.is_empty()
            && self.counterexample.is_none()
    }
}

fn bfs_path(adj: &[Vec<usize>], from: &[usize], allowed: impl Fn(usize) -> bool, to: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
    let mut parent = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    for &f in from {
        if allowed(f) && parent[f] == usize::MAX {
            parent[f] = f;
            queue.push_back(f);
        }
    }
    while let Some(v) = queue.pop_front() {
        if to(v) {
            let mut path = vec![v];
            let mut c = v;
            while parent[c] != c {
                c = parent[c];
                path.push(c);
            }
            path.reverse();
            return Some(path);
        }
        for &w in &adj[v] {
            if allowed(w) && parent[w] == usize::MAX {
                parent[w] = v;
                queue.push_back(w);
            }
        }
    }
    None
}

/// Exhaustively checks `strategy` against `game`: totality, legality of each
/// move, SYS_SAFETY on reachable nodes, and that every fair cycle visits all
/// system goals.
pub fn verify_strategy(game: &GameStructure, strategy: &Strategy) -> VerificationReport {
    let n = strategy.nodes().len();
    let mut report = VerificationReport::default();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut reachable = FixedBitSet::with_capacity(n);
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &k in strategy.initial() {
        if !reachable.put(k) {
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        let p = strategy.nodes()[k].position;
        if p >= game.num_positions() {
            report.invalid_transitions.push((k, usize::MAX));
            continue;
        }
        if !game.safe().contains(p) {
            report.safety_violations.push(k);
        }
        let s = game.state_of(p);
        for &e2 in game.env_moves(p) {
            let e2 = e2 as usize;
            let Some(edge) = strategy.step(k, e2) else {
                report.missing_transitions.push((k, e2));
                continue;
            };
            let target = strategy.nodes()[edge.next].position;
            let legal = game.sys_moves(s, e2).iter().any(|&(a, t)| {
                a as usize == edge.action && game.position(t as usize, e2) == target
            });
            if !legal {
                report.invalid_transitions.push((k, e2));
            }
            adj[k].push(edge.next);
            report.product_edges += 1;
            if !reachable.put(edge.next) {
                queue.push_back(edge.next);
            }
        }
    }
    report.reachable_nodes = reachable.count_ones(..);

    let pos_in = |set: &FixedBitSet, k: usize| {
        let p = strategy.nodes()[k].position;
        p < game.num_positions() && set.contains(p)
    };
    'goals: for (j, goal) in game.sys_justice().iter().enumerate() {
        let keep: Vec<usize> = reachable.ones().filter(|&k| !pos_in(goal, k)).collect();
        let mut local = vec![usize::MAX; n];
        let mut g: DiGraph<usize, ()> = DiGraph::new();
        for &k in &keep {
            local[k] = g.add_node(k).index();
        }
        for &k in &keep {
            for &w in &adj[k] {
                if local[w] != usize::MAX {
                    g.add_edge(NodeIndex::new(local[k]), NodeIndex::new(local[w]), ());
                }
            }
        }
        for scc in tarjan_scc(&g) {
            let members: Vec<usize> = scc.iter().map(|&v| g[v]).collect();
            let nontrivial = members.len() > 1 || adj[members[0]].contains(&members[0]);
            if !nontrivial {
                continue;
            }
            let fair = game
                .env_justice()
                .iter()
                .all(|je| members.iter().any(|&k| pos_in(je, k)));
            if !fair {
                continue;
            }
            let mut in_scc = FixedBitSet::with_capacity(n);
            members.iter().for_each(|&k| in_scc.insert(k));
            let prefix = bfs_path(&adj, strategy.initial(), |_| true, |v| in_scc.contains(v))
                .expect("SCC members are reachable");
            let entry = *prefix.last().unwrap();
            let mut cycle = vec![entry];
            let mut cur = entry;
            for je in game.env_justice() {
                let leg = bfs_path(&adj, &[cur], |v| in_scc.contains(v), |v| pos_in(je, v))
                    .expect("SCC is strongly connected");
                cycle.extend_from_slice(&leg[1..]);
                cur = *leg.last().unwrap();
            }
            let succ: Vec<usize> = adj[cur].iter().copied().filter(|&v| in_scc.contains(v)).collect();
            let back = bfs_path(&adj, &succ, |v| in_scc.contains(v), |v| v == entry)
                .expect("SCC is strongly connected");
            cycle.extend_from_slice(&back);
            cycle.pop();
            report.counterexample = Some(Lasso {
                goal: j,
                prefix: prefix[..prefix.len() - 1].to_vec(),
                cycle,
            });
            break 'goals;
        }
    }
    report
}
