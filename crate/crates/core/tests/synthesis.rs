use std::path::PathBuf;

use fixedbitset::FixedBitSet;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmsynth::abstraction::build_from_config;
use swarmsynth::spec::parse_gr1;
use swarmsynth::synthesis::{
    extract_strategy, outer_step, solve_gr1, synthesize, verify_strategy, GameStructure, StrategyEdge, StrategyNode,
};
use swarmsynth::world::WorldConfig;

fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn set(n: usize, members: impl IntoIterator<Item = usize>) -> FixedBitSet {
    let mut s = FixedBitSet::with_capacity(n);
    members.into_iter().for_each(|m| s.insert(m));
    s
}

fn full(n: usize) -> FixedBitSet {
    set(n, 0..n)
}

/// Random game with `n_states * n_env` positions. Env moves may be empty.
fn random_game(rng: &mut ChaCha8Rng, goals: usize, env_justice: usize) -> GameStructure {
    let n_states = rng.random_range(1..=5);
    let n_env = [1usize, 2, 4][rng.random_range(0..3)];
    let n_env = if n_states * n_env > 10 { 2 } else { n_env };
    let n = n_states * n_env;
    let env_moves = (0..n)
        .map(|_| (0..n_env as u32).filter(|_| rng.random_bool(0.6)).collect())
        .collect();
    let sys_moves = (0..n)
        .map(|_| {
            let mut a = 0;
            (0..n_states as u32)
                .filter(|_| rng.random_bool(0.45))
                .map(|t| {
                    a += 1;
                    (a - 1, t)
                })
                .collect()
        })
        .collect();
    let mut random_set = |p: f64| set(n, (0..n).filter(|_| rng.random_bool(p)));
    let sys_justice = (0..goals).map(|_| random_set(0.3)).collect();
    let env_j = if env_justice == 0 {
        vec![full(n)]
    } else {
        (0..env_justice).map(|_| random_set(0.5)).collect()
    };
    GameStructure::new(n_states, n_env, env_moves, sys_moves, env_j, sys_justice, vec![]).unwrap()
}

/// Same game with a different initial set.
fn with_initial(g: &GameStructure, initial: Vec<usize>) -> GameStructure {
    let n = g.num_positions();
    GameStructure::new(
        g.num_states(),
        g.num_env(),
        (0..n).map(|p| g.env_moves(p).to_vec()).collect(),
        (0..n).map(|k| g.sys_moves(k / g.num_env(), k % g.num_env()).to_vec()).collect(),
        g.env_justice().to_vec(),
        g.sys_justice().to_vec(),
        initial,
    )
    .unwrap()
}

/// Turn-based expansion: env nodes `0..n` are positions, sys node `n + k`
/// is "env just played" at `k = s * n_env + e'`.
struct Doubled {
    n: usize,
    succ: Vec<Vec<usize>>,
    is_env: Vec<bool>,
}

impl Doubled {
    fn new(g: &GameStructure) -> Self {
        let n = g.num_positions();
        let mut succ = vec![Vec::new(); 2 * n];
        for p in 0..n {
            let s = g.state_of(p);
            succ[p] = g.env_moves(p).iter().map(|&e| n + g.position(s, e as usize)).collect();
        }
        for k in 0..n {
            let (s, e) = (k / g.num_env(), k % g.num_env());
            succ[n + k] = g.sys_moves(s, e).iter().map(|&(_, t)| g.position(t as usize, e)).collect();
        }
        let is_env = (0..2 * n).map(|v| v < n).collect();
        Doubled { n, succ, is_env }
    }

    /// Nodes from which the system forces a visit to `target` (zero or
    /// more steps). A player without moves loses.
    fn attractor(&self, target: &[bool]) -> Vec<bool> {
        let m = self.succ.len();
        let mut pred = vec![Vec::new(); m];
        for v in 0..m {
            for &w in &self.succ[v] {
                pred[w].push(v);
            }
        }
        let mut count: Vec<usize> = self.succ.iter().map(|s| s.len()).collect();
        let mut attr = target.to_vec();
        let mut stack: Vec<usize> = (0..m).filter(|&v| attr[v]).collect();
        while let Some(w) = stack.pop() {
            for &v in &pred[w] {
                if attr[v] {
                    continue;
                }
                if self.is_env[v] {
                    count[v] -= 1;
                    if count[v] == 0 {
                        attr[v] = true;
                        stack.push(v);
                    }
                } else {
                    attr[v] = true;
                    stack.push(v);
                }
            }
        }
        attr
    }

    /// Nodes from which the system forces a visit in at least one step.
    fn positive_attractor(&self, target: &[bool]) -> Vec<bool> {
        let attr = self.attractor(target);
        (0..self.succ.len())
            .map(|v| {
                let s = &self.succ[v];
                if self.is_env[v] {
                    !s.is_empty() && s.iter().all(|&w| attr[w])
                } else {
                    s.iter().any(|&w| attr[w])
                }
            })
            .collect()
    }

    /// Büchi winning positions for "visit `goal` infinitely often".
    fn buchi(&self, goal: &FixedBitSet) -> Vec<bool> {
        let m = self.succ.len();
        let mut recur: Vec<bool> = (0..m).map(|v| v < self.n && goal.contains(v)).collect();
        loop {
            let back = self.positive_attractor(&recur);
            let next: Vec<bool> = (0..m).map(|v| recur[v] && back[v]).collect();
            if next == recur {
                break;
            }
            recur = next;
        }
        self.attractor(&recur)[..self.n].to_vec()
    }
}

#[test]
fn cpre_of_everything_and_nothing() {
    // two states, stay and swap always possible, env free
    let sys = vec![vec![(0, 0), (1, 1)], vec![(0, 1), (1, 0)], vec![(0, 0), (1, 1)], vec![(0, 1), (1, 0)]];
    let mut env = vec![vec![0, 1]; 4];
    env[3] = vec![];
    let g = GameStructure::new(2, 2, env, sys, vec![full(4)], vec![full(4)], vec![0]).unwrap();
    assert_eq!(g.cpre(&full(4)), set(4, 0..3));
    assert_eq!(g.cpre(&set(4, [])), set(4, []));
}

#[test]
fn cpre_matches_one_step_game_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let g = random_game(&mut rng, 1, 0);
        let n = g.num_positions();
        let target = set(n, (0..n).filter(|_| rng.random_bool(0.5)));
        let got = g.cpre(&target);
        for p in 0..n {
            let s = g.state_of(p);
            let mut all = !g.env_moves(p).is_empty();
            for &e in g.env_moves(p) {
                let mut exists = false;
                for &(_, t) in g.sys_moves(s, e as usize) {
                    exists |= target.contains(g.position(t as usize, e as usize));
                }
                all &= exists;
            }
            assert_eq!(got.contains(p), all, "position {p}");
        }
    }
}

#[test]
fn absorbing_goal_reachable_everywhere_wins_everywhere() {
    // chain 0 -> 1 -> 2, state 2 absorbing and the goal
    let sys = vec![vec![(0, 1)], vec![(0, 2)], vec![(0, 2)]];
    let env = vec![vec![0]; 3];
    let g = GameStructure::new(3, 1, env, sys, vec![full(3)], vec![set(3, [2])], vec![0]).unwrap();
    let sol = solve_gr1(&g);
    assert_eq!(sol.winning, full(3));
    let strat = extract_strategy(&g, &sol).unwrap();
    let report = verify_strategy(&g, &strat);
    assert!(report.passed(), "{report:?}");
    // reaches the goal and stays there
    let mut node = strat.initial()[0];
    for _ in 0..5 {
        node = strat.step(node, 0).unwrap().next;
    }
    assert_eq!(strat.nodes()[node].position, 2);
}

#[test]
fn environment_trap_makes_initial_losing() {
    // state 0 = start, 1 = goal, 2 = corridor. With env bit set the system
    // is forced from the start into the corridor, and the env can keep the
    // bit set forever.
    let n_env = 2;
    let pos = |s: usize, e: usize| s * n_env + e;
    let mut sys = vec![Vec::new(); 6];
    sys[pos(0, 0)] = vec![(0, 1)];
    sys[pos(0, 1)] = vec![(1, 2)];
    sys[pos(1, 0)] = vec![(0, 0)];
    sys[pos(1, 1)] = vec![(0, 0)];
    sys[pos(2, 0)] = vec![(0, 1)];
    sys[pos(2, 1)] = vec![(2, 2)];
    let env = vec![vec![0, 1]; 6];
    let goal = set(6, [pos(1, 0), pos(1, 1)]);
    let g = GameStructure::new(3, n_env, env.clone(), sys.clone(), vec![full(6)], vec![goal.clone()], vec![0]).unwrap();
    let sol = solve_gr1(&g);
    assert!(!sol.is_winning(0));
    let doubled = Doubled::new(&g);
    let oracle = doubled.buchi(&goal);
    for p in 0..6 {
        assert_eq!(sol.is_winning(p), oracle[p]);
    }
    // assuming the bit is cleared infinitely often restores the win
    let fair = set(6, [pos(0, 0), pos(1, 0), pos(2, 0)]);
    let g = GameStructure::new(3, n_env, env, sys, vec![fair], vec![goal], vec![0]).unwrap();
    let sol = solve_gr1(&g);
    assert!(sol.is_winning(0));
    let strat = extract_strategy(&g, &sol).unwrap();
    assert!(verify_strategy(&g, &strat).passed());
}

#[test]
fn two_goals_alternate_on_the_lasso() {
    // ring 0 -> 1 -> 0; goals are the two states
    let sys = vec![vec![(0, 1)], vec![(0, 0)]];
    let g = GameStructure::new(2, 1, vec![vec![0]; 2], sys, vec![full(2)], vec![set(2, [0]), set(2, [1])], vec![0])
        .unwrap();
    let sol = solve_gr1(&g);
    let strat = extract_strategy(&g, &sol).unwrap();
    assert!(verify_strategy(&g, &strat).passed());
    let mut node = strat.initial()[0];
    let mut memory = Vec::new();
    for _ in 0..4 {
        memory.push(strat.nodes()[node].goal);
        node = strat.step(node, 0).unwrap().next;
    }
    assert_eq!(memory, vec![0, 1, 0, 1]);
}

#[test]
fn winning_set_matches_buchi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..500 {
        let g = random_game(&mut rng, 1, 0);
        let sol = solve_gr1(&g);
        let oracle = Doubled::new(&g).buchi(&g.sys_justice()[0]);
        for p in 0..g.num_positions() {
            assert_eq!(sol.is_winning(p), oracle[p], "position {p}");
        }
    }
}

#[test]
fn extracted_strategies_verify_on_random_games() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for round in 0..600 {
        let g = random_game(&mut rng, 1 + round % 3, round % 3);
        let sol = solve_gr1(&g);
        let init: Vec<usize> = sol.winning.ones().collect();
        if init.is_empty() {
            continue;
        }
        let g = with_initial(&g, init);
        let sol = solve_gr1(&g);
        let strat = extract_strategy(&g, &sol).unwrap();
        let report = verify_strategy(&g, &strat);
        assert!(report.passed(), "round {round}: {report:?}");
        checked += 1;
    }
    assert!(checked > 100, "only {checked} realizable games");
}

#[test]
fn losing_initial_is_reported() {
    let sys = vec![vec![(0, 0)], vec![(0, 1)]];
    let g = GameStructure::new(2, 1, vec![vec![0]; 2], sys, vec![full(2)], vec![set(2, [1])], vec![0]).unwrap();
    let sol = solve_gr1(&g);
    let err = extract_strategy(&g, &sol).unwrap_err();
    assert!(err.to_string().contains("position 0"), "{err}");
}

proptest! {
    #[test]
    fn cpre_is_monotone(seed in any::<u64>(), bits in any::<u16>(), extra in any::<u16>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_game(&mut rng, 1, 0);
        let n = g.num_positions();
        let a = set(n, (0..n).filter(|&p| bits >> p & 1 == 1));
        let mut b = a.clone();
        b.union_with(&set(n, (0..n).filter(|&p| extra >> p & 1 == 1)));
        prop_assert!(g.cpre(&a).is_subset(&g.cpre(&b)));
    }

    #[test]
    fn winning_set_is_a_fixpoint(seed in any::<u64>(), goals in 1usize..3, env_j in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_game(&mut rng, goals, env_j);
        let sol = solve_gr1(&g);
        prop_assert_eq!(outer_step(&g, &sol.winning), sol.winning);
    }

    #[test]
    fn strategy_is_closed(seed in any::<u64>(), goals in 1usize..3, env_j in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_game(&mut rng, goals, env_j);
        let sol = solve_gr1(&g);
        let init: Vec<usize> = sol.winning.ones().collect();
        prop_assume!(!init.is_empty());
        let g = with_initial(&g, init);
        let sol = solve_gr1(&g);
        let strat = extract_strategy(&g, &sol).unwrap();
        for (k, node) in strat.nodes().iter().enumerate() {
            prop_assert!(sol.is_winning(node.position));
            for &e in g.env_moves(node.position) {
                let edge = strat.step(k, e as usize);
                prop_assert!(edge.is_some());
                let next = strat.nodes()[edge.unwrap().next];
                prop_assert_eq!(strat.node_index(next), Some(edge.unwrap().next));
            }
        }
    }
}

fn case_study() -> (swarmsynth::abstraction::Dfts, swarmsynth::spec::Gr1Spec) {
    let cfg = WorldConfig::load(&repo_file("worlds/paper_5x5.json")).unwrap();
    let spec = parse_gr1(&std::fs::read_to_string(repo_file("specs/paper_patrol.spec")).unwrap()).unwrap();
    spec.check_atoms(&cfg.sys_atoms()).unwrap();
    (build_from_config(&cfg).unwrap(), spec)
}

#[test]
fn case_study_is_realizable_and_verifies() {
    let (dfts, spec) = case_study();
    assert_eq!(dfts.candidate_states(), 75);
    assert_eq!(dfts.num_states(), 19 * 3);
    let syn = synthesize(&dfts, &spec).unwrap();
    assert!(syn.game.blocking_positions().is_empty());
    let report = verify_strategy(&syn.game, &syn.strategy);
    assert!(report.passed(), "{report:?}");

    let file = syn.strategy.export(&syn.game, &dfts);
    let text = serde_json::to_string(&file).unwrap();
    let back: swarmsynth::synthesis::StrategyFile = serde_json::from_str(&text).unwrap();
    let strat = back.into_strategy(&syn.game, &dfts).unwrap();
    assert_eq!(strat.nodes(), syn.strategy.nodes());
    assert!(verify_strategy(&syn.game, &strat).passed());
}

#[test]
fn case_study_returns_home_and_resumes() {
    let (dfts, spec) = case_study();
    let syn = synthesize(&dfts, &spec).unwrap();
    let (g, strat) = (&syn.game, &syn.strategy);
    let on = g.env_valuation(1).to_bits(g.env_vars());
    let off = 1 - on;
    let labels = |k: usize| dfts.labels(g.state_of(strat.nodes()[k].position)).clone();
    let mut node = strat.initial_for_env(on).unwrap();
    let run = |node: &mut usize, env: usize, until: &dyn Fn(usize) -> bool| -> usize {
        for step in 0..60 {
            if until(*node) {
                return step;
            }
            *node = strat.step(*node, env).unwrap().next;
        }
        panic!("not reached within 60 steps");
    };
    run(&mut node, on, &|k| labels(k).contains("goal") && labels(k).contains("triangle"));
    // battery drops away from home: must stay low until home is reached
    run(&mut node, off, &|k| labels(k).contains("home"));
    let edge = strat.step(node, on).unwrap();
    assert!(!dfts.action_name(edge.action).starts_with("stay"), "{}", dfts.action_name(edge.action));
    node = edge.next;
    run(&mut node, on, &|k| labels(k).contains("goal") && labels(k).contains("triangle"));
}

#[test]
fn redirected_edge_into_a_trap_is_caught() {
    let (dfts, spec) = case_study();
    let syn = synthesize(&dfts, &spec).unwrap();
    let (g, strat) = (&syn.game, &syn.strategy);
    let stay = dfts.action_by_name("stay/keep").unwrap();
    // the first non-goal successor of the initial node
    let k = strat.initial()[0];
    let p = strat.nodes()[k].position;
    let e = g.env_moves(p)[0] as usize;
    let &(a, t) = g
        .sys_moves(g.state_of(p), e)
        .iter()
        .find(|&&(_, t)| !dfts.labels(t as usize).contains("goal"))
        .unwrap();
    let t = t as usize;
    // trap: stay in state t under every env valuation, tagged with a goal
    // index no existing node at t uses
    let goal = (0..2)
        .find(|&j| (0..g.num_env()).all(|env| strat.node_index(StrategyNode { position: g.position(t, env), goal: j }).is_none()))
        .expect("free goal index");
    let mut broken = strat.clone();
    let mut trap = vec![usize::MAX; g.num_env()];
    for (env, slot) in trap.iter_mut().enumerate() {
        let (s, idx) = broken.with_node(StrategyNode { position: g.position(t, env), goal }, vec![]);
        broken = s;
        *slot = idx;
    }
    let nodes: Vec<StrategyNode> = broken.nodes().to_vec();
    let mut edges: Vec<Vec<StrategyEdge>> = (0..nodes.len()).map(|i| broken.edges(i).to_vec()).collect();
    for env in 0..g.num_env() {
        edges[trap[env]] = g
            .env_moves(g.position(t, env))
            .iter()
            .map(|&e2| StrategyEdge { env: e2 as usize, action: stay, next: trap[e2 as usize] })
            .collect();
    }
    let broken = swarmsynth::synthesis::Strategy::from_parts(nodes, edges, broken.initial().to_vec(), g.num_env(), 2)
        .unwrap()
        .with_redirected_edge(k, e, a as usize, trap[e]);
    let report = verify_strategy(g, &broken);
    assert!(!report.passed());
    assert!(report.invalid_transitions.is_empty(), "{report:?}");
    let lasso = report.counterexample.expect("lasso");
    assert!(lasso.cycle.iter().all(|n| trap.contains(n)));
    assert_eq!(lasso.prefix.first(), Some(&k));
}
