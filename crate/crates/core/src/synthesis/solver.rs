use fixedbitset::FixedBitSet;
use log::debug;

use super::game::GameStructure;

/// The onion for one system goal: `ranks[k][i]` is the inner greatest
/// fixpoint for env justice `i` at iteration `k` of the reachability loop.
#[derive(Debug, Clone)]
pub struct GoalLayers {
    pub ranks: Vec<Vec<FixedBitSet>>,
}

impl GoalLayers {
    /// Lexicographically smallest `(k, i)` whose layer contains `p`.
    pub fn rank_of(&self, p: usize) -> Option<(usize, usize)> {
        self.ranks.iter().enumerate().find_map(|(k, xs)| xs.iter().position(|x| x.contains(p)).map(|i| (k, i)))
    }

    /// Union of all layers.
    pub fn reach_set(&self, n: usize) -> FixedBitSet {
        let mut y = FixedBitSet::with_capacity(n);
        for x in self.ranks.iter().flatten() {
            y.union_with(x);
        }
        y
    }
}

#[derive(Debug, Clone)]
pub struct Gr1Solution {
    pub winning: FixedBitSet,
    pub layers: Vec<GoalLayers>,
    pub outer_iterations: usize,
}

impl Gr1Solution {
    pub fn is_winning(&self, p: usize) -> bool {
        self.winning.contains(p)
    }
}

fn complement(game: &GameStructure, s: &FixedBitSet) -> FixedBitSet {
    let mut c = game.full_set();
    c.difference_with(s);
    c
}

/// μY. ⋃_i νX. (J_j ∧ cpre(Z)) ∨ cpre(Y) ∨ (¬J^e_i ∧ cpre(X)), keeping every
/// X-layer.
pub fn reach_layers(game: &GameStructure, goal: usize, z: &FixedBitSet) -> GoalLayers {
    let mut start = game.cpre(z);
    start.intersect_with(&game.sys_justice()[goal]);
    let not_env: Vec<FixedBitSet> = game.env_justice().iter().map(|j| complement(game, j)).collect();

    let mut y = game.empty_set();
    let mut ranks = Vec::new();
    loop {
        let mut base = game.cpre(&y);
        base.union_with(&start);
        let mut y_next = game.empty_set();
        let mut xs = Vec::with_capacity(not_env.len());
        for ne in &not_env {
            let mut x = game.full_set();
            loop {
                let mut x_next = game.cpre(&x);
                x_next.intersect_with(ne);
                x_next.union_with(&base);
                if x_next == x {
                    break;
                }
                x = x_next;
            }
            y_next.union_with(&x);
            xs.push(x);
        }
        if y_next == y {
            break;
        }
        ranks.push(xs);
        y = y_next;
    }
    GoalLayers { ranks }
}

/// Computes the winning region of the GR(1) game and the per-goal layers
/// used for strategy extraction.
pub fn solve_gr1(game: &GameStructure) -> Gr1Solution {
    let n = game.num_positions();
    let goals = game.sys_justice().len();
    let mut z = game.full_set();
    let mut outer_iterations = 0;
    loop {
        outer_iterations += 1;
        let before = z.clone();
        for j in 0..goals {
            let y = reach_layers(game, j, &z).reach_set(n);
            z.intersect_with(&y);
        }
        debug!("outer iteration {outer_iterations}: |Z| = {}", z.count_ones(..));
        if z == before {
            break;
        }
    }
    let layers = (0..goals).map(|j| reach_layers(game, j, &z)).collect();
    Gr1Solution {
        winning: z,
        layers,
        outer_iterations,
    }
}

/// One outer iteration applied to `z`; a fixpoint is returned unchanged.
pub fn outer_step(game: &GameStructure, z: &FixedBitSet) -> FixedBitSet {
    let n = game.num_positions();
    let mut out = z.clone();
    for j in 0..game.sys_justice().len() {
        out.intersect_with(&reach_layers(game, j, z).reach_set(n));
    }
    out
}
