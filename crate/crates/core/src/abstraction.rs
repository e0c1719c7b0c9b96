//! Finite abstraction of the swarm: states are (cell, formation) pairs,
//! actions are a grid move combined with an optional formation switch.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Cell, FormationCatalog, GridWorld, WorldConfig, WorldError};

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("initial state {0} is eliminated by the feasibility rules")]
    InitialEliminated(String),
    #[error("no transition from state {state} under action {action}")]
    UnknownTransition { state: usize, action: usize },
    #[error("rule references {0}")]
    BadRule(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("the world file does not name an initial state")]
    MissingInitial,
    #[error("dfts file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Stay,
    North,
    South,
    East,
    West,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Stay, Move::North, Move::South, Move::East, Move::West];

    fn apply(self, cell: Cell, world: &GridWorld) -> Option<Cell> {
        let (x, y) = (cell.x as isize, cell.y as isize);
        let (nx, ny) = match self {
            Move::Stay => (x, y),
            Move::North => (x, y + 1),
            Move::South => (x, y - 1),
            Move::East => (x + 1, y),
            Move::West => (x - 1, y),
        };
        if nx < 0 || ny < 0 {
            return None;
        }
        let next = Cell::new(nx as usize, ny as usize);
        world.contains(next).then_some(next)
    }

    pub fn name(self) -> &'static str {
        match self {
            Move::Stay => "stay",
            Move::North => "north",
            Move::South => "south",
            Move::East => "east",
            Move::West => "west",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormationChange {
    Keep,
    SwitchTo(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub mv: Move,
    pub change: FormationChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DftsState {
    pub cell: Cell,
    pub formation: usize,
}

/// Declarative transition filters, usually given in the world file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibilityRule {
    /// No transition may end in `cell` with `formation` active.
    ForbidFormationInCell { cell: Cell, formation: String },
    /// No transition may end in `cell`.
    ForbidCell { cell: Cell },
    /// Entering `cell` with a move in one of `directions` requires `formation`.
    RequireFormationForMove {
        cell: Cell,
        directions: Vec<Move>,
        formation: String,
    },
}

impl FeasibilityRule {
    pub fn validate(&self, world: &GridWorld, catalog: &FormationCatalog) -> Result<(), WorldError> {
        let cell = match self {
            FeasibilityRule::ForbidFormationInCell { cell, formation }
            | FeasibilityRule::RequireFormationForMove { cell, formation, .. } => {
                catalog.index_of(formation)?;
                *cell
            }
            FeasibilityRule::ForbidCell { cell } => *cell,
        };
        if !world.contains(cell) {
            return Err(WorldError::CellOutOfRange(cell, world.cols(), world.rows()));
        }
        Ok(())
    }

    fn forbids(&self, mv: Move, target: DftsState, catalog: &FormationCatalog) -> bool {
        match self {
            FeasibilityRule::ForbidFormationInCell { cell, formation } => {
                target.cell == *cell && catalog.index_of(formation).ok() == Some(target.formation)
            }
            FeasibilityRule::ForbidCell { cell } => target.cell == *cell,
            FeasibilityRule::RequireFormationForMove {
                cell,
                directions,
                formation,
            } => {
                target.cell == *cell
                    && directions.contains(&mv)
                    && catalog.index_of(formation).ok() != Some(target.formation)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// When false, formation switches are only allowed together with `stay`.
    pub allow_switch_while_moving: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            allow_switch_while_moving: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dfts {
    states: Vec<DftsState>,
    index: HashMap<DftsState, usize>,
    initial: usize,
    actions: Vec<Action>,
    formation_ids: Vec<String>,
    /// `states.len() x actions.len()` transition matrix.
    delta: Vec<Option<usize>>,
    labels: Vec<BTreeSet<String>>,
    candidate_states: usize,
}

pub fn build_dfts(
    world: &GridWorld,
    catalog: &FormationCatalog,
    rules: &[FeasibilityRule],
    initial: (Cell, &str),
    options: BuildOptions,
) -> Result<Dfts, AbstractionError> {
    for rule in rules {
        rule.validate(world, catalog)
            .map_err(|e| AbstractionError::BadRule(e.to_string()))?;
    }
    let nf = catalog.len();
    let mut actions = Vec::with_capacity(Move::ALL.len() * (nf + 1));
    for mv in Move::ALL {
        actions.push(Action {
            mv,
            change: FormationChange::Keep,
        });
        for f in 0..nf {
            actions.push(Action {
                mv,
                change: FormationChange::SwitchTo(f),
            });
        }
    }

    let mut states = Vec::new();
    let mut labels = Vec::new();
    for cell in world.cells().filter(|&c| !world.is_obstacle(c)) {
        for formation in 0..nf {
            states.push(DftsState { cell, formation });
            let mut l = world.label_w(cell)?.clone();
            l.extend(catalog.entries()[formation].labels.iter().cloned());
            labels.push(l);
        }
    }
    let index: HashMap<DftsState, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    let init_state = DftsState {
        cell: initial.0,
        formation: catalog.index_of(initial.1)?,
    };
    let describe = |s: DftsState| format!("{} / {}", s.cell, catalog.formation(s.formation).id());
    let Some(&init) = index.get(&init_state) else {
        return Err(AbstractionError::InitialEliminated(describe(init_state)));
    };
    if rules.iter().any(|r| r.forbids(Move::Stay, init_state, catalog)) {
        return Err(AbstractionError::InitialEliminated(describe(init_state)));
    }

    let na = actions.len();
    let mut delta = vec![None; states.len() * na];
    for (si, s) in states.iter().enumerate() {
        for (ai, a) in actions.iter().enumerate() {
            let formation = match a.change {
                FormationChange::Keep => s.formation,
                FormationChange::SwitchTo(f) if f == s.formation => continue,
                FormationChange::SwitchTo(_) if a.mv != Move::Stay && !options.allow_switch_while_moving => continue,
                FormationChange::SwitchTo(f) => f,
            };
            let Some(cell) = a.mv.apply(s.cell, world) else {
                continue;
            };
            let target = DftsState { cell, formation };
            // obstacle cells have no state
            let Some(&ti) = index.get(&target) else {
                continue;
            };
            if rules.iter().any(|r| r.forbids(a.mv, target, catalog)) {
                continue;
            }
            delta[si * na + ai] = Some(ti);
        }
    }

    Ok(Dfts {
        states,
        index,
        initial: init,
        actions,
        formation_ids: catalog.entries().iter().map(|e| e.formation.id().to_string()).collect(),
        delta,
        labels,
        candidate_states: world.cells().count() * nf,
    })
}

/// Builds the DFTS described by a world file.
pub fn build_from_config(cfg: &WorldConfig) -> Result<Dfts, AbstractionError> {
    let (cell, formation) = cfg.initial.as_ref().ok_or(AbstractionError::MissingInitial)?;
    build_dfts(
        &cfg.world,
        &cfg.catalog,
        &cfg.rules,
        (*cell, formation),
        BuildOptions {
            allow_switch_while_moving: cfg.allow_switch_while_moving,
        },
    )
}

impl Dfts {
    pub fn states(&self) -> &[DftsState] {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, s: DftsState) -> Option<usize> {
        self.index.get(&s).copied()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Size of the full cell x formation product before obstacle removal.
    pub fn candidate_states(&self) -> usize {
        self.candidate_states
    }

    pub fn formation_ids(&self) -> &[String] {
        &self.formation_ids
    }

    pub fn labels(&self, state: usize) -> &BTreeSet<String> {
        &self.labels[state]
    }

    pub fn delta(&self, state: usize, action: usize) -> Option<usize> {
        self.delta.get(state * self.actions.len() + action).copied().flatten()
    }

    /// Defined transitions from `state`, in action order.
    pub fn successors(&self, state: usize) -> Vec<(usize, usize)> {
        let na = self.actions.len();
        self.delta[state * na..(state + 1) * na]
            .iter()
            .enumerate()
            .filter_map(|(a, t)| t.map(|t| (a, t)))
            .collect()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let na = self.actions.len();
        self.delta
            .iter()
            .enumerate()
            .filter_map(move |(k, t)| t.map(|t| (k / na, k % na, t)))
    }

    /// Copy of `self` without the transition `(state, action)`.
    pub fn prune_transition(&self, state: usize, action: usize) -> Result<Dfts, AbstractionError> {
        if self.delta(state, action).is_none() {
            return Err(AbstractionError::UnknownTransition { state, action });
        }
        let mut next = self.clone();
        next.delta[state * self.actions.len() + action] = None;
        Ok(next)
    }

    /// States without any outgoing transition.
    pub fn dead_ends(&self) -> Vec<usize> {
        (0..self.states.len())
            .filter(|&s| self.successors(s).is_empty())
            .collect()
    }

    pub fn action_name(&self, action: usize) -> String {
        let a = self.actions[action];
        match a.change {
            FormationChange::Keep => format!("{}/keep", a.mv.name()),
            FormationChange::SwitchTo(f) => format!("{}/{}", a.mv.name(), self.formation_ids[f]),
        }
    }

    pub fn action_by_name(&self, name: &str) -> Option<usize> {
        (0..self.actions.len()).find(|&a| self.action_name(a) == name)
    }

    pub fn describe_state(&self, state: usize) -> String {
        let s = self.states[state];
        format!("{}/{}", s.cell, self.formation_ids[s.formation])
    }

    pub fn export(&self) -> DftsExport {
        DftsExport {
            states: self
                .states
                .iter()
                .zip(&self.labels)
                .map(|(s, l)| ExportedState {
                    cell: s.cell,
                    formation: self.formation_ids[s.formation].clone(),
                    labels: l.iter().cloned().collect(),
                })
                .collect(),
            initial: self.initial,
            actions: (0..self.actions.len()).map(|a| self.action_name(a)).collect(),
            transitions: self.transitions().map(|(s, a, t)| [s, a, t]).collect(),
            delta_matrix: (0..self.states.len())
                .map(|s| (0..self.actions.len()).map(|a| self.delta(s, a)).collect())
                .collect(),
        }
    }

    /// True when `states` lists exactly this DFTS's states in order.
    pub fn matches_states(&self, states: &[ExportedState]) -> bool {
        states.len() == self.states.len()
            && states.iter().zip(&self.states).all(|(e, s)| {
                e.cell == s.cell && e.formation == self.formation_ids[s.formation]
            })
    }
}

impl fmt::Display for Dfts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DFTS: {} states, {} actions, {} transitions, initial {}",
            self.states.len(),
            self.actions.len(),
            self.transitions().count(),
            self.describe_state(self.initial)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedState {
    pub cell: Cell,
    pub formation: String,
    pub labels: Vec<String>,
}

/// Structured dump of a DFTS: state list, action names, `[state, action,
/// target]` triples and the full `state x action` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DftsExport {
    pub states: Vec<ExportedState>,
    pub initial: usize,
    pub actions: Vec<String>,
    pub transitions: Vec<[usize; 3]>,
    pub delta_matrix: Vec<Vec<Option<usize>>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Formation, Vec2};
    use crate::world::CatalogEntry;

    fn catalog(n: usize) -> FormationCatalog {
        let shapes = [
            ("h", [Vec2::new(-0.45, 0.0), Vec2::ZERO, Vec2::new(0.45, 0.0)]),
            ("v", [Vec2::new(0.0, 0.45), Vec2::ZERO, Vec2::new(0.0, -0.45)]),
            ("t", [Vec2::new(0.0, 0.4), Vec2::new(-0.4, -0.2), Vec2::new(0.4, -0.2)]),
        ];
        FormationCatalog::new(
            shapes[..n]
                .iter()
                .map(|(id, o)| CatalogEntry {
                    formation: Formation::from_offsets(*id, o).unwrap(),
                    labels: BTreeSet::from([id.to_string()]),
                })
                .collect(),
        )
        .unwrap()
    }

    fn open(rows: usize, cols: usize) -> GridWorld {
        GridWorld::from_label_strings(rows, cols, 1.0, Vec2::ZERO, &vec!["freespace"; rows * cols], vec![]).unwrap()
    }

    #[test]
    fn single_cell_single_formation() {
        let d = build_dfts(&open(1, 1), &catalog(1), &[], (Cell::new(0, 0), "h"), BuildOptions::default()).unwrap();
        assert_eq!(d.num_states(), 1);
        assert_eq!(d.successors(0), vec![(0, 0)]);
        assert_eq!(d.action_name(0), "stay/keep");
    }

    #[test]
    fn interior_and_corner_successors() {
        let w = open(3, 3);
        let d = build_dfts(&w, &catalog(3), &[], (Cell::new(1, 1), "h"), BuildOptions::default()).unwrap();
        assert_eq!(d.num_states(), 27);
        let centre = d.state_index(DftsState { cell: Cell::new(1, 1), formation: 0 }).unwrap();
        assert_eq!(d.successors(centre).len(), 15);
        let corner = d.state_index(DftsState { cell: Cell::new(0, 0), formation: 2 }).unwrap();
        let succ = d.successors(corner);
        // stay, north, east, each with 3 formation outcomes
        assert_eq!(succ.len(), 9);
        for (_, t) in succ {
            let c = d.states()[t].cell;
            assert!(c.x <= 1 && c.y <= 1);
        }
    }

    #[test]
    fn switch_only_while_staying() {
        let opts = BuildOptions {
            allow_switch_while_moving: false,
        };
        let d = build_dfts(&open(3, 3), &catalog(3), &[], (Cell::new(1, 1), "h"), opts).unwrap();
        let centre = d.state_index(DftsState { cell: Cell::new(1, 1), formation: 0 }).unwrap();
        // 4 moves keep + stay keep + 2 switches in place
        assert_eq!(d.successors(centre).len(), 7);
    }

    #[test]
    fn rules_remove_transitions() {
        let w = open(3, 3);
        let cat = catalog(3);
        let rules = vec![
            FeasibilityRule::ForbidFormationInCell {
                cell: Cell::new(1, 0),
                formation: "t".into(),
            },
            FeasibilityRule::RequireFormationForMove {
                cell: Cell::new(2, 2),
                directions: vec![Move::East],
                formation: "h".into(),
            },
            FeasibilityRule::ForbidCell { cell: Cell::new(0, 2) },
        ];
        let d = build_dfts(&w, &cat, &rules, (Cell::new(1, 1), "h"), BuildOptions::default()).unwrap();
        for (s, a, t) in d.transitions() {
            let target = d.states()[t];
            assert!(!(target.cell == Cell::new(1, 0) && target.formation == 2));
            assert_ne!(target.cell, Cell::new(0, 2));
            if target.cell == Cell::new(2, 2) && d.actions()[a].mv == Move::East {
                assert_eq!(target.formation, 0, "from {}", d.describe_state(s));
            }
        }
        // entering (2,2) from the south with the vertical formation is still fine
        let from = d.state_index(DftsState { cell: Cell::new(2, 1), formation: 1 }).unwrap();
        assert!(d
            .successors(from)
            .iter()
            .any(|&(_, t)| d.states()[t] == DftsState { cell: Cell::new(2, 2), formation: 1 }));

        let err = build_dfts(&w, &cat, &rules, (Cell::new(1, 0), "t"), BuildOptions::default());
        assert!(matches!(err, Err(AbstractionError::InitialEliminated(_))));
        let bad = [FeasibilityRule::ForbidCell { cell: Cell::new(7, 7) }];
        assert!(matches!(
            build_dfts(&w, &cat, &bad, (Cell::new(1, 1), "h"), BuildOptions::default()),
            Err(AbstractionError::BadRule(_))
        ));
    }

    #[test]
    fn pruning() {
        let d = build_dfts(&open(2, 2), &catalog(2), &[], (Cell::new(0, 0), "h"), BuildOptions::default()).unwrap();
        let (a, _) = d.successors(0)[1];
        let p = d.prune_transition(0, a).unwrap();
        assert_eq!(p.delta(0, a), None);
        assert!(matches!(p.prune_transition(0, a), Err(AbstractionError::UnknownTransition { .. })));
        let before: BTreeSet<_> = d.transitions().collect();
        let after: BTreeSet<_> = p.transitions().collect();
        assert!(after.is_subset(&before));
        assert_eq!(before.difference(&after).count(), 1);

        let mut dead = d.clone();
        for (a, _) in d.successors(0) {
            dead = dead.prune_transition(0, a).unwrap();
        }
        assert_eq!(dead.dead_ends(), vec![0]);
    }

    #[test]
    fn export_lists_every_transition() {
        let d = build_dfts(&open(2, 2), &catalog(2), &[], (Cell::new(0, 0), "h"), BuildOptions::default()).unwrap();
        let e = d.export();
        assert_eq!(e.transitions.len(), d.transitions().count());
        assert!(d.matches_states(&e.states));
        assert_eq!(e.delta_matrix.len(), d.num_states());
        let json = serde_json::to_string(&e).unwrap();
        let back: DftsExport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        assert_eq!(d.action_by_name("east/v"), Some(d.action_by_name("east/keep").unwrap() + 2));
    }
}
