//! Grid workspace, cell and formation labels, obstacle ellipses and the
//! JSON world-file format.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::FeasibilityRule;
use crate::geometry::{Formation, GeomError, ObstacleEllipse, Vec2};
use crate::spec::Valuation;

pub const FREESPACE: &str = "freespace";
pub const HOME: &str = "home";
pub const GOAL: &str = "goal";
pub const OBSTACLE: &str = "obstacle";
pub const PRIMARY_LABELS: [&str; 4] = [FREESPACE, HOME, GOAL, OBSTACLE];

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cell {0} is outside the {1}x{2} grid")]
    CellOutOfRange(Cell, usize, usize),
    #[error("cell {0} is an obstacle")]
    ObstacleCell(Cell),
    #[error("point {0} is outside the workspace")]
    PointOutOfBounds(Vec2),
    #[error("unknown formation `{0}`")]
    UnknownFormation(String),
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("world file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Grid cell addressed by column `x` and row `y`; row 0 is at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }
}

impl From<[usize; 2]> for Cell {
    fn from(a: [usize; 2]) -> Self {
        Cell::new(a[0], a[1])
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: Vec2,
    /// Row-major, `y * cols + x`.
    cell_labels: Vec<BTreeSet<String>>,
    obstacles: Vec<ObstacleEllipse>,
}

impl GridWorld {
    pub fn new(
        rows: usize,
        cols: usize,
        cell_size: f64,
        origin: Vec2,
        cell_labels: Vec<BTreeSet<String>>,
        obstacles: Vec<ObstacleEllipse>,
    ) -> Result<Self, WorldError> {
        if rows == 0 || cols == 0 {
            return Err(WorldError::Invalid("grid needs at least one cell".into()));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) || !origin.is_finite() {
            return Err(WorldError::Invalid("cell size must be positive and finite".into()));
        }
        if cell_labels.len() != rows * cols {
            return Err(WorldError::Invalid(format!(
                "expected {} cell labels, got {}",
                rows * cols,
                cell_labels.len()
            )));
        }
        let world = GridWorld {
            rows,
            cols,
            cell_size,
            origin,
            cell_labels,
            obstacles,
        };
        for cell in world.cells() {
            let labels = world.label_w(cell)?;
            let primary: Vec<_> = labels.iter().filter(|l| PRIMARY_LABELS.contains(&l.as_str())).collect();
            if primary.len() != 1 {
                return Err(WorldError::Invalid(format!(
                    "cell {cell} needs exactly one of {PRIMARY_LABELS:?}, has {primary:?}"
                )));
            }
            if labels.contains(OBSTACLE) {
                let center = world.cell_center(cell);
                if !world.obstacles.iter().any(|e| e.h(center) > 0.0) {
                    return Err(WorldError::Invalid(format!(
                        "obstacle cell {cell} is not covered by any obstacle ellipse"
                    )));
                }
            }
        }
        Ok(world)
    }

    /// Convenience constructor from one label string per cell (row-major,
    /// extras joined with `+`).
    pub fn from_label_strings(
        rows: usize,
        cols: usize,
        cell_size: f64,
        origin: Vec2,
        labels: &[&str],
        obstacles: Vec<ObstacleEllipse>,
    ) -> Result<Self, WorldError> {
        let labels = labels.iter().map(|s| split_labels(s)).collect();
        GridWorld::new(rows, cols, cell_size, origin, labels, obstacles)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn obstacles(&self) -> &[ObstacleEllipse] {
        &self.obstacles
    }

    /// Lower-left and upper-right corners of the workspace.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let extent = Vec2::new(self.cols as f64, self.rows as f64) * self.cell_size;
        (self.origin, self.origin + extent)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |y| (0..self.cols).map(move |x| Cell::new(x, y)))
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.cols && cell.y < self.rows
    }

    fn index(&self, cell: Cell) -> Result<usize, WorldError> {
        if self.contains(cell) {
            Ok(cell.y * self.cols + cell.x)
        } else {
            Err(WorldError::CellOutOfRange(cell, self.cols, self.rows))
        }
    }

    pub fn is_obstacle(&self, cell: Cell) -> bool {
        self.index(cell)
            .map(|i| self.cell_labels[i].contains(OBSTACLE))
            .unwrap_or(false)
    }

    fn cell_center(&self, cell: Cell) -> Vec2 {
        self.origin + Vec2::new(cell.x as f64 + 0.5, cell.y as f64 + 0.5) * self.cell_size
    }

    /// Centroid target for a cell: its geometric center.
    pub fn waypoint_of_cell(&self, cell: Cell) -> Result<Vec2, WorldError> {
        self.index(cell)?;
        if self.is_obstacle(cell) {
            return Err(WorldError::ObstacleCell(cell));
        }
        Ok(self.cell_center(cell))
    }

    /// Cell containing `p`; points on an interior boundary belong to the cell
    /// with the larger index (floor), the outer upper edge to the last cell.
    pub fn cell_of_point(&self, p: Vec2) -> Result<Cell, WorldError> {
        let (lo, hi) = self.bounds();
        if !p.is_finite() || p.x < lo.x || p.y < lo.y || p.x > hi.x || p.y > hi.y {
            return Err(WorldError::PointOutOfBounds(p));
        }
        let rel = (p - self.origin) * (1.0 / self.cell_size);
        let x = (rel.x.floor() as usize).min(self.cols - 1);
        let y = (rel.y.floor() as usize).min(self.rows - 1);
        Ok(Cell::new(x, y))
    }

    pub fn label_w(&self, cell: Cell) -> Result<&BTreeSet<String>, WorldError> {
        Ok(&self.cell_labels[self.index(cell)?])
    }

    pub fn workspace_atoms(&self) -> BTreeSet<String> {
        let mut atoms: BTreeSet<String> = PRIMARY_LABELS.iter().map(|s| s.to_string()).collect();
        for l in &self.cell_labels {
            atoms.extend(l.iter().cloned());
        }
        atoms
    }
}

fn split_labels(s: &str) -> BTreeSet<String> {
    s.split('+').map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub formation: Formation,
    pub labels: BTreeSet<String>,
}

/// The finite formation set with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationCatalog {
    entries: Vec<CatalogEntry>,
}

impl FormationCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, WorldError> {
        let Some(first) = entries.first() else {
            return Err(WorldError::Invalid("formation catalog is empty".into()));
        };
        let r = first.formation.robots();
        let mut ids = BTreeSet::new();
        for e in &entries {
            if e.formation.robots() != r {
                return Err(WorldError::Invalid(format!(
                    "formation {} is for {} robots, expected {r}",
                    e.formation.id(),
                    e.formation.robots()
                )));
            }
            if !ids.insert(e.formation.id().to_string()) {
                return Err(WorldError::Invalid(format!("formation id {} repeated", e.formation.id())));
            }
        }
        Ok(Self { entries })
    }

    pub fn robots(&self) -> usize {
        self.entries[0].formation.robots()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn formation(&self, index: usize) -> &Formation {
        &self.entries[index].formation
    }

    pub fn index_of(&self, id: &str) -> Result<usize, WorldError> {
        self.entries
            .iter()
            .position(|e| e.formation.id() == id)
            .ok_or_else(|| WorldError::UnknownFormation(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<&Formation, WorldError> {
        Ok(self.formation(self.index_of(id)?))
    }

    pub fn label_f(&self, id: &str) -> Result<&BTreeSet<String>, WorldError> {
        Ok(&self.entries[self.index_of(id)?].labels)
    }

    pub fn formation_atoms(&self) -> BTreeSet<String> {
        self.entries.iter().flat_map(|e| e.labels.iter().cloned()).collect()
    }
}

/// Truth values of the environment propositions at one symbolic step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvValuation(pub Valuation);

impl EnvValuation {
    /// Valuation whose bit `k` is `vars[k]`.
    pub fn from_bits(vars: &[String], bits: usize) -> Self {
        EnvValuation(
            vars.iter()
                .enumerate()
                .map(|(k, v)| (v.clone(), bits >> k & 1 == 1))
                .collect(),
        )
    }

    pub fn to_bits(&self, vars: &[String]) -> usize {
        vars.iter()
            .enumerate()
            .filter(|(_, v)| self.0.get(*v).copied().unwrap_or(false))
            .fold(0, |acc, (k, _)| acc | 1 << k)
    }

    pub fn get(&self, var: &str) -> Option<bool> {
        self.0.get(var).copied()
    }
}

impl fmt::Display for EnvValuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// The environment propositions that hold.
pub fn label_e(v: &EnvValuation) -> BTreeSet<String> {
    v.0.iter().filter(|(_, &b)| b).map(|(k, _)| k.clone()).collect()
}

/// Everything a world file describes.
#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub world: GridWorld,
    pub catalog: FormationCatalog,
    pub rules: Vec<FeasibilityRule>,
    pub initial: Option<(Cell, String)>,
    pub allow_switch_while_moving: bool,
}

#[derive(Serialize, Deserialize)]
struct FormationPairFile {
    i: usize,
    j: usize,
    d: Vec2,
}

#[derive(Serialize, Deserialize)]
struct FormationFile {
    id: String,
    #[serde(default)]
    labels: Option<Vec<String>>,
    displacements: Vec<FormationPairFile>,
}

#[derive(Serialize, Deserialize)]
struct InitialFile {
    cell: Cell,
    formation: String,
}

fn default_true() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: Vec2,
    cells: Vec<String>,
    #[serde(default)]
    obstacles: Vec<ObstacleEllipse>,
    formations: Vec<FormationFile>,
    #[serde(default)]
    rules: Vec<FeasibilityRule>,
    #[serde(default)]
    initial: Option<InitialFile>,
    #[serde(default = "default_true")]
    allow_switch_while_moving: bool,
}

impl WorldConfig {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: WorldFile = serde_json::from_str(text)?;
        let labels = file.cells.iter().map(|s| split_labels(s)).collect();
        let world = GridWorld::new(file.rows, file.cols, file.cell_size, file.origin, labels, file.obstacles)?;
        let robots = file
            .formations
            .iter()
            .flat_map(|f| f.displacements.iter().flat_map(|d| [d.i, d.j]))
            .max()
            .map_or(0, |m| m + 1);
        let entries = file
            .formations
            .into_iter()
            .map(|f| {
                let formation =
                    Formation::new(&f.id, robots, f.displacements.iter().map(|d| ((d.i, d.j), d.d)))?;
                let labels = f.labels.unwrap_or_else(|| vec![f.id.clone()]).into_iter().collect();
                Ok(CatalogEntry { formation, labels })
            })
            .collect::<Result<Vec<_>, WorldError>>()?;
        let catalog = FormationCatalog::new(entries)?;
        let atoms = world.workspace_atoms();
        if let Some(clash) = catalog.formation_atoms().intersection(&atoms).next() {
            return Err(WorldError::Invalid(format!("`{clash}` is both a cell and a formation label")));
        }
        for rule in &file.rules {
            rule.validate(&world, &catalog)?;
        }
        let initial = match file.initial {
            Some(i) => {
                world.waypoint_of_cell(i.cell)?;
                catalog.index_of(&i.formation)?;
                Some((i.cell, i.formation))
            }
            None => None,
        };
        Ok(WorldConfig {
            world,
            catalog,
            rules: file.rules,
            initial,
            allow_switch_while_moving: file.allow_switch_while_moving,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorldError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// All system propositions: cell labels and formation labels.
    pub fn sys_atoms(&self) -> BTreeSet<String> {
        let mut a = self.world.workspace_atoms();
        a.extend(self.catalog.formation_atoms());
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat2;

    fn five_by_five() -> GridWorld {
        let mut labels = vec!["freespace"; 25];
        labels[0] = "home";
        labels[24] = "goal";
        labels[12] = "obstacle+red";
        let obstacles = vec![ObstacleEllipse::new(Vec2::new(2.5, 2.5), Mat2::diag(4.0, 4.0)).unwrap()];
        GridWorld::from_label_strings(5, 5, 1.0, Vec2::ZERO, &labels, obstacles).unwrap()
    }

    #[test]
    fn waypoints_are_cell_centers() {
        let w = five_by_five();
        assert_eq!(w.waypoint_of_cell(Cell::new(0, 0)).unwrap(), Vec2::new(0.5, 0.5));
        assert_eq!(w.waypoint_of_cell(Cell::new(4, 4)).unwrap(), Vec2::new(4.5, 4.5));
        assert!(matches!(w.waypoint_of_cell(Cell::new(2, 2)), Err(WorldError::ObstacleCell(_))));
        assert!(matches!(w.waypoint_of_cell(Cell::new(5, 0)), Err(WorldError::CellOutOfRange(..))));
    }

    #[test]
    fn point_lookup_uses_floor() {
        let w = five_by_five();
        assert_eq!(w.cell_of_point(Vec2::new(0.5, 0.5)).unwrap(), Cell::new(0, 0));
        assert_eq!(w.cell_of_point(Vec2::new(1.0, 0.5)).unwrap(), Cell::new(1, 0));
        assert_eq!(w.cell_of_point(Vec2::new(5.0, 5.0)).unwrap(), Cell::new(4, 4));
        assert!(w.cell_of_point(Vec2::new(5.1, 0.0)).is_err());
        assert!(w.cell_of_point(Vec2::new(-0.1, 0.0)).is_err());
    }

    #[test]
    fn cell_and_point_are_inverse_on_centres() {
        let w = five_by_five();
        for c in w.cells().filter(|&c| !w.is_obstacle(c)) {
            assert_eq!(w.cell_of_point(w.waypoint_of_cell(c).unwrap()).unwrap(), c);
        }
    }

    #[test]
    fn labels() {
        let w = five_by_five();
        assert_eq!(w.label_w(Cell::new(0, 0)).unwrap(), &BTreeSet::from(["home".to_string()]));
        assert!(w.label_w(Cell::new(2, 2)).unwrap().contains("red"));
        assert!(w.workspace_atoms().contains("red"));
        let v = EnvValuation([("battery".to_string(), true), ("rain".to_string(), false)].into());
        assert_eq!(label_e(&v), BTreeSet::from(["battery".to_string()]));
    }

    #[test]
    fn invalid_worlds_are_rejected() {
        // two primary labels
        let mut labels = vec!["freespace"; 4];
        labels[1] = "home+goal";
        assert!(GridWorld::from_label_strings(2, 2, 1.0, Vec2::ZERO, &labels, vec![]).is_err());
        // uncovered obstacle cell
        labels[1] = "obstacle";
        assert!(GridWorld::from_label_strings(2, 2, 1.0, Vec2::ZERO, &labels, vec![]).is_err());
        // wrong count
        assert!(GridWorld::from_label_strings(2, 2, 1.0, Vec2::ZERO, &["freespace"], vec![]).is_err());
    }

    #[test]
    fn env_valuation_bits() {
        let vars = vec!["a".to_string(), "b".to_string()];
        for bits in 0..4 {
            assert_eq!(EnvValuation::from_bits(&vars, bits).to_bits(&vars), bits);
        }
        assert_eq!(EnvValuation::from_bits(&vars, 2).get("b"), Some(true));
    }
}
