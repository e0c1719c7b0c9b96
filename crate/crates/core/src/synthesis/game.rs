use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;

use super::SynthesisError;
use crate::abstraction::Dfts;
use crate::spec::{Gr1Spec, PropFormula, Valuation};
use crate::world::EnvValuation;

/// Environment variables are enumerated explicitly; beyond this the game
/// would not fit in memory anyway.
pub const MAX_ENV_VARS: usize = 16;

/// Explicit two-player game over positions `(system state, env valuation)`.
///
/// One round from position `(s, e)`: the environment picks `e'` from
/// `env_moves(s, e)`, then the system picks `(action, s')` from
/// `sys_moves(s, e')`, landing in `(s', e')`. Positions are numbered
/// `s * n_env + e`.
#[derive(Debug, Clone)]
pub struct GameStructure {
    n_states: usize,
    n_env: usize,
    env_moves: Vec<Vec<u32>>,
    sys_moves: Vec<Vec<(u32, u32)>>,
    env_justice: Vec<FixedBitSet>,
    sys_justice: Vec<FixedBitSet>,
    safe: FixedBitSet,
    initial: Vec<usize>,
    env_vars: Vec<String>,
    initial_violations: Vec<String>,
}

impl GameStructure {
    /// Assembles a game from explicit tables.
    ///
    /// `env_moves[p]` lists env valuations for position `p`; `sys_moves[s *
    /// n_env + e']` lists `(action, next state)` pairs; the justice sets are
    /// position sets. All positions are treated as safe.
    pub fn new(
        n_states: usize,
        n_env: usize,
        env_moves: Vec<Vec<u32>>,
        sys_moves: Vec<Vec<(u32, u32)>>,
        env_justice: Vec<FixedBitSet>,
        sys_justice: Vec<FixedBitSet>,
        initial: Vec<usize>,
    ) -> Result<Self, SynthesisError> {
        let n = n_states * n_env;
        let bad = |m: &str| Err(SynthesisError::MalformedGame(m.to_string()));
        if n == 0 {
            return bad("game has no positions");
        }
        if env_moves.len() != n || sys_moves.len() != n {
            return bad("move tables must have one entry per position");
        }
        if env_moves.iter().flatten().any(|&e| e as usize >= n_env) {
            return bad("env move out of range");
        }
        if sys_moves.iter().flatten().any(|&(_, s)| s as usize >= n_states) {
            return bad("system move out of range");
        }
        if env_justice.iter().chain(&sys_justice).any(|j| j.len() != n) {
            return bad("justice sets must cover all positions");
        }
        if env_justice.is_empty() || sys_justice.is_empty() {
            return bad("justice lists must be non-empty (use `true`)");
        }
        if initial.iter().any(|&p| p >= n) {
            return bad("initial position out of range");
        }
        let mut safe = FixedBitSet::with_capacity(n);
        safe.insert_range(..);
        Ok(GameStructure {
            n_states,
            n_env,
            env_moves,
            sys_moves,
            env_justice,
            sys_justice,
            safe,
            initial,
            env_vars: Vec::new(),
            initial_violations: Vec::new(),
        })
    }

    /// Builds the game for `spec` over the abstraction `dfts`. The caller is
    /// expected to have checked the spec's atoms against the world.
    pub fn from_dfts(dfts: &Dfts, spec: &Gr1Spec) -> Result<Self, SynthesisError> {
        if spec.env_vars.len() > MAX_ENV_VARS {
            return Err(SynthesisError::TooManyEnvVars(spec.env_vars.len()));
        }
        let n_states = dfts.num_states();
        let n_env = 1usize << spec.env_vars.len();
        let n = n_states * n_env;

        let mut sys_atoms: BTreeSet<String> = (0..n_states).flat_map(|s| dfts.labels(s).iter().cloned()).collect();
        let all_formulas = std::iter::once(&spec.env_init)
            .chain(&spec.env_safety)
            .chain(&spec.env_justice)
            .chain(std::iter::once(&spec.sys_init))
            .chain(&spec.sys_safety)
            .chain(&spec.sys_justice);
        for f in all_formulas {
            sys_atoms.extend(f.current_atoms().into_iter().filter(|a| !spec.env_vars.contains(a)));
        }
        let env_vals: Vec<EnvValuation> = (0..n_env).map(|b| EnvValuation::from_bits(&spec.env_vars, b)).collect();
        let valuation = |s: usize, e: usize| -> Valuation {
            let labels = dfts.labels(s);
            let mut v: Valuation = sys_atoms.iter().map(|a| (a.clone(), labels.contains(a))).collect();
            v.extend(env_vals[e].0.iter().map(|(k, b)| (k.clone(), *b)));
            v
        };
        let holds_all = |fs: &[PropFormula], v: &Valuation, next: Option<&Valuation>| {
            fs.iter().try_fold(true, |acc, f| Ok::<_, SynthesisError>(acc && f.eval(v, next)?))
        };

        let mut env_moves = vec![Vec::new(); n];
        let mut safe = FixedBitSet::with_capacity(n);
        let mut env_justice = vec![FixedBitSet::with_capacity(n); spec.env_justice.len()];
        let mut sys_justice = vec![FixedBitSet::with_capacity(n); spec.sys_justice.len()];
        for s in 0..n_states {
            for e in 0..n_env {
                let p = s * n_env + e;
                let v = valuation(s, e);
                for (e2, next) in env_vals.iter().enumerate() {
                    if holds_all(&spec.env_safety, &v, Some(&next.0))? {
                        env_moves[p].push(e2 as u32);
                    }
                }
                safe.set(p, holds_all(&spec.sys_safety, &v, None)?);
                for (set, f) in env_justice.iter_mut().zip(&spec.env_justice) {
                    set.set(p, f.eval(&v, None)?);
                }
                for (set, f) in sys_justice.iter_mut().zip(&spec.sys_justice) {
                    set.set(p, f.eval(&v, None)?);
                }
            }
        }

        let mut sys_moves = vec![Vec::new(); n];
        for s in 0..n_states {
            let succ = dfts.successors(s);
            for e2 in 0..n_env {
                sys_moves[s * n_env + e2] = succ
                    .iter()
                    .filter(|&&(_, t)| safe.contains(t * n_env + e2))
                    .map(|&(a, t)| (a as u32, t as u32))
                    .collect();
            }
        }

        let s0 = dfts.initial();
        let mut initial = Vec::new();
        let mut initial_violations = Vec::new();
        for e in 0..n_env {
            let v = valuation(s0, e);
            if !spec.env_init.eval(&v, None)? {
                continue;
            }
            let p = s0 * n_env + e;
            if !spec.sys_init.eval(&v, None)? {
                initial_violations.push(format!("{} with {} violates SYS_INIT", dfts.describe_state(s0), env_vals[e]));
            } else if !safe.contains(p) {
                initial_violations.push(format!("{} with {} violates SYS_SAFETY", dfts.describe_state(s0), env_vals[e]));
            }
            initial.push(p);
        }
        if initial.is_empty() {
            initial_violations.push("ENV_INIT is unsatisfiable".to_string());
        }

        Ok(GameStructure {
            n_states,
            n_env,
            env_moves,
            sys_moves,
            env_justice,
            sys_justice,
            safe,
            initial,
            env_vars: spec.env_vars.clone(),
            initial_violations,
        })
    }

    pub fn num_positions(&self) -> usize {
        self.n_states * self.n_env
    }

    pub fn num_states(&self) -> usize {
        self.n_states
    }

    pub fn num_env(&self) -> usize {
        self.n_env
    }

    pub fn position(&self, state: usize, env: usize) -> usize {
        state * self.n_env + env
    }

    pub fn state_of(&self, p: usize) -> usize {
        p / self.n_env
    }

    pub fn env_of(&self, p: usize) -> usize {
        p % self.n_env
    }

    pub fn env_vars(&self) -> &[String] {
        &self.env_vars
    }

    pub fn env_valuation(&self, env: usize) -> EnvValuation {
        EnvValuation::from_bits(&self.env_vars, env)
    }

    pub fn env_moves(&self, p: usize) -> &[u32] {
        &self.env_moves[p]
    }

    /// System responses once the environment moved to `env` from `state`.
    pub fn sys_moves(&self, state: usize, env: usize) -> &[(u32, u32)] {
        &self.sys_moves[state * self.n_env + env]
    }

    pub fn env_justice(&self) -> &[FixedBitSet] {
        &self.env_justice
    }

    pub fn sys_justice(&self) -> &[FixedBitSet] {
        &self.sys_justice
    }

    pub fn safe(&self) -> &FixedBitSet {
        &self.safe
    }

    pub fn initial(&self) -> &[usize] {
        &self.initial
    }

    /// Problems with the initial positions (SYS_INIT / SYS_SAFETY violated,
    /// ENV_INIT unsatisfiable); any entry makes the game unrealizable.
    pub fn initial_violations(&self) -> &[String] {
        &self.initial_violations
    }

    /// Positions where the environment assumptions leave no legal move.
    pub fn blocking_positions(&self) -> Vec<usize> {
        (0..self.num_positions()).filter(|&p| self.env_moves[p].is_empty()).collect()
    }

    pub fn full_set(&self) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(self.num_positions());
        s.insert_range(..);
        s
    }

    pub fn empty_set(&self) -> FixedBitSet {
        FixedBitSet::with_capacity(self.num_positions())
    }

    /// Controllable predecessor: positions where the environment has at
    /// least one move and every env move can be answered by a system move
    /// into `target`.
    pub fn cpre(&self, target: &FixedBitSet) -> FixedBitSet {
        let n = self.num_positions();
        let mut answerable = FixedBitSet::with_capacity(n);
        for s in 0..self.n_states {
            for e2 in 0..self.n_env {
                let k = s * self.n_env + e2;
                if self.sys_moves[k]
                    .iter()
                    .any(|&(_, t)| target.contains(t as usize * self.n_env + e2))
                {
                    answerable.insert(k);
                }
            }
        }
        let mut out = FixedBitSet::with_capacity(n);
        for p in 0..n {
            let s = p / self.n_env;
            let moves = &self.env_moves[p];
            if !moves.is_empty() && moves.iter().all(|&e2| answerable.contains(s * self.n_env + e2 as usize)) {
                out.insert(p);
            }
        }
        out
    }
}
