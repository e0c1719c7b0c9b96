use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::spec::Gr1Spec;
use crate::world::EnvValuation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Values set at given steps; unset variables keep their previous
    /// effective value.
    Scripted { events: BTreeMap<usize, BTreeMap<String, bool>> },
    /// Pre-drawn proposals, one per step.
    Random { falsify_prob: f64, proposals: Vec<usize> },
}

/// Source of environment valuations. Proposals are reconciled with the
/// environment assumptions at run time by [`EnvSchedule::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSchedule {
    pub vars: Vec<String>,
    pub mode: ScheduleMode,
}

impl EnvSchedule {
    pub fn scripted(vars: Vec<String>, events: BTreeMap<usize, BTreeMap<String, bool>>) -> Result<Self, SimError> {
        for (step, ev) in &events {
            if let Some(v) = ev.keys().find(|v| !vars.contains(v)) {
                return Err(SimError::Schedule(format!("step {step}: unknown environment variable `{v}`")));
            }
        }
        Ok(EnvSchedule {
            vars,
            mode: ScheduleMode::Scripted { events },
        })
    }

    /// All variables true at every step.
    pub fn always_true(vars: Vec<String>) -> Self {
        EnvSchedule {
            vars,
            mode: ScheduleMode::Scripted { events: BTreeMap::new() },
        }
    }

    fn all_true(&self) -> usize {
        (1usize << self.vars.len()) - 1
    }

    /// Proposed valuation bits for `step`, given the previous effective bits.
    pub fn proposal(&self, step: usize, previous: Option<usize>) -> usize {
        match &self.mode {
            ScheduleMode::Scripted { events } => {
                let mut bits = previous.unwrap_or_else(|| self.all_true());
                if let Some(ev) = events.get(&step) {
                    for (k, var) in self.vars.iter().enumerate() {
                        if let Some(&b) = ev.get(var) {
                            bits = if b { bits | 1 << k } else { bits & !(1 << k) };
                        }
                    }
                }
                bits
            }
            ScheduleMode::Random { proposals, .. } => proposals.get(step).copied().unwrap_or_else(|| self.all_true()),
        }
    }

    /// The allowed valuation closest (Hamming distance, then lowest bits) to
    /// the proposal for `step`.
    pub fn resolve(&self, step: usize, previous: Option<usize>, allowed: &[u32]) -> Option<usize> {
        let want = self.proposal(step, previous);
        allowed
            .iter()
            .map(|&e| e as usize)
            .min_by_key(|&e| ((e ^ want).count_ones(), e))
    }

    pub fn valuation(&self, bits: usize) -> EnvValuation {
        EnvValuation::from_bits(&self.vars, bits)
    }
}

/// Random schedule of `length` steps: each variable is proposed false with
/// probability `falsify_prob`, independently per step.
pub fn generate_schedule(spec: &Gr1Spec, seed: u64, length: usize, falsify_prob: f64) -> Result<EnvSchedule, SimError> {
    if !(0.0..=1.0).contains(&falsify_prob) {
        return Err(SimError::Schedule(format!("falsify probability {falsify_prob} is outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = spec.env_vars.len();
    let proposals = (0..=length)
        .map(|_| (0..nv).filter(|_| !rng.random_bool(falsify_prob)).fold(0, |acc, k| acc | 1 << k))
        .collect();
    Ok(EnvSchedule {
        vars: spec.env_vars.clone(),
        mode: ScheduleMode::Random { falsify_prob, proposals },
    })
}

/// Parses lines of the form `step=K var=bool [var=bool ...]`; `#` starts a
/// comment.
pub fn parse_env_script(text: &str, vars: &[String]) -> Result<EnvSchedule, SimError> {
    let mut events: BTreeMap<usize, BTreeMap<String, bool>> = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| SimError::Schedule(format!("line {}: {m}", no + 1));
        let mut step = None;
        let mut values = BTreeMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| err(format!("expected key=value, found `{tok}`")))?;
            if k == "step" {
                step = Some(v.parse::<usize>().map_err(|_| err(format!("bad step `{v}`")))?);
            } else {
                let b = match v {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(err(format!("bad boolean `{v}`"))),
                };
                values.insert(k.to_string(), b);
            }
        }
        let step = step.ok_or_else(|| err("missing step=K".into()))?;
        events.entry(step).or_default().extend(values);
    }
    EnvSchedule::scripted(vars.to_vec(), events)
}
