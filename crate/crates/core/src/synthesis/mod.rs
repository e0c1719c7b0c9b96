//! GR(1) games over the abstraction: construction, the nested fixpoint
//! solver, strategy extraction and an independent strategy checker.

mod game;
mod solver;
mod strategy;
mod verify;

use thiserror::Error;

pub use game::{GameStructure, MAX_ENV_VARS};
pub use solver::{outer_step, reach_layers, solve_gr1, GoalLayers, Gr1Solution};
pub use strategy::{
    extract_strategy, ExportedNode, ExportedTransition, Strategy, StrategyEdge, StrategyFile, StrategyNode,
};
pub use verify::{verify_strategy, Lasso, VerificationReport};

use crate::abstraction::Dfts;
use crate::spec::{EvalError, Gr1Spec};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("specification is unrealizable: {0}")]
    InitialNotWinning(String),
    #[error("too many environment variables ({0}, at most {MAX_ENV_VARS})")]
    TooManyEnvVars(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("malformed game: {0}")]
    MalformedGame(String),
    #[error("malformed strategy: {0}")]
    MalformedStrategy(String),
    #[error("strategy does not match the game: {0}")]
    Mismatch(String),
    #[error("internal synthesis error: {0}")]
    Internal(String),
}

/// Everything produced by one synthesis run.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub game: GameStructure,
    pub solution: Gr1Solution,
    pub strategy: Strategy,
}

/// Builds the game, solves it and extracts a strategy.
pub fn synthesize(dfts: &Dfts, spec: &Gr1Spec) -> Result<Synthesis, SynthesisError> {
    let game = GameStructure::from_dfts(dfts, spec)?;
    let blocking = game.blocking_positions();
    if !blocking.is_empty() {
        log::warn!("environment assumptions block at {} positions", blocking.len());
    }
    let solution = solve_gr1(&game);
    log::info!(
        "winning region: {} of {} positions after {} outer iterations",
        solution.winning.count_ones(..),
        game.num_positions(),
        solution.outer_iterations
    );
    let strategy = extract_strategy(&game, &solution)?;
    Ok(Synthesis {
        game,
        solution,
        strategy,
    })
}
