//! Correct-by-construction formation control for robot swarms.
//!
//! The pipeline: a [`world`] file and a GR(1) [`spec`] are turned into a
//! finite [`abstraction`], a winning strategy is computed by [`synthesis`],
//! and every symbolic move is refined into velocity commands by the
//! CLF/CBF quadratic programs of [`qp`]. [`sim`] closes the loop and
//! monitors the runtime guarantees.

pub mod abstraction;
pub mod geometry;
pub mod qp;
pub mod sim;
pub mod spec;
pub mod synthesis;
pub mod world;
