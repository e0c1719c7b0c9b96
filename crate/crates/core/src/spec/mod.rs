//! The specification language: propositional formulas with `X(atom)` and the
//! GR(1) template `assumptions -> guarantees`.

mod formula;
mod gr1;

pub use formula::{eval_prop, parse_prop, EvalError, ParseError, PropFormula, Valuation};
pub use gr1::{parse_gr1, Gr1Spec, SpecError};
