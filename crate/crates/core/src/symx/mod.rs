//! Symbolic expressions: construction, simplification, differentiation and
//! evaluation.

mod build;
mod diff;
pub mod eval;
mod node;
mod text;

pub use build::{product, simplify, sum};
pub use diff::{differentiate, Differentiator};
pub use eval::{evaluate, normal_cdf, normal_pdf, Binding, EvalError, Tape};
pub use node::{Expression, Kind, NodeKind};
pub use text::{dump_dag, parse, ParseError};
