//! Function-free Prolog with tabled resolution.

mod clause;
mod engine;
pub mod ops;
mod reader;
mod term;
mod unify;

pub use clause::{is_unsupported_builtin, parse_deterministic, Builtin, Clause, ParseError};
pub(crate) use clause::{check_goal, check_head, issue_to_error, split_clause};
pub use engine::{solve, Limits, Program, SolveError};
pub use reader::{read_term, read_terms, ReadTerm, SyntaxError};
pub(crate) use term::ArgDisplay;
pub use term::{Predicate, Term};
pub use unify::{unify, Substitution};
