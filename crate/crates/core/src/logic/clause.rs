use std::fmt;

use thiserror::Error;

use super::reader::{read_terms, SyntaxError};
use super::term::{ArgDisplay, Term};

/// A definite clause. An empty body makes it a fact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub head: Term,
    /// Top-level conjuncts; a conjunct may itself be a `;` disjunction.
    pub body: Vec<Term>,
}

impl Clause {
    pub fn fact(head: Term) -> Self {
        Clause { head, body: Vec::new() }
    }

    pub fn is_fact(&self) -> bool {
        self.body.is_empty()
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", ArgDisplay(&self.head))?;
        for (i, g) in self.body.iter().enumerate() {
            f.write_str(if i == 0 { " :- " } else { ", " })?;
            write!(f, "{}", ArgDisplay(g))?;
        }
        f.write_str(".")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("line {line}, column {column}: unsupported construct `{construct}`")]
    Unsupported {
        construct: String,
        line: usize,
        column: usize,
    },
    #[error("line {line}, column {column}: {message}")]
    Invalid {
        message: String,
        line: usize,
        column: usize,
    },
}

/// Builtin predicates the engine evaluates directly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Between,
    Is,
    Unify,
    Identical,
    NotIdentical,
    Less,
    Greater,
    LessEq,
    GreaterEq,
}

impl Builtin {
    pub fn lookup(name: &str, arity: usize) -> Option<Builtin> {
        Some(match (name, arity) {
            ("between", 3) => Builtin::Between,
            ("is", 2) => Builtin::Is,
            ("=", 2) => Builtin::Unify,
            ("==", 2) => Builtin::Identical,
            ("\\==", 2) => Builtin::NotIdentical,
            ("<", 2) => Builtin::Less,
            (">", 2) => Builtin::Greater,
            ("=<", 2) => Builtin::LessEq,
            (">=", 2) => Builtin::GreaterEq,
            _ => return None,
        })
    }
}

/// Standard Prolog builtins and control constructs outside the supported
/// subset. Calling one is rejected rather than treated as an undefined
/// user predicate.
pub fn is_unsupported_builtin(name: &str, arity: usize) -> bool {
    matches!(
        (name, arity),
        ("!", 0)
            | ("\\+", 1)
            | ("->", 2)
            | ("*->", 2)
            | ("not", 1)
            | ("call", _)
            | ("assert", 1)
            | ("asserta", 1)
            | ("assertz", 1)
            | ("retract", 1)
            | ("retractall", 1)
            | ("abolish", _)
            | ("findall", 3 | 4)
            | ("bagof", 3)
            | ("setof", 3)
            | ("aggregate_all", 3)
            | ("forall", 2)
            | ("once", 1)
            | ("ignore", 1)
            | ("catch", 3)
            | ("throw", 1)
            | ("\\=", 2)
            | ("=:=", 2)
            | ("=\\=", 2)
            | ("=..", 2)
            | ("@<" | "@>" | "@=<" | "@>=", 2)
            | ("functor", 3)
            | ("arg", 3)
            | ("copy_term", 2)
            | ("var" | "nonvar" | "atom" | "number" | "integer" | "atomic" | "compound" | "callable" | "is_list", 1)
            | ("succ", 2)
            | ("plus", 3)
            | ("write" | "writeln" | "print" | "write_canonical" | "tab", 1)
            | ("nl", 0)
            | ("format", 1 | 2)
            | ("halt", 0 | 1)
            | ("nb_getval" | "b_getval" | "nb_setval" | "b_setval", 2)
            | ("tab", 2)
    )
}

fn is_control(name: &str, arity: usize) -> bool {
    matches!((name, arity), (",", 2) | (";", 2))
}

/// Checks that `goal` only uses supported control constructs and builtins.
/// Returns a description of the first offending construct.
pub(crate) fn check_goal(goal: &Term) -> Result<(), GoalIssue> {
    match goal {
        Term::Var(v) => Err(GoalIssue::Invalid(format!("variable {v} used as a goal"))),
        Term::Int(n) => Err(GoalIssue::Invalid(format!("integer {n} used as a goal"))),
        Term::Atom(_) | Term::Compound(..) => {
            let (name, arity) = goal.functor().expect("callable");
            if is_control(name, arity) {
                let args = goal.args();
                if name == ";" {
                    if let Some(("->", 2)) = args[0].functor() {
                        return Err(GoalIssue::Unsupported("->/2".into()));
                    }
                }
                args.iter().try_for_each(check_goal)
            } else if is_unsupported_builtin(name, arity) {
                Err(GoalIssue::Unsupported(format!("{name}/{arity}")))
            } else {
                Ok(())
            }
        }
    }
}

pub(crate) enum GoalIssue {
    Unsupported(String),
    Invalid(String),
}

pub(crate) fn check_head(head: &Term) -> Result<(), GoalIssue> {
    match head {
        Term::Var(v) => Err(GoalIssue::Invalid(format!("clause head is the variable {v}"))),
        Term::Int(n) => Err(GoalIssue::Invalid(format!("clause head is the integer {n}"))),
        _ => {
            let (name, arity) = head.functor().expect("callable");
            if is_control(name, arity) || Builtin::lookup(name, arity).is_some() || is_unsupported_builtin(name, arity) {
                Err(GoalIssue::Invalid(format!("cannot define builtin {name}/{arity}")))
            } else {
                Ok(())
            }
        }
    }
}

pub(crate) fn issue_to_error(issue: GoalIssue, line: usize, column: usize) -> ParseError {
    match issue {
        GoalIssue::Unsupported(construct) => ParseError::Unsupported { construct, line, column },
        GoalIssue::Invalid(message) => ParseError::Invalid { message, line, column },
    }
}

/// Splits a read term into head and flattened body conjuncts.
pub(crate) fn split_clause(term: &Term) -> (&Term, Vec<&Term>) {
    match term {
        Term::Compound(name, args) if name == ":-" && args.len() == 2 => (&args[0], args[1].flatten_infix(",")),
        _ => (term, Vec::new()),
    }
}

/// Parses the deterministic (plain Prolog) section of a program.
pub fn parse_deterministic(text: &str) -> Result<Vec<Clause>, ParseError> {
    let mut out = Vec::new();
    for read in read_terms(text)? {
        let (line, column) = (read.line, read.column);
        if let Some((":-" | "?-", 1)) = read.term.functor() {
            return Err(ParseError::Unsupported {
                construct: "directive".into(),
                line,
                column,
            });
        }
        let (head, body) = split_clause(&read.term);
        check_head(head).map_err(|i| issue_to_error(i, line, column))?;
        for goal in &body {
            check_goal(goal).map_err(|i| issue_to_error(i, line, column))?;
        }
        out.push(Clause {
            head: head.clone(),
            body: body.into_iter().cloned().collect(),
        });
    }
    Ok(out)
}
