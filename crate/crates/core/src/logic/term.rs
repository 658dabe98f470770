//! First-order terms and their canonical text form.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use super::ops::{self, Assoc};

/// A first-order term.
///
/// Atoms are the arity-0 case; `Compound` always carries at least one
/// argument. Variables are named, and the usual lexical convention applies:
/// variable names start with an uppercase letter or `_`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Atom(String),
    Int(i64),
    Var(String),
    Compound(String, Vec<Term>),
}

/// Functor name plus arity, written `name/arity`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    pub name: String,
    pub arity: usize,
}

impl Predicate {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        Predicate {
            name: name.into(),
            arity,
        }
    }

    /// Parses `name/arity`.
    pub fn parse(text: &str) -> Option<Predicate> {
        let (name, arity) = text.trim().rsplit_once('/')?;
        let name = name.trim();
        if name.is_empty() {
            return None;
        }
        Some(Predicate::new(name, arity.trim().parse().ok()?))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

impl Term {
    pub fn atom(name: impl Into<String>) -> Term {
        Term::Atom(name.into())
    }

    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    /// Builds a compound, collapsing to an atom when `args` is empty.
    pub fn compound(name: impl Into<String>, args: Vec<Term>) -> Term {
        if args.is_empty() {
            Term::Atom(name.into())
        } else {
            Term::Compound(name.into(), args)
        }
    }

    /// Name and arity for atoms and compounds.
    pub fn functor(&self) -> Option<(&str, usize)> {
        match self {
            Term::Atom(name) => Some((name, 0)),
            Term::Compound(name, args) => Some((name, args.len())),
            _ => None,
        }
    }

    pub fn predicate(&self) -> Option<Predicate> {
        self.functor().map(|(n, a)| Predicate::new(n, a))
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(_, args) => args,
            _ => &[],
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_callable(&self) -> bool {
        matches!(self, Term::Atom(_) | Term::Compound(..))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
            _ => true,
        }
    }

    /// Variable names in order of first occurrence.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub(crate) fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Term::Var(v) => {
                if !out.iter().any(|x| x == v) {
                    out.push(v.clone());
                }
            }
            Term::Compound(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            _ => {}
        }
    }

    pub fn contains_var(&self, name: &str) -> bool {
        match self {
            Term::Var(v) => v == name,
            Term::Compound(_, args) => args.iter().any(|a| a.contains_var(name)),
            _ => false,
        }
    }

    /// Replaces bound variables, leaving unbound ones in place.
    pub fn apply(&self, bindings: &BTreeMap<String, Term>) -> Term {
        match self {
            Term::Var(v) => match bindings.get(v) {
                Some(t) => t.clone(),
                None => self.clone(),
            },
            Term::Compound(name, args) => {
                Term::Compound(name.clone(), args.iter().map(|a| a.apply(bindings)).collect())
            }
            _ => self.clone(),
        }
    }

    fn order_class(&self) -> u8 {
        match self {
            Term::Var(_) => 0,
            Term::Int(_) => 1,
            Term::Atom(_) => 2,
            Term::Compound(..) => 3,
        }
    }

    /// Flattens a right-nested operator chain such as `(a , (b , c))`.
    pub fn flatten_infix<'a>(&'a self, op: &str) -> Vec<&'a Term> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Term::Compound(name, args) if name == op && args.len() == 2 => {
                    out.push(&args[0]);
                    cur = &args[1];
                }
                _ => {
                    out.push(cur);
                    return out;
                }
            }
        }
    }
}

/// Standard order of terms: variables, then numbers, then atoms, then
/// compounds by arity, name and arguments left to right.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Term::Var(a), Term::Var(b)) => a.cmp(b),
            (Term::Int(a), Term::Int(b)) => a.cmp(b),
            (Term::Atom(a), Term::Atom(b)) => a.cmp(b),
            (Term::Compound(fa, aa), Term::Compound(fb, ab)) => aa
                .len()
                .cmp(&ab.len())
                .then_with(|| fa.cmp(fb))
                .then_with(|| aa.cmp(ab)),
            _ => self.order_class().cmp(&other.order_class()),
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn is_plain_atom(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => name == "[]",
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    if is_plain_atom(name) {
        f.write_str(name)
    } else {
        f.write_str("'")?;
        for c in name.chars() {
            match c {
                '\'' => f.write_str("\\'")?,
                '\\' => f.write_str("\\\\")?,
                '\n' => f.write_str("\\n")?,
                _ => write!(f, "{c}")?,
            }
        }
        f.write_str("'")
    }
}

fn write_term(f: &mut fmt::Formatter<'_>, term: &Term, max_prec: u16) -> fmt::Result {
    match term {
        Term::Int(n) => write!(f, "{n}"),
        Term::Var(v) => f.write_str(v),
        Term::Atom(a) => write_atom(f, a),
        Term::Compound(name, args) if name == "[|]" && args.len() == 2 => write_list(f, term),
        Term::Compound(name, args) => {
            if args.len() == 2 {
                if let Some(op) = ops::infix(name) {
                    let (lp, rp) = match op.assoc {
                        Assoc::Xfx => (op.prec - 1, op.prec - 1),
                        Assoc::Xfy => (op.prec - 1, op.prec),
                        Assoc::Yfx => (op.prec, op.prec - 1),
                    };
                    let paren = op.prec > max_prec;
                    if paren {
                        f.write_str("(")?;
                    }
                    write_term(f, &args[0], lp)?;
                    if name == "," {
                        f.write_str(", ")?;
                    } else {
                        f.write_str(" ")?;
                        f.write_str(name)?;
                        f.write_str(" ")?;
                    }
                    write_term(f, &args[1], rp)?;
                    if paren {
                        f.write_str(")")?;
                    }
                    return Ok(());
                }
            }
            write_atom(f, name)?;
            f.write_str("(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write_term(f, a, 999)?;
            }
            f.write_str(")")
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, term: &Term) -> fmt::Result {
    f.write_str("[")?;
    let mut cur = term;
    let mut first = true;
    loop {
        match cur {
            Term::Compound(name, args) if name == "[|]" && args.len() == 2 => {
                if !first {
                    f.write_str(",")?;
                }
                first = false;
                write_term(f, &args[0], 999)?;
                cur = &args[1];
            }
            Term::Atom(a) if a == "[]" => break,
            tail => {
                f.write_str("|")?;
                write_term(f, tail, 999)?;
                break;
            }
        }
    }
    f.write_str("]")
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self, 1200)
    }
}

/// Writes `term` as an argument-level term (priority 999).
pub(crate) struct ArgDisplay<'a>(pub &'a Term);

impl fmt::Display for ArgDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self.0, 999)
    }
}
