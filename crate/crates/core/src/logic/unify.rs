use std::collections::BTreeMap;
use std::fmt;

use super::term::Term;

/// A variable-to-term mapping kept in solved form: no bound variable occurs
/// in any value, so applying it twice is the same as applying it once.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution {
    map: BTreeMap<String, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.map.get(var)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Term)> {
        self.map.iter()
    }

    pub fn as_map(&self) -> &BTreeMap<String, Term> {
        &self.map
    }

    pub fn apply(&self, term: &Term) -> Term {
        term.apply(&self.map)
    }

    /// Binds `var` to `value`, failing the occurs check or a conflicting
    /// existing binding.
    pub fn bind(&mut self, var: &str, value: &Term) -> bool {
        let value = self.apply(value);
        match self.map.get(var).cloned() {
            Some(existing) => unify_in(&existing, &value, self),
            None => {
                if let Term::Var(v) = &value {
                    if v == var {
                        return true;
                    }
                }
                if value.contains_var(var) {
                    return false;
                }
                let single: BTreeMap<String, Term> = [(var.to_string(), value.clone())].into();
                for v in self.map.values_mut() {
                    *v = v.apply(&single);
                }
                self.map.insert(var.to_string(), value);
                true
            }
        }
    }

    pub(crate) fn from_map_unchecked(map: BTreeMap<String, Term>) -> Self {
        Substitution { map }
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.map.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}")
    }
}

fn unify_in(a: &Term, b: &Term, s: &mut Substitution) -> bool {
    let a = s.apply(a);
    let b = s.apply(b);
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => true,
        (Term::Var(x), other) | (other, Term::Var(x)) => s.bind(x, other),
        (Term::Atom(x), Term::Atom(y)) => x == y,
        (Term::Int(x), Term::Int(y)) => x == y,
        (Term::Compound(f, xs), Term::Compound(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| unify_in(x, y, s))
        }
        _ => false,
    }
}

/// Most general unifier of `a` and `b` extending `s`, or `None`.
pub fn unify(a: &Term, b: &Term, s: &Substitution) -> Option<Substitution> {
    let mut out = s.clone();
    unify_in(a, b, &mut out).then_some(out)
}
