//! Interpreted-rule syntax: `head :- body, QUERY..., +[key: v, ...].`

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::logic::{
    check_goal, check_head, is_unsupported_builtin, issue_to_error, parse_deterministic, read_terms, split_clause,
    ArgDisplay, Builtin, Clause, ParseError, Predicate, Term,
};

/// Line separating the deterministic and interpreted sections of a combined file.
pub const SECTION_MARKER: &str = "%% interpreted";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Activation {
    #[default]
    Sigmoid,
    Relu,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative in terms of the pre-activation `z` and the output `a`.
    /// ReLU takes derivative 0 at the kink.
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(other.to_string()),
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterpretedRule {
    pub rule_id: usize,
    pub head: Term,
    pub body: Term,
    pub query: Vec<Term>,
    pub untethered: Vec<String>,
    /// `None` when the rule gives no `activation` option.
    pub activation: Option<Activation>,
    pub line: usize,
}

impl InterpretedRule {
    pub fn activation(&self) -> Activation {
        self.activation.unwrap_or_default()
    }

    /// Variables of head, body and query, in order of first occurrence.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in std::iter::once(&self.head).chain(std::iter::once(&self.body)).chain(&self.query) {
            for v in t.variables() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    fn has_options(&self) -> bool {
        !self.untethered.is_empty() || self.activation.is_some()
    }
}

impl fmt::Display for InterpretedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- {}", ArgDisplay(&self.head), ArgDisplay(&self.body))?;
        for goal in &self.query {
            write!(f, ", {}", ArgDisplay(goal))?;
        }
        if self.has_options() {
            f.write_str(", +[")?;
            let mut sep = "";
            if !self.untethered.is_empty() {
                write!(f, "untethered: {}", self.untethered.join(","))?;
                sep = ", ";
            }
            if let Some(a) = self.activation {
                write!(f, "{sep}activation: {a}")?;
            }
            f.write_str("]")?;
        }
        f.write_str(".")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NmpProgram {
    pub deterministic: Vec<Clause>,
    pub interpreted: Vec<InterpretedRule>,
}

impl NmpProgram {
    /// Predicates appearing as a head or body literal of some interpreted rule.
    pub fn neuron_predicates(&self) -> BTreeSet<Predicate> {
        self.interpreted
            .iter()
            .flat_map(|r| [r.head.predicate(), r.body.predicate()])
            .flatten()
            .collect()
    }

    pub fn head_predicates(&self) -> BTreeSet<Predicate> {
        self.interpreted.iter().filter_map(|r| r.head.predicate()).collect()
    }

    pub fn body_predicates(&self) -> BTreeSet<Predicate> {
        self.interpreted.iter().filter_map(|r| r.body.predicate()).collect()
    }
}

/// Pretty-prints as a combined file that reads back to the same program.
impl fmt::Display for NmpProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.deterministic {
            writeln!(f, "{c}")?;
        }
        writeln!(f, "{SECTION_MARKER}")?;
        for r in &self.interpreted {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NmpError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("rule {rule_id} (line {line}): unknown option `{key}`")]
    UnknownOption { key: String, rule_id: usize, line: usize },
    #[error("rule {rule_id} (line {line}): duplicate option `{key}`")]
    DuplicateOption { key: String, rule_id: usize, line: usize },
    #[error("rule {rule_id} (line {line}): unsupported activation `{value}` (expected sigmoid, relu or linear)")]
    BadActivation { value: String, rule_id: usize, line: usize },
    #[error("rule {rule_id} (line {line}): {message}")]
    MalformedRule { rule_id: usize, line: usize, message: String },
    #[error("rule {rule_id} (line {line}): untethered variable {var} does not occur in the rule")]
    StrayUntethered { var: String, rule_id: usize, line: usize },
    #[error("program has no interpreted rules")]
    MissingInterpreted,
    #[error("deterministic source given twice: a separate file and a `{SECTION_MARKER}` section")]
    DuplicateDeterministic,
}

fn malformed(rule_id: usize, line: usize, message: impl Into<String>) -> NmpError {
    NmpError::MalformedRule {
        rule_id,
        line,
        message: message.into(),
    }
}

fn is_options(goal: &Term) -> bool {
    matches!(goal, Term::Compound(f, args) if f == "+" && args.len() == 1 && is_list(&args[0]))
}

fn is_list(t: &Term) -> bool {
    match t {
        Term::Atom(a) => a == "[]",
        Term::Compound(f, args) => f == "[|]" && args.len() == 2,
        _ => false,
    }
}

fn list_items(mut t: &Term) -> Option<Vec<&Term>> {
    let mut out = Vec::new();
    loop {
        match t {
            Term::Atom(a) if a == "[]" => return Some(out),
            Term::Compound(f, args) if f == "[|]" && args.len() == 2 => {
                out.push(&args[0]);
                t = &args[1];
            }
            _ => return None,
        }
    }
}

fn is_literal(t: &Term) -> bool {
    match t.functor() {
        Some((name, arity)) => {
            !matches!((name, arity), (",", 2) | (";", 2))
                && Builtin::lookup(name, arity).is_none()
                && !is_unsupported_builtin(name, arity)
        }
        None => false,
    }
}

struct Options {
    untethered: Vec<String>,
    activation: Option<Activation>,
}

fn parse_options(list: &Term, rule_id: usize, line: usize) -> Result<Options, NmpError> {
    let items = list_items(list).ok_or_else(|| malformed(rule_id, line, "options must be a proper list"))?;
    let mut groups: Vec<(String, Vec<&Term>)> = Vec::new();
    for item in items {
        match item {
            Term::Compound(f, args) if f == ":" && args.len() == 2 => {
                let Term::Atom(key) = &args[0] else {
                    return Err(malformed(rule_id, line, format!("option key must be a name, found {}", args[0])));
                };
                if groups.iter().any(|(k, _)| k == key) {
                    return Err(NmpError::DuplicateOption {
                        key: key.clone(),
                        rule_id,
                        line,
                    });
                }
                groups.push((key.clone(), vec![&args[1]]));
            }
            other => match groups.last_mut() {
                Some((_, values)) => values.push(other),
                None => {
                    return Err(malformed(rule_id, line, format!("option value {other} has no `key:` before it")));
                }
            },
        }
    }

    let mut opts = Options {
        untethered: Vec::new(),
        activation: None,
    };
    for (key, values) in groups {
        match key.as_str() {
            "untethered" => {
                for v in values {
                    match v {
                        Term::Var(name) if !name.starts_with("__") => {
                            if opts.untethered.contains(name) {
                                return Err(malformed(rule_id, line, format!("variable {name} listed twice as untethered")));
                            }
                            opts.untethered.push(name.clone());
                        }
                        other => {
                            return Err(malformed(rule_id, line, format!("untethered expects named variables, found {other}")));
                        }
                    }
                }
            }
            "activation" => {
                let value = match values.as_slice() {
                    [Term::Atom(a)] => a.clone(),
                    [one] => one.to_string(),
                    many => many.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
                };
                let act = value.parse().map_err(|value| NmpError::BadActivation { value, rule_id, line })?;
                opts.activation = Some(act);
            }
            _ => return Err(NmpError::UnknownOption { key, rule_id, line }),
        }
    }
    Ok(opts)
}

/// Parses the interpreted section. Rule ids are source positions.
pub fn parse_interpreted(text: &str) -> Result<Vec<InterpretedRule>, NmpError> {
    let mut rules = Vec::new();
    for (rule_id, read) in read_terms(text).map_err(ParseError::from)?.into_iter().enumerate() {
        let (line, column) = (read.line, read.column);
        if !matches!(read.term.functor(), Some((":-", 2))) {
            return Err(malformed(rule_id, line, format!("expected `head :- body, ...`, found {}", read.term)));
        }
        let (head, conjuncts) = split_clause(&read.term);
        check_head(head).map_err(|i| issue_to_error(i, line, column))?;

        let (mut goals, options) = match conjuncts.split_last() {
            Some((last, rest)) if is_options(last) => (rest.to_vec(), Some(&last.args()[0])),
            _ => (conjuncts.clone(), None),
        };
        if goals.iter().any(|g| is_options(g)) {
            return Err(malformed(rule_id, line, "the options list must be the final conjunct"));
        }
        if goals.is_empty() {
            return Err(malformed(rule_id, line, "missing body literal"));
        }
        let body = goals.remove(0);
        if !is_literal(body) {
            return Err(malformed(rule_id, line, format!("body must be a single literal, found {}", ArgDisplay(body))));
        }
        for g in &goals {
            check_goal(g).map_err(|i| issue_to_error(i, line, column))?;
        }
        let opts = match options {
            Some(list) => parse_options(list, rule_id, line)?,
            None => Options {
                untethered: Vec::new(),
                activation: None,
            },
        };
        let rule = InterpretedRule {
            rule_id,
            head: head.clone(),
            body: body.clone(),
            query: goals.into_iter().cloned().collect(),
            untethered: opts.untethered,
            activation: opts.activation,
            line,
        };
        let vars = rule.variables();
        if let Some(stray) = rule.untethered.iter().find(|v| !vars.contains(v)) {
            return Err(NmpError::StrayUntethered {
                var: stray.clone(),
                rule_id,
                line,
            });
        }
        rules.push(rule);
    }
    Ok(rules)
}

/// Splits a combined file at the marker line. The interpreted part keeps
/// its original line numbers by padding with blank lines.
pub fn split_sections(text: &str) -> Option<(String, String)> {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if line.trim() == SECTION_MARKER {
            let det = text[..offset].to_string();
            let nmp = "\n".repeat(i + 1) + &text[offset + line.len()..];
            return Some((det, nmp));
        }
        offset += line.len();
    }
    None
}

pub fn assemble_program(det_text: &str, nmp_text: &str) -> Result<NmpProgram, NmpError> {
    let deterministic = parse_deterministic(det_text)?;
    let interpreted = parse_interpreted(nmp_text)?;
    if interpreted.is_empty() {
        return Err(NmpError::MissingInterpreted);
    }
    Ok(NmpProgram {
        deterministic,
        interpreted,
    })
}

/// Loads a program from an optional `.pl` text and an `.nmp` text that may
/// itself be a combined file.
pub fn load_program(det_text: Option<&str>, nmp_text: &str) -> Result<NmpProgram, NmpError> {
    match (det_text, split_sections(nmp_text)) {
        (Some(_), Some(_)) => Err(NmpError::DuplicateDeterministic),
        (Some(det), None) => assemble_program(det, nmp_text),
        (None, Some((det, nmp))) => assemble_program(&det, &nmp),
        (None, None) => assemble_program("", nmp_text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn dnn_output_rule() {
        let rules = parse_interpreted("output(1) :- hidden2(Y), between(1,2,Y), +[untethered:Y].").unwrap();
        let r = &rules[0];
        assert_eq!(r.head.to_string(), "output(1)");
        assert_eq!(r.body.to_string(), "hidden2(Y)");
        assert_eq!(r.query.len(), 1);
        assert_eq!(r.query[0].to_string(), "between(1,2,Y)");
        assert_eq!(r.untethered, ["Y"]);
        assert_eq!(r.activation(), Activation::Sigmoid);
    }

    #[test]
    fn cnn_rule_options() {
        let r = &parse_interpreted(corpus::CNN_NMP).unwrap()[0];
        assert_eq!(r.untethered, ["X", "Y", "K"]);
        assert_eq!(r.activation, Some(Activation::Relu));
        assert_eq!(r.query.len(), 2);
    }

    #[test]
    fn no_options() {
        let r = &parse_interpreted("cancer(X) :- smokes(X), participant(X).").unwrap()[0];
        assert_eq!(r.query[0].to_string(), "participant(X)");
        assert!(r.untethered.is_empty());
        assert_eq!(r.activation, None);
        assert_eq!(r.activation(), Activation::Sigmoid);
    }

    #[test]
    fn option_errors_name_key_and_rule() {
        let text = "a(X) :- b(X), +[untethered: X].\nc(X) :- d(X), +[dropout: 0.5].";
        let err = parse_interpreted(text).unwrap_err();
        assert_eq!(
            err,
            NmpError::UnknownOption {
                key: "dropout".into(),
                rule_id: 1,
                line: 2
            }
        );
        let msg = err.to_string();
        assert!(msg.contains("dropout") && msg.contains("rule 1"), "{msg}");

        let err = parse_interpreted("a(X) :- b(X), +[activation: relu, activation: linear].").unwrap_err();
        assert!(matches!(err, NmpError::DuplicateOption { ref key, .. } if key == "activation"));
        let err = parse_interpreted("a(X) :- b(X), +[activation: tanh].").unwrap_err();
        assert!(matches!(err, NmpError::BadActivation { ref value, .. } if value == "tanh"));
        let err = parse_interpreted("a(X) :- b(X), +[untethered: Z].").unwrap_err();
        assert!(matches!(err, NmpError::StrayUntethered { ref var, .. } if var == "Z"));
    }

    #[test]
    fn malformed_rules() {
        assert!(parse_interpreted("a(1).").is_err());
        assert!(parse_interpreted("a(X) :- between(1,2,X).").is_err());
        assert!(parse_interpreted("a(X) :- b(X), +[untethered: X], c(X).").is_err());
        assert!(parse_interpreted("a(X) :- b(X), !.").is_err());
        assert!(parse_interpreted("a(X) :- b(X), +[X].").is_err());
    }

    #[test]
    fn assembles_corpus() {
        let dnn = load_program(None, corpus::DNN_NMP).unwrap();
        assert_eq!((dnn.deterministic.len(), dnn.interpreted.len()), (0, 3));
        let rnn = load_program(Some(corpus::RNN_PL), corpus::RNN_NMP).unwrap();
        assert_eq!((rnn.deterministic.len(), rnn.interpreted.len()), (2, 2));
        let gnn = load_program(Some(corpus::GNN_PL), corpus::GNN_NMP).unwrap();
        assert_eq!((gnn.deterministic.len(), gnn.interpreted.len()), (9, 1));
        let smoking = load_program(None, corpus::SMOKING_NMP).unwrap();
        assert_eq!((smoking.deterministic.len(), smoking.interpreted.len()), (5, 2));
        assert_eq!(smoking.interpreted[1].rule_id, 1);
        assert_eq!(smoking.interpreted[0].line, 9);
    }

    #[test]
    fn missing_interpreted_section() {
        assert_eq!(assemble_program("p(a).", "% nothing\n"), Err(NmpError::MissingInterpreted));
        assert_eq!(
            load_program(Some("p(a)."), corpus::SMOKING_NMP),
            Err(NmpError::DuplicateDeterministic)
        );
    }

    #[test]
    fn round_trip_corpus() {
        for (det, nmp) in corpus::PROGRAMS.iter().map(|p| (p.det, p.nmp)) {
            let prog = load_program(det, nmp).unwrap();
            let printed = prog.to_string();
            let back = load_program(None, &printed).unwrap();
            let strip = |p: &NmpProgram| {
                let mut p = p.clone();
                p.interpreted.iter_mut().for_each(|r| r.line = 0);
                p
            };
            assert_eq!(strip(&back), strip(&prog), "{printed}");
        }
    }

    #[test]
    fn neuron_vocabulary() {
        let prog = load_program(None, corpus::DNN_NMP).unwrap();
        let names: Vec<String> = prog.neuron_predicates().iter().map(|p| p.to_string()).collect();
        assert_eq!(names, ["hidden1/1", "hidden2/1", "input/1", "output/1"]);
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.7310585786300049).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
