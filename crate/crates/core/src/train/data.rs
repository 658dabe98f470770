//! CSV datasets whose header names neurons by their ground atoms.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::graph::{NetworkGraph, NeuronId, Role};
use crate::logic::{read_term, Term};
use crate::plan::ExecutionPlan;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("header column {column}: `{text}` is not a ground atom")]
    BadHeader { column: usize, text: String },
    #[error("header column {column}: {atom} appears twice")]
    DuplicateColumn { column: usize, atom: String },
    #[error("header does not match the network; missing: [{}], extra: [{}]", .missing.join(", "), .extra.join(", "))]
    HeaderMismatch { missing: Vec<String>, extra: Vec<String> },
    #[error("line {line}, column {column}: `{text}` is not a finite number")]
    NonNumeric { line: u64, column: usize, text: String },
    #[error("line {line}, column {column}: target {value} is outside [0,1]")]
    TargetRange { line: u64, column: usize, value: f64 },
    #[error("dataset has no rows")]
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub columns: Vec<Term>,
    pub roles: Vec<Role>,
    /// Neuron per column.
    pub neurons: Vec<NeuronId>,
    pub rows: Vec<Vec<f64>>,
}

/// One training example in plan order.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    /// Values of `plan.inputs`, in order.
    pub inputs: Vec<f64>,
    /// Targets of `plan.outputs`, in order.
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn examples(&self, plan: &ExecutionPlan) -> Vec<Example> {
        let col: BTreeMap<NeuronId, usize> = self.neurons.iter().enumerate().map(|(c, id)| (*id, c)).collect();
        self.rows
            .iter()
            .map(|row| Example {
                inputs: plan.inputs.iter().map(|id| row[col[id]]).collect(),
                targets: plan.outputs.iter().map(|id| row[col[id]]).collect(),
            })
            .collect()
    }
}

pub fn load_csv(path: &Path, graph: &NetworkGraph) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_csv(&text, graph)
}

pub fn parse_csv(text: &str, graph: &NetworkGraph) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| DataError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header = reader.headers().map_err(csv_err)?.clone();

    let atoms = graph.atom_index();
    let mut columns = Vec::new();
    let mut roles = Vec::new();
    let mut neurons = Vec::new();
    let mut extra = Vec::new();
    let mut seen = BTreeSet::new();
    for (c, cell) in header.iter().enumerate() {
        let column = c + 1;
        let term = read_term(cell.trim())
            .ok()
            .filter(|t| t.is_ground() && t.is_callable())
            .ok_or_else(|| DataError::BadHeader {
                column,
                text: cell.to_string(),
            })?;
        if !seen.insert(term.clone()) {
            return Err(DataError::DuplicateColumn {
                column,
                atom: term.to_string(),
            });
        }
        match atoms.get(&term).and_then(|id| graph.neuron(*id)) {
            Some(n) if n.role != Role::Hidden => {
                roles.push(n.role);
                neurons.push(n.id);
                columns.push(term);
            }
            _ => extra.push(term.to_string()),
        }
    }
    let missing: Vec<String> = graph
        .neurons
        .iter()
        .filter(|n| n.role != Role::Hidden && !seen.contains(&n.atom))
        .map(|n| n.atom.to_string())
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(DataError::HeaderMismatch { missing, extra });
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(columns.len());
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataError::NonNumeric {
                    line,
                    column: c + 1,
                    text: cell.to_string(),
                })?;
            if roles[c] == Role::Output && !(0.0..=1.0).contains(&value) {
                return Err(DataError::TargetRange {
                    line,
                    column: c + 1,
                    value,
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Dataset {
        columns,
        roles,
        neurons,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::graph::IoSpec;
    use crate::grounder::build_network;
    use crate::logic::Limits;
    use crate::nmp::load_program;

    fn dnn() -> NetworkGraph {
        let prog = load_program(None, corpus::DNN_NMP).unwrap();
        build_network(&prog, &IoSpec::default(), &Limits::default()).unwrap()
    }

    #[test]
    fn xor_loads() {
        let d = parse_csv(corpus::XOR_CSV, &dnn()).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.columns.len(), 3);
        assert_eq!(d.rows[1], [0.0, 1.0, 1.0]);
    }

    #[test]
    fn header_mismatch_names_atoms() {
        let err = parse_csv("input(1),input(2)\n0,1\n", &dnn()).unwrap_err();
        assert!(matches!(&err, DataError::HeaderMismatch { missing, extra } if missing == &["output(1)"] && extra.is_empty()));
        assert!(err.to_string().contains("output(1)"));
        let err = parse_csv("input(1),input(2),output(1),ghost(1)\n0,1,1,0\n", &dnn()).unwrap_err();
        assert!(err.to_string().contains("ghost(1)"), "{err}");
        let err = parse_csv("input(1),input(2),output(1),hidden1(1)\n0,1,1,0\n", &dnn()).unwrap_err();
        assert!(err.to_string().contains("hidden1(1)"));
    }

    #[test]
    fn header_tolerates_spacing_and_quoting() {
        let d = parse_csv("\"input(1)\", input( 2 ),output(1)\n0,1,1\n", &dnn()).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn cell_errors_carry_positions() {
        let err = parse_csv("input(1),input(2),output(1)\n0,1,1\n0,x,1\n", &dnn()).unwrap_err();
        assert!(matches!(err, DataError::NonNumeric { line: 3, column: 2, .. }), "{err}");
        let err = parse_csv("input(1),input(2),output(1)\n0,1,1.5\n", &dnn()).unwrap_err();
        assert!(matches!(err, DataError::TargetRange { line: 2, column: 3, .. }));
        let err = parse_csv("input(1),input(2),output(1)\n0,1\n", &dnn()).unwrap_err();
        assert!(matches!(err, DataError::Csv { .. }), "{err}");
        assert!(matches!(parse_csv("input(1),input(2),output(1)\n", &dnn()), Err(DataError::Empty)));
        assert!(matches!(parse_csv("input(1),X,output(1)\n", &dnn()), Err(DataError::BadHeader { column: 2, .. })));
    }
}
