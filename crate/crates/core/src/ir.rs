//! Graph and parameter documents (JSON) and DOT rendering.
//!
//! JSON output is canonical: object keys sorted, arrays in id order,
//! pretty-printed with a trailing newline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    BiasGroup, BiasGroupId, Edge, GraphError, IoSpec, NetworkGraph, Neuron, NeuronId, Role, WeightGroup,
    WeightGroupId,
};
use crate::logic::{read_term, Predicate, Term};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum IrError {
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u64),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("invariant violation: {0}")]
    Invariant(#[from] GraphError),
}

fn schema(msg: impl Into<String>) -> IrError {
    IrError::Schema(msg.into())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDocument {
    format_version: u64,
    neurons: Vec<NeuronDoc>,
    edges: Vec<EdgeDoc>,
    weight_groups: Vec<WeightGroupDoc>,
    bias_groups: Vec<BiasGroupDoc>,
    io_spec: IoSpecDoc,
    topological_order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeuronDoc {
    id: usize,
    atom: String,
    role: String,
    activation: Option<String>,
    bias_group: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    from: usize,
    to: usize,
    weight_group: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightGroupDoc {
    id: usize,
    rule_id: usize,
    key: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BiasGroupDoc {
    id: usize,
    predicate: String,
    key: Vec<BiasKeyDoc>,
    members: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BiasKeyDoc {
    position: usize,
    value: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IoSpecDoc {
    inputs: Vec<String>,
    outputs: Vec<String>,
}

/// Serializes through `serde_json::Value`, whose maps are ordered, so keys
/// come out sorted regardless of struct field order.
fn canonical<T: Serialize>(doc: &T) -> String {
    let value = serde_json::to_value(doc).expect("documents serialize");
    let mut text = serde_json::to_string_pretty(&value).expect("values serialize");
    text.push('\n');
    text
}

pub fn export_json(graph: &NetworkGraph) -> String {
    let doc = GraphDocument {
        format_version: FORMAT_VERSION,
        neurons: graph
            .neurons
            .iter()
            .map(|n| NeuronDoc {
                id: n.id.0,
                atom: n.atom.to_string(),
                role: n.role.name().to_string(),
                activation: n.activation.map(|a| a.name().to_string()),
                bias_group: n.bias_group.map(|b| b.0),
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| EdgeDoc {
                from: e.from.0,
                to: e.to.0,
                weight_group: e.weight_group.0,
            })
            .collect(),
        weight_groups: graph
            .weight_groups
            .iter()
            .map(|g| WeightGroupDoc {
                id: g.id.0,
                rule_id: g.rule_id,
                key: g.key.iter().map(|t| t.to_string()).collect(),
            })
            .collect(),
        bias_groups: graph
            .bias_groups
            .iter()
            .map(|g| BiasGroupDoc {
                id: g.id.0,
                predicate: g.predicate.to_string(),
                key: g
                    .key
                    .iter()
                    .map(|(position, value)| BiasKeyDoc {
                        position: *position,
                        value: value.to_string(),
                    })
                    .collect(),
                members: g.members.iter().map(|m| m.0).collect(),
            })
            .collect(),
        io_spec: IoSpecDoc {
            inputs: graph.io_spec.inputs.iter().map(|p| p.to_string()).collect(),
            outputs: graph.io_spec.outputs.iter().map(|p| p.to_string()).collect(),
        },
        topological_order: graph.topological_order.iter().map(|id| id.0).collect(),
    };
    canonical(&doc)
}

fn version_of(value: &serde_json::Value) -> Result<u64, IrError> {
    let version = value
        .get("format_version")
        .ok_or_else(|| schema("missing format_version"))?
        .as_u64()
        .ok_or_else(|| schema("format_version must be a non-negative integer"))?;
    if version != FORMAT_VERSION {
        return Err(IrError::Version(version));
    }
    Ok(version)
}

fn ground_term(text: &str) -> Result<Term, IrError> {
    let t = read_term(text).map_err(|e| schema(format!("bad term `{text}`: {e}")))?;
    if !t.is_ground() {
        return Err(schema(format!("term `{text}` is not ground")));
    }
    Ok(t)
}

fn predicate(text: &str) -> Result<Predicate, IrError> {
    Predicate::parse(text).ok_or_else(|| schema(format!("bad predicate `{text}`")))
}

/// Parses and fully re-validates a graph document.
pub fn import_json(text: &str) -> Result<NetworkGraph, IrError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    version_of(&value)?;
    let doc: GraphDocument = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;

    let neurons = doc
        .neurons
        .iter()
        .map(|n| {
            Ok(Neuron {
                id: NeuronId(n.id),
                atom: ground_term(&n.atom)?,
                role: Role::parse(&n.role).ok_or_else(|| schema(format!("unknown role `{}`", n.role)))?,
                activation: n
                    .activation
                    .as_deref()
                    .map(|a| a.parse().map_err(|a| schema(format!("unknown activation `{a}`"))))
                    .transpose()?,
                bias_group: n.bias_group.map(BiasGroupId),
            })
        })
        .collect::<Result<Vec<_>, IrError>>()?;
    let weight_groups = doc
        .weight_groups
        .iter()
        .map(|g| {
            Ok(WeightGroup {
                id: WeightGroupId(g.id),
                rule_id: g.rule_id,
                key: g.key.iter().map(|k| ground_term(k)).collect::<Result<_, _>>()?,
            })
        })
        .collect::<Result<Vec<_>, IrError>>()?;
    let bias_groups = doc
        .bias_groups
        .iter()
        .map(|g| {
            Ok(BiasGroup {
                id: BiasGroupId(g.id),
                predicate: predicate(&g.predicate)?,
                key: g
                    .key
                    .iter()
                    .map(|k| Ok((k.position, ground_term(&k.value)?)))
                    .collect::<Result<_, IrError>>()?,
                members: g.members.iter().copied().map(NeuronId).collect(),
            })
        })
        .collect::<Result<Vec<_>, IrError>>()?;
    let io_spec = IoSpec {
        inputs: doc.io_spec.inputs.iter().map(|p| predicate(p)).collect::<Result<_, _>>()?,
        outputs: doc.io_spec.outputs.iter().map(|p| predicate(p)).collect::<Result<_, _>>()?,
    };
    let graph = NetworkGraph {
        neurons,
        edges: doc
            .edges
            .iter()
            .map(|e| Edge {
                from: NeuronId(e.from),
                to: NeuronId(e.to),
                weight_group: WeightGroupId(e.weight_group),
            })
            .collect(),
        weight_groups,
        bias_groups,
        io_spec,
        topological_order: doc.topological_order.into_iter().map(NeuronId).collect(),
    };
    graph.validate()?;
    Ok(graph)
}

/// Trained (or initial) values for every weight and bias group.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    pub weights: BTreeMap<WeightGroupId, f64>,
    pub biases: BTreeMap<BiasGroupId, f64>,
}

impl Params {
    /// Every group of `graph` set to `value`.
    pub fn constant(graph: &NetworkGraph, value: f64) -> Params {
        Params {
            weights: graph.weight_groups.iter().map(|g| (g.id, value)).collect(),
            biases: graph.bias_groups.iter().map(|g| (g.id, value)).collect(),
        }
    }

    pub fn weight(&self, id: WeightGroupId) -> Option<f64> {
        self.weights.get(&id).copied()
    }

    pub fn bias(&self, id: BiasGroupId) -> Option<f64> {
        self.biases.get(&id).copied()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDocument {
    format_version: u64,
    weights: Vec<ParamEntry>,
    biases: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    group: usize,
    value: f64,
}

/// Values print in shortest round-trip form, so import recovers them exactly.
pub fn export_params(params: &Params) -> Result<String, IrError> {
    if let Some(bad) = params.weights.values().chain(params.biases.values()).find(|v| !v.is_finite()) {
        return Err(schema(format!("non-finite parameter {bad}")));
    }
    let entries = |m: Vec<(usize, f64)>| m.into_iter().map(|(group, value)| ParamEntry { group, value }).collect();
    Ok(canonical(&ParamsDocument {
        format_version: FORMAT_VERSION,
        weights: entries(params.weights.iter().map(|(k, v)| (k.0, *v)).collect()),
        biases: entries(params.biases.iter().map(|(k, v)| (k.0, *v)).collect()),
    }))
}

pub fn import_params(text: &str) -> Result<Params, IrError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    version_of(&value)?;
    let doc: ParamsDocument = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
    let mut params = Params::default();
    for e in doc.weights {
        if params.weights.insert(WeightGroupId(e.group), e.value).is_some() {
            return Err(schema(format!("weight group {} listed twice", e.group)));
        }
    }
    for e in doc.biases {
        if params.biases.insert(BiasGroupId(e.group), e.value).is_some() {
            return Err(schema(format!("bias group {} listed twice", e.group)));
        }
    }
    Ok(params)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: one rank per stratum, edges labelled by weight group.
pub fn export_dot(graph: &NetworkGraph) -> Result<String, GraphError> {
    let strata = graph.strata()?;
    let mut out = String::from("digraph nmp {\n  rankdir=BT;\n  node [shape=circle];\n");
    let depth = strata.iter().max().map_or(0, |m| m + 1);
    for s in 0..depth {
        let members: Vec<String> = (0..graph.neurons.len())
            .filter(|&i| strata[i] == s)
            .map(|i| format!("n{}", graph.neurons[i].id))
            .collect();
        let _ = writeln!(out, "  {{ rank=same; {}; }}", members.join("; "));
    }
    for n in &graph.neurons {
        let shape = match n.role {
            Role::Input => ", shape=box",
            Role::Hidden => "",
            Role::Output => ", shape=doublecircle",
        };
        let _ = writeln!(out, "  n{} [label=\"{}\"{shape}];", n.id, dot_escape(&n.atom.to_string()));
    }
    for e in &graph.edges {
        let _ = writeln!(out, "  n{} -> n{} [label=\"w{}\"];", e.from, e.to, e.weight_group);
    }
    out.push_str("}\n");
    Ok(out)
}
