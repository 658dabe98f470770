//! Sigmoid networks read as binary pairwise Markov networks.
//!
//! Every neuron becomes a binary node. Every edge becomes a feature that
//! fires when both endpoints are 1, and every biased neuron gets a
//! single-node feature. Inference is by exact enumeration, so it is only
//! usable on small networks.

mod discrepancy;
mod enumerate;
mod unroll;

pub use discrepancy::{discrepancy_csv, gradient_discrepancy, Discrepancy, DiscrepancyRow};
pub use enumerate::{
    brute_force_conditional, brute_force_conditional_with, feature_expectations, joint_probability, log_partition,
    total_probability, Expectations, CHUNK_BITS,
};
pub use unroll::{
    unroll_step1, unroll_step2, unrolled_mn, CopyStep, UnrolledEdge, UnrolledNetwork, UnrolledNode,
    DEFAULT_NODE_CAP,
};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{BiasGroupId, NetworkGraph, NeuronId, WeightGroupId};
use crate::ir::Params;
use crate::nmp::Activation;
use crate::plan::PlanError;
use crate::train::TrainError;

/// Largest network [`brute_force_conditional`] will enumerate.
pub const MAX_NODES: usize = 25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlnError {
    #[error("{nodes} nodes exceed the enumeration bound of {max}")]
    TooLarge { nodes: usize, max: usize },
    #[error("evidence assigns the queried node {0}")]
    QueryInEvidence(usize),
    #[error("node index {index} out of range for {nodes} nodes")]
    NodeOutOfRange { index: usize, nodes: usize },
    #[error("neuron {0} is not a sigmoid neuron")]
    NonSigmoid(String),
    #[error("no value for {0}")]
    MissingParameter(String),
    #[error("non-finite weight on {0}")]
    NonFinite(String),
    #[error("unrolled network needs {needed} nodes, cap is {cap}")]
    NodeCap { needed: u64, cap: u64 },
    #[error("replication factor must be at least 1")]
    ZeroReplication,
    #[error("input {label} has value {value}; Markov network evidence must be 0 or 1")]
    NonBinary { label: String, value: f64 },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnNode {
    pub label: String,
    pub neuron: NeuronId,
}

/// Fires iff nodes `i` and `j` are both 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeature {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Fires iff node `i` is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasFeature {
    pub i: usize,
    pub weight: f64,
}

/// P(v) = exp(Σ w·f(v)) / Z over all 2^n binary assignments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairwiseMarkovNetwork {
    pub nodes: Vec<MnNode>,
    pub pair_features: Vec<PairFeature>,
    pub bias_features: Vec<BiasFeature>,
}

impl PairwiseMarkovNetwork {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Unnormalized log-probability of a full assignment.
    pub fn energy(&self, v: &[bool]) -> f64 {
        let mut e = 0.0;
        for f in &self.bias_features {
            if v[f.i] {
                e += f.weight;
            }
        }
        for f in &self.pair_features {
            if v[f.i] && v[f.j] {
                e += f.weight;
            }
        }
        e
    }

    /// Rejects bad indices and non-finite weights.
    pub fn check(&self) -> Result<(), MlnError> {
        let n = self.nodes.len();
        let idx = |i: usize| {
            if i < n {
                Ok(())
            } else {
                Err(MlnError::NodeOutOfRange { index: i, nodes: n })
            }
        };
        for f in &self.pair_features {
            idx(f.i)?;
            idx(f.j)?;
            if !f.weight.is_finite() {
                return Err(MlnError::NonFinite(format!("{} -- {}", self.nodes[f.i].label, self.nodes[f.j].label)));
            }
        }
        for f in &self.bias_features {
            idx(f.i)?;
            if !f.weight.is_finite() {
                return Err(MlnError::NonFinite(self.nodes[f.i].label.clone()));
            }
        }
        Ok(())
    }

    pub fn node_of(&self, neuron: NeuronId) -> Option<usize> {
        self.nodes.iter().position(|n| n.neuron == neuron)
    }
}

fn require_sigmoid(graph: &NetworkGraph) -> Result<(), MlnError> {
    for n in &graph.neurons {
        if let Some(a) = n.activation {
            if a != Activation::Sigmoid {
                return Err(MlnError::NonSigmoid(n.atom.to_string()));
            }
        }
    }
    Ok(())
}

fn weight_value(params: &Params, g: WeightGroupId) -> Result<f64, MlnError> {
    params.weight(g).ok_or_else(|| MlnError::MissingParameter(format!("weight group {g}")))
}

fn bias_value(params: &Params, b: BiasGroupId) -> Result<f64, MlnError> {
    params.bias(b).ok_or_else(|| MlnError::MissingParameter(format!("bias group {b}")))
}

/// One node per neuron (in neuron order), one pair feature per edge and one
/// bias feature per biased neuron.
pub fn to_pairwise_mn(graph: &NetworkGraph, params: &Params) -> Result<PairwiseMarkovNetwork, MlnError> {
    require_sigmoid(graph)?;
    let nodes: Vec<MnNode> = graph
        .neurons
        .iter()
        .map(|n| MnNode {
            label: n.atom.to_string(),
            neuron: n.id,
        })
        .collect();
    let pos: BTreeMap<NeuronId, usize> = graph.neurons.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut pair_features = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        pair_features.push(PairFeature {
            i: pos[&e.from],
            j: pos[&e.to],
            weight: weight_value(params, e.weight_group)?,
        });
    }
    let mut bias_features = Vec::new();
    for (i, n) in graph.neurons.iter().enumerate() {
        if let Some(b) = n.bias_group {
            bias_features.push(BiasFeature {
                i,
                weight: bias_value(params, b)?,
            });
        }
    }
    let mn = PairwiseMarkovNetwork {
        nodes,
        pair_features,
        bias_features,
    };
    mn.check()?;
    Ok(mn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::graph::IoSpec;
    use crate::grounder::build_network;
    use crate::logic::Limits;
    use crate::nmp::{load_program, sigmoid};

    fn graph(det: Option<&str>, nmp: &str, outputs: &str) -> NetworkGraph {
        let prog = load_program(det, nmp).unwrap();
        let io = IoSpec {
            outputs: IoSpec::parse_list(outputs).unwrap(),
            ..IoSpec::default()
        };
        build_network(&prog, &io, &Limits::default()).unwrap()
    }

    #[test]
    fn dnn_counts() {
        let g = graph(None, corpus::DNN_NMP, "output/1");
        let mn = to_pairwise_mn(&g, &Params::constant(&g, 0.25)).unwrap();
        assert_eq!((mn.len(), mn.pair_features.len(), mn.bias_features.len()), (7, 10, 5));
    }

    #[test]
    fn single_output_without_edges() {
        // Not a valid IR graph (non-inputs need an incoming edge), but the
        // translation does not depend on that.
        let mut g = crate::synth::chain(1);
        g.neurons.remove(0);
        g.edges.clear();
        g.weight_groups.clear();
        let mn = to_pairwise_mn(&g, &Params::constant(&g, 0.25)).unwrap();
        assert_eq!((mn.len(), mn.pair_features.len(), mn.bias_features.len()), (1, 0, 1));
    }

    #[test]
    fn gnn_features_share_one_weight() {
        let g = graph(Some(corpus::GNN_PL), corpus::GNN_NMP, "hidden/1");
        let mut p = Params::constant(&g, 0.0);
        for v in p.weights.values_mut() {
            *v = 0.37;
        }
        let mn = to_pairwise_mn(&g, &p).unwrap();
        assert_eq!(mn.pair_features.len(), 12);
        assert!(mn.pair_features.iter().all(|f| f.weight == 0.37));
    }

    #[test]
    fn relu_is_rejected() {
        let g = graph(None, "h(1) :- x(1), +[activation: relu].\no(1) :- h(1).", "o/1");
        let err = to_pairwise_mn(&g, &Params::constant(&g, 0.1)).unwrap_err();
        assert_eq!(err, MlnError::NonSigmoid("h(1)".into()));
    }

    #[test]
    fn two_node_conditional() {
        let mn = PairwiseMarkovNetwork {
            nodes: vec![
                MnNode {
                    label: "a".into(),
                    neuron: NeuronId(0),
                },
                MnNode {
                    label: "b".into(),
                    neuron: NeuronId(1),
                },
            ],
            pair_features: vec![PairFeature { i: 0, j: 1, weight: 1.0 }],
            bias_features: vec![],
        };
        let ev = BTreeMap::from([(1, true)]);
        let p = brute_force_conditional(&mn, 0, &ev).unwrap();
        // States with b=1: a=0 has weight 1, a=1 has weight e.
        let oracle = std::f64::consts::E / (1.0 + std::f64::consts::E);
        assert!((p - oracle).abs() < 1e-15);
        assert!((p - sigmoid(1.0)).abs() < 1e-15);
        assert!((p - 0.73106).abs() < 1e-5);
    }
}
