//! Per-edge reference interpreter, the oracle for plan equivalence.

use std::collections::BTreeMap;

use crate::graph::{NetworkGraph, NeuronId, Role};
use crate::ir::Params;
use crate::nmp::Activation;

use super::PlanError;

/// Visits neurons in topological order and sums each incoming edge.
pub fn forward_edgewise(
    graph: &NetworkGraph,
    params: &Params,
    input: &BTreeMap<NeuronId, f64>,
) -> Result<BTreeMap<NeuronId, f64>, PlanError> {
    let incoming = graph.incoming();
    let mut value: BTreeMap<NeuronId, f64> = BTreeMap::new();
    for &id in &graph.topological_order {
        let i = graph.index_of(id).ok_or_else(|| PlanError::MissingInput(id.to_string()))?;
        let n = &graph.neurons[i];
        if n.role == Role::Input {
            let v = input.get(&id).ok_or_else(|| PlanError::MissingInput(n.atom.to_string()))?;
            value.insert(id, *v);
            continue;
        }
        let mut z = match n.bias_group {
            Some(b) => params.bias(b).ok_or_else(|| PlanError::MissingParameter(format!("bias group {b}")))?,
            None => 0.0,
        };
        for e in &incoming[i] {
            let w = params
                .weight(e.weight_group)
                .ok_or_else(|| PlanError::MissingParameter(format!("weight group {}", e.weight_group)))?;
            z += w * value[&e.from];
        }
        value.insert(id, n.activation.unwrap_or(Activation::Linear).apply(z));
    }
    Ok(value)
}
