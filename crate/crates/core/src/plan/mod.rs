//! Stratified execution plans.
//!
//! Neurons are placed in strata by longest path from a source. Each
//! transition reads only the previous stratum; a neuron needed further up
//! is carried through intermediate strata in pass-through slots. Same-rule
//! edge sets forming a complete bipartite block become a dense matmul;
//! everything else in a transition is one sparse gather-sum.
//!
//! Parameters live in one flat vector `theta`: weight groups first, in
//! `weight_groups` order, then bias groups.

pub mod edgewise;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::graph::{BiasGroupId, GraphError, NetworkGraph, NeuronId, WeightGroupId};
use crate::ir::Params;
use crate::nmp::Activation;
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no value for input neuron {0}")]
    MissingInput(String),
    #[error("{0} is not an input neuron")]
    NotAnInput(String),
    #[error("no value for {0}")]
    MissingParameter(String),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stratum {
    /// Neuron held by each slot: real members first, then carried copies.
    pub slots: Vec<NeuronId>,
    /// Number of real members at the front of `slots`.
    pub real: usize,
    /// Activation per real slot; `None` for inputs.
    pub activation: Vec<Option<Activation>>,
    /// Bias parameter index per real slot.
    pub bias: Vec<Option<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GatherEntry {
    pub src: usize,
    pub dst: usize,
    pub param: usize,
    /// Index into the graph's edge list.
    pub edge: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerOp {
    /// `z[targets] += W · a[sources]` with `W[i][j] = theta[tying[i][j]]`.
    DenseMatmul {
        rule_id: usize,
        sources: Vec<usize>,
        targets: Vec<usize>,
        tying: Array2<usize>,
        edges: Array2<usize>,
    },
    SparseGatherSum { entries: Vec<GatherEntry> },
}

impl LayerOp {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerOp::DenseMatmul { .. } => "dense_matmul",
            LayerOp::SparseGatherSum { .. } => "sparse_gather_sum",
        }
    }

    /// Every realized cell as (src slot, dst slot, param, edge).
    pub fn cells(&self) -> Vec<GatherEntry> {
        match self {
            LayerOp::SparseGatherSum { entries } => entries.clone(),
            LayerOp::DenseMatmul {
                sources,
                targets,
                tying,
                edges,
                ..
            } => {
                let mut out = Vec::with_capacity(tying.len());
                for (i, &dst) in targets.iter().enumerate() {
                    for (j, &src) in sources.iter().enumerate() {
                        out.push(GatherEntry {
                            src,
                            dst,
                            param: tying[[i, j]],
                            edge: edges[[i, j]],
                        });
                    }
                }
                out
            }
        }
    }
}

/// Maps stratum `s` to `s + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub ops: Vec<LayerOp>,
    /// (source slot, target slot) pass-through copies.
    pub carries: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionPlan {
    pub strata: Vec<Stratum>,
    pub transitions: Vec<Transition>,
    /// Real location (stratum, slot) of every neuron.
    pub neuron_index: BTreeMap<NeuronId, (usize, usize)>,
    pub weight_groups: Vec<WeightGroupId>,
    pub bias_groups: Vec<BiasGroupId>,
    pub inputs: Vec<NeuronId>,
    pub outputs: Vec<NeuronId>,
    labels: BTreeMap<NeuronId, String>,
}

/// Activations and pre-activations per stratum slot.
#[derive(Clone, Debug)]
pub struct Trace {
    pub z: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

pub fn plan(graph: &NetworkGraph) -> Result<ExecutionPlan, PlanError> {
    let level = graph.strata()?;
    let depth = level.iter().max().map_or(1, |m| m + 1);
    let pos = |id: NeuronId| graph.index_of(id).expect("validated edge");

    // Highest stratum in which each neuron must be readable.
    let mut needed_until = level.clone();
    for e in &graph.edges {
        let (a, b) = (pos(e.from), pos(e.to));
        needed_until[a] = needed_until[a].max(level[b] - 1);
    }

    let weight_groups: Vec<WeightGroupId> = graph.weight_groups.iter().map(|g| g.id).collect();
    let bias_groups: Vec<BiasGroupId> = graph.bias_groups.iter().map(|g| g.id).collect();
    let wparam: BTreeMap<WeightGroupId, usize> = weight_groups.iter().enumerate().map(|(i, g)| (*g, i)).collect();
    let bparam: BTreeMap<BiasGroupId, usize> =
        bias_groups.iter().enumerate().map(|(i, g)| (*g, weight_groups.len() + i)).collect();

    let mut strata = Vec::with_capacity(depth);
    let mut slot_of: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); depth];
    let mut neuron_index = BTreeMap::new();
    for (s, slot_map) in slot_of.iter_mut().enumerate() {
        let real: Vec<usize> = (0..graph.neurons.len()).filter(|&i| level[i] == s).collect();
        let carried: Vec<usize> = (0..graph.neurons.len())
            .filter(|&i| level[i] < s && needed_until[i] >= s)
            .collect();
        let mut slots = Vec::with_capacity(real.len() + carried.len());
        for (k, &i) in real.iter().chain(&carried).enumerate() {
            slot_map.insert(i, k);
            slots.push(graph.neurons[i].id);
            if k < real.len() {
                neuron_index.insert(graph.neurons[i].id, (s, k));
            }
        }
        let activation = real.iter().map(|&i| graph.neurons[i].activation).collect();
        let mut bias = Vec::with_capacity(real.len());
        for &i in &real {
            let n = &graph.neurons[i];
            bias.push(match n.bias_group {
                Some(b) => Some(*bparam.get(&b).ok_or_else(|| PlanError::MissingParameter(format!("bias group {b}")))?),
                None => None,
            });
        }
        strata.push(Stratum {
            slots,
            real: real.len(),
            activation,
            bias,
        });
    }

    let mut transitions = Vec::with_capacity(depth.saturating_sub(1));
    for s in 1..depth {
        let carries: Vec<(usize, usize)> = slot_of[s]
            .iter()
            .filter(|(&i, _)| level[i] < s)
            .map(|(&i, &dst)| (slot_of[s - 1][&i], dst))
            .collect();

        // Edges into stratum s, grouped by rule.
        let mut by_rule: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, e) in graph.edges.iter().enumerate() {
            if level[pos(e.to)] == s {
                let rule = graph.weight_group(e.weight_group).map(|g| g.rule_id).unwrap_or(usize::MAX);
                by_rule.entry(rule).or_default().push(k);
            }
        }
        let mut ops = Vec::new();
        let mut sparse = Vec::new();
        for (rule_id, ks) in by_rule {
            let entry = |k: usize| -> Result<GatherEntry, PlanError> {
                let e = &graph.edges[k];
                Ok(GatherEntry {
                    src: slot_of[s - 1][&pos(e.from)],
                    dst: slot_of[s][&pos(e.to)],
                    param: *wparam
                        .get(&e.weight_group)
                        .ok_or_else(|| PlanError::MissingParameter(format!("weight group {}", e.weight_group)))?,
                    edge: k,
                })
            };
            let entries = ks.iter().map(|&k| entry(k)).collect::<Result<Vec<_>, _>>()?;
            match dense_block(rule_id, &entries) {
                Some(op) => ops.push(op),
                None => sparse.extend(entries),
            }
        }
        if !sparse.is_empty() {
            ops.push(LayerOp::SparseGatherSum { entries: sparse });
        }
        transitions.push(Transition { ops, carries });
    }

    Ok(ExecutionPlan {
        strata,
        transitions,
        neuron_index,
        weight_groups,
        bias_groups,
        inputs: graph.inputs(),
        outputs: graph.outputs(),
        labels: graph.neurons.iter().map(|n| (n.id, n.atom.to_string())).collect(),
    })
}

/// A dense op when the entries cover every (source, target) pair exactly once.
fn dense_block(rule_id: usize, entries: &[GatherEntry]) -> Option<LayerOp> {
    let sources: Vec<usize> = entries.iter().map(|e| e.src).collect::<BTreeSet<_>>().into_iter().collect();
    let targets: Vec<usize> = entries.iter().map(|e| e.dst).collect::<BTreeSet<_>>().into_iter().collect();
    if entries.len() < 2 || entries.len() != sources.len() * targets.len() {
        return None;
    }
    let mut tying = Array2::from_elem((targets.len(), sources.len()), usize::MAX);
    let mut edges = Array2::from_elem((targets.len(), sources.len()), usize::MAX);
    for e in entries {
        let i = targets.binary_search(&e.dst).unwrap();
        let j = sources.binary_search(&e.src).unwrap();
        if edges[[i, j]] != usize::MAX {
            return None;
        }
        tying[[i, j]] = e.param;
        edges[[i, j]] = e.edge;
    }
    Some(LayerOp::DenseMatmul {
        rule_id,
        sources,
        targets,
        tying,
        edges,
    })
}

impl ExecutionPlan {
    pub fn num_params(&self) -> usize {
        self.weight_groups.len() + self.bias_groups.len()
    }

    /// Flattens `params` into `theta` order.
    pub fn theta(&self, params: &Params) -> Result<Vec<f64>, PlanError> {
        let mut theta = Vec::with_capacity(self.num_params());
        for g in &self.weight_groups {
            theta.push(params.weight(*g).ok_or_else(|| PlanError::MissingParameter(format!("weight group {g}")))?);
        }
        for g in &self.bias_groups {
            theta.push(params.bias(*g).ok_or_else(|| PlanError::MissingParameter(format!("bias group {g}")))?);
        }
        Ok(theta)
    }

    pub fn params(&self, theta: &[f64]) -> Params {
        let nw = self.weight_groups.len();
        Params {
            weights: self.weight_groups.iter().zip(theta).map(|(g, v)| (*g, *v)).collect(),
            biases: self.bias_groups.iter().zip(&theta[nw..]).map(|(g, v)| (*g, *v)).collect(),
        }
    }

    /// Describes parameter `p` (for diagnostics and reports).
    pub fn param_name(&self, p: usize) -> String {
        let nw = self.weight_groups.len();
        if p < nw {
            format!("w{}", self.weight_groups[p])
        } else {
            format!("b{}", self.bias_groups[p - nw])
        }
    }

    pub fn label(&self, id: NeuronId) -> &str {
        self.labels.get(&id).map_or("?", String::as_str)
    }

    /// Input values in `inputs` order.
    pub fn input_vector(&self, input: &BTreeMap<NeuronId, f64>) -> Result<Vec<f64>, PlanError> {
        if let Some(extra) = input.keys().find(|id| self.inputs.binary_search(id).is_err()) {
            return Err(PlanError::NotAnInput(self.label(*extra).to_string()));
        }
        self.inputs
            .iter()
            .map(|id| input.get(id).copied().ok_or_else(|| PlanError::MissingInput(self.label(*id).to_string())))
            .collect()
    }

    /// Runs the plan. `x` holds input values in `inputs` order.
    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Trace {
        assert_eq!(theta.len(), self.num_params(), "parameter vector length");
        assert_eq!(x.len(), self.inputs.len(), "input vector length");
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(self.strata.len());
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(self.strata.len());
        let first = &self.strata[0];
        let mut a0 = vec![0.0; first.slots.len()];
        for (slot, id) in first.slots.iter().enumerate().take(first.real) {
            if let Ok(k) = self.inputs.binary_search(id) {
                a0[slot] = x[k];
            }
        }
        z.push(a0.clone());
        a.push(a0);
        for (s, t) in self.transitions.iter().enumerate() {
            let st = &self.strata[s + 1];
            let prev = &a[s];
            let mut zs: Vec<f64> = (0..st.slots.len())
                .map(|k| if k < st.real { st.bias[k].map_or(0.0, |p| theta[p]) } else { 0.0 })
                .collect();
            for op in &t.ops {
                match op {
                    LayerOp::DenseMatmul {
                        sources, targets, tying, ..
                    } => {
                        let w = tying.mapv(|p| theta[p]);
                        let src: Array1<f64> = sources.iter().map(|&j| prev[j]).collect();
                        let out = w.dot(&src);
                        for (i, &dst) in targets.iter().enumerate() {
                            zs[dst] += out[i];
                        }
                    }
                    LayerOp::SparseGatherSum { entries } => {
                        for e in entries {
                            zs[e.dst] += theta[e.param] * prev[e.src];
                        }
                    }
                }
            }
            let mut as_ = vec![0.0; st.slots.len()];
            for k in 0..st.real {
                as_[k] = st.activation[k].unwrap_or(Activation::Linear).apply(zs[k]);
            }
            for &(src, dst) in &t.carries {
                zs[dst] = prev[src];
                as_[dst] = prev[src];
            }
            z.push(zs);
            a.push(as_);
        }
        Trace { z, a }
    }

    /// Activation of neuron `id` in a trace.
    pub fn value(&self, trace: &Trace, id: NeuronId) -> f64 {
        let (s, k) = self.neuron_index[&id];
        trace.a[s][k]
    }

    pub fn values(&self, trace: &Trace) -> BTreeMap<NeuronId, f64> {
        self.neuron_index.iter().map(|(id, &(s, k))| (*id, trace.a[s][k])).collect()
    }

    /// Reverse pass. `dloss` gives ∂loss/∂a for neurons that enter the loss
    /// directly; returns ∂loss/∂theta.
    pub fn backward(&self, theta: &[f64], trace: &Trace, dloss: &[(NeuronId, f64)]) -> Vec<f64> {
        let mut grad = vec![0.0; theta.len()];
        let mut da: Vec<Vec<f64>> = self.strata.iter().map(|s| vec![0.0; s.slots.len()]).collect();
        for &(id, d) in dloss {
            let (s, k) = self.neuron_index[&id];
            da[s][k] += d;
        }
        for s in (1..self.strata.len()).rev() {
            let st = &self.strata[s];
            let t = &self.transitions[s - 1];
            let mut dz = vec![0.0; st.slots.len()];
            for k in 0..st.real {
                let act = st.activation[k].unwrap_or(Activation::Linear);
                dz[k] = da[s][k] * act.derivative(trace.z[s][k], trace.a[s][k]);
                if let Some(p) = st.bias[k] {
                    grad[p] += dz[k];
                }
            }
            let (lower, upper) = da.split_at_mut(s);
            let dprev = &mut lower[s - 1];
            let prev = &trace.a[s - 1];
            for op in &t.ops {
                match op {
                    LayerOp::DenseMatmul {
                        sources, targets, tying, ..
                    } => {
                        for (i, &dst) in targets.iter().enumerate() {
                            for (j, &src) in sources.iter().enumerate() {
                                let p = tying[[i, j]];
                                grad[p] += dz[dst] * prev[src];
                                dprev[src] += theta[p] * dz[dst];
                            }
                        }
                    }
                    LayerOp::SparseGatherSum { entries } => {
                        for e in entries {
                            grad[e.param] += dz[e.dst] * prev[e.src];
                            dprev[e.src] += theta[e.param] * dz[e.dst];
                        }
                    }
                }
            }
            for &(src, dst) in &t.carries {
                dprev[src] += upper[0][dst];
            }
        }
        grad
    }

    /// Forward over many input vectors; results in input order.
    pub fn forward_batch(&self, theta: &[f64], xs: &[Vec<f64>], exec: Exec) -> Vec<Trace> {
        exec.map(xs, |x| self.forward(theta, x))
    }

    pub fn dense_ops(&self) -> impl Iterator<Item = &LayerOp> {
        self.transitions.iter().flat_map(|t| &t.ops).filter(|op| matches!(op, LayerOp::DenseMatmul { .. }))
    }

    pub fn sparse_ops(&self) -> impl Iterator<Item = &LayerOp> {
        self.transitions.iter().flat_map(|t| &t.ops).filter(|op| matches!(op, LayerOp::SparseGatherSum { .. }))
    }

    /// Cells (transition, op, entry) reading parameter `p`.
    pub fn tied_cells(&self, p: usize) -> Vec<(usize, usize, GatherEntry)> {
        let mut out = Vec::new();
        for (ti, t) in self.transitions.iter().enumerate() {
            for (oi, op) in t.ops.iter().enumerate() {
                out.extend(op.cells().into_iter().filter(|c| c.param == p).map(|c| (ti, oi, c)));
            }
        }
        out
    }

    /// Text listing of strata and operations.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "plan: {} strata, {} weight groups, {} bias groups",
            self.strata.len(),
            self.weight_groups.len(),
            self.bias_groups.len()
        );
        for (s, st) in self.strata.iter().enumerate() {
            let real: Vec<&str> = st.slots[..st.real].iter().map(|id| self.label(*id)).collect();
            let _ = write!(out, "stratum {s}: {}", real.join(" "));
            if st.slots.len() > st.real {
                let carried: Vec<&str> = st.slots[st.real..].iter().map(|id| self.label(*id)).collect();
                let _ = write!(out, " | carried: {}", carried.join(" "));
            }
            out.push('\n');
            if s == 0 {
                continue;
            }
            let t = &self.transitions[s - 1];
            let prev = &self.strata[s - 1];
            for op in &t.ops {
                match op {
                    LayerOp::DenseMatmul {
                        rule_id,
                        sources,
                        targets,
                        tying,
                        ..
                    } => {
                        let _ = writeln!(out, "  dense_matmul {}x{} (rule {rule_id})", targets.len(), sources.len());
                        for (i, &dst) in targets.iter().enumerate() {
                            let row: Vec<String> = (0..sources.len()).map(|j| self.param_name(tying[[i, j]])).collect();
                            let _ = writeln!(out, "    {} <- [{}]", self.label(st.slots[dst]), row.join(" "));
                        }
                    }
                    LayerOp::SparseGatherSum { entries } => {
                        let _ = writeln!(out, "  sparse_gather_sum {} entries", entries.len());
                        for e in entries {
                            let _ = writeln!(
                                out,
                                "    {} <- {} * {}",
                                self.label(st.slots[e.dst]),
                                self.param_name(e.param),
                                self.label(prev.slots[e.src])
                            );
                        }
                    }
                }
            }
            if !t.carries.is_empty() {
                let _ = writeln!(out, "  carry {}", t.carries.len());
            }
        }
        out
    }
}

/// Evaluates the plan on named input values.
pub fn forward_plan(
    plan: &ExecutionPlan,
    params: &Params,
    input: &BTreeMap<NeuronId, f64>,
) -> Result<BTreeMap<NeuronId, f64>, PlanError> {
    let theta = plan.theta(params)?;
    let x = plan.input_vector(input)?;
    Ok(plan.values(&plan.forward(&theta, &x)))
}

/// Role lookup kept here so callers need not hold the graph.
pub fn is_output(plan: &ExecutionPlan, id: NeuronId) -> bool {
    plan.outputs.binary_search(&id).is_ok()
}
