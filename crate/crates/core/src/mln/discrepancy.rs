//! Backprop gradients next to exact Markov-network gradients of the unrolled tree.
//!
//! For each output tree the inputs are clamped to the example. With target
//! t, the loss is -[t ln P(o=1 | x) + (1-t) ln P(o=0 | x)], whose
//! derivative in a feature weight is
//! E[f | x] - t E[f | x, o=1] - (1-t) E[f | x, o=0].
//! A feature on a copied edge has weight W / divisor, so it contributes to
//! the group of W with factor 1 / divisor. Bias features keep factor 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{feature_expectations, unroll_step1, unroll_step2, unrolled_mn, MlnError, DEFAULT_NODE_CAP};
use crate::graph::{NetworkGraph, NeuronId, Role};
use crate::ir::Params;
use crate::par::Exec;
use crate::plan::plan;
use crate::train::{example_from, loss_and_grad};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyRow {
    pub param: String,
    pub backprop: f64,
    pub markov: f64,
}

impl DiscrepancyRow {
    pub fn abs_diff(&self) -> f64 {
        (self.markov - self.backprop).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    pub replication: u64,
    /// Nodes in the largest unrolled tree.
    pub tree_nodes: usize,
    pub rows: Vec<DiscrepancyRow>,
}

impl Discrepancy {
    pub fn max_abs_diff(&self) -> f64 {
        self.rows.iter().map(DiscrepancyRow::abs_diff).fold(0.0, f64::max)
    }
}

fn binary(graph: &NetworkGraph, id: NeuronId, v: f64) -> Result<bool, MlnError> {
    if v == 0.0 || v == 1.0 {
        Ok(v == 1.0)
    } else {
        Err(MlnError::NonBinary {
            label: graph.neuron(id).map_or_else(|| id.to_string(), |n| n.atom.to_string()),
            value: v,
        })
    }
}

/// One report per replication factor in `ls`.
pub fn gradient_discrepancy(
    graph: &NetworkGraph,
    params: &Params,
    inputs: &BTreeMap<NeuronId, f64>,
    targets: &BTreeMap<NeuronId, f64>,
    ls: &[u64],
    exec: Exec,
) -> Result<Vec<Discrepancy>, MlnError> {
    let p = plan(graph)?;
    let ex = example_from(&p, inputs, targets)?;
    let (_, grad) = loss_and_grad(&p, params, &ex)?;
    let nw = p.weight_groups.len();
    let wslot: BTreeMap<_, _> = p.weight_groups.iter().enumerate().map(|(k, g)| (*g, k)).collect();
    let bslot: BTreeMap<_, _> = p.bias_groups.iter().enumerate().map(|(k, g)| (*g, nw + k)).collect();
    let backprop: Vec<f64> = p.theta(&grad)?;
    let clamp: BTreeMap<NeuronId, bool> = inputs
        .iter()
        .filter(|(id, _)| graph.neuron(**id).is_some_and(|n| n.role == Role::Input))
        .map(|(id, v)| Ok((*id, binary(graph, *id, *v)?)))
        .collect::<Result<_, MlnError>>()?;
    let bias_of: BTreeMap<NeuronId, _> = graph.neurons.iter().map(|n| (n.id, n.bias_group)).collect();

    let step1 = unroll_step1(graph, DEFAULT_NODE_CAP)?;
    let mut reports = Vec::with_capacity(ls.len());
    for &l in ls {
        let tree = unroll_step2(&step1, l, DEFAULT_NODE_CAP)?;
        let mut markov = vec![0.0; p.num_params()];
        let mut tree_nodes = 0;
        for &root in &tree.roots {
            let members = tree.tree(root);
            tree_nodes = tree_nodes.max(members.len());
            let sub = subtree(&tree, &members);
            let mn = unrolled_mn(&sub, graph, params)?;
            let mut ev = BTreeMap::new();
            for (i, n) in sub.nodes.iter().enumerate() {
                if let Some(&b) = clamp.get(&n.neuron) {
                    ev.insert(i, b);
                }
            }
            let t = targets[&tree.nodes[root].neuron];
            let free = feature_expectations(&mn, &ev, exec)?;
            ev.insert(0, true);
            let on = feature_expectations(&mn, &ev, exec)?;
            ev.insert(0, false);
            let off = feature_expectations(&mn, &ev, exec)?;
            let d = |f: f64, a: f64, b: f64| f - t * a - (1.0 - t) * b;
            for (k, e) in sub.edges.iter().enumerate() {
                markov[wslot[&e.weight_group]] += d(free.pair[k], on.pair[k], off.pair[k]) / e.divisor as f64;
            }
            let mut bk = 0;
            for n in &sub.nodes {
                if let Some(Some(b)) = bias_of.get(&n.neuron) {
                    markov[bslot[b]] += d(free.bias[bk], on.bias[bk], off.bias[bk]);
                    bk += 1;
                }
            }
        }
        let rows = (0..p.num_params())
            .map(|k| DiscrepancyRow {
                param: p.param_name(k),
                backprop: backprop[k],
                markov: markov[k],
            })
            .collect();
        reports.push(Discrepancy {
            replication: l,
            tree_nodes,
            rows,
        });
    }
    Ok(reports)
}

/// The tree of `members` (preorder, root first) as its own network.
fn subtree(net: &super::UnrolledNetwork, members: &[usize]) -> super::UnrolledNetwork {
    let index: BTreeMap<usize, usize> = members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let nodes = members
        .iter()
        .map(|&i| {
            let mut n = net.nodes[i].clone();
            n.child = n.child.map(|c| index[&c]);
            n
        })
        .collect();
    let edges = net
        .edges
        .iter()
        .filter(|e| index.contains_key(&e.to))
        .map(|e| super::UnrolledEdge {
            from: index[&e.from],
            to: index[&e.to],
            ..*e
        })
        .collect();
    super::UnrolledNetwork {
        nodes,
        edges,
        roots: vec![0],
    }
}

/// `replication,param,backprop,markov,abs_diff`, one line per row.
pub fn discrepancy_csv(reports: &[Discrepancy]) -> String {
    let mut s = String::from("replication,param,backprop,markov,abs_diff\n");
    for r in reports {
        for row in &r.rows {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e}",
                r.replication,
                csv_field(&row.param),
                row.backprop,
                row.markov,
                row.abs_diff()
            );
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
