//! Tree unrolling of a network.
//!
//! Step 1 gives every node a private copy of each parent together with that
//! parent's whole ancestry, one tree per output. Step 2 replicates every
//! parent subtree `L` times and divides the weight into the node by `L`.
//! Weights are kept symbolic as (group, divisor) so the division happens
//! once, at the end.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{bias_value, require_sigmoid, weight_value, BiasFeature, MlnError, MnNode, PairFeature, PairwiseMarkovNetwork};
use crate::graph::{NetworkGraph, NeuronId, WeightGroupId};
use crate::ir::Params;

pub const DEFAULT_NODE_CAP: u64 = 1 << 20;

/// One hop from a node to a copy of one of its parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CopyStep {
    /// Position among the original node's incoming edges.
    pub parent: usize,
    pub replica: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnrolledNode {
    pub neuron: NeuronId,
    /// Steps from the root down to this copy.
    pub path: Vec<CopyStep>,
    /// The node this copy feeds, toward the root. None for roots.
    pub child: Option<usize>,
}

/// Edge `from -> to` with weight `w(weight_group) / divisor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnrolledEdge {
    pub from: usize,
    pub to: usize,
    pub weight_group: WeightGroupId,
    pub divisor: u64,
}

impl UnrolledEdge {
    pub fn weight(&self, params: &Params) -> Option<f64> {
        params.weight(self.weight_group).map(|w| w / self.divisor as f64)
    }
}

/// A forest of copied neurons, one tree per output, in preorder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnrolledNetwork {
    pub nodes: Vec<UnrolledNode>,
    /// Each non-root node has exactly one outgoing edge, to its `child`.
    pub edges: Vec<UnrolledEdge>,
    pub roots: Vec<usize>,
}

impl UnrolledNetwork {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Incoming edges per node, in edge order.
    pub fn parents(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            out[e.to].push(k);
        }
        out
    }

    /// Tree checks: each non-root has one edge, to its `child`, and every
    /// root is reachable only from itself.
    pub fn is_forest(&self) -> bool {
        let mut out = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            if e.from >= self.nodes.len() || e.to >= self.nodes.len() || self.nodes[e.from].child != Some(e.to) {
                return false;
            }
            out[e.from] += 1;
        }
        self.nodes.iter().enumerate().all(|(i, n)| match n.child {
            None => out[i] == 0 && self.roots.contains(&i),
            Some(c) => out[i] == 1 && c != i,
        })
    }

    /// Nodes of the tree containing `root`, in preorder.
    pub fn tree(&self, root: usize) -> Vec<usize> {
        let parents = self.parents();
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            out.push(n);
            for &k in parents[n].iter().rev() {
                stack.push(self.edges[k].from);
            }
        }
        out
    }

    pub fn label(&self, graph: &NetworkGraph, i: usize) -> String {
        let n = &self.nodes[i];
        let mut s = graph.neuron(n.neuron).map_or_else(|| n.neuron.to_string(), |x| x.atom.to_string());
        s.push('#');
        for (k, step) in n.path.iter().enumerate() {
            if k > 0 {
                s.push('/');
            }
            let _ = write!(s, "{}.{}", step.parent, step.replica);
        }
        s
    }
}

fn check_cap(needed: u64, cap: u64) -> Result<(), MlnError> {
    if needed > cap {
        Err(MlnError::NodeCap { needed, cap })
    } else {
        Ok(())
    }
}

/// Child node, parent slot, and a per-step tag for the edge being built.
type Link<T> = Option<(usize, usize, T)>;

/// Tree copy rooted at each output neuron.
pub fn unroll_step1(graph: &NetworkGraph, cap: u64) -> Result<UnrolledNetwork, MlnError> {
    let order = graph.topological_sort().map_err(crate::plan::PlanError::from)?;
    let incoming = graph.incoming();
    let pos = |id: NeuronId| graph.index_of(id).expect("validated edge");
    // Subtree sizes, saturating so that huge graphs fail the cap instead of overflowing.
    let mut size = vec![1u64; graph.neurons.len()];
    for id in &order {
        let i = pos(*id);
        size[i] = incoming[i].iter().fold(1u64, |acc, e| acc.saturating_add(size[pos(e.from)]));
    }
    let outputs = graph.outputs();
    let needed = outputs.iter().fold(0u64, |acc, o| acc.saturating_add(size[pos(*o)]));
    check_cap(needed, cap)?;

    let mut net = UnrolledNetwork {
        nodes: Vec::with_capacity(needed as usize),
        edges: Vec::new(),
        roots: Vec::new(),
    };
    for o in outputs {
        net.roots.push(net.nodes.len());
        // (neuron, child node, parent slot, weight group)
        let mut stack: Vec<(NeuronId, Link<WeightGroupId>)> = vec![(o, None)];
        while let Some((id, link)) = stack.pop() {
            let me = net.nodes.len();
            let path = match link {
                None => Vec::new(),
                Some((child, slot, g)) => {
                    net.edges.push(UnrolledEdge {
                        from: me,
                        to: child,
                        weight_group: g,
                        divisor: 1,
                    });
                    let mut p = net.nodes[child].path.clone();
                    p.push(CopyStep { parent: slot, replica: 0 });
                    p
                }
            };
            net.nodes.push(UnrolledNode {
                neuron: id,
                path,
                child: link.map(|l| l.0),
            });
            for (slot, e) in incoming[pos(id)].iter().enumerate().rev() {
                stack.push((e.from, Some((me, slot, e.weight_group))));
            }
        }
    }
    Ok(net)
}

/// L-fold replication of every parent subtree, weights divided by L.
pub fn unroll_step2(tree: &UnrolledNetwork, l: u64, cap: u64) -> Result<UnrolledNetwork, MlnError> {
    if l == 0 {
        return Err(MlnError::ZeroReplication);
    }
    let parents = tree.parents();
    // Sizes bottom-up: preorder reversed visits parents before children.
    let mut size = vec![1u64; tree.len()];
    for i in (0..tree.len()).rev() {
        let below = parents[i].iter().fold(0u64, |acc, &k| acc.saturating_add(size[tree.edges[k].from]));
        size[i] = below.saturating_mul(l).saturating_add(1);
    }
    let needed = tree.roots.iter().fold(0u64, |acc, &r| acc.saturating_add(size[r]));
    check_cap(needed, cap)?;

    let mut net = UnrolledNetwork {
        nodes: Vec::with_capacity(needed as usize),
        edges: Vec::new(),
        roots: Vec::new(),
    };
    for &root in &tree.roots {
        net.roots.push(net.nodes.len());
        // (old node, new child, old edge, replica)
        let mut stack: Vec<(usize, Link<u64>)> = vec![(root, None)];
        while let Some((old, link)) = stack.pop() {
            let me = net.nodes.len();
            let path = match link {
                None => tree.nodes[old].path.clone(),
                Some((child, k, r)) => {
                    let e = tree.edges[k];
                    net.edges.push(UnrolledEdge {
                        from: me,
                        to: child,
                        weight_group: e.weight_group,
                        divisor: e.divisor * l,
                    });
                    let step = *tree.nodes[old].path.last().expect("non-root has a path");
                    let mut p = net.nodes[child].path.clone();
                    p.push(CopyStep {
                        parent: step.parent,
                        replica: step.replica * l + r,
                    });
                    p
                }
            };
            net.nodes.push(UnrolledNode {
                neuron: tree.nodes[old].neuron,
                path,
                child: link.map(|x| x.0),
            });
            for &k in parents[old].iter().rev() {
                for r in (0..l).rev() {
                    stack.push((tree.edges[k].from, Some((me, k, r))));
                }
            }
        }
    }
    Ok(net)
}

/// Markov network over the unrolled copies. Copies keep their neuron's bias.
pub fn unrolled_mn(
    tree: &UnrolledNetwork,
    graph: &NetworkGraph,
    params: &Params,
) -> Result<PairwiseMarkovNetwork, MlnError> {
    require_sigmoid(graph)?;
    let biases: BTreeMap<NeuronId, Option<_>> = graph.neurons.iter().map(|n| (n.id, n.bias_group)).collect();
    let mut mn = PairwiseMarkovNetwork::default();
    for (i, n) in tree.nodes.iter().enumerate() {
        mn.nodes.push(MnNode {
            label: tree.label(graph, i),
            neuron: n.neuron,
        });
        if let Some(Some(b)) = biases.get(&n.neuron) {
            mn.bias_features.push(BiasFeature {
                i,
                weight: bias_value(params, *b)?,
            });
        }
    }
    for e in &tree.edges {
        mn.pair_features.push(PairFeature {
            i: e.from,
            j: e.to,
            weight: weight_value(params, e.weight_group)? / e.divisor as f64,
        });
    }
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
    use crate::nmp::load_program;

    fn graph(nmp: &str, outputs: &str) -> NetworkGraph {
        let prog = load_program(None, nmp).unwrap();
        let io = IoSpec {
            outputs: IoSpec::parse_list(outputs).unwrap(),
            ..IoSpec::default()
        };
        build_network(&prog, &io, &Limits::default()).unwrap()
    }

    const CHAIN: &str = "h(1) :- x(1).\no(1) :- h(1).";
    const DIAMOND: &str = "h(1) :- x(1).\nh(2) :- x(1).\no(1) :- h(1).\no(1) :- h(2).";

    /// Counts copies by following every directed path into the root.
    fn paths_into(graph: &NetworkGraph, id: NeuronId) -> u64 {
        1 + graph.edges.iter().filter(|e| e.to == id).map(|e| paths_into(graph, e.from)).sum::<u64>()
    }

    #[test]
    fn chain_is_unchanged() {
        let g = graph(CHAIN, "o/1");
        let t = unroll_step1(&g, DEFAULT_NODE_CAP).unwrap();
        assert_eq!((t.len(), t.edges.len()), (3, 2));
        assert!(t.is_forest());
        let labels: Vec<String> = (0..3).map(|i| t.label(&g, i)).collect();
        assert_eq!(labels, ["o(1)#", "h(1)#0.0", "x(1)#0.0/0.0"]);
    }

    #[test]
    fn diamond_copies_shared_input() {
        let g = graph(DIAMOND, "o/1");
        let t = unroll_step1(&g, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.is_forest());
        let x = g.find(&crate::logic::read_term("x(1)").unwrap()).unwrap();
        let copies: Vec<_> = t.nodes.iter().enumerate().filter(|(_, n)| n.neuron == x).collect();
        assert_eq!(copies.len(), 2);
        assert_ne!(copies[0].1.child, copies[1].1.child);
    }

    #[test]
    fn dnn_count_matches_path_oracle() {
        let g = graph(corpus::DNN_NMP, "output/1");
        let t = unroll_step1(&g, DEFAULT_NODE_CAP).unwrap();
        let want: u64 = g.outputs().iter().map(|o| paths_into(&g, *o)).sum();
        assert_eq!(t.len() as u64, want);
        assert_eq!(t.len(), 15);
        assert!(t.is_forest());
    }

    #[test]
    fn step2_chain_counts() {
        let g = graph(CHAIN, "o/1");
        let t = unroll_step1(&g, DEFAULT_NODE_CAP).unwrap();
        let t2 = unroll_step2(&t, 2, DEFAULT_NODE_CAP).unwrap();
        assert_eq!((t2.len(), t2.edges.len()), (7, 6));
        assert!(t2.edges.iter().all(|e| e.divisor == 2));
        assert!(t2.is_forest());
        assert_eq!(unroll_step2(&t, 3, DEFAULT_NODE_CAP).unwrap().len(), 13);
        assert_eq!(unroll_step2(&t, 1, DEFAULT_NODE_CAP).unwrap(), t);
    }

    #[test]
    fn step2_weights_divide_exactly() {
        let g = graph(DIAMOND, "o/1");
        let mut p = Params::constant(&g, 0.0);
        for (k, v) in p.weights.values_mut().enumerate() {
            *v = 0.3 + 0.17 * k as f64;
        }
        let t = unroll_step1(&g, DEFAULT_NODE_CAP).unwrap();
        for l in 1..=4 {
            let t2 = unroll_step2(&t, l, DEFAULT_NODE_CAP).unwrap();
            for e in &t2.edges {
                assert_eq!(e.weight(&p).unwrap() * l as f64, p.weight(e.weight_group).unwrap());
            }
        }
    }

    #[test]
    fn caps_and_zero() {
        let g = graph(CHAIN, "o/1");
        assert_eq!(unroll_step1(&g, 2), Err(MlnError::NodeCap { needed: 3, cap: 2 }));
        let t = unroll_step1(&g, 3).unwrap();
        assert_eq!(unroll_step2(&t, 2, 6), Err(MlnError::NodeCap { needed: 7, cap: 6 }));
        assert_eq!(unroll_step2(&t, 0, 100), Err(MlnError::ZeroReplication));
    }

    #[test]
    fn mn_of_unrolled_tree() {
        let g = graph(CHAIN, "o/1");
        let p = Params::constant(&g, 0.5);
        let t = unroll_step2(&unroll_step1(&g, 100).unwrap(), 2, 100).unwrap();
        let mn = unrolled_mn(&t, &g, &p).unwrap();
        assert_eq!(mn.len(), 7);
        assert_eq!(mn.bias_features.len(), 3);
        assert!(mn.pair_features.iter().all(|f| f.weight == 0.25));
    }
}
