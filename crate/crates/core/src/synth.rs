//! Synthetic network graphs for property checks and benchmarks.
//!
//! Random graphs use atoms `x(i)` for inputs, `n(i)` for hidden neurons and
//! `o(i)` for outputs. Outputs are exactly the non-input sinks, and every
//! input feeds at least one neuron, so nothing needs pruning.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{BiasGroup, BiasGroupId, Edge, IoSpec, NetworkGraph, Neuron, NeuronId, Role, WeightGroup, WeightGroupId};
use crate::ir::Params;
use crate::logic::{Predicate, Term};
use crate::nmp::Activation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Total neuron count is drawn from `3..=max_neurons`.
    pub max_neurons: usize,
    /// Draw hidden activations from all kinds instead of sigmoid only. Outputs stay sigmoid.
    pub mixed_activations: bool,
    /// Chance that an edge reuses an existing weight group.
    pub tie_prob: f64,
    /// Chance of each extra (beyond the first) candidate parent being linked.
    pub edge_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            max_neurons: 12,
            mixed_activations: false,
            tie_prob: 0.3,
            edge_prob: 0.3,
        }
    }
}

fn atom(name: &str, i: usize) -> Term {
    Term::compound(name, vec![Term::Int(i as i64 + 1)])
}

/// Assembles a graph from per-neuron roles and activations plus
/// `(from, to, group)` edges over positions. Every non-input gets its own
/// bias group.
pub fn assemble(
    roles: &[Role],
    activations: &[Activation],
    edges: &[(usize, usize, usize)],
) -> Result<NetworkGraph, crate::graph::GraphError> {
    // Ids must follow (role, atom) order, so position k of each role becomes atom k.
    let mut order: Vec<usize> = (0..roles.len()).collect();
    order.sort_by_key(|&i| (roles[i], i));
    let mut id_of = vec![NeuronId(0); roles.len()];
    let mut count = [0usize; 3];
    let mut neurons = Vec::with_capacity(roles.len());
    let mut bias_groups = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let id = NeuronId(k);
        id_of[i] = id;
        let (name, slot) = match roles[i] {
            Role::Input => ("x", 0),
            Role::Hidden => ("n", 1),
            Role::Output => ("o", 2),
        };
        let a = atom(name, count[slot]);
        count[slot] += 1;
        let biased = roles[i] != Role::Input;
        let bias_group = biased.then(|| {
            let b = BiasGroupId(bias_groups.len());
            bias_groups.push(BiasGroup {
                id: b,
                predicate: Predicate::new(name, 1),
                key: vec![(0, a.args()[0].clone())],
                members: vec![id],
            });
            b
        });
        neurons.push(Neuron {
            id,
            atom: a,
            role: roles[i],
            activation: biased.then_some(activations[i]),
            bias_group,
        });
    }
    let groups: BTreeSet<usize> = edges.iter().map(|e| e.2).collect();
    let gmap: Vec<usize> = groups.iter().copied().collect();
    let weight_groups = (0..gmap.len())
        .map(|g| WeightGroup {
            id: WeightGroupId(g),
            rule_id: g,
            key: Vec::new(),
        })
        .collect();
    let mut es: Vec<Edge> = edges
        .iter()
        .map(|&(f, t, g)| Edge {
            from: id_of[f],
            to: id_of[t],
            weight_group: WeightGroupId(gmap.binary_search(&g).expect("collected")),
        })
        .collect();
    es.sort();
    let mut io_spec = IoSpec::default();
    if roles.contains(&Role::Input) {
        io_spec.inputs.insert(Predicate::new("x", 1));
    }
    io_spec.outputs.insert(Predicate::new("o", 1));
    let mut g = NetworkGraph {
        neurons,
        edges: es,
        weight_groups,
        bias_groups,
        io_spec,
        topological_order: Vec::new(),
    };
    g.topological_order = g.topological_sort()?;
    g.validate()?;
    Ok(g)
}

/// A random layered DAG respecting every graph invariant.
pub fn random_graph<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> NetworkGraph {
    let n = rng.gen_range(3..=cfg.max_neurons.max(3));
    let n_in = rng.gen_range(1..=(n / 3).max(1));
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    let mut groups = 0usize;
    let mut group = |rng: &mut R| {
        if groups > 0 && rng.gen_bool(cfg.tie_prob) {
            rng.gen_range(0..groups)
        } else {
            groups += 1;
            groups - 1
        }
    };
    let mut linked: BTreeSet<(usize, usize)> = BTreeSet::new();
    for j in n_in..n {
        let first = rng.gen_range(0..j);
        linked.insert((first, j));
        for i in 0..j {
            if i != first && rng.gen_bool(cfg.edge_prob) {
                linked.insert((i, j));
            }
        }
    }
    for i in 0..n_in {
        if !linked.iter().any(|e| e.0 == i) {
            linked.insert((i, rng.gen_range(n_in..n)));
        }
    }
    for &(i, j) in &linked {
        edges.push((i, j, group(rng)));
    }
    let has_child: BTreeSet<usize> = linked.iter().map(|e| e.0).collect();
    let roles: Vec<Role> = (0..n)
        .map(|i| {
            if i < n_in {
                Role::Input
            } else if has_child.contains(&i) {
                Role::Hidden
            } else {
                Role::Output
            }
        })
        .collect();
    let kinds = [Activation::Sigmoid, Activation::Relu, Activation::Linear];
    let activations: Vec<Activation> = roles
        .iter()
        .map(|r| match r {
            Role::Hidden if cfg.mixed_activations => *kinds.choose(rng).expect("non-empty"),
            _ => Activation::Sigmoid,
        })
        .collect();
    assemble(&roles, &activations, &edges).expect("generator keeps the invariants")
}

/// `x(1) -> n(1) -> ... -> o(1)` with `depth` edges, each its own group.
pub fn chain(depth: usize) -> NetworkGraph {
    assert!(depth >= 1, "a chain needs at least one edge");
    let mut roles = vec![Role::Input];
    roles.extend(std::iter::repeat_n(Role::Hidden, depth - 1));
    roles.push(Role::Output);
    let edges: Vec<_> = (0..depth).map(|i| (i, i + 1, i)).collect();
    assemble(&roles, &vec![Activation::Sigmoid; depth + 1], &edges).expect("chain is valid")
}

/// Uniform parameters in `[-scale, scale]`, weights then biases.
pub fn random_params<R: Rng>(rng: &mut R, graph: &NetworkGraph, scale: f64) -> Params {
    let mut p = Params::constant(graph, 0.0);
    for v in p.weights.values_mut().chain(p.biases.values_mut()) {
        *v = rng.gen_range(-scale..=scale);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_graphs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for mixed in [false, true] {
            let cfg = SynthConfig {
                max_neurons: 30,
                mixed_activations: mixed,
                ..SynthConfig::default()
            };
            for _ in 0..200 {
                let g = random_graph(&mut rng, &cfg);
                g.validate().unwrap();
                assert!(g.neurons.len() <= 30);
                assert!(!g.outputs().is_empty() && !g.inputs().is_empty());
                for o in g.outputs() {
                    assert_eq!(g.neuron(o).unwrap().activation, Some(Activation::Sigmoid));
                }
            }
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let cfg = SynthConfig::default();
        let a = random_graph(&mut ChaCha8Rng::seed_from_u64(9), &cfg);
        let b = random_graph(&mut ChaCha8Rng::seed_from_u64(9), &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn chain_shape() {
        let g = chain(3);
        assert_eq!((g.neurons.len(), g.edges.len(), g.weight_groups.len()), (4, 3, 3));
        let atoms: Vec<String> = g.neurons.iter().map(|n| n.atom.to_string()).collect();
        assert_eq!(atoms, ["x(1)", "n(1)", "n(2)", "o(1)"]);
    }
}
