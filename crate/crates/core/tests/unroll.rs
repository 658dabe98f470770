//! Step 1 / Step 2 construction laws.

use std::collections::BTreeMap;

use nmp_core::graph::{NetworkGraph, NeuronId};
use nmp_core::mln::{
    gradient_discrepancy, unroll_step1, unroll_step2, unrolled_mn, to_pairwise_mn, UnrolledNetwork, DEFAULT_NODE_CAP,
};
use nmp_core::par::Exec;
use nmp_core::synth::{chain, random_graph, random_params, SynthConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Copies of the root tree, counted from the definition: one per directed
/// path into the output, each hop multiplied by L.
fn expected_nodes(g: &NetworkGraph, id: NeuronId, l: u64) -> u64 {
    1 + g.edges.iter().filter(|e| e.to == id).map(|e| l * expected_nodes(g, e.from, l)).sum::<u64>()
}

fn small(seed: u64) -> NetworkGraph {
    random_graph(
        &mut ChaCha8Rng::seed_from_u64(seed),
        &SynthConfig {
            max_neurons: 7,
            ..SynthConfig::default()
        },
    )
}

#[test]
fn chain_counts_are_geometric() {
    for depth in 1..=3usize {
        let t = unroll_step1(&chain(depth), DEFAULT_NODE_CAP).unwrap();
        assert_eq!(t.len(), depth + 1);
        for l in 1..=3u64 {
            let t2 = unroll_step2(&t, l, DEFAULT_NODE_CAP).unwrap();
            let want: u64 = (0..=depth as u32).map(|k| l.pow(k)).sum();
            assert_eq!(t2.len() as u64, want, "depth {depth}, L {l}");
            assert_eq!(t2.edges.len() as u64, want - 1);
        }
    }
}

#[test]
fn chain_l2_by_hand() {
    let g = chain(2);
    let t = unroll_step2(&unroll_step1(&g, 100).unwrap(), 2, 100).unwrap();
    let count = |name: &str| t.nodes.iter().filter(|n| g.neuron(n.neuron).unwrap().atom.to_string() == name).count();
    assert_eq!((count("o(1)"), count("n(1)"), count("x(1)")), (1, 2, 4));
    assert_eq!(t.edges.len(), 6);
}

fn structure(t: &UnrolledNetwork) -> Vec<(NeuronId, Option<usize>)> {
    t.nodes.iter().map(|n| (n.neuron, n.child)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step1_is_a_forest_with_one_copy_per_path(seed in any::<u64>()) {
        let g = small(seed);
        let t = unroll_step1(&g, DEFAULT_NODE_CAP).unwrap();
        prop_assert!(t.is_forest());
        prop_assert_eq!(t.roots.len(), g.outputs().len());
        let want: u64 = g.outputs().iter().map(|o| expected_nodes(&g, *o, 1)).sum();
        prop_assert_eq!(t.len() as u64, want);
    }

    #[test]
    fn step2_weight_law_and_counts(seed in any::<u64>(), l in 1u64..5) {
        let g = small(seed);
        let params = random_params(&mut ChaCha8Rng::seed_from_u64(!seed), &g, 3.0);
        let t = unroll_step1(&g, DEFAULT_NODE_CAP).unwrap();
        let t2 = unroll_step2(&t, l, DEFAULT_NODE_CAP).unwrap();
        prop_assert!(t2.is_forest());
        let want: u64 = g.outputs().iter().map(|o| expected_nodes(&g, *o, l)).sum();
        prop_assert_eq!(t2.len() as u64, want);
        for e in &t2.edges {
            let w = params.weight(e.weight_group).unwrap();
            // The stored weight is exactly w / L.
            prop_assert_eq!(e.divisor, l);
            let back = e.weight(&params).unwrap() * l as f64;
            if l.is_power_of_two() {
                prop_assert_eq!(back, w);
            } else {
                // Evaluated in f64, w / 3 can round so that times 3 is one ulp off.
                prop_assert!((back - w).abs() <= f64::EPSILON * w.abs(), "{} vs {}", back, w);
            }
        }
    }

    #[test]
    fn step2_with_l1_is_identity(seed in any::<u64>()) {
        let g = small(seed);
        let t = unroll_step1(&g, DEFAULT_NODE_CAP).unwrap();
        let t1 = unroll_step2(&t, 1, DEFAULT_NODE_CAP).unwrap();
        prop_assert_eq!(structure(&t1), structure(&t));
        prop_assert_eq!(&t1.edges, &t.edges);
    }
}

#[test]
fn float_division_by_three_is_not_always_invertible() {
    let w = -1.9929273894095931f64;
    assert_ne!(w / 3.0 * 3.0, w);
    assert_eq!(w / 4.0 * 4.0, w);
}

#[test]
fn l1_unrolled_chain_is_the_direct_network() {
    let g = chain(2);
    let params = random_params(&mut ChaCha8Rng::seed_from_u64(4), &g, 1.0);
    let t = unroll_step2(&unroll_step1(&g, 100).unwrap(), 1, 100).unwrap();
    let a = unrolled_mn(&t, &g, &params).unwrap();
    let b = to_pairwise_mn(&g, &params).unwrap();
    // Same features up to node order: the tree is root-first, the graph input-first.
    let mut fa: Vec<(NeuronId, NeuronId, u64)> =
        a.pair_features.iter().map(|f| (a.nodes[f.i].neuron, a.nodes[f.j].neuron, f.weight.to_bits())).collect();
    let mut fb: Vec<(NeuronId, NeuronId, u64)> =
        b.pair_features.iter().map(|f| (b.nodes[f.i].neuron, b.nodes[f.j].neuron, f.weight.to_bits())).collect();
    fa.sort();
    fb.sort();
    assert_eq!(fa, fb);
}

#[test]
fn discrepancy_experiment_runs_on_chain() {
    let g = chain(2);
    let params = random_params(&mut ChaCha8Rng::seed_from_u64(0), &g, 1.0);
    let x = BTreeMap::from([(g.inputs()[0], 1.0)]);
    let t = BTreeMap::from([(g.outputs()[0], 1.0)]);
    let r = gradient_discrepancy(&g, &params, &x, &t, &[1, 2, 4], Exec::default()).unwrap();
    assert_eq!(r.iter().map(|d| d.replication).collect::<Vec<_>>(), [1, 2, 4]);
    assert_eq!(r.iter().map(|d| d.tree_nodes).collect::<Vec<_>>(), [3, 7, 21]);
    for d in &r {
        assert_eq!(d.rows.len(), 4);
        assert!(d.rows.iter().all(|row| row.backprop.is_finite() && row.markov.is_finite()));
        // Backprop does not depend on L.
        assert_eq!(
            d.rows.iter().map(|row| row.backprop).collect::<Vec<_>>(),
            r[0].rows.iter().map(|row| row.backprop).collect::<Vec<_>>()
        );
    }
}
