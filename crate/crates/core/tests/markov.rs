//! Markov network reading of sigmoid graphs, checked by enumerating the
//! graph's own energy here rather than through the library network.

use std::collections::BTreeMap;

use nmp_core::graph::NetworkGraph;
use nmp_core::ir::Params;
use nmp_core::mln::{brute_force_conditional_with, log_partition, to_pairwise_mn, total_probability};
use nmp_core::par::Exec;
use nmp_core::synth::{random_graph, random_params, SynthConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Σ w·x_from·x_to over edges plus Σ b·x over biased neurons.
fn energy(g: &NetworkGraph, p: &Params, x: &[bool]) -> f64 {
    let mut e = 0.0;
    for edge in &g.edges {
        if x[g.index_of(edge.from).unwrap()] && x[g.index_of(edge.to).unwrap()] {
            e += p.weight(edge.weight_group).unwrap();
        }
    }
    for (i, n) in g.neurons.iter().enumerate() {
        if let (true, Some(b)) = (x[i], n.bias_group) {
            e += p.bias(b).unwrap();
        }
    }
    e
}

/// P(node = 1 | evidence) by summing exp(energy) over all states.
fn naive_conditional(g: &NetworkGraph, p: &Params, node: usize, ev: &BTreeMap<usize, bool>) -> f64 {
    let n = g.neurons.len();
    let (mut on, mut all) = (0.0, 0.0);
    for s in 0u32..1 << n {
        let x: Vec<bool> = (0..n).map(|i| s >> i & 1 == 1).collect();
        if ev.iter().any(|(&i, &v)| x[i] != v) {
            continue;
        }
        let w = energy(g, p, &x).exp();
        all += w;
        if x[node] {
            on += w;
        }
    }
    on / all
}

fn setup(seed: u64, max_neurons: usize) -> (NetworkGraph, Params, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_graph(&mut rng, &SynthConfig { max_neurons, ..SynthConfig::default() });
    let p = random_params(&mut rng, &g, 1.5);
    (g, p, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditional_matches_naive_enumeration(seed in any::<u64>()) {
        let (g, p, mut rng) = setup(seed, 9);
        let mn = to_pairwise_mn(&g, &p).unwrap();
        let n = g.neurons.len();
        let node = rng.gen_range(0..n);
        let mut ev = BTreeMap::new();
        for i in (0..n).filter(|&i| i != node) {
            if rng.gen_bool(0.4) {
                ev.insert(i, rng.gen_bool(0.5));
            }
        }
        let got = brute_force_conditional_with(&mn, node, &ev, Exec::Sequential).unwrap();
        let want = naive_conditional(&g, &p, node, &ev);
        prop_assert!((got - want).abs() < 1e-12, "{} vs {}", got, want);
    }

    #[test]
    fn clamped_parents_give_the_sigmoid(seed in any::<u64>()) {
        // Parents fixed, children off: the node's conditional is σ(b + Σ w·x).
        let (g, p, mut rng) = setup(seed, 10);
        let mn = to_pairwise_mn(&g, &p).unwrap();
        let biased: Vec<usize> = (0..g.neurons.len()).filter(|&i| g.neurons[i].bias_group.is_some()).collect();
        let node = biased[rng.gen_range(0..biased.len())];
        let id = g.neurons[node].id;
        let mut ev = BTreeMap::new();
        let mut z = p.bias(g.neurons[node].bias_group.unwrap()).unwrap();
        for e in &g.edges {
            if e.to == id {
                let on = rng.gen_bool(0.5);
                ev.insert(g.index_of(e.from).unwrap(), on);
                if on {
                    z += p.weight(e.weight_group).unwrap();
                }
            } else if e.from == id {
                ev.insert(g.index_of(e.to).unwrap(), false);
            }
        }
        let got = brute_force_conditional_with(&mn, node, &ev, Exec::Sequential).unwrap();
        let want = 1.0 / (1.0 + (-z).exp());
        prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
    }

    #[test]
    fn distribution_is_normalized(seed in any::<u64>()) {
        let (g, p, _) = setup(seed, 12);
        let mn = to_pairwise_mn(&g, &p).unwrap();
        let total = total_probability(&mn, Exec::Sequential).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12, "{}", total);
    }
}

#[test]
fn parallel_partition_matches_sequential() {
    // 17 nodes spans several enumeration chunks.
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = loop {
            let g = random_graph(&mut rng, &SynthConfig { max_neurons: 17, ..SynthConfig::default() });
            if g.neurons.len() >= 14 {
                break g;
            }
        };
        let p = random_params(&mut rng, &g, 1.0);
        let mn = to_pairwise_mn(&g, &p).unwrap();
        let a = log_partition(&mn, &BTreeMap::new(), Exec::Sequential).unwrap();
        let b = log_partition(&mn, &BTreeMap::new(), Exec::Parallel).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
