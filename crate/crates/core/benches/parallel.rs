//! Sequential vs data-parallel execution of the same work.

use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nmp_core::corpus;
use nmp_core::graph::IoSpec;
use nmp_core::grounder::build_network_with;
use nmp_core::logic::Limits;
use nmp_core::mln::{brute_force_conditional_with, PairwiseMarkovNetwork};
use nmp_core::nmp::load_program;
use nmp_core::par::Exec;
use nmp_core::plan::plan;
use nmp_core::synth::{random_graph, random_params, SynthConfig};
use nmp_core::train::{mean_loss, Example};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn grounding(c: &mut Criterion) {
    let p = corpus::by_name("cnn").expect("corpus program");
    let prog = load_program(p.det, p.nmp).expect("corpus parses");
    let io = IoSpec {
        outputs: IoSpec::parse_list(p.outputs).expect("io list"),
        ..IoSpec::default()
    };
    let mut group = c.benchmark_group("ground_cnn");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| build_network_with(black_box(&prog), &io, &Limits::default(), exec).expect("grounds"))
        });
    }
    group.finish();
}

fn batch_loss(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let g = random_graph(
        &mut rng,
        &SynthConfig {
            max_neurons: 50,
            ..SynthConfig::default()
        },
    );
    let p = plan(&g).expect("plan");
    let theta = p.theta(&random_params(&mut rng, &g, 1.0)).expect("theta");
    let examples: Vec<Example> = (0..4096)
        .map(|_| Example {
            inputs: (0..p.inputs.len()).map(|_| rng.gen_range(0.0..1.0)).collect(),
            targets: (0..p.outputs.len()).map(|_| f64::from(rng.gen_range(0..=1u8))).collect(),
        })
        .collect();
    let mut group = c.benchmark_group("mean_loss_4096");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| mean_loss(&p, black_box(&theta), &examples, exec)));
    }
    group.finish();
}

fn enumeration(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate");
    group.sample_size(10);
    for n in [16usize, 20] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let mut mn = PairwiseMarkovNetwork::default();
        for i in 0..n {
            mn.nodes.push(nmp_core::mln::MnNode {
                label: format!("v{i}"),
                neuron: nmp_core::graph::NeuronId(i),
            });
            mn.bias_features.push(nmp_core::mln::BiasFeature {
                i,
                weight: rng.gen_range(-1.0..1.0),
            });
            if i > 0 {
                mn.pair_features.push(nmp_core::mln::PairFeature {
                    i: rng.gen_range(0..i),
                    j: i,
                    weight: rng.gen_range(-1.0..1.0),
                });
            }
        }
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &mn, |b, mn| {
                b.iter(|| brute_force_conditional_with(mn, 0, &BTreeMap::new(), exec).expect("in bound"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, grounding, batch_loss, enumeration);
criterion_main!(benches);
