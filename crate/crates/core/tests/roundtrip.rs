//! Serialization round trips and pruning idempotence on random and corpus graphs.

use nmp_core::corpus;
use nmp_core::graph::IoSpec;
use nmp_core::grounder::{build_network, prune_unreachable, renumber};
use nmp_core::ir::{export_dot, export_json, export_params, import_json, import_params, IrError};
use nmp_core::logic::Limits;
use nmp_core::nmp::{load_program, NmpProgram};
use nmp_core::synth::{random_graph, random_params, SynthConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg() -> SynthConfig {
    SynthConfig {
        max_neurons: 40,
        mixed_activations: true,
        ..SynthConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn graph_json_round_trip(seed in any::<u64>()) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), &cfg());
        let text = export_json(&g);
        let back = import_json(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(export_json(&back), text);
    }

    #[test]
    fn params_round_trip(seed in any::<u64>(), scale in 1e-300f64..1e300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, &cfg());
        let p = random_params(&mut rng, &g, scale);
        prop_assert_eq!(import_params(&export_params(&p).unwrap()).unwrap(), p);
    }

    #[test]
    fn pruning_valid_graph_is_identity(seed in any::<u64>()) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), &cfg());
        let once = renumber(prune_unreachable(&g).unwrap());
        prop_assert_eq!(&once, &g);
        prop_assert_eq!(renumber(prune_unreachable(&once).unwrap()), once);
    }

    #[test]
    fn dot_mentions_every_neuron(seed in any::<u64>()) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), &cfg());
        let dot = export_dot(&g).unwrap();
        prop_assert!(dot.starts_with("digraph"));
        for n in &g.neurons {
            let needle = format!("{}", n.atom);
            prop_assert!(dot.contains(&needle), "{} missing", needle);
        }
        prop_assert_eq!(dot.matches("->").count(), g.edges.len());
    }
}

#[test]
fn corpus_graphs_round_trip() {
    for p in &corpus::PROGRAMS {
        let prog = load_program(p.det, p.nmp).unwrap();
        let io = IoSpec {
            outputs: IoSpec::parse_list(p.outputs).unwrap(),
            ..IoSpec::default()
        };
        let g = build_network(&prog, &io, &Limits::default()).unwrap();
        let text = export_json(&g);
        assert_eq!(import_json(&text).unwrap(), g, "{}", p.name);
    }
}

#[test]
fn corpus_programs_reprint() {
    for p in &corpus::PROGRAMS {
        let prog = load_program(p.det, p.nmp).unwrap();
        let printed = prog.to_string();
        let again: NmpProgram = load_program(None, &printed).unwrap();
        // Source lines move when reprinted; everything else must survive.
        let strip = |mut q: NmpProgram| {
            q.interpreted.iter_mut().for_each(|r| r.line = 0);
            q
        };
        assert_eq!(strip(again), strip(prog), "{}", p.name);
    }
}

#[test]
fn future_version_is_rejected() {
    let g = random_graph(&mut ChaCha8Rng::seed_from_u64(1), &cfg());
    let text = export_json(&g).replace("\"format_version\": 1", "\"format_version\": 2");
    assert!(matches!(import_json(&text), Err(IrError::Version(2))));
}
