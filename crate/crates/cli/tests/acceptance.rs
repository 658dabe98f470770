//! Acceptance run: one PASS/FAIL line per criterion, with wall time.
//!
//! Runs without the libtest harness so every line is printed even when an
//! earlier criterion fails. Exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nmp_core::corpus::{self, CorpusProgram};
use nmp_core::graph::{IoSpec, NetworkGraph, Role};
use nmp_core::grounder::build_network;
use nmp_core::logic::Limits;
use nmp_core::mln::{unroll_step1, unroll_step2, UnrolledNetwork, DEFAULT_NODE_CAP};
use nmp_core::nmp::load_program;
use nmp_core::par::Exec;
use nmp_core::plan::plan;
use nmp_core::synth::{chain, random_params};
use nmp_core::train::{parse_csv, train, TrainConfig};
use nmp_core::verify::{gradient_check, plan_equivalence, sigmoid_equivalence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed<T>(limit: Duration, what: &str, f: impl FnOnce() -> T) -> Result<T, String> {
    let t = Instant::now();
    let v = f();
    let dt = t.elapsed();
    ensure(dt <= limit, || format!("{what} took {:.2?} (limit {limit:?})", dt))?;
    Ok(v)
}

fn ground(p: &CorpusProgram) -> Result<NetworkGraph, String> {
    let prog = load_program(p.det, p.nmp).map_err(|e| e.to_string())?;
    let io = IoSpec { outputs: IoSpec::parse_list(p.outputs)?, ..IoSpec::default() };
    build_network(&prog, &io, &Limits::default()).map_err(|e| e.to_string())
}

fn ground_named(name: &str, limit: Duration) -> Result<NetworkGraph, String> {
    let p = corpus::by_name(name).ok_or(format!("no corpus program {name}"))?;
    timed(limit, name, || ground(p))?
}

fn predicate(g: &NetworkGraph, id: nmp_core::graph::NeuronId) -> String {
    let s = g.neuron(id).expect("valid id").atom.to_string();
    s.split('(').next().unwrap_or("").to_string()
}

fn atom(g: &NetworkGraph, id: nmp_core::graph::NeuronId) -> String {
    g.neuron(id).expect("valid id").atom.to_string()
}

fn counts(g: &NetworkGraph) -> (usize, usize, usize, usize) {
    (g.weight_groups.len(), g.neurons.len(), g.edges.len(), g.bias_groups.len())
}

fn criterion_1() -> Check {
    let sec = Duration::from_secs(1);

    let dnn = ground_named("dnn", sec)?;
    ensure(counts(&dnn) == (10, 7, 10, 5), || format!("dnn counts {:?}", counts(&dnn)))?;
    // Layered 2-2-2-1, fully connected between consecutive layers.
    let mut want = BTreeSet::new();
    for a in 1..=2 {
        for b in 1..=2 {
            want.insert((format!("input({a})"), format!("hidden1({b})")));
            want.insert((format!("hidden1({a})"), format!("hidden2({b})")));
        }
        want.insert((format!("hidden2({a})"), "output(1)".to_string()));
    }
    let got: BTreeSet<(String, String)> = dnn.edges.iter().map(|e| (atom(&dnn, e.from), atom(&dnn, e.to))).collect();
    ensure(got == want, || format!("dnn topology {got:?}"))?;
    let groups: BTreeSet<_> = dnn.edges.iter().map(|e| e.weight_group).collect();
    ensure(groups.len() == 10, || "dnn edges do not each own a weight".into())?;

    let rnn = ground_named("rnn", sec)?;
    ensure(rnn.weight_groups.len() == 4 && rnn.edges.len() == 39, || format!("rnn counts {:?}", counts(&rnn)))?;
    let hidden: Vec<_> = rnn.neurons.iter().filter(|n| predicate(&rnn, n.id) == "hidden").collect();
    ensure(hidden.len() == 10, || format!("rnn has {} hidden neurons", hidden.len()))?;
    for h in &hidden {
        let from_inputs = rnn
            .edges
            .iter()
            .filter(|e| e.to == h.id && rnn.neuron(e.from).map(|n| n.role) == Some(Role::Input))
            .count();
        ensure(from_inputs == 3, || format!("{} has {from_inputs} input parents", h.atom))?;
    }
    let recurrent: Vec<_> =
        rnn.edges.iter().filter(|e| predicate(&rnn, e.from) == "hidden" && predicate(&rnn, e.to) == "hidden").collect();
    let rec_groups: BTreeSet<_> = recurrent.iter().map(|e| e.weight_group).collect();
    ensure(recurrent.len() == 9 && rec_groups.len() == 1, || {
        format!("rnn recurrent edges {} in {} groups", recurrent.len(), rec_groups.len())
    })?;

    let cnn = ground_named("cnn", Duration::from_secs(2))?;
    // Clipped 3x3 neighbourhoods on a 10x10 grid.
    let inside = |v: i32| (1..=10).contains(&v);
    let mut clipped = 0;
    for a in 1..=10 {
        for b in 1..=10 {
            for x in -1..=1 {
                for y in -1..=1 {
                    if inside(a + x) && inside(b + y) {
                        clipped += 1;
                    }
                }
            }
        }
    }
    let cnn_hidden = cnn.neurons.iter().filter(|n| predicate(&cnn, n.id) == "hidden").count();
    ensure(
        cnn.weight_groups.len() == 9 && cnn_hidden == 100 && cnn.edges.len() == clipped && cnn.bias_groups.len() == 1,
        || format!("cnn counts {:?}, {cnn_hidden} hidden, expected {clipped} edges", counts(&cnn)),
    )?;

    let gnn = ground_named("gnn", sec)?;
    ensure(gnn.weight_groups.len() == 1 && gnn.edges.len() == 12, || format!("gnn counts {:?}", counts(&gnn)))?;

    let smoking = ground_named("smoking", sec)?;
    let rule = |r: usize| -> Vec<(String, String, usize)> {
        smoking
            .edges
            .iter()
            .filter(|e| smoking.weight_group(e.weight_group).map(|w| w.rule_id) == Some(r))
            .map(|e| (atom(&smoking, e.from), atom(&smoking, e.to), e.weight_group.0))
            .collect()
    };
    let r1 = rule(0);
    ensure(
        r1.len() == 1 && r1[0].0 == "smoking_friend(bob,anna)" && r1[0].1 == "smokes(bob)",
        || format!("smoking rule 1 edges {r1:?}"),
    )?;
    let r2 = rule(1);
    ensure(r2.len() == 2 && r2[0].2 == r2[1].2, || format!("smoking rule 2 edges {r2:?}"))?;

    Ok(format!(
        "dnn {:?}, rnn {:?}, cnn {:?}, gnn {:?}, smoking rule 1 = (bob, anna)",
        counts(&dnn),
        counts(&rnn),
        counts(&cnn),
        counts(&gnn)
    ))
}

fn criterion_2() -> Check {
    let r = timed(Duration::from_secs(60), "sigmoid equivalence", || sigmoid_equivalence(0, 100, Exec::default()))?
        .map_err(|e| e.to_string())?;
    ensure(r.ok() && r.trials == 100, || format!("{r}: {:?}", r.failures))?;
    Ok(format!("{r}, max error {:e}", r.max_error))
}

fn criterion_3() -> Check {
    let r = timed(Duration::from_secs(30), "plan equivalence", || plan_equivalence(0, 200, Exec::default()))?
        .map_err(|e| e.to_string())?;
    ensure(r.ok() && r.trials == 200, || format!("{r}: {:?}", r.failures))?;
    Ok(format!("{r}, max error {:e}", r.max_error))
}

fn criterion_4() -> Check {
    let r = timed(Duration::from_secs(30), "gradient check", || gradient_check(0, 50, Exec::default()))?
        .map_err(|e| e.to_string())?;
    ensure(r.ok() && r.trials == 50, || format!("{r}: {:?}", r.failures))?;
    Ok(format!("{r} relative, max error {:e}", r.max_error))
}

fn shape(t: &UnrolledNetwork) -> Vec<(nmp_core::graph::NeuronId, Option<usize>)> {
    t.nodes.iter().map(|n| (n.neuron, n.child)).collect()
}

fn criterion_5(dir: &Path) -> Check {
    let start = Instant::now();
    let g = chain(2);
    let params = random_params(&mut ChaCha8Rng::seed_from_u64(0), &g, 1.0);
    let t = unroll_step1(&g, DEFAULT_NODE_CAP).map_err(|e| e.to_string())?;
    let (mut float_exact, mut total) = (0, 0);
    for l in 1..=3u64 {
        let t2 = unroll_step2(&t, l, DEFAULT_NODE_CAP).map_err(|e| e.to_string())?;
        ensure(t2.len() as u64 == 1 + l + l * l, || format!("L={l}: {} nodes", t2.len()))?;
        for e in &t2.edges {
            let (from, to) = (t2.nodes[e.from].neuron, t2.nodes[e.to].neuron);
            let orig = g.edges.iter().find(|o| o.from == from && o.to == to).ok_or("edge without an original")?;
            // Stored as the original group over L, so times L is the original exactly.
            ensure(e.weight_group == orig.weight_group && e.divisor == l, || format!("L={l}: edge stored as {e:?}"))?;
            let w = params.weight(orig.weight_group).ok_or("missing weight")?;
            total += 1;
            if e.weight(&params).ok_or("missing weight")? * l as f64 == w {
                float_exact += 1;
            }
        }
        if l == 1 {
            ensure(shape(&t2) == shape(&t) && t2.edges == t.edges, || "L=1 is not the identity".into())?;
        }
    }
    let dt = start.elapsed();
    ensure(dt <= Duration::from_secs(5), || format!("construction took {dt:.2?}"))?;

    let csv = dir.join("discrepancy.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_nmp"))
        .args(["verify", "unroll", "--L", "1,2,4", "--csv", csv.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let mut max = BTreeMap::<u64, f64>::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let l: u64 = f[0].parse().map_err(|_| format!("bad row {line}"))?;
        let d: f64 = f[4].parse().map_err(|_| format!("bad row {line}"))?;
        let m = max.entry(l).or_insert(0.0);
        *m = m.max(d);
    }
    ensure(max.keys().copied().collect::<Vec<_>>() == [1, 2, 4], || format!("csv covers {:?}", max.keys()))?;
    let report: Vec<String> = max.iter().map(|(l, d)| format!("L={l} {d:.4}")).collect();
    Ok(format!(
        "counts 1+L+L^2, symbolic w/L exact, f64 round trip exact on {float_exact}/{total} edges; max |diff| {}",
        report.join(", ")
    ))
}

fn criterion_6() -> Check {
    let g = ground_named("dnn", Duration::from_secs(1))?;
    let p = plan(&g).map_err(|e| e.to_string())?;
    let ds = parse_csv(corpus::XOR_CSV, &g).map_err(|e| e.to_string())?;
    let ex = ds.examples(&p);
    let finals = timed(Duration::from_secs(60), "xor", || -> Result<Vec<f64>, String> {
        (0..5)
            .map(|seed| {
                let cfg = TrainConfig { learning_rate: 0.5, epochs: 20_000, seed, ..TrainConfig::default() };
                let r = train(&p, &ex, &cfg).map_err(|e| e.to_string())?;
                Ok(r.trace.iter().copied().fold(f64::INFINITY, f64::min))
            })
            .collect()
    })??;
    let best = finals.iter().copied().fold(f64::INFINITY, f64::min);
    let listing: Vec<String> = finals.iter().map(|l| format!("{l:.2e}")).collect();
    ensure(best < 0.05, || format!("best loss {best} over seeds 0-4 ({})", listing.join(", ")))?;
    Ok(format!("lr 0.5, best mean cross-entropy {best:.2e} (seeds 0-4: {})", listing.join(", ")))
}

fn run_twice(args: &[&str], files: &[&Path]) -> Result<(), String> {
    let once = || -> Result<Vec<Vec<u8>>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_nmp")).args(args).output().map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let mut all = vec![out.stdout];
        for f in files {
            all.push(std::fs::read(f).map_err(|e| e.to_string())?);
        }
        Ok(all)
    };
    let (a, b) = (once()?, once()?);
    ensure(a == b, || format!("outputs differ for {}", args.join(" ")))
}

fn criterion_7(dir: &Path) -> Check {
    let programs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/programs");
    let path = |f: &str| programs.join(f).display().to_string();
    let graphs: Vec<(&str, Vec<String>)> = vec![
        ("smoking", vec!["--nmp".into(), path("smoking.nmp"), "--outputs".into(), "cancer/1".into()]),
        ("dnn", vec!["--nmp".into(), path("dnn.nmp"), "--outputs".into(), "output/1".into()]),
        ("rnn", vec!["--det".into(), path("rnn.pl"), "--nmp".into(), path("rnn.nmp"), "--outputs".into(), "hidden/1".into()]),
        ("cnn", vec!["--det".into(), path("cnn.pl"), "--nmp".into(), path("cnn.nmp"), "--outputs".into(), "hidden/3".into()]),
        ("gnn", vec!["--det".into(), path("gnn.pl"), "--nmp".into(), path("gnn.nmp"), "--outputs".into(), "hidden/1".into()]),
    ];
    for (_, flags) in &graphs {
        let mut args = vec!["compile"];
        args.extend(flags.iter().map(String::as_str));
        run_twice(&args, &[])?;
    }
    let g: PathBuf = dir.join("dnn.json");
    let mut args = vec!["compile", "-o", g.to_str().unwrap()];
    args.extend(graphs[1].1.iter().map(String::as_str));
    run_twice(&args, &[&g])?;
    let trace = dir.join("trace.csv");
    let data = path("xor.csv");
    run_twice(
        &["train", g.to_str().unwrap(), "--data", &data, "--epochs", "500", "--seed", "3", "--trace", trace.to_str().unwrap()],
        &[&trace],
    )?;
    Ok("compile (5 programs, stdout and -o) and train (params and trace) identical over two runs".into())
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: [Criterion; 7] = [
        ("corpus golden graphs", Box::new(criterion_1)),
        ("sigmoid / Markov network equivalence", Box::new(criterion_2)),
        ("plan / edgewise equivalence", Box::new(criterion_3)),
        ("gradient correctness", Box::new(criterion_4)),
        ("Step 1 / Step 2 construction", Box::new(|| criterion_5(dir.path()))),
        ("XOR training", Box::new(criterion_6)),
        ("determinism", Box::new(|| criterion_7(dir.path()))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = check();
        let dt = t.elapsed();
        match r {
            Ok(detail) => println!("PASS {} {name} [{dt:.2?}]: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} [{dt:.2?}]: {why}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
