//! `nmp`: compile, export, train, verify and inspect NMP networks.
//!
//! Exit codes: 0 success, 1 domain error (bad program, bad data, failed
//! check), 2 usage error or unreadable input file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nmp_core::graph::{IoSpec, NetworkGraph};
use nmp_core::grounder::build_network;
use nmp_core::ir::{export_dot, export_json, export_params, import_json, import_params, Params};
use nmp_core::logic::Limits;
use nmp_core::mln::{discrepancy_csv, gradient_discrepancy};
use nmp_core::nmp::load_program;
use nmp_core::par::Exec;
use nmp_core::plan::plan;
use nmp_core::synth::{chain, random_params};
use nmp_core::train::{parse_csv, train, trace_csv, TrainConfig};
use nmp_core::verify::{gradient_check, plan_equivalence, sigmoid_equivalence, Report};

#[derive(Parser)]
#[command(name = "nmp", version, about = "Neural Markov Prolog compiler and trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground a program into a network graph.
    Compile {
        #[command(flatten)]
        source: Source,
        /// What to write: the graph JSON, its DOT rendering, or the plan listing.
        #[arg(long, value_enum, default_value_t = Emit::Json)]
        emit: Emit,
        /// Output file (stdout if absent).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Re-render a graph JSON file.
    Export {
        graph: PathBuf,
        #[arg(long, conflicts_with = "json", required_unless_present = "json")]
        dot: bool,
        #[arg(long)]
        json: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fit parameters with SGD on cross-entropy.
    Train {
        graph: PathBuf,
        /// CSV with one column per input and output neuron.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
        lr: f64,
        #[arg(long, default_value_t = TrainConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainConfig::default().batch_size)]
        batch: usize,
        #[arg(long, default_value_t = TrainConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = TrainConfig::default().init_scale)]
        init_scale: f64,
        /// Trained parameter document (stdout if absent).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Loss trace as `epoch,loss` CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also write the initial parameters.
        #[arg(long)]
        init_out: Option<PathBuf>,
    },
    /// Randomized checks and the unrolling experiment.
    Verify {
        #[command(subcommand)]
        mode: VerifyMode,
    },
    /// List neurons, weight groups with their tied edges, and bias groups.
    Inspect {
        /// Graph JSON; alternatively compile from --nmp/--det.
        graph: Option<PathBuf>,
        #[command(flatten)]
        source: OptSource,
        /// Also print the execution plan.
        #[arg(long)]
        plan: bool,
    },
}

#[derive(Subcommand)]
enum VerifyMode {
    /// Markov-network conditionals against sigmoid activations (default 100 trials).
    SigmoidEquivalence(Trials),
    /// Compiled plan against the per-edge interpreter (default 200 trials).
    PlanEquivalence(Trials),
    /// Analytic gradients against central differences (default 50 trials).
    GradientCheck(Trials),
    /// Backprop vs unrolled Markov-network gradients for each L.
    Unroll {
        /// Graph JSON (default: the chain x(1) -> n(1) -> o(1)).
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Parameter document (default: uniform in ±init-scale from --seed).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long = "L", value_delimiter = ',', default_values_t = [1u64, 2, 4])]
        l: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        init_scale: f64,
        /// Value (0 or 1) clamped on every input.
        #[arg(long, default_value_t = 1.0)]
        input: f64,
        /// Target for every output.
        #[arg(long, default_value_t = 1.0)]
        target: f64,
        /// Discrepancy CSV (printed after the report if absent).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Trials {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Source {
    /// Deterministic section (.pl).
    #[arg(long)]
    det: Option<PathBuf>,
    /// Interpreted section, or a combined file.
    #[arg(long)]
    nmp: PathBuf,
    #[command(flatten)]
    io: IoFlags,
}

#[derive(Args)]
struct OptSource {
    #[arg(long)]
    det: Option<PathBuf>,
    #[arg(long)]
    nmp: Option<PathBuf>,
    #[command(flatten)]
    io: IoFlags,
}

#[derive(Args)]
struct IoFlags {
    /// Input predicates, e.g. `x/1,y/2` (inferred if absent).
    #[arg(long)]
    inputs: Option<String>,
    /// Output predicates (inferred if absent).
    #[arg(long)]
    outputs: Option<String>,
    #[arg(long, default_value_t = Limits::default().max_answers)]
    max_answers: usize,
    #[arg(long, default_value_t = Limits::default().max_depth)]
    max_depth: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Json,
    Dot,
    Plan,
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl Failure {
    fn domain(e: impl std::fmt::Display) -> Failure {
        Failure::Domain(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
    }
}

fn compile(det: Option<&Path>, nmp: &Path, io: &IoFlags) -> Result<NetworkGraph, Failure> {
    let det_text = det.map(read).transpose()?;
    let nmp_text = read(nmp)?;
    let mut spec = IoSpec::default();
    if let Some(s) = &io.inputs {
        spec.inputs = IoSpec::parse_list(s).map_err(Failure::Usage)?;
    }
    if let Some(s) = &io.outputs {
        spec.outputs = IoSpec::parse_list(s).map_err(Failure::Usage)?;
    }
    let limits = Limits {
        max_answers: io.max_answers,
        max_depth: io.max_depth,
    };
    let program = load_program(det_text.as_deref(), &nmp_text).map_err(Failure::domain)?;
    let graph = build_network(&program, &spec, &limits).map_err(Failure::domain)?;
    eprintln!(
        "{} neurons, {} edges, {} weight groups, {} bias groups",
        graph.neurons.len(),
        graph.edges.len(),
        graph.weight_groups.len(),
        graph.bias_groups.len()
    );
    Ok(graph)
}

fn load_graph(path: &Path) -> Result<NetworkGraph, Failure> {
    import_json(&read(path)?).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn report(name: &str, r: &Report) -> Outcome {
    println!("{name}: {r} (max error {:e})", r.max_error);
    for f in &r.failures {
        println!("  {f}");
    }
    if r.ok() {
        Ok(())
    } else {
        Err(Failure::Domain(format!("{name} failed {} of {} trials", r.trials - r.passed, r.trials)))
    }
}

fn inspect(graph: &NetworkGraph, with_plan: bool) -> Result<String, Failure> {
    let mut s = String::new();
    let atom = |id| graph.neuron(id).map_or_else(|| id.to_string(), |n| n.atom.to_string());
    let _ = writeln!(s, "neurons ({})", graph.neurons.len());
    for n in &graph.neurons {
        let _ = write!(s, "  {} {} {}", n.id, n.role.name(), n.atom);
        if let Some(a) = n.activation {
            let _ = write!(s, " {a}");
        }
        if let Some(b) = n.bias_group {
            let _ = write!(s, " b{b}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "weight groups ({})", graph.weight_groups.len());
    for g in &graph.weight_groups {
        let key: Vec<String> = g.key.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "  w{} rule {} [{}]", g.id, g.rule_id, key.join(", "));
        for e in graph.edges.iter().filter(|e| e.weight_group == g.id) {
            let _ = writeln!(s, "    {} -> {}", atom(e.from), atom(e.to));
        }
    }
    let _ = writeln!(s, "bias groups ({})", graph.bias_groups.len());
    for g in &graph.bias_groups {
        let key: Vec<String> = g.key.iter().map(|(i, t)| format!("{i}={t}")).collect();
        let members: Vec<String> = g.members.iter().map(|m| atom(*m)).collect();
        let _ = writeln!(s, "  b{} {} [{}]: {}", g.id, g.predicate, key.join(", "), members.join(" "));
    }
    if with_plan {
        let p = plan(graph).map_err(Failure::domain)?;
        s.push_str(&p.listing());
    }
    Ok(s)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Compile { source, emit, out } => {
            let g = compile(source.det.as_deref(), &source.nmp, &source.io)?;
            let text = match emit {
                Emit::Json => export_json(&g),
                Emit::Dot => export_dot(&g).map_err(Failure::domain)?,
                Emit::Plan => plan(&g).map_err(Failure::domain)?.listing(),
            };
            write(out.as_deref(), &text)
        }
        Command::Export { graph, dot, json: _, out } => {
            let g = load_graph(&graph)?;
            let text = if dot { export_dot(&g).map_err(Failure::domain)? } else { export_json(&g) };
            write(out.as_deref(), &text)
        }
        Command::Train {
            graph,
            data,
            lr,
            epochs,
            batch,
            seed,
            init_scale,
            out,
            trace,
            init_out,
        } => {
            let g = load_graph(&graph)?;
            let text = read(&data)?;
            let ds = parse_csv(&text, &g).map_err(|e| Failure::Domain(format!("{}: {e}", data.display())))?;
            let p = plan(&g).map_err(Failure::domain)?;
            let cfg = TrainConfig {
                learning_rate: lr,
                epochs,
                batch_size: batch,
                seed,
                init_scale,
            };
            let r = train(&p, &ds.examples(&p), &cfg).map_err(Failure::domain)?;
            if let Some(path) = init_out {
                write(Some(&path), &export_params(&r.initial).map_err(Failure::domain)?)?;
            }
            if let Some(path) = trace {
                write(Some(&path), &trace_csv(&r.trace))?;
            }
            eprintln!("{} epochs, {} updates, final loss {}", r.trace.len(), r.updates, r.trace.last().copied().unwrap_or(f64::NAN));
            write(out.as_deref(), &export_params(&r.params).map_err(Failure::domain)?)
        }
        Command::Verify { mode } => match mode {
            VerifyMode::SigmoidEquivalence(t) => report(
                "sigmoid-equivalence",
                &sigmoid_equivalence(t.seed, t.trials.unwrap_or(100), Exec::default()).map_err(Failure::domain)?,
            ),
            VerifyMode::PlanEquivalence(t) => report(
                "plan-equivalence",
                &plan_equivalence(t.seed, t.trials.unwrap_or(200), Exec::default()).map_err(Failure::domain)?,
            ),
            VerifyMode::GradientCheck(t) => report(
                "gradient-check",
                &gradient_check(t.seed, t.trials.unwrap_or(50), Exec::default()).map_err(Failure::domain)?,
            ),
            VerifyMode::Unroll {
                graph,
                params,
                l,
                seed,
                init_scale,
                input,
                target,
                csv,
            } => {
                let g = match graph {
                    Some(path) => load_graph(&path)?,
                    None => chain(2),
                };
                let params: Params = match params {
                    Some(path) => import_params(&read(&path)?).map_err(Failure::domain)?,
                    None => {
                        if !(init_scale.is_finite() && init_scale >= 0.0) {
                            return Err(Failure::Usage("--init-scale must be finite and non-negative".into()));
                        }
                        random_params(&mut ChaCha8Rng::seed_from_u64(seed), &g, init_scale)
                    }
                };
                let x: BTreeMap<_, _> = g.inputs().into_iter().map(|id| (id, input)).collect();
                let t: BTreeMap<_, _> = g.outputs().into_iter().map(|id| (id, target)).collect();
                let reports = gradient_discrepancy(&g, &params, &x, &t, &l, Exec::default()).map_err(Failure::domain)?;
                for r in &reports {
                    println!(
                        "L={}: {} tree nodes, max |markov - backprop| = {:e}",
                        r.replication,
                        r.tree_nodes,
                        r.max_abs_diff()
                    );
                }
                let text = discrepancy_csv(&reports);
                match csv {
                    Some(path) => write(Some(&path), &text),
                    None => {
                        println!();
                        write(None, &text)
                    }
                }
            }
        },
        Command::Inspect { graph, source, plan } => {
            let g = match (graph, source.nmp) {
                (Some(path), None) => load_graph(&path)?,
                (None, Some(nmp)) => compile(source.det.as_deref(), &nmp, &source.io)?,
                _ => return Err(Failure::Usage("inspect takes either a graph file or --nmp".into())),
            };
            write(None, &inspect(&g, plan)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
