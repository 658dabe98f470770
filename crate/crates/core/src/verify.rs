//! Randomized property suites, shared by the CLI and the test suites.
//!
//! Trial `k` draws from a ChaCha8 stream `k` of the given seed, so results
//! do not depend on how trials are spread over threads.

use std::collections::BTreeMap;
use std::fmt;

use astro_float::{BigFloat, Consts, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{NetworkGraph, NeuronId, Role};
use crate::mln::{brute_force_conditional_with, to_pairwise_mn, MlnError};
use crate::nmp::{sigmoid, Activation};
use crate::par::Exec;
use crate::plan::{edgewise::forward_edgewise, forward_plan, plan, ExecutionPlan, PlanError};
use crate::synth::{random_graph, random_params, SynthConfig};
use crate::train::{example_from, loss_and_grad, TrainError, LN_FLOOR};

pub const SIGMOID_TOL: f64 = 1e-9;
pub const PLAN_TOL: f64 = 1e-12;
pub const GRAD_REL_TOL: f64 = 1e-5;
/// Groups with smaller analytic gradients are not compared.
pub const GRAD_FLOOR: f64 = 1e-8;
pub const FD_STEP: f64 = 1e-6;
/// Bits of precision for the finite-difference oracle.
const ORACLE_BITS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub trials: usize,
    pub passed: usize,
    pub tolerance: f64,
    /// Worst error seen over all trials.
    pub max_error: f64,
    /// One line per failing trial.
    pub failures: Vec<String>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.passed == self.trials
    }

    fn collect(trials: Vec<(f64, Option<String>)>, tolerance: f64) -> Report {
        let mut r = Report {
            trials: trials.len(),
            passed: 0,
            tolerance,
            max_error: 0.0,
            failures: Vec::new(),
        };
        for (err, fail) in trials {
            r.max_error = r.max_error.max(err);
            match fail {
                None => r.passed += 1,
                Some(f) => r.failures.push(f),
            }
        }
        r
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} within {:e}", self.passed, self.trials, self.tolerance)
    }
}

fn trial_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

fn random_inputs(rng: &mut ChaCha8Rng, graph: &NetworkGraph, binary: bool) -> BTreeMap<NeuronId, f64> {
    graph
        .inputs()
        .into_iter()
        .map(|id| {
            let v = if binary { f64::from(rng.gen_range(0..=1u8)) } else { rng.gen_range(-1.0..=1.0) };
            (id, v)
        })
        .collect()
}

/// Conditional of a random non-input neuron, with its parents clamped at
/// random and its children at 0, against σ(Σ w·v + b).
pub fn sigmoid_equivalence(seed: u64, trials: usize, exec: Exec) -> Result<Report, MlnError> {
    let cfg = SynthConfig::default();
    let results = exec.map_range(trials, |k| -> Result<(f64, Option<String>), MlnError> {
        let mut rng = trial_rng(seed, k);
        let g = random_graph(&mut rng, &cfg);
        let params = random_params(&mut rng, &g, 2.0);
        let mn = to_pairwise_mn(&g, &params)?;
        let targets: Vec<usize> = (0..g.neurons.len()).filter(|&i| g.neurons[i].bias_group.is_some()).collect();
        let node = targets[rng.gen_range(0..targets.len())];
        let id = g.neurons[node].id;
        let mut evidence = BTreeMap::new();
        let mut z = params.bias(g.neurons[node].bias_group.expect("non-input")).expect("random params");
        for e in &g.edges {
            if e.to == id {
                let on = rng.gen_bool(0.5);
                evidence.insert(g.index_of(e.from).expect("valid"), on);
                if on {
                    z += params.weight(e.weight_group).expect("random params");
                }
            } else if e.from == id {
                evidence.insert(g.index_of(e.to).expect("valid"), false);
            }
        }
        // Seq inside: the trials themselves are already spread over threads.
        let p = brute_force_conditional_with(&mn, node, &evidence, Exec::Sequential)?;
        let err = (p - sigmoid(z)).abs();
        let fail = (err > SIGMOID_TOL)
            .then(|| format!("trial {k}: {} gives {p} against {} (error {err:e})", g.neurons[node].atom, sigmoid(z)));
        Ok((err, fail))
    });
    Ok(Report::collect(results.into_iter().collect::<Result<_, _>>()?, SIGMOID_TOL))
}

/// Compiled plan against the per-edge interpreter on mixed-activation graphs.
pub fn plan_equivalence(seed: u64, trials: usize, exec: Exec) -> Result<Report, PlanError> {
    let cfg = SynthConfig {
        max_neurons: 50,
        mixed_activations: true,
        ..SynthConfig::default()
    };
    let results = exec.map_range(trials, |k| -> Result<(f64, Option<String>), PlanError> {
        let mut rng = trial_rng(seed, k);
        let g = random_graph(&mut rng, &cfg);
        let params = random_params(&mut rng, &g, 1.0);
        let input = random_inputs(&mut rng, &g, false);
        let p = plan(&g)?;
        let fast = forward_plan(&p, &params, &input)?;
        let slow = forward_edgewise(&g, &params, &input)?;
        let mut worst = (0.0, NeuronId(0));
        for (id, v) in &slow {
            let d = (fast[id] - v).abs();
            if d > worst.0 || d.is_nan() {
                worst = (if d.is_nan() { f64::INFINITY } else { d }, *id);
            }
        }
        let fail = (worst.0 > PLAN_TOL).then(|| {
            let n = g.neuron(worst.1).expect("valid");
            format!("trial {k}: {} differs by {:e}", n.atom, worst.0)
        });
        Ok((worst.0, fail))
    });
    Ok(Report::collect(results.into_iter().collect::<Result<_, _>>()?, PLAN_TOL))
}

/// Analytic gradients against central differences of the edgewise loss.
pub fn gradient_check(seed: u64, trials: usize, exec: Exec) -> Result<Report, TrainError> {
    let cfg = SynthConfig {
        max_neurons: 30,
        mixed_activations: true,
        ..SynthConfig::default()
    };
    let results = exec.map_range(trials, |k| -> Result<(f64, Option<String>), TrainError> {
        let mut rng = trial_rng(seed, k);
        let g = random_graph(&mut rng, &cfg);
        let params = random_params(&mut rng, &g, 1.0);
        let input = random_inputs(&mut rng, &g, false);
        let targets: BTreeMap<NeuronId, f64> = g.outputs().into_iter().map(|o| (o, rng.gen_range(0.0..=1.0))).collect();
        let p = plan(&g)?;
        let ex = example_from(&p, &input, &targets)?;
        let (_, grad) = loss_and_grad(&p, &params, &ex)?;
        let analytic = p.theta(&grad)?;
        let theta = p.theta(&params)?;
        let mut oracle = WideLoss::new(&g, &p, &input, &targets);
        let mut worst = (0.0, 0usize, f64::NAN);
        for (i, a) in analytic.iter().enumerate() {
            if a.abs() > GRAD_FLOOR {
                let n = oracle.central_difference(&theta, i, FD_STEP);
                let rel = (a - n).abs() / a.abs();
                if rel > worst.0 || rel.is_nan() {
                    worst = (if rel.is_nan() { f64::INFINITY } else { rel }, i, n);
                }
            }
        }
        let fail = (worst.0 >= GRAD_REL_TOL).then(|| {
            let i = worst.1;
            format!(
                "trial {k}: {} analytic {:e} numeric {:e} (relative {:e})",
                p.param_name(i),
                analytic[i],
                worst.2,
                worst.0
            )
        });
        Ok((worst.0, fail))
    });
    Ok(Report::collect(results.into_iter().collect::<Result<_, _>>()?, GRAD_REL_TOL))
}

/// The edgewise loss in 128-bit floating point.
///
/// A central difference at h = 1e-6 divides the rounding error of the loss
/// by 2h. In f64 that leaves about 1e-10 of noise, which swamps gradients
/// near 1e-7. Evaluating the same difference quotient in wide precision
/// leaves only the truncation error of the formula itself.
struct WideLoss<'a> {
    graph: &'a NetworkGraph,
    /// theta position of each edge's weight, per neuron position.
    incoming: Vec<Vec<(usize, NeuronId)>>,
    bias: Vec<Option<usize>>,
    input: BTreeMap<NeuronId, BigFloat>,
    targets: Vec<(NeuronId, BigFloat)>,
    consts: Consts,
}

const RM: RoundingMode = RoundingMode::ToEven;

impl<'a> WideLoss<'a> {
    fn new(
        graph: &'a NetworkGraph,
        plan: &ExecutionPlan,
        input: &BTreeMap<NeuronId, f64>,
        targets: &BTreeMap<NeuronId, f64>,
    ) -> Self {
        let wpos: BTreeMap<_, _> = plan.weight_groups.iter().enumerate().map(|(k, g)| (*g, k)).collect();
        let nw = plan.weight_groups.len();
        let bpos: BTreeMap<_, _> = plan.bias_groups.iter().enumerate().map(|(k, g)| (*g, nw + k)).collect();
        let incoming = graph
            .incoming()
            .into_iter()
            .map(|es| es.iter().map(|e| (wpos[&e.weight_group], e.from)).collect())
            .collect();
        let bias = graph.neurons.iter().map(|n| n.bias_group.map(|b| bpos[&b])).collect();
        let wide = |v: f64| BigFloat::from_f64(v, ORACLE_BITS);
        WideLoss {
            graph,
            incoming,
            bias,
            input: input.iter().map(|(k, v)| (*k, wide(*v))).collect(),
            targets: targets.iter().map(|(k, v)| (*k, wide(*v))).collect(),
            consts: Consts::new().expect("constant cache"),
        }
    }

    fn loss(&mut self, theta: &[BigFloat]) -> BigFloat {
        let p = ORACLE_BITS;
        let one = BigFloat::from_f64(1.0, p);
        let zero = BigFloat::from_f64(0.0, p);
        let mut value: BTreeMap<NeuronId, BigFloat> = BTreeMap::new();
        for &id in &self.graph.topological_order {
            let i = self.graph.index_of(id).expect("valid graph");
            let n = &self.graph.neurons[i];
            if n.role == Role::Input {
                value.insert(id, self.input[&id].clone());
                continue;
            }
            let mut z = self.bias[i].map_or_else(|| zero.clone(), |b| theta[b].clone());
            for (w, from) in &self.incoming[i] {
                z = z.add(&theta[*w].mul(&value[from], p, RM), p, RM);
            }
            let a = match n.activation.unwrap_or(Activation::Linear) {
                Activation::Sigmoid => one.div(&one.add(&z.neg().exp(p, RM, &mut self.consts), p, RM), p, RM),
                Activation::Relu => z.max(&zero),
                Activation::Linear => z,
            };
            value.insert(id, a);
        }
        let floor = BigFloat::from_f64(LN_FLOOR, p);
        let mut total = zero.clone();
        for (o, t) in &self.targets {
            let a = &value[o];
            let on = a.max(&floor).ln(p, RM, &mut self.consts);
            let off = one.sub(a, p, RM).max(&floor).ln(p, RM, &mut self.consts);
            let ce = t.mul(&on, p, RM).add(&one.sub(t, p, RM).mul(&off, p, RM), p, RM);
            total = total.sub(&ce, p, RM);
        }
        total
    }

    /// (loss(θ + h e_i) - loss(θ - h e_i)) / 2h, rounded to f64 at the end.
    fn central_difference(&mut self, theta: &[f64], i: usize, h: f64) -> f64 {
        let p = ORACLE_BITS;
        let mut wide: Vec<BigFloat> = theta.iter().map(|v| BigFloat::from_f64(*v, p)).collect();
        let step = BigFloat::from_f64(h, p);
        let base = wide[i].clone();
        wide[i] = base.add(&step, p, RM);
        let up = self.loss(&wide);
        wide[i] = base.sub(&step, p, RM);
        let down = self.loss(&wide);
        let d = up.sub(&down, p, RM).div(&step.add(&step, p, RM), p, RM);
        d.to_string().parse().unwrap_or(f64::NAN)
    }
}
