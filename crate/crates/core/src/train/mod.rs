//! Cross-entropy loss, reverse-mode gradients and SGD.

mod data;

pub use data::{load_csv, parse_csv, DataError, Dataset, Example};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::NeuronId;
use crate::ir::Params;
use crate::nmp::Activation;
use crate::par::Exec;
use crate::plan::{ExecutionPlan, PlanError};

/// Floor for logarithm arguments in the loss.
pub const LN_FLOOR: f64 = 1e-12;

/// Batches smaller than this are evaluated sequentially even in parallel mode.
const PAR_MIN_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("output {0} is not a sigmoid neuron; cross-entropy needs sigmoid outputs")]
    NonSigmoidOutput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset has no examples")]
    EmptyDataset,
    #[error("example has {got} {what} values, the plan expects {expected}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("loss became {loss} in epoch {epoch}")]
    Diverged { epoch: usize, loss: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 1000,
            batch_size: 1,
            seed: 0,
            init_scale: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning rate must be a finite non-negative number");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return bad("init scale must be a finite positive number");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub initial: Params,
    pub params: Params,
    /// Mean per-example loss over the whole dataset after each epoch.
    pub trace: Vec<f64>,
    pub updates: usize,
}

/// Cross-entropy of one sigmoid output, with clamped logarithms.
pub fn cross_entropy(a: f64, t: f64) -> f64 {
    -(t * a.max(LN_FLOOR).ln() + (1.0 - t) * (1.0 - a).max(LN_FLOOR).ln())
}

/// ∂ cross_entropy / ∂a, consistent with the clamping.
fn cross_entropy_da(a: f64, t: f64) -> f64 {
    let mut d = 0.0;
    if a > LN_FLOOR {
        d -= t / a;
    }
    if 1.0 - a > LN_FLOOR {
        d += (1.0 - t) / (1.0 - a);
    }
    d
}

pub fn check_sigmoid_outputs(plan: &ExecutionPlan) -> Result<(), TrainError> {
    for id in &plan.outputs {
        let (s, k) = plan.neuron_index[id];
        if plan.strata[s].activation[k] != Some(Activation::Sigmoid) {
            return Err(TrainError::NonSigmoidOutput(plan.label(*id).to_string()));
        }
    }
    Ok(())
}

fn check_shape(plan: &ExecutionPlan, ex: &Example) -> Result<(), TrainError> {
    if ex.inputs.len() != plan.inputs.len() {
        return Err(TrainError::Shape {
            what: "input",
            expected: plan.inputs.len(),
            got: ex.inputs.len(),
        });
    }
    if ex.targets.len() != plan.outputs.len() {
        return Err(TrainError::Shape {
            what: "target",
            expected: plan.outputs.len(),
            got: ex.targets.len(),
        });
    }
    Ok(())
}

/// Loss of one example under `theta`.
pub fn loss_theta(plan: &ExecutionPlan, theta: &[f64], ex: &Example) -> f64 {
    let trace = plan.forward(theta, &ex.inputs);
    plan.outputs.iter().zip(&ex.targets).map(|(id, &t)| cross_entropy(plan.value(&trace, *id), t)).sum()
}

/// Loss and ∂loss/∂theta of one example. Shapes must already be checked.
pub fn loss_grad_theta(plan: &ExecutionPlan, theta: &[f64], ex: &Example) -> (f64, Vec<f64>) {
    let trace = plan.forward(theta, &ex.inputs);
    let mut loss = 0.0;
    let mut dloss: Vec<(NeuronId, f64)> = Vec::with_capacity(plan.outputs.len());
    for (id, &t) in plan.outputs.iter().zip(&ex.targets) {
        let a = plan.value(&trace, *id);
        loss += cross_entropy(a, t);
        dloss.push((*id, cross_entropy_da(a, t)));
    }
    (loss, plan.backward(theta, &trace, &dloss))
}

/// Loss and per-group gradient for one example.
pub fn loss_and_grad(plan: &ExecutionPlan, params: &Params, ex: &Example) -> Result<(f64, Params), TrainError> {
    check_sigmoid_outputs(plan)?;
    check_shape(plan, ex)?;
    let theta = plan.theta(params)?;
    let (loss, grad) = loss_grad_theta(plan, &theta, ex);
    Ok((loss, plan.params(&grad)))
}

/// Mean per-example loss.
pub fn mean_loss(plan: &ExecutionPlan, theta: &[f64], examples: &[Example], exec: Exec) -> f64 {
    let exec = if examples.len() < PAR_MIN_BATCH { Exec::Sequential } else { exec };
    let losses = exec.map(examples, |ex| loss_theta(plan, theta, ex));
    losses.iter().sum::<f64>() / examples.len() as f64
}

/// Uniform draws in [-scale, scale]: weights first, then biases.
pub fn init_theta(plan: &ExecutionPlan, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    (0..plan.num_params()).map(|_| rng.gen_range(-scale..=scale)).collect()
}

pub fn train(plan: &ExecutionPlan, examples: &[Example], config: &TrainConfig) -> Result<TrainResult, TrainError> {
    train_with(plan, examples, config, Exec::default())
}

pub fn train_with(
    plan: &ExecutionPlan,
    examples: &[Example],
    config: &TrainConfig,
    exec: Exec,
) -> Result<TrainResult, TrainError> {
    config.validate()?;
    check_sigmoid_outputs(plan)?;
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for ex in examples {
        check_shape(plan, ex)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut theta = init_theta(plan, &mut rng, config.init_scale);
    let initial = plan.params(&theta);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut updates = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let batch_exec = if batch.len() < PAR_MIN_BATCH { Exec::Sequential } else { exec };
            let grads = batch_exec.map(batch, |&i| loss_grad_theta(plan, &theta, &examples[i]).1);
            let mut total = vec![0.0; theta.len()];
            for g in &grads {
                for (t, v) in total.iter_mut().zip(g) {
                    *t += v;
                }
            }
            let scale = config.learning_rate / batch.len() as f64;
            for (w, g) in theta.iter_mut().zip(&total) {
                *w -= scale * g;
            }
            updates += 1;
        }
        let loss = mean_loss(plan, &theta, examples, exec);
        if !loss.is_finite() || theta.iter().any(|w| !w.is_finite()) {
            return Err(TrainError::Diverged { epoch, loss });
        }
        trace.push(loss);
    }
    Ok(TrainResult {
        initial,
        params: plan.params(&theta),
        trace,
        updates,
    })
}

/// `epoch,loss` lines with a header.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, l));
    }
    out
}

/// Central finite-difference gradient, for checking.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Example from named values.
pub fn example_from(
    plan: &ExecutionPlan,
    inputs: &BTreeMap<NeuronId, f64>,
    targets: &BTreeMap<NeuronId, f64>,
) -> Result<Example, TrainError> {
    let x = plan.input_vector(inputs)?;
    let t = plan
        .outputs
        .iter()
        .map(|id| targets.get(id).copied().ok_or_else(|| PlanError::MissingInput(plan.label(*id).to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Example { inputs: x, targets: t })
}
