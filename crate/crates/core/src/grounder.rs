//! Grounding interpreted rules into a [`NetworkGraph`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::graph::{
    BiasGroup, BiasGroupId, Edge, GraphError, IoSpec, NetworkGraph, Neuron, NeuronId, Role, WeightGroup,
    WeightGroupId,
};
use crate::logic::{Limits, Predicate, Program, SolveError, Term};
use crate::nmp::{Activation, InterpretedRule, NmpProgram};
use crate::par::Exec;

/// One ground instance of an interpreted rule.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundInstance {
    pub head: Term,
    pub body: Term,
    pub key: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundError {
    #[error("deterministic program: {0}")]
    Program(SolveError),
    #[error("rule {rule_id}: {source}")]
    Query { rule_id: usize, source: SolveError },
    #[error("rule {rule_id}: variable {var} is unbound in {term} after grounding")]
    NonGround { rule_id: usize, var: String, term: String },
    #[error("neuron {atom} gets activation {first} from one rule and {second} from another")]
    ActivationConflict { atom: String, first: Activation, second: Activation },
    #[error("output predicate {0} grounds to no neuron")]
    EmptyOutput(Predicate),
    #[error("no outputs declared and no predicate is only ever a head")]
    NoOutputs,
    #[error("predicates declared as both input and output: {}", join(.0))]
    IoOverlap(Vec<String>),
    #[error("input neurons of undeclared predicates: {}", join(.0))]
    UndeclaredInputs(Vec<String>),
    #[error("output neuron {0} is never derived by a rule, so it would also be an input")]
    OutputIsInput(String),
    #[error("no output reachable")]
    NoOutputReachable,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Head predicate plus its untethered argument positions and values.
type BiasKey = (Predicate, Vec<(usize, Term)>);

fn join(items: &[String]) -> String {
    items.join(", ")
}

/// All distinct ground instances of `rule`, sorted.
pub fn ground_rule(rule: &InterpretedRule, program: &Program, limits: &Limits) -> Result<Vec<GroundInstance>, GroundError> {
    let answers = program.solve(&rule.query, limits).map_err(|source| GroundError::Query {
        rule_id: rule.rule_id,
        source,
    })?;
    let non_ground = |term: &Term| {
        let var = term.variables().into_iter().next()?;
        Some(GroundError::NonGround {
            rule_id: rule.rule_id,
            var,
            term: term.to_string(),
        })
    };
    let mut out = BTreeSet::new();
    for s in answers {
        let head = s.apply(&rule.head);
        let body = s.apply(&rule.body);
        if let Some(err) = non_ground(&head).or_else(|| non_ground(&body)) {
            return Err(err);
        }
        let mut key = Vec::with_capacity(rule.untethered.len());
        for v in &rule.untethered {
            let value = s.apply(&Term::var(v.clone()));
            if let Some(err) = non_ground(&value) {
                return Err(err);
            }
            key.push(value);
        }
        out.insert(GroundInstance { head, body, key });
    }
    Ok(out.into_iter().collect())
}

/// Head argument positions holding an untethered variable, unioned over
/// the rules defining each head predicate.
fn bias_positions(rules: &[InterpretedRule]) -> BTreeMap<Predicate, BTreeSet<usize>> {
    let mut out: BTreeMap<Predicate, BTreeSet<usize>> = BTreeMap::new();
    for r in rules {
        let Some(pred) = r.head.predicate() else { continue };
        let entry = out.entry(pred).or_default();
        for (i, arg) in r.head.args().iter().enumerate() {
            if arg.variables().iter().any(|v| r.untethered.contains(v)) {
                entry.insert(i);
            }
        }
    }
    out
}

/// Resolves the io spec against the rules: checks disjointness and infers
/// outputs (never-body predicates) when none are declared.
fn effective_io(program: &NmpProgram, io: &IoSpec) -> Result<IoSpec, GroundError> {
    let overlap: Vec<String> = io.inputs.intersection(&io.outputs).map(|p| p.to_string()).collect();
    if !overlap.is_empty() {
        return Err(GroundError::IoOverlap(overlap));
    }
    let mut outputs = io.outputs.clone();
    if outputs.is_empty() {
        let bodies = program.body_predicates();
        outputs = program.head_predicates().difference(&bodies).cloned().collect();
        if outputs.is_empty() {
            return Err(GroundError::NoOutputs);
        }
    }
    Ok(IoSpec {
        inputs: io.inputs.clone(),
        outputs,
    })
}

/// Grounds every rule and assembles the pruned network. Neurons are
/// numbered inputs first, then hidden, then outputs, each in standard term
/// order; weight groups by rule then key; bias groups by predicate then key.
pub fn build_network(program: &NmpProgram, io: &IoSpec, limits: &Limits) -> Result<NetworkGraph, GroundError> {
    build_network_with(program, io, limits, Exec::default())
}

pub fn build_network_with(
    program: &NmpProgram,
    io: &IoSpec,
    limits: &Limits,
    exec: Exec,
) -> Result<NetworkGraph, GroundError> {
    let io = effective_io(program, io)?;
    let logic = Program::new(program.deterministic.clone()).map_err(GroundError::Program)?;
    let grounded: Vec<Result<Vec<GroundInstance>, GroundError>> =
        exec.map(&program.interpreted, |rule| ground_rule(rule, &logic, limits));
    let grounded = grounded.into_iter().collect::<Result<Vec<_>, _>>()?;

    // Activations of derived atoms.
    let mut activation: BTreeMap<&Term, (Activation, usize)> = BTreeMap::new();
    let mut atoms: BTreeSet<&Term> = BTreeSet::new();
    for (rule, instances) in program.interpreted.iter().zip(&grounded) {
        for inst in instances {
            atoms.insert(&inst.head);
            atoms.insert(&inst.body);
            let act = rule.activation();
            match activation.get(&inst.head) {
                Some(&(prev, _)) if prev != act => {
                    return Err(GroundError::ActivationConflict {
                        atom: inst.head.to_string(),
                        first: prev,
                        second: act,
                    });
                }
                Some(_) => {}
                None => {
                    activation.insert(&inst.head, (act, rule.rule_id));
                }
            }
        }
    }

    let role_of = |atom: &Term| -> Result<Role, GroundError> {
        let pred = atom.predicate().expect("atom");
        let derived = activation.contains_key(atom);
        match (io.outputs.contains(&pred), derived) {
            (true, true) => Ok(Role::Output),
            (true, false) => Err(GroundError::OutputIsInput(atom.to_string())),
            (false, true) => Ok(Role::Hidden),
            (false, false) => Ok(Role::Input),
        }
    };
    let mut ranked: Vec<(Role, &Term)> = Vec::with_capacity(atoms.len());
    for atom in atoms {
        ranked.push((role_of(atom)?, atom));
    }
    ranked.sort();

    for pred in &io.outputs {
        if !ranked.iter().any(|(_, a)| a.predicate().as_ref() == Some(pred)) {
            return Err(GroundError::EmptyOutput(pred.clone()));
        }
    }
    if !io.inputs.is_empty() {
        let stray: Vec<String> = ranked
            .iter()
            .filter(|(role, a)| *role == Role::Input && !io.inputs.contains(&a.predicate().unwrap()))
            .map(|(_, a)| a.to_string())
            .collect();
        if !stray.is_empty() {
            return Err(GroundError::UndeclaredInputs(stray));
        }
    }

    // Bias groups.
    let positions = bias_positions(&program.interpreted);
    let mut bias_keys: BTreeMap<BiasKey, Vec<NeuronId>> = BTreeMap::new();
    let mut neuron_bias_key = Vec::with_capacity(ranked.len());
    for (i, (role, atom)) in ranked.iter().enumerate() {
        if *role == Role::Input {
            neuron_bias_key.push(None);
            continue;
        }
        let pred = atom.predicate().unwrap();
        let key: Vec<(usize, Term)> = positions
            .get(&pred)
            .into_iter()
            .flatten()
            .map(|&p| (p, atom.args()[p].clone()))
            .collect();
        let k = (pred, key);
        bias_keys.entry(k.clone()).or_default().push(NeuronId(i));
        neuron_bias_key.push(Some(k));
    }
    let bias_index: HashMap<&BiasKey, BiasGroupId> =
        bias_keys.keys().enumerate().map(|(i, k)| (k, BiasGroupId(i))).collect();

    let neurons: Vec<Neuron> = ranked
        .iter()
        .zip(&neuron_bias_key)
        .enumerate()
        .map(|(i, ((role, atom), bias))| Neuron {
            id: NeuronId(i),
            atom: (*atom).clone(),
            role: *role,
            activation: activation.get(atom).map(|&(a, _)| a),
            bias_group: bias.as_ref().map(|k| bias_index[k]),
        })
        .collect();
    let bias_groups: Vec<BiasGroup> = bias_keys
        .into_iter()
        .enumerate()
        .map(|(i, ((predicate, key), members))| BiasGroup {
            id: BiasGroupId(i),
            predicate,
            key,
            members,
        })
        .collect();

    // Weight groups and edges.
    let ids: HashMap<&Term, NeuronId> = neurons.iter().map(|n| (&n.atom, n.id)).collect();
    let mut weight_groups = Vec::new();
    let mut edges = BTreeSet::new();
    for (rule, instances) in program.interpreted.iter().zip(&grounded) {
        let keys: BTreeSet<&Vec<Term>> = instances.iter().map(|i| &i.key).collect();
        let base = weight_groups.len();
        let group_of: HashMap<&Vec<Term>, WeightGroupId> =
            keys.iter().enumerate().map(|(j, k)| (*k, WeightGroupId(base + j))).collect();
        for (j, key) in keys.iter().enumerate() {
            weight_groups.push(WeightGroup {
                id: WeightGroupId(base + j),
                rule_id: rule.rule_id,
                key: (*key).clone(),
            });
        }
        for inst in instances {
            edges.insert((ids[&inst.head], ids[&inst.body], group_of[&inst.key]));
        }
    }
    let edges: Vec<Edge> = edges
        .into_iter()
        .map(|(to, from, weight_group)| Edge { from, to, weight_group })
        .collect();

    let mut graph = NetworkGraph {
        neurons,
        edges,
        weight_groups,
        bias_groups,
        io_spec: io,
        topological_order: Vec::new(),
    };
    graph.topological_order = graph.topological_sort()?;
    let graph = renumber(prune_unreachable(&graph)?);
    graph.validate()?;
    Ok(graph)
}

/// Keeps exactly the neurons with a path to an output. Surviving ids are
/// unchanged; groups left without members disappear.
pub fn prune_unreachable(graph: &NetworkGraph) -> Result<NetworkGraph, GroundError> {
    let keep = graph.reaching_outputs();
    if !keep.iter().any(|&k| k) {
        return Err(GroundError::NoOutputReachable);
    }
    let kept: BTreeSet<NeuronId> = graph.neurons.iter().zip(&keep).filter(|(_, &k)| k).map(|(n, _)| n.id).collect();
    let neurons: Vec<Neuron> = graph.neurons.iter().filter(|n| kept.contains(&n.id)).cloned().collect();
    let edges: Vec<Edge> = graph
        .edges
        .iter()
        .filter(|e| kept.contains(&e.from) && kept.contains(&e.to))
        .copied()
        .collect();
    let used_wg: BTreeSet<WeightGroupId> = edges.iter().map(|e| e.weight_group).collect();
    let weight_groups = graph.weight_groups.iter().filter(|g| used_wg.contains(&g.id)).cloned().collect();
    let bias_groups = graph
        .bias_groups
        .iter()
        .filter_map(|g| {
            let members: Vec<NeuronId> = g.members.iter().copied().filter(|m| kept.contains(m)).collect();
            (!members.is_empty()).then(|| BiasGroup { members, ..g.clone() })
        })
        .collect();
    let topological_order = graph.topological_order.iter().copied().filter(|id| kept.contains(id)).collect();
    Ok(NetworkGraph {
        neurons,
        edges,
        weight_groups,
        bias_groups,
        io_spec: graph.io_spec.clone(),
        topological_order,
    })
}

/// Makes all ids contiguous, preserving relative order.
pub fn renumber(graph: NetworkGraph) -> NetworkGraph {
    let nmap: HashMap<NeuronId, NeuronId> =
        graph.neurons.iter().enumerate().map(|(i, n)| (n.id, NeuronId(i))).collect();
    let wmap: HashMap<WeightGroupId, WeightGroupId> =
        graph.weight_groups.iter().enumerate().map(|(i, g)| (g.id, WeightGroupId(i))).collect();
    let bmap: HashMap<BiasGroupId, BiasGroupId> =
        graph.bias_groups.iter().enumerate().map(|(i, g)| (g.id, BiasGroupId(i))).collect();
    let mut g = graph;
    for n in &mut g.neurons {
        n.id = nmap[&n.id];
        n.bias_group = n.bias_group.map(|b| bmap[&b]);
    }
    for e in &mut g.edges {
        e.from = nmap[&e.from];
        e.to = nmap[&e.to];
        e.weight_group = wmap[&e.weight_group];
    }
    for w in &mut g.weight_groups {
        w.id = wmap[&w.id];
    }
    for b in &mut g.bias_groups {
        b.id = bmap[&b.id];
        for m in &mut b.members {
            *m = nmap[m];
        }
    }
    for id in &mut g.topological_order {
        *id = nmap[id];
    }
    g
}
