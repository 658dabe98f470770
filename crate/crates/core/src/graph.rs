//! The ground network: neurons are ground atoms, edges run body → head.

use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;

use thiserror::Error;

use crate::logic::{Predicate, Term};
use crate::nmp::Activation;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub usize);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(NeuronId);
id_type!(WeightGroupId);
id_type!(BiasGroupId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Input,
    Hidden,
    Output,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Input => "input",
            Role::Hidden => "hidden",
            Role::Output => "output",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "input" => Some(Role::Input),
            "hidden" => Some(Role::Hidden),
            "output" => Some(Role::Output),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neuron {
    pub id: NeuronId,
    pub atom: Term,
    pub role: Role,
    /// `None` exactly for inputs.
    pub activation: Option<Activation>,
    pub bias_group: Option<BiasGroupId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: NeuronId,
    pub to: NeuronId,
    pub weight_group: WeightGroupId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightGroup {
    pub id: WeightGroupId,
    pub rule_id: usize,
    /// Values of the rule's untethered variables, in declaration order.
    pub key: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiasGroup {
    pub id: BiasGroupId,
    pub predicate: Predicate,
    /// (argument position, value) for each head position carrying an
    /// untethered variable.
    pub key: Vec<(usize, Term)>,
    pub members: Vec<NeuronId>,
}

/// Declared input and output predicates. Empty `inputs` means undeclared.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IoSpec {
    pub inputs: BTreeSet<Predicate>,
    pub outputs: BTreeSet<Predicate>,
}

impl IoSpec {
    pub fn new(inputs: impl IntoIterator<Item = Predicate>, outputs: impl IntoIterator<Item = Predicate>) -> Self {
        IoSpec {
            inputs: inputs.into_iter().collect(),
            outputs: outputs.into_iter().collect(),
        }
    }

    /// Parses `p/1,q/2`. An empty string gives the empty set.
    pub fn parse_list(text: &str) -> Result<BTreeSet<Predicate>, String> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Predicate::parse(s).ok_or_else(|| format!("expected name/arity, found `{s}`")))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkGraph {
    /// Sorted by id. Ids need not be contiguous after pruning.
    pub neurons: Vec<Neuron>,
    pub edges: Vec<Edge>,
    pub weight_groups: Vec<WeightGroup>,
    pub bias_groups: Vec<BiasGroup>,
    pub io_spec: IoSpec,
    pub topological_order: Vec<NeuronId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("cycle among neurons: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("invalid network: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> GraphError {
    GraphError::Invalid(msg.into())
}

impl NetworkGraph {
    pub fn neuron(&self, id: NeuronId) -> Option<&Neuron> {
        self.neurons.binary_search_by_key(&id, |n| n.id).ok().map(|i| &self.neurons[i])
    }

    /// Position of `id` in `neurons`.
    pub fn index_of(&self, id: NeuronId) -> Option<usize> {
        self.neurons.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn weight_group(&self, id: WeightGroupId) -> Option<&WeightGroup> {
        self.weight_groups.binary_search_by_key(&id, |g| g.id).ok().map(|i| &self.weight_groups[i])
    }

    pub fn bias_group(&self, id: BiasGroupId) -> Option<&BiasGroup> {
        self.bias_groups.binary_search_by_key(&id, |g| g.id).ok().map(|i| &self.bias_groups[i])
    }

    pub fn find(&self, atom: &Term) -> Option<NeuronId> {
        self.neurons.iter().find(|n| &n.atom == atom).map(|n| n.id)
    }

    pub fn atom_index(&self) -> HashMap<&Term, NeuronId> {
        self.neurons.iter().map(|n| (&n.atom, n.id)).collect()
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &Neuron> {
        self.neurons.iter().filter(move |n| n.role == role)
    }

    pub fn inputs(&self) -> Vec<NeuronId> {
        self.with_role(Role::Input).map(|n| n.id).collect()
    }

    pub fn outputs(&self) -> Vec<NeuronId> {
        self.with_role(Role::Output).map(|n| n.id).collect()
    }

    /// Incoming edges per neuron position.
    pub fn incoming(&self) -> Vec<Vec<Edge>> {
        let mut out = vec![Vec::new(); self.neurons.len()];
        for e in &self.edges {
            if let Some(i) = self.index_of(e.to) {
                out[i].push(*e);
            }
        }
        out
    }

    /// Kahn's algorithm, always taking the smallest ready id.
    pub fn topological_sort(&self) -> Result<Vec<NeuronId>, GraphError> {
        let n = self.neurons.len();
        let mut indegree = vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            let (Some(a), Some(b)) = (self.index_of(e.from), self.index_of(e.to)) else {
                return Err(invalid(format!("edge {} -> {} references a missing neuron", e.from, e.to)));
            };
            succ[a].push(b);
            indegree[b] += 1;
        }
        let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = ready.pop() {
            order.push(self.neurons[i].id);
            for &j in &succ[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(Reverse(j));
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        Err(GraphError::Cycle(self.find_cycle(&succ, &indegree)))
    }

    fn find_cycle(&self, succ: &[Vec<usize>], indegree: &[usize]) -> Vec<String> {
        // Every neuron left with positive indegree has a predecessor that is
        // also left, so walking predecessors must revisit one.
        let mut pred = vec![None; succ.len()];
        for (a, ss) in succ.iter().enumerate() {
            for &b in ss {
                if indegree[a] > 0 && indegree[b] > 0 {
                    pred[b].get_or_insert(a);
                }
            }
        }
        let start = indegree.iter().position(|&d| d > 0).expect("cycle exists");
        let mut seen = vec![usize::MAX; succ.len()];
        let mut path = Vec::new();
        let mut cur = start;
        while seen[cur] == usize::MAX {
            seen[cur] = path.len();
            path.push(cur);
            cur = pred[cur].expect("remaining neuron has a remaining predecessor");
        }
        let mut cycle: Vec<usize> = path[seen[cur]..].to_vec();
        cycle.reverse();
        cycle.push(cycle[0]);
        cycle.iter().map(|&i| self.neurons[i].atom.to_string()).collect()
    }

    /// Longest path length from a source, per neuron position.
    pub fn strata(&self) -> Result<Vec<usize>, GraphError> {
        let order = self.topological_sort()?;
        let incoming = self.incoming();
        let mut level = vec![0usize; self.neurons.len()];
        for id in order {
            let i = self.index_of(id).unwrap();
            level[i] = incoming[i]
                .iter()
                .map(|e| level[self.index_of(e.from).unwrap()] + 1)
                .max()
                .unwrap_or(0);
        }
        Ok(level)
    }

    /// Positions of neurons with a directed path to an output (outputs included).
    pub fn reaching_outputs(&self) -> Vec<bool> {
        let mut keep: Vec<bool> = self.neurons.iter().map(|n| n.role == Role::Output).collect();
        let mut stack: Vec<usize> = (0..self.neurons.len()).filter(|&i| keep[i]).collect();
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); self.neurons.len()];
        for e in &self.edges {
            if let (Some(a), Some(b)) = (self.index_of(e.from), self.index_of(e.to)) {
                pred[b].push(a);
            }
        }
        while let Some(i) = stack.pop() {
            for &p in &pred[i] {
                if !keep[p] {
                    keep[p] = true;
                    stack.push(p);
                }
            }
        }
        keep
    }

    /// Checks every structural invariant; used after import.
    pub fn validate(&self) -> Result<(), GraphError> {
        check_sorted_unique(self.neurons.iter().map(|n| n.id.0), "neuron")?;
        check_sorted_unique(self.weight_groups.iter().map(|g| g.id.0), "weight group")?;
        check_sorted_unique(self.bias_groups.iter().map(|g| g.id.0), "bias group")?;

        if !self.io_spec.inputs.is_disjoint(&self.io_spec.outputs) {
            return Err(invalid("input and output predicates overlap"));
        }
        if self.io_spec.outputs.is_empty() {
            return Err(invalid("no output predicates"));
        }
        let mut atoms = BTreeSet::new();
        let mut has_incoming = vec![false; self.neurons.len()];
        for e in &self.edges {
            let (Some(_), Some(b)) = (self.index_of(e.from), self.index_of(e.to)) else {
                return Err(invalid(format!("edge {} -> {} references a missing neuron", e.from, e.to)));
            };
            has_incoming[b] = true;
            if self.weight_group(e.weight_group).is_none() {
                return Err(invalid(format!("edge references missing weight group {}", e.weight_group)));
            }
        }
        let edge_set: BTreeSet<Edge> = self.edges.iter().copied().collect();
        if edge_set.len() != self.edges.len() {
            return Err(invalid("duplicate edge"));
        }
        for (i, n) in self.neurons.iter().enumerate() {
            if !n.atom.is_ground() {
                return Err(invalid(format!("neuron {} is not ground", n.atom)));
            }
            if !atoms.insert(&n.atom) {
                return Err(invalid(format!("duplicate neuron {}", n.atom)));
            }
            let pred = n.atom.predicate().ok_or_else(|| invalid(format!("neuron {} is not an atom", n.atom)))?;
            match n.role {
                Role::Input => {
                    if has_incoming[i] {
                        return Err(invalid(format!("input {} has incoming edges", n.atom)));
                    }
                    if n.activation.is_some() || n.bias_group.is_some() {
                        return Err(invalid(format!("input {} carries an activation or bias", n.atom)));
                    }
                    if !self.io_spec.inputs.is_empty() && !self.io_spec.inputs.contains(&pred) {
                        return Err(invalid(format!("input {} is not of a declared input predicate", n.atom)));
                    }
                }
                Role::Hidden | Role::Output => {
                    if !has_incoming[i] {
                        return Err(invalid(format!("non-input {} has no incoming edge", n.atom)));
                    }
                    if n.activation.is_none() {
                        return Err(invalid(format!("{} has no activation", n.atom)));
                    }
                    let Some(bg) = n.bias_group else {
                        return Err(invalid(format!("{} has no bias group", n.atom)));
                    };
                    match self.bias_group(bg) {
                        Some(g) if g.members.contains(&n.id) => {}
                        _ => return Err(invalid(format!("{} is missing from bias group {bg}", n.atom))),
                    }
                }
            }
            if (n.role == Role::Output) != self.io_spec.outputs.contains(&pred) {
                return Err(invalid(format!("{} has role {} inconsistent with the io spec", n.atom, n.role.name())));
            }
        }
        for g in &self.bias_groups {
            if g.members.is_empty() {
                return Err(invalid(format!("bias group {} is empty", g.id)));
            }
            for m in &g.members {
                if self.neuron(*m).and_then(|n| n.bias_group) != Some(g.id) {
                    return Err(invalid(format!("bias group {} lists neuron {m} which does not use it", g.id)));
                }
            }
        }
        for g in &self.weight_groups {
            if !self.edges.iter().any(|e| e.weight_group == g.id) {
                return Err(invalid(format!("weight group {} has no edges", g.id)));
            }
        }
        let order = self.topological_sort()?;
        if order != self.topological_order {
            return Err(invalid("stored topological order does not match the graph"));
        }
        if self.reaching_outputs().iter().any(|r| !r) {
            return Err(invalid("some neuron has no path to an output"));
        }
        Ok(())
    }
}

fn check_sorted_unique(ids: impl Iterator<Item = usize>, what: &str) -> Result<(), GraphError> {
    let mut prev: Option<usize> = None;
    for id in ids {
        if prev.is_some_and(|p| p >= id) {
            return Err(invalid(format!("{what} ids are not strictly increasing at {id}")));
        }
        prev = Some(id);
    }
    Ok(())
}
