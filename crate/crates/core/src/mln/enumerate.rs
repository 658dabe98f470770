//! Exact inference by walking every completion of the evidence.
//!
//! The free assignments are cut into fixed chunks of `2^CHUNK_BITS`
//! states. Each chunk is walked in Gray-code order, so one bit flips per
//! step and the energy is updated from the flipped node's neighbours. Chunk
//! results are combined in chunk order with compensated summation, which
//! makes the answer independent of how chunks are spread over threads.

use std::collections::BTreeMap;

use super::{MlnError, PairwiseMarkovNetwork, MAX_NODES};
use crate::nmp::sigmoid;
use crate::par::Exec;

pub const CHUNK_BITS: u32 = 12;

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Default, Debug)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(self) -> f64 {
        self.s + self.c
    }
}

/// The network with evidence folded in, over free nodes only.
struct Reduced {
    free: Vec<usize>,
    base: f64,
    bias: Vec<f64>,
    adj: Vec<Vec<(usize, f64)>>,
    /// Per feature to track: (mask of free nodes that must be 1, satisfied by evidence).
    tracked: Vec<(u64, bool)>,
}

fn reduce(
    mn: &PairwiseMarkovNetwork,
    evidence: &BTreeMap<usize, bool>,
    track: bool,
) -> Result<Reduced, MlnError> {
    mn.check()?;
    let n = mn.len();
    if n > MAX_NODES {
        return Err(MlnError::TooLarge { nodes: n, max: MAX_NODES });
    }
    if let Some((&i, _)) = evidence.iter().find(|(&i, _)| i >= n) {
        return Err(MlnError::NodeOutOfRange { index: i, nodes: n });
    }
    let free: Vec<usize> = (0..n).filter(|i| !evidence.contains_key(i)).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        slot[i] = k;
    }
    let fixed = |i: usize| evidence.get(&i).copied();
    let mut r = Reduced {
        bias: vec![0.0; free.len()],
        adj: vec![Vec::new(); free.len()],
        free,
        base: 0.0,
        tracked: Vec::new(),
    };
    let mut base = Vec::new();
    // Which free nodes must be 1 for a node set to fire, or None if evidence says it never fires.
    let need = |nodes: &[usize]| -> Option<u64> {
        let mut m = 0u64;
        for &i in nodes {
            match fixed(i) {
                Some(false) => return None,
                Some(true) => {}
                None => m |= 1 << slot[i],
            }
        }
        Some(m)
    };
    for f in &mn.bias_features {
        match fixed(f.i) {
            Some(true) => base.push(f.weight),
            Some(false) => {}
            None => r.bias[slot[f.i]] += f.weight,
        }
    }
    for f in &mn.pair_features {
        match (fixed(f.i), fixed(f.j)) {
            (Some(false), _) | (_, Some(false)) => {}
            (Some(true), Some(true)) => base.push(f.weight),
            (Some(true), None) => r.bias[slot[f.j]] += f.weight,
            (None, Some(true)) => r.bias[slot[f.i]] += f.weight,
            (None, None) if f.i == f.j => r.bias[slot[f.i]] += f.weight,
            (None, None) => {
                let (a, b) = (slot[f.i], slot[f.j]);
                r.adj[a].push((b, f.weight));
                r.adj[b].push((a, f.weight));
            }
        }
    }
    let mut s = Sum::default();
    base.iter().for_each(|&w| s.add(w));
    r.base = s.value();
    if track {
        for f in &mn.pair_features {
            r.tracked.push(need(&[f.i, f.j]).map_or((0, false), |m| (m, true)));
        }
        for f in &mn.bias_features {
            r.tracked.push(need(&[f.i]).map_or((0, false), |m| (m, true)));
        }
    }
    Ok(r)
}

impl Reduced {
    fn energy(&self, state: u64) -> f64 {
        let mut e = Sum::default();
        e.add(self.base);
        for k in 0..self.free.len() {
            if state >> k & 1 == 1 {
                e.add(self.bias[k]);
                for &(l, w) in &self.adj[k] {
                    if l < k && state >> l & 1 == 1 {
                        e.add(w);
                    }
                }
            }
        }
        e.value()
    }

    /// Energy change from flipping free node `k` in `state` (before the flip).
    fn flip_delta(&self, state: u64, k: usize) -> f64 {
        let mut d = self.bias[k];
        for &(l, w) in &self.adj[k] {
            if state >> l & 1 == 1 {
                d += w;
            }
        }
        if state >> k & 1 == 1 {
            -d
        } else {
            d
        }
    }

    fn chunks(&self) -> (usize, u64) {
        let bits = self.free.len() as u32;
        if bits <= CHUNK_BITS {
            (1, 1 << bits)
        } else {
            (1 << (bits - CHUNK_BITS), 1 << CHUNK_BITS)
        }
    }

    /// Max energy of the chunk, then Σ exp(e - max) and the same sum
    /// restricted to each tracked feature.
    fn chunk(&self, c: usize, size: u64) -> (f64, Vec<Sum>) {
        let start = c as u64 * size;
        let mut states = Vec::with_capacity(size as usize);
        let mut energies = Vec::with_capacity(size as usize);
        let mut g = start ^ (start >> 1);
        let mut e = self.energy(g);
        for i in start..start + size {
            if i > start {
                let k = i.trailing_zeros() as usize;
                e += self.flip_delta(g, k);
                g ^= 1 << k;
            }
            states.push(g);
            energies.push(e);
        }
        let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sums = vec![Sum::default(); 1 + self.tracked.len()];
        for (&s, &e) in states.iter().zip(&energies) {
            let p = (e - max).exp();
            sums[0].add(p);
            for (t, &(mask, ok)) in self.tracked.iter().enumerate() {
                if ok && s & mask == mask {
                    sums[t + 1].add(p);
                }
            }
        }
        (max, sums)
    }

    /// log Z and the unnormalized tracked sums, all relative to exp(max).
    fn run(&self, exec: Exec) -> (f64, f64, Vec<f64>) {
        let (count, size) = self.chunks();
        let parts = exec.map_range(count, |c| self.chunk(c, size));
        let max = parts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let mut total = vec![Sum::default(); 1 + self.tracked.len()];
        for (m, sums) in &parts {
            let scale = (m - max).exp();
            for (t, s) in total.iter_mut().zip(sums) {
                t.add(s.value() * scale);
            }
        }
        let z = total[0].value();
        (max, z, total[1..].iter().map(|s| s.value()).collect())
    }
}

/// log Σ exp(energy) over completions of `evidence`.
pub fn log_partition(mn: &PairwiseMarkovNetwork, evidence: &BTreeMap<usize, bool>, exec: Exec) -> Result<f64, MlnError> {
    let r = reduce(mn, evidence, false)?;
    let (max, z, _) = r.run(exec);
    Ok(max + z.ln())
}

/// Exact P(node = 1 | evidence).
pub fn brute_force_conditional(
    mn: &PairwiseMarkovNetwork,
    node: usize,
    evidence: &BTreeMap<usize, bool>,
) -> Result<f64, MlnError> {
    brute_force_conditional_with(mn, node, evidence, Exec::default())
}

pub fn brute_force_conditional_with(
    mn: &PairwiseMarkovNetwork,
    node: usize,
    evidence: &BTreeMap<usize, bool>,
    exec: Exec,
) -> Result<f64, MlnError> {
    if node >= mn.len() {
        return Err(MlnError::NodeOutOfRange { index: node, nodes: mn.len() });
    }
    if evidence.contains_key(&node) {
        return Err(MlnError::QueryInEvidence(node));
    }
    let mut ev = evidence.clone();
    ev.insert(node, true);
    let on = log_partition(mn, &ev, exec)?;
    ev.insert(node, false);
    let off = log_partition(mn, &ev, exec)?;
    Ok(sigmoid(on - off))
}

/// P(v) for one full assignment.
pub fn joint_probability(mn: &PairwiseMarkovNetwork, v: &[bool], exec: Exec) -> Result<f64, MlnError> {
    if v.len() != mn.len() {
        return Err(MlnError::NodeOutOfRange { index: v.len(), nodes: mn.len() });
    }
    let log_z = log_partition(mn, &BTreeMap::new(), exec)?;
    Ok((mn.energy(v) - log_z).exp())
}

/// Σ P(v) over every assignment, computed term by term. Should be 1.
pub fn total_probability(mn: &PairwiseMarkovNetwork, exec: Exec) -> Result<f64, MlnError> {
    let log_z = log_partition(mn, &BTreeMap::new(), exec)?;
    let n = mn.len();
    let (count, size) = if n as u32 <= CHUNK_BITS { (1, 1u64 << n) } else { (1 << (n as u32 - CHUNK_BITS), 1 << CHUNK_BITS) };
    let parts = exec.map_range(count, |c| {
        let mut s = Sum::default();
        let mut v = vec![false; n];
        for state in c as u64 * size..(c as u64 + 1) * size {
            for (i, b) in v.iter_mut().enumerate() {
                *b = state >> i & 1 == 1;
            }
            s.add((mn.energy(&v) - log_z).exp());
        }
        s.value()
    });
    let mut s = Sum::default();
    parts.into_iter().for_each(|p| s.add(p));
    Ok(s.value())
}

/// Feature expectations under the conditional distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectations {
    pub log_z: f64,
    /// Same order as `pair_features`.
    pub pair: Vec<f64>,
    /// Same order as `bias_features`.
    pub bias: Vec<f64>,
}

pub fn feature_expectations(
    mn: &PairwiseMarkovNetwork,
    evidence: &BTreeMap<usize, bool>,
    exec: Exec,
) -> Result<Expectations, MlnError> {
    let r = reduce(mn, evidence, true)?;
    let (max, z, sums) = r.run(exec);
    let mut e: Vec<f64> = sums.into_iter().map(|s| s / z).collect();
    let bias = e.split_off(mn.pair_features.len());
    Ok(Expectations {
        log_z: max + z.ln(),
        pair: e,
        bias,
    })
}
