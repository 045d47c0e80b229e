//! Profile construction: count adjacent region pairs, normalize, then clean
//! up the graph so it has a unique stationary distribution.
//!
//! Cleanup runs in this order:
//!
//! 1. prune edges below the threshold and renormalize the surviving rows;
//! 2. drop dead-end states (no outgoing mass left), repeatedly, since
//!    dropping one can empty a predecessor's row;
//! 3. drop transient states: every state in a strongly connected component
//!    that has an edge leaving it in the condensation;
//! 4. join the remaining closed components pairwise with `epsilon` edges in
//!    both directions;
//! 5. renormalize.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::strongly_connected_components;
use crate::markov::{
    stationary, stationary_direct, to_profile_usage, MemoryClass, Profile, ProfileMeta,
};
use crate::regions::RegionSequence;
use crate::{Error, Result};

/// How reconnection picks the endpoint state inside each closed component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reconnect {
    /// The state with the most stationary mass within its own component.
    MaxMass,
    /// A uniformly random state per component pair, seeded.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub threshold: f64,
    pub epsilon: f64,
    pub reconnect: Reconnect,
    pub source: String,
    pub timestamp: Option<i64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            threshold: 1e-4,
            epsilon: 0.1,
            reconnect: Reconnect::MaxMass,
            source: String::new(),
            timestamp: None,
        }
    }
}

/// Exact adjacent-pair counts over a region sequence.
///
/// States are numbered in order of first appearance, so state 0 is the class
/// of the lowest-addressed region.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransitionCounts {
    pub states: Vec<MemoryClass>,
    pub counts: Vec<BTreeMap<usize, u64>>,
}

impl TransitionCounts {
    pub fn from_regions(seq: &RegionSequence) -> Self {
        let mut index: HashMap<MemoryClass, usize> = HashMap::new();
        let mut states = Vec::new();
        let mut ids = Vec::with_capacity(seq.len());
        for r in seq.regions() {
            let class = MemoryClass::new(r.len, to_profile_usage(r.usage));
            let id = *index.entry(class).or_insert_with(|| {
                states.push(class);
                states.len() - 1
            });
            ids.push(id);
        }
        let mut counts = vec![BTreeMap::new(); states.len()];
        for w in ids.windows(2) {
            *counts[w[0]].entry(w[1]).or_insert(0) += 1;
        }
        TransitionCounts { states, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flat_map(|row| row.values()).sum()
    }

    /// Row-normalized counts before any cleanup. States that only ever
    /// appear as a destination have an empty row.
    pub fn probabilities(&self) -> Vec<Vec<(usize, f64)>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.values().sum();
                row.iter()
                    .map(|(&j, &c)| (j, c as f64 / total as f64))
                    .collect()
            })
            .collect()
    }
}

fn normalize(row: &mut [(usize, f64)]) {
    let sum: f64 = row.iter().map(|&(_, p)| p).sum();
    if sum > 0.0 {
        row.iter_mut().for_each(|e| e.1 /= sum);
    }
}

pub fn build_profile(seq: &RegionSequence, options: &BuildOptions) -> Result<Profile> {
    if seq.len() < 2 {
        return Err(Error::InsufficientData(seq.len()));
    }
    if !(0.0..1.0).contains(&options.threshold) {
        return Err(Error::Config(format!(
            "threshold {} outside [0, 1)",
            options.threshold
        )));
    }
    if !(options.epsilon > 0.0 && options.epsilon <= 1.0) {
        return Err(Error::Config(format!(
            "epsilon {} outside (0, 1]",
            options.epsilon
        )));
    }

    let counts = TransitionCounts::from_regions(seq);
    let n = counts.states.len();
    let mut rows = counts.probabilities();

    for row in &mut rows {
        row.retain(|&(_, p)| p >= options.threshold);
        normalize(row);
    }

    let mut alive = vec![true; n];
    remove_dead_ends(&mut rows, &mut alive);
    remove_transient(&mut rows, &mut alive);
    if !alive.iter().any(|&a| a) {
        return Err(Error::DegenerateProfile);
    }

    // Compact to the surviving states, keeping first-appearance order.
    let mut new_id = vec![usize::MAX; n];
    let mut states = Vec::new();
    for (i, _) in alive.iter().enumerate().filter(|(_, &a)| a) {
        new_id[i] = states.len();
        states.push(counts.states[i]);
    }
    let mut rows: Vec<Vec<(usize, f64)>> = rows
        .into_iter()
        .enumerate()
        .filter(|&(i, _)| alive[i])
        .map(|(_, row)| row.into_iter().map(|(j, p)| (new_id[j], p)).collect())
        .collect();

    let meta = ProfileMeta {
        source: options.source.clone(),
        timestamp: options.timestamp,
        threshold: options.threshold,
        epsilon: options.epsilon,
        seed: match options.reconnect {
            Reconnect::Random { seed } => Some(seed),
            Reconnect::MaxMass => None,
        },
    };
    reconnect(&states, &mut rows, options.epsilon, options.reconnect)?;
    for row in &mut rows {
        row.sort_by_key(|&(j, _)| j);
        normalize(row);
    }
    Profile::new(states, rows, meta).map_err(|e| match e {
        Error::InvalidProfile(msg) => {
            Error::Invariant(format!("cleanup produced an invalid profile: {msg}"))
        }
        other => other,
    })
}

/// Builds one profile per region sequence, in parallel when enabled.
pub fn build_profiles(seqs: &[RegionSequence], options: &BuildOptions) -> Vec<Result<Profile>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seqs.par_iter().map(|s| build_profile(s, options)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    seqs.iter().map(|s| build_profile(s, options)).collect()
}

fn remove_dead_ends(rows: &mut [Vec<(usize, f64)>], alive: &mut [bool]) {
    let n = rows.len();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, _) in row {
            preds[j].push(i);
        }
    }
    let mut todo: Vec<usize> = (0..n).filter(|&i| rows[i].is_empty()).collect();
    while let Some(dead) = todo.pop() {
        if !alive[dead] {
            continue;
        }
        alive[dead] = false;
        for &p in &preds[dead] {
            if !alive[p] {
                continue;
            }
            let row = &mut rows[p];
            let before = row.len();
            row.retain(|&(j, _)| j != dead);
            if row.len() != before {
                if row.is_empty() {
                    todo.push(p);
                } else {
                    normalize(row);
                }
            }
        }
    }
}

fn remove_transient(rows: &mut [Vec<(usize, f64)>], alive: &mut [bool]) {
    let adj: Vec<Vec<usize>> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if alive[i] {
                row.iter().map(|&(j, _)| j).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let comps = strongly_connected_components(&adj);
    let closed = comps.closed(&adj);
    for i in 0..rows.len() {
        if alive[i] && !closed[comps.component_of[i]] {
            alive[i] = false;
        }
    }
    for (i, row) in rows.iter_mut().enumerate() {
        if !alive[i] {
            row.clear();
        }
    }
}

/// Adds bidirectional `epsilon` edges between every pair of closed
/// components. Rows are left unnormalized.
fn reconnect(
    states: &[MemoryClass],
    rows: &mut [Vec<(usize, f64)>],
    epsilon: f64,
    mode: Reconnect,
) -> Result<()> {
    let adj: Vec<Vec<usize>> = rows
        .iter()
        .map(|row| row.iter().map(|&(j, _)| j).collect())
        .collect();
    let comps = strongly_connected_components(&adj);
    if comps.count() < 2 {
        return Ok(());
    }
    let mut edges = Vec::new();
    match mode {
        Reconnect::MaxMass => {
            let reps = comps
                .members
                .iter()
                .map(|members| heaviest_state(states, rows, members))
                .collect::<Result<Vec<_>>>()?;
            for a in 0..reps.len() {
                for b in a + 1..reps.len() {
                    edges.push((reps[a], reps[b]));
                }
            }
        }
        Reconnect::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = &comps.members;
            for a in 0..m.len() {
                for b in a + 1..m.len() {
                    let s1 = m[a][rng.random_range(0..m[a].len())];
                    let s2 = m[b][rng.random_range(0..m[b].len())];
                    edges.push((s1, s2));
                }
            }
        }
    }
    for (s1, s2) in edges {
        rows[s1].push((s2, epsilon));
        rows[s2].push((s1, epsilon));
    }
    Ok(())
}

/// The member of a closed component with the largest stationary mass of the
/// component's own chain; lowest index on ties.
fn heaviest_state(
    states: &[MemoryClass],
    rows: &[Vec<(usize, f64)>],
    members: &[usize],
) -> Result<usize> {
    if members.len() == 1 {
        return Ok(members[0]);
    }
    let local: HashMap<usize, usize> = members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let sub_rows = members
        .iter()
        .map(|&i| rows[i].iter().map(|&(j, p)| (local[&j], p)).collect())
        .collect();
    let sub_states = members.iter().map(|&i| states[i]).collect();
    let sub = Profile::new(sub_states, sub_rows, ProfileMeta::default())
        .map_err(|e| Error::Invariant(format!("closed component is not a valid chain: {e}")))?;
    let pi = match stationary(&sub, super::DEFAULT_TOL, super::DEFAULT_MAX_ITER) {
        Ok(pi) => pi,
        Err(_) => stationary_direct(&sub)?,
    };
    let mut best = 0;
    for k in 1..members.len() {
        if pi.probs()[k] > pi.probs()[best] {
            best = k;
        }
    }
    Ok(members[best])
}
