#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use memfrag::markov::ProfileMeta;
use memfrag::{ClassUsage, MemoryClass, PageUsage, Profile};
use rand::seq::SliceRandom;
use rand::Rng;

pub const POW2_SIZES: [u32; 11] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024];

/// A walk over the profile can emit `a` then `b` and still segment back into
/// the same two regions.
pub fn realizable(a: &MemoryClass, b: &MemoryClass) -> bool {
    a.usage != b.usage || a.size == 1024
}

fn finish(states: Vec<MemoryClass>, edges: Vec<BTreeMap<usize, f64>>) -> Profile {
    let rows = edges
        .into_iter()
        .map(|row| {
            let sum: f64 = row.values().sum();
            row.into_iter().map(|(j, w)| (j, w / sum)).collect()
        })
        .collect();
    Profile::new(states, rows, ProfileMeta::default()).expect("generated profile is valid")
}

fn cycle_order<R: Rng>(states: &[MemoryClass], rng: &mut R) -> Option<Vec<usize>> {
    'attempt: for _ in 0..200 {
        let mut left: Vec<usize> = (0..states.len()).collect();
        left.shuffle(rng);
        let mut order = vec![left.pop().unwrap()];
        while !left.is_empty() {
            let cur = states[*order.last().unwrap()];
            let ok: Vec<usize> = (0..left.len())
                .filter(|&k| realizable(&cur, &states[left[k]]))
                .collect();
            let Some(&k) = ok.get(rng.random_range(0..ok.len().max(1))) else {
                continue 'attempt;
            };
            order.push(left.swap_remove(k));
        }
        if realizable(&states[*order.last().unwrap()], &states[order[0]]) {
            return Some(order);
        }
    }
    None
}

/// Random strongly connected profile over power-of-two sizes whose every
/// edge can be reproduced by segmentation.
pub fn realizable_profile<R: Rng>(rng: &mut R, max_states: usize) -> Profile {
    let mut universe: Vec<MemoryClass> = ClassUsage::ALL
        .iter()
        .flat_map(|&u| POW2_SIZES.iter().map(move |&s| MemoryClass::new(s, u)))
        .collect();
    loop {
        let n = rng.random_range(2..=max_states.min(universe.len()));
        universe.shuffle(rng);
        let states = universe[..n].to_vec();
        let Some(order) = cycle_order(&states, rng) else {
            continue;
        };
        let mut edges = vec![BTreeMap::new(); n];
        for k in 0..n {
            edges[order[k]].insert(order[(k + 1) % n], rng.random_range(0.2..1.0));
        }
        for (i, row) in edges.iter_mut().enumerate() {
            for _ in 0..rng.random_range(0..=3) {
                let j = rng.random_range(0..n);
                if realizable(&states[i], &states[j]) {
                    row.entry(j).or_insert(rng.random_range(0.05..1.0));
                }
            }
        }
        return finish(states, edges);
    }
}

/// Random strongly connected profile with arbitrary sizes in 1..=1024.
/// About one in ten is a bare cycle, which is periodic.
pub fn random_profile<R: Rng>(rng: &mut R, max_states: usize) -> Profile {
    let n = rng.random_range(2..=max_states);
    let mut seen = HashSet::new();
    let mut states = Vec::with_capacity(n);
    while states.len() < n {
        let c = MemoryClass::new(
            rng.random_range(1..=1024),
            ClassUsage::ALL[rng.random_range(0..5)],
        );
        if seen.insert(c) {
            states.push(c);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = vec![BTreeMap::new(); n];
    for k in 0..n {
        edges[order[k]].insert(order[(k + 1) % n], rng.random_range(0.1..1.0));
    }
    if rng.random_bool(0.9) {
        for row in edges.iter_mut() {
            for _ in 0..rng.random_range(0..=4) {
                row.entry(rng.random_range(0..n))
                    .or_insert(rng.random_range(0.01..1.0));
            }
        }
    }
    finish(states, edges)
}

/// Page array of random runs with lengths drawn from `lens`.
pub fn random_runs<R: Rng>(
    rng: &mut R,
    n: usize,
    usages: &[PageUsage],
    lens: &[usize],
) -> Vec<PageUsage> {
    let mut pages = Vec::with_capacity(n + 1024);
    while pages.len() < n {
        let u = usages[rng.random_range(0..usages.len())];
        let len = lens[rng.random_range(0..lens.len())];
        pages.extend(std::iter::repeat_n(u, len));
    }
    pages.truncate(n);
    pages
}

/// States reachable from `s` by breadth-first search.
pub fn reachable(adj: &[Vec<usize>], s: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = std::collections::VecDeque::from([s]);
    seen[s] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

pub fn strongly_connected(adj: &[Vec<usize>]) -> bool {
    if adj.is_empty() {
        return false;
    }
    let mut rev = vec![Vec::new(); adj.len()];
    for (u, out) in adj.iter().enumerate() {
        for &v in out {
            rev[v].push(u);
        }
    }
    reachable(adj, 0).iter().all(|&b| b) && reachable(&rev, 0).iter().all(|&b| b)
}

pub fn max_row_sum_error(profile: &Profile) -> f64 {
    profile
        .rows()
        .iter()
        .map(|row| (row.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}
