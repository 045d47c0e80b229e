//! Synthetic fragmentation by random walk over a profile.
//!
//! The walk hands out `size` pages of `usage` for each visited state, low
//! addresses first, until the simulated address space is exhausted. Pages
//! assigned a non-free usage are kept on per-usage lists (shuffled once the
//! walk ends) so a simulated shrinker can later release them in random
//! spatial order.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`. Layouts and release orders are pinned by tests, so the
//! generator must not change.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::markov::{stationary, ClassUsage, Profile, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::snapshot::{PageUsage, Snapshot, SnapshotMeta, DEFAULT_PAGE_SIZE};
use crate::{Error, Result};

/// Where the walk starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    /// The profile's first state.
    #[serde(rename = "first")]
    FirstState,
    /// A uniformly random state.
    #[serde(rename = "random")]
    RandomState,
    /// A state drawn from the stationary distribution, which removes
    /// burn-in bias.
    #[default]
    #[serde(rename = "stationary")]
    StationaryWeighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    pub total_pages: usize,
    pub seed: u64,
    pub start_mode: StartMode,
    /// Fraction of the address space, at the bottom, left as boot-time
    /// pinned memory.
    pub reserved_fraction: f64,
}

impl WalkConfig {
    pub fn new(total_pages: usize, seed: u64) -> Self {
        WalkConfig {
            total_pages,
            seed,
            start_mode: StartMode::default(),
            reserved_fraction: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.total_pages == 0 {
            return Err(Error::Config("total_pages must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.reserved_fraction) {
            return Err(Error::Config(format!(
                "reserved fraction {} outside [0, 1)",
                self.reserved_fraction
            )));
        }
        Ok(())
    }

    pub fn reserved_pages(&self) -> usize {
        (self.reserved_fraction * self.total_pages as f64).floor() as usize
    }
}

/// Pages held on each usage list, as page frame numbers.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageLists {
    pub file: Vec<u64>,
    pub anon: Vec<u64>,
    #[serde(rename = "anonhp")]
    pub anon_huge: Vec<u64>,
    pub pinned: Vec<u64>,
}

impl UsageLists {
    pub fn total(&self) -> usize {
        self.file.len() + self.anon.len() + self.anon_huge.len() + self.pinned.len()
    }

    fn list_mut(&mut self, usage: ClassUsage) -> Option<&mut Vec<u64>> {
        match usage {
            ClassUsage::File => Some(&mut self.file),
            ClassUsage::Anon => Some(&mut self.anon),
            ClassUsage::AnonHuge => Some(&mut self.anon_huge),
            ClassUsage::Pinned => Some(&mut self.pinned),
            ClassUsage::Free => None,
        }
    }

    fn extend(&mut self, other: UsageLists) {
        self.file.extend(other.file);
        self.anon.extend(other.anon);
        self.anon_huge.extend(other.anon_huge);
        self.pinned.extend(other.pinned);
    }

    fn shuffle(&mut self, rng: &mut ChaCha8Rng) {
        self.file.shuffle(rng);
        self.anon.shuffle(rng);
        self.anon_huge.shuffle(rng);
        self.pinned.shuffle(rng);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayoutMeta {
    pub seed: u64,
    pub start_mode: StartMode,
    pub reserved_fraction: f64,
    /// Source labels of the profiles the layout was synthesized from.
    pub profiles: Vec<String>,
}

/// A simulated physical address space.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthLayout {
    pub pages: Vec<PageUsage>,
    pub lists: UsageLists,
    /// Pages handed back as free, by the walk or by the shrinker.
    pub free_pool: u64,
    pub reserved_pages: usize,
    pub meta: LayoutMeta,
}

impl SynthLayout {
    pub fn total_pages(&self) -> usize {
        self.pages.len()
    }

    /// Σ lists + free pool + reserved == total pages.
    pub fn is_conserved(&self) -> bool {
        self.lists.total() as u64 + self.free_pool + self.reserved_pages as u64
            == self.pages.len() as u64
    }

    pub fn releasable(&self) -> usize {
        self.lists.file.len() + self.lists.anon.len() + self.lists.anon_huge.len()
    }
}

/// Per-row cumulative probabilities for sampling successors.
struct Sampler {
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(profile: &Profile) -> Self {
        let mut targets = Vec::with_capacity(profile.len());
        let mut cumulative = Vec::with_capacity(profile.len());
        for row in profile.rows() {
            let mut acc = 0.0;
            targets.push(row.iter().map(|&(j, _)| j).collect());
            cumulative.push(
                row.iter()
                    .map(|&(_, p)| {
                        acc += p;
                        acc
                    })
                    .collect(),
            );
        }
        Sampler {
            targets,
            cumulative,
        }
    }

    fn step(&self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        let cum = &self.cumulative[state];
        let u = rng.random::<f64>() * cum[cum.len() - 1];
        let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        self.targets[state][k]
    }
}

fn pick_start(profile: &Profile, mode: StartMode, rng: &mut ChaCha8Rng) -> Result<usize> {
    Ok(match mode {
        StartMode::FirstState => 0,
        StartMode::RandomState => rng.random_range(0..profile.len()),
        StartMode::StationaryWeighted => {
            let pi = stationary(profile, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            let u = rng.random::<f64>();
            let mut acc = 0.0;
            let mut chosen = profile.len() - 1;
            for (i, p) in pi.probs().iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    })
}

/// Walks `profile` over `pages[start..end]`, writing usages and collecting
/// list entries. Returns pages handed out as free.
fn walk(
    profile: &Profile,
    mode: StartMode,
    rng: &mut ChaCha8Rng,
    pages: &mut [PageUsage],
    start: usize,
    lists: &mut UsageLists,
) -> Result<u64> {
    if start >= pages.len() {
        return Ok(0);
    }
    let sampler = Sampler::new(profile);
    let mut state = pick_start(profile, mode, rng)?;
    let mut pos = start;
    let mut free = 0u64;
    loop {
        let class = profile.states()[state];
        let n = (class.size as usize).min(pages.len() - pos);
        pages[pos..pos + n].fill(class.usage.page_usage());
        match lists.list_mut(class.usage) {
            Some(list) => list.extend(pos as u64..(pos + n) as u64),
            None => free += n as u64,
        }
        pos += n;
        if pos == pages.len() {
            return Ok(free);
        }
        state = sampler.step(state, rng);
    }
}

pub fn synthesize(profile: &Profile, config: &WalkConfig) -> Result<SynthLayout> {
    synthesize_partitioned(&[(profile, 1.0)], config)
}

/// Splits the non-reserved address space into contiguous partitions by
/// fraction and walks each partition's profile independently.
///
/// Partition `i` walks with ChaCha8 stream `i` of `config.seed`; the joint
/// list shuffle continues on stream 0. A single partition is therefore
/// exactly [`synthesize`].
pub fn synthesize_partitioned(
    profiles: &[(&Profile, f64)],
    config: &WalkConfig,
) -> Result<SynthLayout> {
    config.validate()?;
    if profiles.is_empty() {
        return Err(Error::Config("no profiles given".into()));
    }
    if let Some((_, f)) = profiles.iter().find(|(_, f)| f.is_nan() || *f <= 0.0) {
        return Err(Error::Config(format!(
            "partition fraction {f} is not positive"
        )));
    }
    let sum: f64 = profiles.iter().map(|(_, f)| f).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "partition fractions sum to {sum}, not 1"
        )));
    }
    for (p, _) in profiles {
        p.validate()?;
    }

    let total = config.total_pages;
    let reserved = config.reserved_pages();
    let fractions: Vec<f64> = profiles.iter().map(|(_, f)| *f).collect();
    let sizes = largest_remainder(&fractions, total - reserved);

    let mut pages = vec![PageUsage::Pinned; total];
    let mut lists = UsageLists::default();
    let mut free_pool = 0;
    let mut shuffle_rng = None;
    let mut start = reserved;
    for (i, ((profile, _), &size)) in profiles.iter().zip(&sizes).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let mut part_lists = UsageLists::default();
        free_pool += walk(
            profile,
            config.start_mode,
            &mut rng,
            &mut pages[..start + size],
            start,
            &mut part_lists,
        )?;
        lists.extend(part_lists);
        if i == 0 {
            shuffle_rng = Some(rng);
        }
        start += size;
    }
    let mut rng = shuffle_rng.expect("at least one partition");
    lists.shuffle(&mut rng);

    let layout = SynthLayout {
        pages,
        lists,
        free_pool,
        reserved_pages: reserved,
        meta: LayoutMeta {
            seed: config.seed,
            start_mode: config.start_mode,
            reserved_fraction: config.reserved_fraction,
            profiles: profiles
                .iter()
                .map(|(p, _)| p.meta.source.clone())
                .collect(),
        },
    };
    debug_assert!(layout.is_conserved());
    Ok(layout)
}

/// Whole-page partition sizes summing to `total`. Floors first, then the
/// leftover pages go to the largest fractional parts, lowest index first on
/// ties.
pub fn largest_remainder(fractions: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let leftover = total.saturating_sub(assigned);
    for &i in order.iter().cycle().take(leftover) {
        sizes[i] += 1;
    }
    sizes
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShrinkOutcome {
    /// Released page frame numbers, in release order.
    pub released: Vec<u64>,
    /// Pages requested but not releasable.
    pub shortfall: u64,
}

/// Releases up to `demand` pages.
///
/// File-cache and anonymous pages go first, drawn uniformly from the union
/// of both lists. Anonymous huge pages follow once both are empty. Pinned
/// pages are never released.
pub fn shrink(layout: &mut SynthLayout, demand: u64, seed: u64) -> ShrinkOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut released = Vec::with_capacity(demand.min(layout.releasable() as u64) as usize);
    let lists = &mut layout.lists;
    while (released.len() as u64) < demand {
        let small = lists.file.len() + lists.anon.len();
        let pfn = if small > 0 {
            let k = rng.random_range(0..small);
            if k < lists.file.len() {
                lists.file.swap_remove(k)
            } else {
                lists.anon.swap_remove(k - lists.file.len())
            }
        } else if !lists.anon_huge.is_empty() {
            let k = rng.random_range(0..lists.anon_huge.len());
            lists.anon_huge.swap_remove(k)
        } else {
            break;
        };
        layout.pages[pfn as usize] = PageUsage::Free;
        released.push(pfn);
    }
    layout.free_pool += released.len() as u64;
    let shortfall = demand - released.len() as u64;
    ShrinkOutcome {
        released,
        shortfall,
    }
}

pub fn to_snapshot(layout: &SynthLayout) -> Snapshot {
    let meta = SnapshotMeta {
        label: layout.meta.profiles.join("+"),
        timestamp: None,
        reserved_pages: layout.reserved_pages,
    };
    Snapshot::new(layout.pages.clone(), DEFAULT_PAGE_SIZE)
        .expect("layouts have at least one page")
        .with_meta(meta)
}
