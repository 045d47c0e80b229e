//! Markov-process fragmentation profiles.
//!
//! A profile's states are memory classes, `(size, usage)` pairs describing a
//! homogeneous region. An edge `A → B` with probability `p` says that a
//! region of class `B` physically follows a region of class `A` with
//! probability `p`. Profiles are built from region sequences by counting
//! adjacent pairs ([`build_profile`]), then cleaned so the transition graph
//! is a single closed recurrent class, which makes the stationary
//! distribution unique.

mod build;
mod file;
mod stationary;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::is_strongly_connected;
use crate::regions::MAX_REGION_PAGES;
use crate::snapshot::PageUsage;
use crate::{Error, Result};

pub use build::{build_profile, build_profiles, BuildOptions, Reconnect, TransitionCounts};
pub use file::{load_profile, save_profile, PROFILE_VERSION};
pub use stationary::{
    memory_weighted, region_weighted, stationary, stationary_direct, stationary_residual,
    StationaryDistribution, DEFAULT_MAX_ITER, DEFAULT_TOL,
};

/// Row sums must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// The five usages a profile distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassUsage {
    #[serde(rename = "free")]
    Free,
    #[serde(rename = "file")]
    File,
    #[serde(rename = "anon")]
    Anon,
    #[serde(rename = "anonhp")]
    AnonHuge,
    #[serde(rename = "pinned")]
    Pinned,
}

impl ClassUsage {
    pub const ALL: [ClassUsage; 5] = [
        ClassUsage::Free,
        ClassUsage::File,
        ClassUsage::Anon,
        ClassUsage::AnonHuge,
        ClassUsage::Pinned,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ClassUsage::Free => "free",
            ClassUsage::File => "file",
            ClassUsage::Anon => "anon",
            ClassUsage::AnonHuge => "anonhp",
            ClassUsage::Pinned => "pinned",
        }
    }

    pub fn page_usage(self) -> PageUsage {
        match self {
            ClassUsage::Free => PageUsage::Free,
            ClassUsage::File => PageUsage::FileCache,
            ClassUsage::Anon => PageUsage::Anon,
            ClassUsage::AnonHuge => PageUsage::AnonHuge,
            ClassUsage::Pinned => PageUsage::Pinned,
        }
    }
}

/// Slab and unclassifiable pages are opaque to the profile and count as
/// pinned.
pub fn to_profile_usage(usage: PageUsage) -> ClassUsage {
    match usage {
        PageUsage::Free => ClassUsage::Free,
        PageUsage::FileCache => ClassUsage::File,
        PageUsage::Anon => ClassUsage::Anon,
        PageUsage::AnonHuge => ClassUsage::AnonHuge,
        PageUsage::Pinned | PageUsage::Slab | PageUsage::Other => ClassUsage::Pinned,
    }
}

/// A `(size, usage)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemoryClass {
    pub size: u32,
    pub usage: ClassUsage,
}

impl MemoryClass {
    pub fn new(size: u32, usage: ClassUsage) -> Self {
        MemoryClass { size, usage }
    }
}

impl fmt::Display for MemoryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.size, self.usage.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub source: String,
    pub timestamp: Option<i64>,
    pub threshold: f64,
    pub epsilon: f64,
    /// Seed used to pick reconnection endpoints, when picked at random.
    pub seed: Option<u64>,
}

/// A cleaned fragmentation profile: distinct states and a sparse,
/// row-stochastic, strongly connected transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    states: Vec<MemoryClass>,
    /// Outgoing `(target, probability)` per state, sorted by target, with
    /// zero entries omitted.
    rows: Vec<Vec<(usize, f64)>>,
    pub meta: ProfileMeta,
}

impl Profile {
    /// Validates every profile invariant.
    pub fn new(
        states: Vec<MemoryClass>,
        mut rows: Vec<Vec<(usize, f64)>>,
        meta: ProfileMeta,
    ) -> Result<Self> {
        for row in &mut rows {
            row.retain(|&(_, p)| p != 0.0);
            row.sort_by_key(|&(t, _)| t);
        }
        let profile = Profile { states, rows, meta };
        profile.validate()?;
        Ok(profile)
    }

    /// Builds a profile from a dense matrix, dropping zero entries.
    pub fn from_dense(
        states: Vec<MemoryClass>,
        matrix: &[Vec<f64>],
        meta: ProfileMeta,
    ) -> Result<Self> {
        let rows = matrix
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(_, &p)| p != 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect()
            })
            .collect();
        Profile::new(states, rows, meta)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::InvalidProfile("no states".into()));
        }
        if self.rows.len() != n {
            return Err(Error::InvalidProfile(format!(
                "{} rows for {} states",
                self.rows.len(),
                n
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(n);
        for s in &self.states {
            if s.size == 0 || s.size > MAX_REGION_PAGES {
                return Err(Error::InvalidProfile(format!(
                    "state {s} has size outside [1, {MAX_REGION_PAGES}]"
                )));
            }
            if !seen.insert(*s) {
                return Err(Error::InvalidProfile(format!("duplicate state {s}")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let mut sum = 0.0;
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidProfile(format!(
                        "duplicate edge {} -> {}",
                        i, w[0].0
                    )));
                }
            }
            for &(j, p) in row {
                if j >= n {
                    return Err(Error::InvalidProfile(format!(
                        "edge {i} -> {j} points past {n} states"
                    )));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidProfile(format!(
                        "edge {i} -> {j} has probability {p}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidProfile(format!("row {i} sums to {sum}")));
            }
        }
        if !is_strongly_connected(&self.adjacency()) {
            return Err(Error::InvalidProfile(
                "transition graph is not strongly connected".into(),
            ));
        }
        Ok(())
    }

    pub fn states(&self) -> &[MemoryClass] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from]
            .binary_search_by_key(&to, |&(t, _)| t)
            .map_or(0.0, |k| self.rows[from][k].1)
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn index_of(&self, class: &MemoryClass) -> Option<usize> {
        self.states.iter().position(|s| s == class)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(t, _)| t).collect())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[i][j] = p;
            }
        }
        m
    }
}
