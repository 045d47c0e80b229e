//! Accuracy score: how closely a snapshot's class distribution matches a
//! profile's ideal one.
//!
//! With `S` the profile's memory-weighted stationary distribution and `D`
//! the fraction of the snapshot's memory in each class, the score is
//! `‖S − D‖ / ‖S‖` over the union of both supports. Zero is a perfect match;
//! fully disjoint supports give `√(‖S‖² + ‖D‖²)/‖S‖` under L2, which is √2
//! when both are concentrated on a single class, and 2 under L1. Scores
//! above 1 are therefore possible; √2 ≈ 1.41 is about as bad as real
//! machines get.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::markov::{
    memory_weighted, region_weighted, stationary, to_profile_usage, MemoryClass, Profile,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::regions::segment_pages;
use crate::snapshot::{PageUsage, Snapshot};
use crate::Result;

/// At or below this a reproduction counts as ideal.
pub const IDEAL_SCORE: f64 = 0.1;
/// Above this a reproduction counts as poor.
pub const POOR_SCORE: f64 = 0.4;

/// Fraction of memory (or of regions) in each class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassDistribution {
    weights: BTreeMap<MemoryClass, f64>,
}

impl ClassDistribution {
    /// Sums weights of repeated classes.
    pub fn from_weights<I: IntoIterator<Item = (MemoryClass, f64)>>(weights: I) -> Self {
        let mut map = BTreeMap::new();
        for (c, w) in weights {
            *map.entry(c).or_insert(0.0) += w;
        }
        ClassDistribution { weights: map }
    }

    pub fn get(&self, class: &MemoryClass) -> f64 {
        self.weights.get(class).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MemoryClass, &f64)> {
        self.weights.iter()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L2,
    L1,
}

/// What the two distributions count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Fraction of pages per class; the stationary vector is reweighted by
    /// class size.
    #[default]
    Memory,
    /// Fraction of regions per class, compared against the raw stationary
    /// vector.
    Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScoreOptions {
    pub norm: Norm,
    pub weighting: Weighting,
    /// Count the snapshot's reserved prefix toward `D`.
    pub include_reserved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreBand {
    Ideal,
    Fair,
    Poor,
}

pub fn band(score: f64) -> ScoreBand {
    if score <= IDEAL_SCORE {
        ScoreBand::Ideal
    } else if score <= POOR_SCORE {
        ScoreBand::Fair
    } else {
        ScoreBand::Poor
    }
}

fn distribution_of(pages: &[PageUsage], weighting: Weighting) -> ClassDistribution {
    let seq = segment_pages(pages);
    let classes = seq
        .regions()
        .iter()
        .map(|r| MemoryClass::new(r.len, to_profile_usage(r.usage)));
    match weighting {
        Weighting::Memory => {
            let total = seq.total_pages() as f64;
            ClassDistribution::from_weights(classes.map(|c| (c, c.size as f64 / total)))
        }
        Weighting::Region => {
            let total = seq.len() as f64;
            ClassDistribution::from_weights(classes.map(|c| (c, 1.0 / total)))
        }
    }
}

/// Fraction of the snapshot's memory in each class, over every page.
pub fn class_distribution(snapshot: &Snapshot) -> ClassDistribution {
    distribution_of(snapshot.pages(), Weighting::Memory)
}

/// Normalized distance `‖ideal − empirical‖ / ‖ideal‖` over the union of
/// supports.
pub fn distribution_score(
    ideal: &ClassDistribution,
    empirical: &ClassDistribution,
    norm: Norm,
) -> f64 {
    let (num, den) = union_rows(ideal, empirical).into_iter().fold(
        (0.0, 0.0),
        |(num, den), (_, s, d)| match norm {
            Norm::L2 => (num + (s - d) * (s - d), den + s * s),
            Norm::L1 => (num + (s - d).abs(), den + s.abs()),
        },
    );
    match norm {
        Norm::L2 => num.sqrt() / den.sqrt(),
        Norm::L1 => num / den,
    }
}

fn union_rows(
    ideal: &ClassDistribution,
    empirical: &ClassDistribution,
) -> Vec<(MemoryClass, f64, f64)> {
    let mut keys: Vec<MemoryClass> = ideal
        .weights
        .keys()
        .chain(empirical.weights.keys())
        .copied()
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|c| (c, ideal.get(&c), empirical.get(&c)))
        .collect()
}

fn ideal_and_empirical(
    profile: &Profile,
    snapshot: &Snapshot,
    options: &ScoreOptions,
) -> Result<(ClassDistribution, ClassDistribution)> {
    profile.validate()?;
    let pi = stationary(profile, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let ideal = match options.weighting {
        Weighting::Memory => memory_weighted(&pi, profile.states()),
        Weighting::Region => region_weighted(&pi, profile.states()),
    };
    let pages = if options.include_reserved {
        snapshot.pages()
    } else {
        snapshot.unreserved_pages()
    };
    let empirical = if pages.is_empty() {
        ClassDistribution::default()
    } else {
        distribution_of(pages, options.weighting)
    };
    Ok((ideal, empirical))
}

/// Memory-weighted accuracy score, excluding any reserved prefix.
pub fn accuracy_score(profile: &Profile, snapshot: &Snapshot, norm: Norm) -> Result<f64> {
    accuracy_score_with(
        profile,
        snapshot,
        &ScoreOptions {
            norm,
            ..ScoreOptions::default()
        },
    )
}

pub fn accuracy_score_with(
    profile: &Profile,
    snapshot: &Snapshot,
    options: &ScoreOptions,
) -> Result<f64> {
    let (ideal, empirical) = ideal_and_empirical(profile, snapshot, options)?;
    Ok(distribution_score(&ideal, &empirical, options.norm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub class: MemoryClass,
    pub ideal: f64,
    pub empirical: f64,
    /// `ideal − empirical`.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Sorted by |difference|, largest first.
    pub rows: Vec<ScoreRow>,
    pub l2: f64,
    pub l1: f64,
    pub band: ScoreBand,
}

impl ScoreReport {
    /// L2 score recomputed from the rows.
    pub fn l2_from_rows(&self) -> f64 {
        let num: f64 = self.rows.iter().map(|r| r.difference * r.difference).sum();
        let den: f64 = self.rows.iter().map(|r| r.ideal * r.ideal).sum();
        num.sqrt() / den.sqrt()
    }
}

pub fn score_report(profile: &Profile, snapshot: &Snapshot) -> Result<ScoreReport> {
    score_report_with(profile, snapshot, &ScoreOptions::default())
}

pub fn score_report_with(
    profile: &Profile,
    snapshot: &Snapshot,
    options: &ScoreOptions,
) -> Result<ScoreReport> {
    let (ideal, empirical) = ideal_and_empirical(profile, snapshot, options)?;
    let mut rows: Vec<ScoreRow> = union_rows(&ideal, &empirical)
        .into_iter()
        .map(|(class, s, d)| ScoreRow {
            class,
            ideal: s,
            empirical: d,
            difference: s - d,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.difference
            .abs()
            .total_cmp(&a.difference.abs())
            .then(a.class.cmp(&b.class))
    });
    let l2 = distribution_score(&ideal, &empirical, Norm::L2);
    let l1 = distribution_score(&ideal, &empirical, Norm::L1);
    Ok(ScoreReport {
        rows,
        l2,
        l1,
        band: band(l2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{ClassUsage, ProfileMeta};
    use crate::snapshot::load_usage_map;
    use crate::synth::{synthesize, to_snapshot, StartMode, WalkConfig};

    fn single(size: u32, usage: ClassUsage) -> Profile {
        Profile::from_dense(
            vec![MemoryClass::new(size, usage)],
            &[vec![1.0]],
            ProfileMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn distribution_examples() {
        let d = class_distribution(&load_usage_map("AAAAFFAAAAFF").unwrap());
        assert!((d.get(&MemoryClass::new(4, ClassUsage::Anon)) - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.get(&MemoryClass::new(2, ClassUsage::Free)) - 1.0 / 3.0).abs() < 1e-15);

        let d = class_distribution(&load_usage_map(&"H".repeat(5120)).unwrap());
        assert_eq!(d.len(), 1);
        assert_eq!(d.get(&MemoryClass::new(1024, ClassUsage::AnonHuge)), 1.0);

        let d = class_distribution(&load_usage_map(&"S".repeat(3000)).unwrap());
        assert!(d.iter().all(|(c, _)| c.usage == ClassUsage::Pinned));
        assert!((d.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_single_state() {
        let p = single(1024, ClassUsage::AnonHuge);
        let s = to_snapshot(&synthesize(&p, &WalkConfig::new(5120, 1)).unwrap());
        assert_eq!(accuracy_score(&p, &s, Norm::L2).unwrap(), 0.0);
        let r = score_report(&p, &s).unwrap();
        assert!(r.rows.iter().all(|row| row.difference == 0.0));
        assert_eq!(r.band, ScoreBand::Ideal);
    }

    #[test]
    fn perfect_cycle() {
        let states = vec![
            MemoryClass::new(4, ClassUsage::Anon),
            MemoryClass::new(2, ClassUsage::Free),
        ];
        let p = Profile::from_dense(
            states,
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
            ProfileMeta::default(),
        )
        .unwrap();
        let cfg = WalkConfig {
            start_mode: StartMode::FirstState,
            ..WalkConfig::new(6000, 2)
        };
        let s = to_snapshot(&synthesize(&p, &cfg).unwrap());
        assert!(accuracy_score(&p, &s, Norm::L2).unwrap() < 1e-12);
    }

    #[test]
    fn disjoint_supports() {
        let p = single(1024, ClassUsage::AnonHuge);
        let s = load_usage_map(&"C".repeat(1024)).unwrap();
        let l2 = accuracy_score(&p, &s, Norm::L2).unwrap();
        let l1 = accuracy_score(&p, &s, Norm::L1).unwrap();
        assert!((l2 - 2f64.sqrt()).abs() < 1e-12);
        assert!((l1 - 2.0).abs() < 1e-12);

        let r = score_report(&p, &s).unwrap();
        assert_eq!(r.rows.len(), 2);
        let mut diffs: Vec<f64> = r.rows.iter().map(|row| row.difference).collect();
        diffs.sort_by(f64::total_cmp);
        assert_eq!(diffs, vec![-1.0, 1.0]);
        assert!((r.l2_from_rows() - l2).abs() < 1e-12);
        assert_eq!(r.band, ScoreBand::Poor);
    }

    #[test]
    fn reserved_prefix_is_excluded_by_default() {
        let p = single(1024, ClassUsage::Free);
        let cfg = WalkConfig {
            reserved_fraction: 0.1,
            ..WalkConfig::new(10240, 1)
        };
        let s = to_snapshot(&synthesize(&p, &cfg).unwrap());
        let with = ScoreOptions {
            include_reserved: true,
            ..ScoreOptions::default()
        };
        let excluded = accuracy_score(&p, &s, Norm::L2).unwrap();
        let included = accuracy_score_with(&p, &s, &with).unwrap();
        assert!(excluded < 0.01, "{excluded}");
        assert!(included > excluded);
    }

    #[test]
    fn region_weighting() {
        let states = vec![
            MemoryClass::new(4, ClassUsage::Anon),
            MemoryClass::new(2, ClassUsage::Free),
        ];
        let p = Profile::from_dense(
            states,
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
            ProfileMeta::default(),
        )
        .unwrap();
        let s = load_usage_map("AAAAFFAAAAFF").unwrap();
        let opts = ScoreOptions {
            weighting: Weighting::Region,
            ..ScoreOptions::default()
        };
        assert!(accuracy_score_with(&p, &s, &opts).unwrap() < 1e-12);
    }

    #[test]
    fn bands() {
        assert_eq!(band(0.1), ScoreBand::Ideal);
        assert_eq!(band(0.2), ScoreBand::Fair);
        assert_eq!(band(0.41), ScoreBand::Poor);
    }
}
