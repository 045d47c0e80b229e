//! Churn statistics over a time-ordered series of snapshots.

use serde::{Deserialize, Serialize};

use crate::regions::{homogeneity_metric, segment, usage_breakdown};
use crate::snapshot::{PageUsage, Snapshot};
use crate::{Error, Result};

/// Default minimum run length for the homogeneity metric.
pub const DEFAULT_MIN_RUN: u32 = 64;

#[derive(Debug, Clone)]
pub struct SnapshotSeries {
    snapshots: Vec<Snapshot>,
    timestamps: Vec<i64>,
}

impl SnapshotSeries {
    pub fn new(snapshots: Vec<Snapshot>, timestamps: Vec<i64>) -> Result<Self> {
        if snapshots.len() != timestamps.len() {
            return Err(Error::Series(format!(
                "{} snapshots but {} timestamps",
                snapshots.len(),
                timestamps.len()
            )));
        }
        if let Some(first) = snapshots.first() {
            if let Some(bad) = snapshots.iter().position(|s| s.len() != first.len()) {
                return Err(Error::Series(format!(
                    "snapshot {bad} has {} pages, expected {}",
                    snapshots[bad].len(),
                    first.len()
                )));
            }
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Series(format!(
                "timestamp {} does not increase",
                i + 1
            )));
        }
        Ok(SnapshotSeries {
            snapshots,
            timestamps,
        })
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn page_count(&self) -> usize {
        self.snapshots.first().map_or(0, Snapshot::len)
    }

    fn require_pairs(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::Series(format!(
                "need at least 2 snapshots, got {}",
                self.len()
            )));
        }
        Ok(())
    }
}

fn count_changes(pages: &[&[PageUsage]], range: std::ops::Range<usize>) -> Vec<u32> {
    let mut counts = vec![0u32; range.len()];
    for pair in pages.windows(2) {
        let (a, b) = (&pair[0][range.clone()], &pair[1][range.clone()]);
        for ((c, x), y) in counts.iter_mut().zip(a).zip(b) {
            *c += (x != y) as u32;
        }
    }
    counts
}

/// Per page frame, the number of adjacent snapshot pairs whose usage differs.
pub fn change_counts(series: &SnapshotSeries) -> Result<Vec<u32>> {
    series.require_pairs()?;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        const CHUNK: usize = 1 << 16;
        let pages: Vec<&[PageUsage]> = series.snapshots.iter().map(Snapshot::pages).collect();
        let n = series.page_count();
        let chunks: Vec<Vec<u32>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|k| count_changes(&pages, k * CHUNK..((k + 1) * CHUNK).min(n)))
            .collect();
        Ok(chunks.concat())
    }
    #[cfg(not(feature = "parallel"))]
    change_counts_seq(series)
}

pub fn change_counts_seq(series: &SnapshotSeries) -> Result<Vec<u32>> {
    series.require_pairs()?;
    let pages: Vec<&[PageUsage]> = series.snapshots.iter().map(Snapshot::pages).collect();
    Ok(count_changes(&pages, 0..series.page_count()))
}

/// Timestamps at which `frame` changed usage (the later snapshot of each
/// differing pair).
pub fn change_times(series: &SnapshotSeries, frame: usize) -> Result<Vec<i64>> {
    if frame >= series.page_count() {
        return Err(Error::OutOfRange {
            pfn: frame,
            len: series.page_count(),
        });
    }
    Ok(series
        .snapshots
        .windows(2)
        .zip(&series.timestamps[1..])
        .filter(|(pair, _)| pair[0].pages()[frame] != pair[1].pages()[frame])
        .map(|(_, &t)| t)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkewEstimator {
    /// `g1 = m3 / m2^(3/2)` with biased central moments.
    #[default]
    Biased,
    /// `G1 = g1 · √(n(n−1)) / (n−2)`.
    BiasCorrected,
}

/// Sample skewness, or `None` with fewer than 3 values or zero variance.
pub fn skewness(values: &[f64], estimator: SkewEstimator) -> Option<f64> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &v in values {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    // relative spread below 1e-12 is rounding noise around a constant
    if m2 == 0.0 || m2.sqrt() <= 1e-12 * mean.abs() {
        return None;
    }
    let g1 = m3 / m2.powf(1.5);
    Some(match estimator {
        SkewEstimator::Biased => g1,
        SkewEstimator::BiasCorrected => g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0),
    })
}

fn gaps(times: &[i64]) -> Vec<f64> {
    times.windows(2).map(|w| (w[1] - w[0]) as f64).collect()
}

/// Skewness of the time between successive usage changes at one frame.
/// `Ok(None)` when the frame has fewer than 3 gaps or they are all equal.
pub fn interchange_skewness(
    series: &SnapshotSeries,
    frame: usize,
    estimator: SkewEstimator,
) -> Result<Option<f64>> {
    Ok(skewness(&gaps(&change_times(series, frame)?), estimator))
}

/// [`interchange_skewness`] for every frame.
pub fn per_frame_skewness(series: &SnapshotSeries, estimator: SkewEstimator) -> Vec<Option<f64>> {
    let n = series.page_count();
    let one = |f: usize| interchange_skewness(series, f, estimator).ok().flatten();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    (0..n).map(one).collect()
}

/// Skewness of inter-change gaps pooled across all frames.
pub fn pooled_interchange_skewness(
    series: &SnapshotSeries,
    estimator: SkewEstimator,
) -> Option<f64> {
    let mut all = Vec::new();
    for f in 0..series.page_count() {
        all.extend(gaps(&change_times(series, f).expect("frame in range")));
    }
    skewness(&all, estimator)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub r_squared: f64,
}

/// Pearson correlation between free-memory fraction and a homogeneity
/// metric.
pub fn free_homogeneity_correlation(points: &[(f64, f64)]) -> Result<Correlation> {
    if points.len() < 3 {
        return Err(Error::DegenerateCorrelation("need at least 3 points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateCorrelation("free fraction is constant"));
    }
    if syy == 0.0 {
        return Err(Error::DegenerateCorrelation("homogeneity is constant"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(Correlation {
        r,
        r_squared: r * r,
    })
}

/// `(free fraction, fraction of memory in runs ≥ min_run pages)` per snapshot.
pub fn series_points(series: &SnapshotSeries, min_run: u32) -> Vec<(f64, f64)> {
    series
        .snapshots
        .iter()
        .map(|s| {
            (
                usage_breakdown(s).get(PageUsage::Free),
                homogeneity_metric(&segment(s), min_run),
            )
        })
        .collect()
}
