//! Homogeneous regions and contiguity analytics.
//!
//! A region is a run of physically consecutive pages with the same usage,
//! capped at [`MAX_REGION_PAGES`]. Longer runs become a sequence of full
//! 1024-page regions followed by the remainder.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::snapshot::{PageUsage, Snapshot};
use crate::{Error, Result};

pub const MAX_REGION_PAGES: u32 = 1024;

/// Pages in a 2 MiB huge page with 4 KiB base pages.
pub const HUGE_PAGE_PAGES: usize = 512;

/// Largest buddy order tracked (4 MiB blocks of 4 KiB pages).
pub const MAX_ORDER: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub start_pfn: u64,
    pub len: u32,
    pub usage: PageUsage,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegionSequence {
    regions: Vec<Region>,
    total_pages: u64,
}

impl RegionSequence {
    /// Builds a sequence from `(len, usage)` pairs laid out from pfn 0.
    ///
    /// Unlike [`segment`], this accepts same-usage neighbours below the cap,
    /// which is handy for feeding the profile builder arbitrary class
    /// sequences.
    pub fn from_runs<I: IntoIterator<Item = (u32, PageUsage)>>(runs: I) -> Result<Self> {
        let mut regions = Vec::new();
        let mut pfn = 0u64;
        for (len, usage) in runs {
            if len == 0 || len > MAX_REGION_PAGES {
                return Err(Error::Config(format!(
                    "region length {len} outside [1, {MAX_REGION_PAGES}]"
                )));
            }
            regions.push(Region {
                start_pfn: pfn,
                len,
                usage,
            });
            pfn += len as u64;
        }
        Ok(RegionSequence {
            regions,
            total_pages: pfn,
        })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn total_pages(&self) -> u64 {
        self.total_pages
    }

    /// Inverse of [`segment`].
    pub fn expand(&self) -> Vec<PageUsage> {
        let mut out = Vec::with_capacity(self.total_pages as usize);
        for r in &self.regions {
            out.extend(std::iter::repeat_n(r.usage, r.len as usize));
        }
        out
    }
}

pub fn segment(snapshot: &Snapshot) -> RegionSequence {
    segment_pages(snapshot.pages())
}

pub fn segment_pages(pages: &[PageUsage]) -> RegionSequence {
    let mut regions = Vec::new();
    let mut i = 0usize;
    while i < pages.len() {
        let usage = pages[i];
        let mut j = i + 1;
        let limit = (i + MAX_REGION_PAGES as usize).min(pages.len());
        while j < limit && pages[j] == usage {
            j += 1;
        }
        regions.push(Region {
            start_pfn: i as u64,
            len: (j - i) as u32,
            usage,
        });
        i = j;
    }
    RegionSequence {
        regions,
        total_pages: pages.len() as u64,
    }
}

/// Page counts per power-of-two size bucket (1..=1024 pages). A region of
/// `len` pages lands in bucket `2^floor(log2(len))`.
pub fn homogeneity_histogram(
    seq: &RegionSequence,
    filter: Option<PageUsage>,
) -> BTreeMap<u32, u64> {
    let mut hist = BTreeMap::new();
    for r in seq
        .regions
        .iter()
        .filter(|r| filter.is_none_or(|u| r.usage == u))
    {
        let bucket = 1u32 << r.len.ilog2();
        *hist.entry(bucket).or_insert(0) += r.len as u64;
    }
    hist
}

/// Fraction of pages that sit in regions of at least `min_run` pages.
pub fn homogeneity_metric(seq: &RegionSequence, min_run: u32) -> f64 {
    if seq.total_pages == 0 {
        return 0.0;
    }
    let big: u64 = seq
        .regions
        .iter()
        .filter(|r| r.len >= min_run)
        .map(|r| r.len as u64)
        .sum();
    big as f64 / seq.total_pages as f64
}

fn free_fraction_in_aligned_blocks(pages: &[PageUsage]) -> f64 {
    let total_free = pages.iter().filter(|&&u| u == PageUsage::Free).count();
    if total_free == 0 {
        return 0.0;
    }
    let in_blocks = pages
        .chunks_exact(HUGE_PAGE_PAGES)
        .filter(|block| block.iter().all(|&u| u == PageUsage::Free))
        .count()
        * HUGE_PAGE_PAGES;
    in_blocks as f64 / total_free as f64
}

/// Fraction of free pages lying in 512-page-aligned, fully free blocks,
/// i.e. free memory usable for a 2 MiB huge page. Zero when nothing is free.
pub fn hugepage_feasibility(snapshot: &Snapshot) -> f64 {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pages = snapshot.pages();
        let (free, in_blocks) = pages
            .par_chunks(HUGE_PAGE_PAGES)
            .map(|block| {
                let free = block.iter().filter(|&&u| u == PageUsage::Free).count();
                let full = if block.len() == HUGE_PAGE_PAGES && free == HUGE_PAGE_PAGES {
                    free
                } else {
                    0
                };
                (free, full)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if free == 0 {
            0.0
        } else {
            in_blocks as f64 / free as f64
        }
    }
    #[cfg(not(feature = "parallel"))]
    hugepage_feasibility_seq(snapshot)
}

pub fn hugepage_feasibility_seq(snapshot: &Snapshot) -> f64 {
    free_fraction_in_aligned_blocks(snapshot.pages())
}

/// Run-based variant of [`hugepage_feasibility`]: free pages in maximal free
/// runs of at least 512 pages, regardless of alignment.
pub fn hugepage_feasibility_runs(snapshot: &Snapshot) -> f64 {
    let pages = snapshot.pages();
    let mut total_free = 0usize;
    let mut in_runs = 0usize;
    let mut i = 0;
    while i < pages.len() {
        if pages[i] != PageUsage::Free {
            i += 1;
            continue;
        }
        let start = i;
        while i < pages.len() && pages[i] == PageUsage::Free {
            i += 1;
        }
        let run = i - start;
        total_free += run;
        if run >= HUGE_PAGE_PAGES {
            in_runs += run;
        }
    }
    if total_free == 0 {
        0.0
    } else {
        in_runs as f64 / total_free as f64
    }
}

/// Free blocks per buddy order, indexed by order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeBlockHistogram {
    pub counts: Vec<u64>,
}

impl FreeBlockHistogram {
    pub fn max_order(&self) -> u32 {
        self.counts.len() as u32 - 1
    }

    pub fn count(&self, order: u32) -> u64 {
        self.counts.get(order as usize).copied().unwrap_or(0)
    }

    /// Σ count(k)·2^k.
    pub fn pages(&self) -> u64 {
        self.counts.iter().enumerate().map(|(k, &c)| c << k).sum()
    }
}

/// Decompose free memory into maximal aligned power-of-two blocks, the way
/// a buddy allocator's free lists would hold it.
pub fn free_block_histogram(snapshot: &Snapshot, max_order: u32) -> Result<FreeBlockHistogram> {
    if max_order > MAX_ORDER {
        return Err(Error::Config(format!(
            "max_order {max_order} exceeds {MAX_ORDER}"
        )));
    }
    let mut counts = vec![0u64; max_order as usize + 1];
    let pages = snapshot.pages();
    let mut i = 0;
    while i < pages.len() {
        if pages[i] != PageUsage::Free {
            i += 1;
            continue;
        }
        let start = i;
        while i < pages.len() && pages[i] == PageUsage::Free {
            i += 1;
        }
        let end = i;
        let mut p = start;
        while p < end {
            let align = if p == 0 {
                max_order
            } else {
                p.trailing_zeros().min(max_order)
            };
            let fit = (end - p).ilog2().min(align);
            counts[fit as usize] += 1;
            p += 1 << fit;
        }
    }
    Ok(FreeBlockHistogram { counts })
}

/// Fraction of pages per usage, indexed by [`PageUsage::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsageBreakdown(pub [f64; 7]);

impl UsageBreakdown {
    pub fn get(&self, usage: PageUsage) -> f64 {
        self.0[usage.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (PageUsage, f64)> + '_ {
        PageUsage::ALL.iter().map(|&u| (u, self.0[u.index()]))
    }
}

pub fn usage_counts(pages: &[PageUsage]) -> [u64; 7] {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pages.par_chunks(1 << 16).map(usage_counts_seq).reduce(
            || [0; 7],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
    }
    #[cfg(not(feature = "parallel"))]
    usage_counts_seq(pages)
}

pub fn usage_counts_seq(pages: &[PageUsage]) -> [u64; 7] {
    let mut counts = [0u64; 7];
    for &u in pages {
        counts[u.index()] += 1;
    }
    counts
}

pub fn usage_breakdown(snapshot: &Snapshot) -> UsageBreakdown {
    let counts = usage_counts(snapshot.pages());
    let total = snapshot.len() as f64;
    UsageBreakdown(counts.map(|c| c as f64 / total))
}
