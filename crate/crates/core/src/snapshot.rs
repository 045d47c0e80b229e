//! Page-flag snapshots.
//!
//! A snapshot is one [`PageUsage`] per physical page frame, indexed by page
//! frame number. Snapshots come from raw `/proc/kpageflags` dumps (one
//! little-endian `u64` per frame, no header) or from a portable text fixture
//! with one character per page.
//!
//! # Flag classification
//!
//! Bit positions follow the Linux kpageflags ABI:
//!
//! | bit | flag      |
//! |-----|-----------|
//! | 5   | LRU       |
//! | 7   | SLAB      |
//! | 10  | BUDDY     |
//! | 12  | ANON      |
//! | 19  | HWPOISON  |
//! | 20  | NOPAGE    |
//! | 22  | THP       |
//! | 23  | OFFLINE   |
//! | 24  | ZERO_PAGE |
//!
//! A page is classified by the first matching rule:
//!
//! 1. NOPAGE, HWPOISON, ZERO_PAGE or OFFLINE set → `Other`
//! 2. BUDDY set → `Free`
//! 3. SLAB set → `Slab`
//! 4. ANON and THP set → `AnonHuge`
//! 5. ANON set → `Anon`
//! 6. LRU set → `FileCache`
//! 7. otherwise → `Pinned`
//!
//! Free pages may keep stale type bits, so BUDDY outranks everything except
//! the "not really memory" flags. Compound head/tail bits are ignored;
//! contiguity comes from region segmentation instead. This table is a
//! reconstruction: no published source pins down how flag combinations map
//! onto the seven usage types.
//!
//! # Usage-map text format
//!
//! One character per page: `F` Free, `A` Anon, `H` AnonHuge, `C` FileCache,
//! `P` Pinned, `S` Slab, `O` Other. Whitespace is ignored.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_PAGE_SIZE: u64 = 4096;

pub const KPF_LRU: u32 = 5;
pub const KPF_SLAB: u32 = 7;
pub const KPF_BUDDY: u32 = 10;
pub const KPF_ANON: u32 = 12;
pub const KPF_HWPOISON: u32 = 19;
pub const KPF_NOPAGE: u32 = 20;
pub const KPF_THP: u32 = 22;
pub const KPF_OFFLINE: u32 = 23;
pub const KPF_ZERO_PAGE: u32 = 24;

/// Raw kpageflags word for one page frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PageFlags(pub u64);

impl PageFlags {
    #[inline]
    pub fn has(self, bit: u32) -> bool {
        self.0 & (1u64 << bit) != 0
    }
}

/// What a physical page is used for.
///
/// The declaration order is also the fixed tie-break order used when
/// rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PageUsage {
    Free,
    FileCache,
    Anon,
    AnonHuge,
    Pinned,
    Slab,
    Other,
}

impl PageUsage {
    pub const ALL: [PageUsage; 7] = [
        PageUsage::Free,
        PageUsage::FileCache,
        PageUsage::Anon,
        PageUsage::AnonHuge,
        PageUsage::Pinned,
        PageUsage::Slab,
        PageUsage::Other,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> char {
        match self {
            PageUsage::Free => 'F',
            PageUsage::FileCache => 'C',
            PageUsage::Anon => 'A',
            PageUsage::AnonHuge => 'H',
            PageUsage::Pinned => 'P',
            PageUsage::Slab => 'S',
            PageUsage::Other => 'O',
        }
    }

    pub fn from_code(c: char) -> Option<PageUsage> {
        Some(match c {
            'F' => PageUsage::Free,
            'C' => PageUsage::FileCache,
            'A' => PageUsage::Anon,
            'H' => PageUsage::AnonHuge,
            'P' => PageUsage::Pinned,
            'S' => PageUsage::Slab,
            'O' => PageUsage::Other,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            PageUsage::Free => "free",
            PageUsage::FileCache => "filecache",
            PageUsage::Anon => "anon",
            PageUsage::AnonHuge => "anonhuge",
            PageUsage::Pinned => "pinned",
            PageUsage::Slab => "slab",
            PageUsage::Other => "other",
        }
    }
}

pub fn classify_page(flags: PageFlags) -> PageUsage {
    if flags.has(KPF_NOPAGE)
        || flags.has(KPF_HWPOISON)
        || flags.has(KPF_ZERO_PAGE)
        || flags.has(KPF_OFFLINE)
    {
        PageUsage::Other
    } else if flags.has(KPF_BUDDY) {
        PageUsage::Free
    } else if flags.has(KPF_SLAB) {
        PageUsage::Slab
    } else if flags.has(KPF_ANON) {
        if flags.has(KPF_THP) {
            PageUsage::AnonHuge
        } else {
            PageUsage::Anon
        }
    } else if flags.has(KPF_LRU) {
        PageUsage::FileCache
    } else {
        PageUsage::Pinned
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SnapshotMeta {
    /// Machine label.
    pub label: String,
    /// Capture time, seconds since the epoch.
    pub timestamp: Option<i64>,
    /// Pages at the bottom of the address space that a synthesizer left
    /// untouched (boot-time memory). Zero for real captures.
    #[serde(default)]
    pub reserved_pages: usize,
}

/// Per-page usage array for one machine at one point in time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pages: Vec<PageUsage>,
    page_size: u64,
    pub meta: SnapshotMeta,
}

impl Snapshot {
    pub fn new(pages: Vec<PageUsage>, page_size: u64) -> Result<Self> {
        if pages.is_empty() {
            return Err(Error::EmptySnapshot);
        }
        if !page_size.is_power_of_two() {
            return Err(Error::PageSize(page_size));
        }
        Ok(Snapshot {
            pages,
            page_size,
            meta: SnapshotMeta::default(),
        })
    }

    pub fn with_meta(mut self, meta: SnapshotMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn pages(&self) -> &[PageUsage] {
        &self.pages
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn page_size(&self) -> u64 {
        self.page_size
    }

    pub fn into_pages(self) -> Vec<PageUsage> {
        self.pages
    }

    /// Pages past the reserved prefix.
    pub fn unreserved_pages(&self) -> &[PageUsage] {
        &self.pages[self.meta.reserved_pages.min(self.pages.len())..]
    }
}

#[inline]
fn classify_word(word: &[u8]) -> PageUsage {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(word);
    classify_page(PageFlags(u64::from_le_bytes(buf)))
}

fn check_dump(raw: &[u8]) -> Result<()> {
    if raw.is_empty() {
        return Err(Error::EmptyDump);
    }
    if !raw.len().is_multiple_of(8) {
        return Err(Error::MalformedDump(raw.len()));
    }
    Ok(())
}

/// Parse a raw kpageflags dump: one little-endian 64-bit word per page.
pub fn parse_kpageflags(raw: &[u8], page_size: u64) -> Result<Snapshot> {
    check_dump(raw)?;
    #[cfg(feature = "parallel")]
    let pages = {
        use rayon::prelude::*;
        raw.par_chunks_exact(8).map(classify_word).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let pages = raw.chunks_exact(8).map(classify_word).collect();
    Snapshot::new(pages, page_size)
}

/// Single-threaded [`parse_kpageflags`].
pub fn parse_kpageflags_seq(raw: &[u8], page_size: u64) -> Result<Snapshot> {
    check_dump(raw)?;
    Snapshot::new(raw.chunks_exact(8).map(classify_word).collect(), page_size)
}

/// Parse the usage-map text format. Offsets in errors are character offsets
/// into `text`.
pub fn load_usage_map(text: &str) -> Result<Snapshot> {
    let mut pages = Vec::with_capacity(text.len());
    for (offset, ch) in text.chars().enumerate() {
        if ch.is_whitespace() {
            continue;
        }
        match PageUsage::from_code(ch) {
            Some(u) => pages.push(u),
            None => return Err(Error::Fixture { offset, ch }),
        }
    }
    Snapshot::new(pages, DEFAULT_PAGE_SIZE)
}

pub fn write_usage_map(snapshot: &Snapshot) -> String {
    snapshot.pages.iter().map(|u| u.code()).collect()
}

/// Like [`write_usage_map`] but wraps lines every `width` pages.
pub fn write_usage_map_wrapped(snapshot: &Snapshot, width: usize) -> String {
    let width = width.max(1);
    let mut out = String::with_capacity(snapshot.len() + snapshot.len() / width + 1);
    for chunk in snapshot.pages.chunks(width) {
        out.extend(chunk.iter().map(|u| u.code()));
        out.push('\n');
    }
    out
}
