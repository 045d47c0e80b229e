//! Memory-map rendering to binary portable pixmaps (P6).
//!
//! Each row covers `row_span_pages` consecutive page frames (1 GiB of 4 KiB
//! pages by default). Rows are squeezed to `output_width_px` columns; a pixel
//! takes the plurality usage of the pages it covers, ties going to the
//! earlier usage in `Free < FileCache < Anon < AnonHuge < Pinned < Slab <
//! Other < reserved`. Pixels past the end of the snapshot get the background
//! colour.
//!
//! Default palette:
//!
//! | usage     | RGB           |
//! |-----------|---------------|
//! | Free      | 255, 255, 255 |
//! | FileCache | 0, 0, 255     |
//! | Anon      | 0, 200, 0     |
//! | AnonHuge  | 0, 100, 0     |
//! | Pinned    | 220, 0, 0     |
//! | Slab      | 255, 165, 0   |
//! | Other     | 128, 128, 128 |
//! | reserved  | 128, 0, 128   |
//! | background| 0, 0, 0       |

use crate::snapshot::{PageUsage, Snapshot};
use crate::{Error, Result};

/// Pages in one GiB of 4 KiB pages.
pub const GIB_PAGES: usize = 262_144;

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    /// Indexed by [`PageUsage::index`].
    pub usage: [Rgb; 7],
    pub reserved: Rgb,
    pub background: Rgb,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            usage: [
                [255, 255, 255],
                [0, 0, 255],
                [0, 200, 0],
                [0, 100, 0],
                [220, 0, 0],
                [255, 165, 0],
                [128, 128, 128],
            ],
            reserved: [128, 0, 128],
            background: [0, 0, 0],
        }
    }
}

impl Palette {
    pub fn color(&self, usage: PageUsage) -> Rgb {
        self.usage[usage.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderSpec {
    pub row_span_pages: usize,
    pub output_width_px: usize,
    pub palette: Palette,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            row_span_pages: GIB_PAGES,
            output_width_px: 1024,
            palette: Palette::default(),
        }
    }
}

const RESERVED: usize = 7;

pub fn render_memory_map(snapshot: &Snapshot, spec: &RenderSpec) -> Result<Vec<u8>> {
    let (span, width) = (spec.row_span_pages, spec.output_width_px);
    if width == 0 || width > span {
        return Err(Error::Config(format!(
            "output width {width} must be in [1, row span {span}]"
        )));
    }
    let pages = snapshot.pages();
    let reserved = snapshot.meta.reserved_pages.min(pages.len());
    let rows = pages.len().div_ceil(span);

    let header = format!(
        "P6\n# memory map: {span} pages per row, plurality downsampling\n{width} {rows}\n255\n"
    );
    let mut out = Vec::with_capacity(header.len() + rows * width * 3);
    out.extend_from_slice(header.as_bytes());

    let colors: Vec<Rgb> = spec
        .palette
        .usage
        .iter()
        .copied()
        .chain([spec.palette.reserved])
        .collect();
    for row in 0..rows {
        let base = row * span;
        for x in 0..width {
            let lo = base + x * span / width;
            let hi = (base + (x + 1) * span / width).min(pages.len());
            let mut votes = [0usize; 8];
            for (pfn, usage) in pages.iter().enumerate().take(hi).skip(lo) {
                let k = if pfn < reserved {
                    RESERVED
                } else {
                    usage.index()
                };
                votes[k] += 1;
            }
            let mut best = 0;
            for k in 1..votes.len() {
                if votes[k] > votes[best] {
                    best = k;
                }
            }
            let rgb = if votes[best] == 0 {
                spec.palette.background
            } else {
                colors[best]
            };
            out.extend_from_slice(&rgb);
        }
    }
    Ok(out)
}
