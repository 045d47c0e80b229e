//! On-disk formats.
//!
//! * Canonical snapshot: usage-map text (128 pages per line) at `PATH`, plus
//!   a JSON sidecar at `PATH.meta.json` with the page size, label,
//!   timestamp and reserved prefix. Synthesized layouts add a `layout`
//!   object to the sidecar carrying the walk parameters, the free-pool
//!   count and the per-usage page lists, so a later `shrink` can resume
//!   from the files alone.
//! * Series manifest: `{"version": 1, "snapshots": [{"path": ..., "timestamp": ...}]}`,
//!   paths relative to the manifest's directory.
//!
//! Every writer goes through [`write_atomic`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::snapshot::{
    load_usage_map, parse_kpageflags, write_usage_map_wrapped, PageUsage, Snapshot, SnapshotMeta,
};
use crate::synth::{LayoutMeta, SynthLayout, UsageLists};
use crate::timeseries::SnapshotSeries;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const SIDECAR_SUFFIX: &str = ".meta.json";
const LINE_PAGES: usize = 128;

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(SIDECAR_SUFFIX);
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSidecar {
    #[serde(flatten)]
    pub meta: LayoutMeta,
    pub free_pool: u64,
    pub lists: UsageLists,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub page_size: u64,
    pub pages: usize,
    #[serde(flatten)]
    pub meta: SnapshotMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutSidecar>,
}

fn sidecar_for(snapshot: &Snapshot) -> Sidecar {
    Sidecar {
        version: FORMAT_VERSION,
        page_size: snapshot.page_size(),
        pages: snapshot.len(),
        meta: snapshot.meta.clone(),
        layout: None,
    }
}

fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serialization is infallible");
    out.push(b'\n');
    out
}

/// Usage-map text and sidecar bytes for a snapshot.
pub fn snapshot_bytes(snapshot: &Snapshot) -> (Vec<u8>, Vec<u8>) {
    (
        write_usage_map_wrapped(snapshot, LINE_PAGES).into_bytes(),
        to_json(&sidecar_for(snapshot)),
    )
}

/// Usage-map text and sidecar bytes for a layout. Deterministic: equal
/// layouts serialize to identical bytes.
pub fn layout_bytes(layout: &SynthLayout) -> (Vec<u8>, Vec<u8>) {
    let snapshot = crate::synth::to_snapshot(layout);
    let mut sidecar = sidecar_for(&snapshot);
    sidecar.layout = Some(LayoutSidecar {
        meta: layout.meta.clone(),
        free_pool: layout.free_pool,
        lists: layout.lists.clone(),
    });
    (
        write_usage_map_wrapped(&snapshot, LINE_PAGES).into_bytes(),
        to_json(&sidecar),
    )
}

pub fn write_snapshot(path: &Path, snapshot: &Snapshot) -> Result<()> {
    let (map, sidecar) = snapshot_bytes(snapshot);
    write_atomic(path, &map)?;
    write_atomic(&sidecar_path(path), &sidecar)
}

pub fn write_layout(path: &Path, layout: &SynthLayout) -> Result<()> {
    let (map, sidecar) = layout_bytes(layout);
    write_atomic(path, &map)?;
    write_atomic(&sidecar_path(path), &sidecar)
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(&side)?)?;
    if sidecar.version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "{}: unsupported version {}",
            side.display(),
            sidecar.version
        )));
    }
    Ok(Some(sidecar))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    /// Usage map if a sidecar exists or the file is usage-map text,
    /// otherwise a raw kpageflags dump.
    #[default]
    Auto,
    Kpageflags,
    UsageMap,
}

fn looks_like_usage_map(bytes: &[u8]) -> bool {
    !bytes.is_empty()
        && bytes
            .iter()
            .all(|&b| b"FAHCPSO".contains(&b) || b.is_ascii_whitespace())
}

/// Reads a snapshot file, applying its sidecar if present.
pub fn read_snapshot(path: &Path, format: InputFormat, page_size: u64) -> Result<Snapshot> {
    let bytes = fs::read(path)?;
    let sidecar = read_sidecar(path)?;
    let as_map = match format {
        InputFormat::UsageMap => true,
        InputFormat::Kpageflags => false,
        InputFormat::Auto => sidecar.is_some() || looks_like_usage_map(&bytes),
    };
    if !as_map {
        return parse_kpageflags(&bytes, page_size);
    }
    let text =
        String::from_utf8(bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let snapshot = load_usage_map(&text)?;
    match sidecar {
        Some(side) => {
            if side.pages != snapshot.len() {
                return Err(Error::Config(format!(
                    "{}: sidecar says {} pages, map has {}",
                    path.display(),
                    side.pages,
                    snapshot.len()
                )));
            }
            Ok(Snapshot::new(snapshot.into_pages(), side.page_size)?.with_meta(side.meta))
        }
        None => Ok(Snapshot::new(snapshot.into_pages(), page_size)?),
    }
}

/// Reads a layout written by [`write_layout`].
pub fn read_layout(path: &Path) -> Result<SynthLayout> {
    let sidecar = read_sidecar(path)?
        .ok_or_else(|| Error::Config(format!("{}: no sidecar, not a layout", path.display())))?;
    let layout = sidecar.layout.clone().ok_or_else(|| {
        Error::Config(format!(
            "{}: sidecar has no layout section",
            sidecar_path(path).display()
        ))
    })?;
    let snapshot = read_snapshot(path, InputFormat::UsageMap, sidecar.page_size)?;
    let reserved = snapshot.meta.reserved_pages;
    let pages: Vec<PageUsage> = snapshot.into_pages();
    let out = SynthLayout {
        pages,
        lists: layout.lists,
        free_pool: layout.free_pool,
        reserved_pages: reserved,
        meta: layout.meta,
    };
    if !out.is_conserved() {
        return Err(Error::Config(format!(
            "{}: layout lists do not account for every page",
            path.display()
        )));
    }
    let n = out.pages.len() as u64;
    for (list, usage) in [
        (&out.lists.file, PageUsage::FileCache),
        (&out.lists.anon, PageUsage::Anon),
        (&out.lists.anon_huge, PageUsage::AnonHuge),
        (&out.lists.pinned, PageUsage::Pinned),
    ] {
        if let Some(&bad) = list
            .iter()
            .find(|&&p| p >= n || out.pages[p as usize] != usage)
        {
            return Err(Error::Config(format!(
                "{}: list entry {bad} is not a {} page",
                path.display(),
                usage.name()
            )));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub snapshots: Vec<ManifestEntry>,
}

pub fn read_series(manifest_path: &Path, page_size: u64) -> Result<SnapshotSeries> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Series(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    let mut timestamps = Vec::with_capacity(manifest.snapshots.len());
    for entry in &manifest.snapshots {
        snapshots.push(read_snapshot(
            &base.join(&entry.path),
            InputFormat::Auto,
            page_size,
        )?);
        timestamps.push(entry.timestamp);
    }
    SnapshotSeries::new(snapshots, timestamps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{ClassUsage, MemoryClass, Profile, ProfileMeta};
    use crate::synth::{shrink, synthesize, WalkConfig};

    fn tempdir() -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "memfrag-files-{}-{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempdir();
        let path = dir.join("s.map");
        let mut s = load_usage_map(&"FAHCPSO".repeat(50)).unwrap();
        s.meta.label = "box".into();
        s.meta.timestamp = Some(17);
        write_snapshot(&path, &s).unwrap();
        let back = read_snapshot(&path, InputFormat::Auto, 4096).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn raw_dump_is_detected() {
        let dir = tempdir();
        let path = dir.join("raw.kpf");
        let raw: Vec<u8> = [1u64 << 10, 1 << 12]
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .collect();
        fs::write(&path, raw).unwrap();
        let s = read_snapshot(&path, InputFormat::Auto, 4096).unwrap();
        assert_eq!(s.pages(), &[PageUsage::Free, PageUsage::Anon]);
    }

    #[test]
    fn layout_round_trip() {
        let dir = tempdir();
        let path = dir.join("l.map");
        let states = vec![
            MemoryClass::new(4, ClassUsage::Anon),
            MemoryClass::new(2, ClassUsage::Free),
        ];
        let p = Profile::from_dense(
            states,
            &[vec![0.5, 0.5], vec![1.0, 0.0]],
            ProfileMeta::default(),
        )
        .unwrap();
        let cfg = WalkConfig {
            reserved_fraction: 0.05,
            ..WalkConfig::new(3000, 8)
        };
        let mut layout = synthesize(&p, &cfg).unwrap();
        write_layout(&path, &layout).unwrap();
        let mut back = read_layout(&path).unwrap();
        assert_eq!(back, layout);
        assert_eq!(shrink(&mut back, 10, 1), shrink(&mut layout, 10, 1));
        assert!(read_layout(&dir.join("missing.map")).is_err());
    }

    #[test]
    fn manifest() {
        let dir = tempdir();
        for (i, m) in ["FFAA", "FAAA", "AAAA"].iter().enumerate() {
            write_snapshot(&dir.join(format!("{i}.map")), &load_usage_map(m).unwrap()).unwrap();
        }
        let manifest = Manifest {
            version: 1,
            snapshots: (0..3)
                .map(|i| ManifestEntry {
                    path: format!("{i}.map").into(),
                    timestamp: 100 * i,
                })
                .collect(),
        };
        let mpath = dir.join("series.json");
        fs::write(&mpath, serde_json::to_vec(&manifest).unwrap()).unwrap();
        let series = read_series(&mpath, 4096).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series.timestamps(), &[0, 100, 200]);
    }
}
