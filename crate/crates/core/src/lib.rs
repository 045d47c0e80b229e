//! Physical memory fragmentation toolkit.
//!
//! The pipeline runs from raw page flags to a fragmentation profile and back:
//!
//! 1. [`snapshot`] turns `/proc/kpageflags` dumps (or text fixtures) into a
//!    per-page usage array.
//! 2. [`regions`] run-length encodes the array into homogeneous regions and
//!    computes contiguity analytics on it.
//! 3. [`markov`] builds a Markov-process profile over `(size, usage)` memory
//!    classes from the region sequence and solves for its stationary
//!    distribution.
//! 4. [`synth`] lays out a simulated physical address space by random walk
//!    over a profile and simulates shrinker-driven release.
//! 5. [`score`] compares a layout (or any snapshot) against the profile's
//!    ideal class distribution.
//!
//! [`timeseries`] covers multi-snapshot churn statistics and [`render`]
//! draws memory maps as portable pixmaps.
//!
//! Data-parallel kernels use rayon when the `parallel` feature is enabled
//! (the default). Each of them has a `_seq` sibling that is always compiled.

pub mod error;
pub mod files;
pub mod graph;
pub mod markov;
pub mod regions;
pub mod render;
pub mod score;
pub mod snapshot;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
pub use markov::{ClassUsage, MemoryClass, Profile, StationaryDistribution};
pub use regions::{Region, RegionSequence};
pub use score::ClassDistribution;
pub use snapshot::{PageFlags, PageUsage, Snapshot};
pub use synth::{SynthLayout, WalkConfig};
