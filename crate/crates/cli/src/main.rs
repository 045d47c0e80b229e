use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use memfrag::files::{self, InputFormat};
use memfrag::markov::{
    build_profile, load_profile, memory_weighted, save_profile, stationary, stationary_direct,
    stationary_residual, BuildOptions, Reconnect, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use memfrag::regions::{
    free_block_histogram, homogeneity_histogram, hugepage_feasibility, hugepage_feasibility_runs,
    segment, usage_breakdown, MAX_ORDER,
};
use memfrag::render::{render_memory_map, RenderSpec, GIB_PAGES};
use memfrag::score::{band, score_report_with, Norm, ScoreOptions, Weighting};
use memfrag::snapshot::{PageUsage, DEFAULT_PAGE_SIZE};
use memfrag::synth::{shrink, synthesize_partitioned, StartMode, WalkConfig};
use memfrag::timeseries::{
    change_counts, free_homogeneity_correlation, per_frame_skewness, pooled_interchange_skewness,
    series_points, SkewEstimator, DEFAULT_MIN_RUN,
};
use memfrag::{Error, Profile, Result};
use serde_json::{json, Value};

const REPORT_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "memfrag",
    version,
    about = "Physical memory fragmentation profiling and synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a kpageflags dump or usage-map text into a canonical snapshot.
    Ingest {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Auto)]
        format: Format,
        #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
        page_size: u64,
        #[arg(long)]
        label: Option<String>,
        /// Capture time, seconds since the epoch.
        #[arg(long)]
        timestamp: Option<i64>,
    },
    /// Usage breakdown, homogeneity histograms, huge-page feasibility and
    /// free-block histogram of a snapshot.
    Analyze {
        snapshot: PathBuf,
        #[arg(long, default_value_t = MAX_ORDER)]
        max_order: u32,
        /// Count free runs of at least 512 pages instead of aligned blocks.
        #[arg(long)]
        run_based: bool,
        #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
        page_size: u64,
    },
    /// Build a fragmentation profile from a snapshot.
    Profile {
        snapshot: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = ReconnectArg::MaxMass)]
        reconnect: ReconnectArg,
        /// Seed for `--reconnect random`; generated and recorded if absent.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
        page_size: u64,
    },
    /// Stationary distribution of a profile.
    Stationary {
        profile: PathBuf,
        #[arg(long, value_enum, default_value_t = Solver::Power)]
        solver: Solver,
    },
    /// Lay out a simulated address space by random walk over profiles.
    Synthesize {
        /// Profile covering the whole address space. Use `--partition` for
        /// several.
        profile: Option<PathBuf>,
        /// `PROFILE:FRACTION`, repeatable.
        #[arg(long = "partition", value_name = "PROFILE:FRACTION")]
        partitions: Vec<String>,
        #[arg(long)]
        pages: usize,
        /// Generated and recorded in the output if absent.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = StartArg::Stationary)]
        start: StartArg,
        /// Fraction of the address space kept as boot-time pinned memory.
        #[arg(long, default_value_t = 0.0)]
        reserved: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Release pages from a synthesized layout.
    Shrink {
        layout: PathBuf,
        #[arg(long)]
        demand: u64,
        /// Generated and recorded in the report if absent.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: PathBuf,
        /// Write the release order here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a snapshot against a profile.
    Score {
        profile: PathBuf,
        snapshot: PathBuf,
        #[arg(long, value_enum, default_value_t = NormArg::L2)]
        norm: NormArg,
        #[arg(long)]
        include_reserved: bool,
        #[arg(long, value_enum, default_value_t = WeightingArg::Memory)]
        weighting: WeightingArg,
        #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
        page_size: u64,
    },
    /// Change counts, inter-change skewness and free/homogeneity correlation
    /// over a snapshot series.
    Series {
        manifest: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_RUN)]
        min_run: u32,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Biased)]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
        page_size: u64,
    },
    /// Draw a snapshot as a P6 portable pixmap.
    Render {
        snapshot: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1024)]
        width: usize,
        /// GiB of memory per image row.
        #[arg(long, default_value_t = 1.0)]
        row_gib: f64,
        #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
        page_size: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Auto,
    Kpageflags,
    Map,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReconnectArg {
    MaxMass,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Power,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    First,
    Random,
    Stationary,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L2,
    L1,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Memory,
    Region,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Biased,
    Corrected,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("reports serialize");
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != ErrorKind::BrokenPipe => {
                    eprintln!("memfrag: {e}");
                    ExitCode::from(1)
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("memfrag: {e}");
            ExitCode::from(if e.is_internal() { 2 } else { 1 })
        }
    }
}

fn report(kind: &str, body: Value) -> Value {
    let mut out = json!({ "version": REPORT_VERSION, "kind": kind });
    if let (Value::Object(out), Value::Object(body)) = (&mut out, body) {
        out.extend(body);
    }
    out
}

fn read_profile(path: &Path) -> Result<Profile> {
    load_profile(&fs::read(path)?)
        .map_err(|e| Error::ProfileFile(format!("{}: {e}", path.display())))
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn run(command: Command) -> Result<Value> {
    match command {
        Command::Ingest {
            input,
            output,
            format,
            page_size,
            label,
            timestamp,
        } => {
            let format = match format {
                Format::Auto => InputFormat::Auto,
                Format::Kpageflags => InputFormat::Kpageflags,
                Format::Map => InputFormat::UsageMap,
            };
            let mut snapshot = files::read_snapshot(&input, format, page_size)?;
            if let Some(label) = label {
                snapshot.meta.label = label;
            }
            if timestamp.is_some() {
                snapshot.meta.timestamp = timestamp;
            }
            files::write_snapshot(&output, &snapshot)?;
            Ok(report(
                "ingest",
                json!({ "output": output, "pages": snapshot.len(), "page_size": snapshot.page_size() }),
            ))
        }
        Command::Analyze {
            snapshot,
            max_order,
            run_based,
            page_size,
        } => {
            let snapshot = files::read_snapshot(&snapshot, InputFormat::Auto, page_size)?;
            let seq = segment(&snapshot);
            let breakdown = usage_breakdown(&snapshot);
            let usage: Vec<Value> = breakdown
                .iter()
                .map(|(u, f)| json!({ "usage": u, "fraction": f }))
                .collect();
            let histogram = |filter: Option<PageUsage>| -> Vec<Value> {
                homogeneity_histogram(&seq, filter)
                    .into_iter()
                    .map(|(bucket, pages)| json!({ "bucket": bucket, "pages": pages }))
                    .collect()
            };
            let mut homogeneity = serde_json::Map::new();
            homogeneity.insert("all".into(), histogram(None).into());
            for u in PageUsage::ALL {
                homogeneity.insert(u.name().into(), histogram(Some(u)).into());
            }
            let feasibility = if run_based {
                hugepage_feasibility_runs(&snapshot)
            } else {
                hugepage_feasibility(&snapshot)
            };
            let blocks = free_block_histogram(&snapshot, max_order)?;
            Ok(report(
                "analyze",
                json!({
                    "label": snapshot.meta.label,
                    "pages": snapshot.len(),
                    "page_size": snapshot.page_size(),
                    "regions": seq.len(),
                    "usage": usage,
                    "homogeneity": homogeneity,
                    "hugepage_feasibility": {
                        "method": if run_based { "runs" } else { "aligned" },
                        "fraction": feasibility,
                    },
                    "free_blocks": {
                        "max_order": max_order,
                        "counts": blocks.counts,
                        "pages": blocks.pages(),
                    },
                }),
            ))
        }
        Command::Profile {
            snapshot: path,
            output,
            threshold,
            epsilon,
            reconnect,
            seed,
            page_size,
        } => {
            let snapshot = files::read_snapshot(&path, InputFormat::Auto, page_size)?;
            let reconnect = match reconnect {
                ReconnectArg::MaxMass => Reconnect::MaxMass,
                ReconnectArg::Random => Reconnect::Random {
                    seed: seed_or_random(seed),
                },
            };
            let source = if snapshot.meta.label.is_empty() {
                path.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            } else {
                snapshot.meta.label.clone()
            };
            let options = BuildOptions {
                threshold,
                epsilon,
                reconnect,
                source,
                timestamp: snapshot.meta.timestamp,
            };
            let profile = build_profile(&segment(&snapshot), &options)?;
            files::write_atomic(&output, &save_profile(&profile))?;
            Ok(report(
                "profile",
                json!({
                    "output": output,
                    "states": profile.len(),
                    "edges": profile.edge_count(),
                    "meta": profile.meta,
                }),
            ))
        }
        Command::Stationary { profile, solver } => {
            let profile = read_profile(&profile)?;
            let dist = match solver {
                Solver::Power => stationary(&profile, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
                Solver::Direct => stationary_direct(&profile)?,
            };
            let weighted = memory_weighted(&dist, profile.states());
            let states: Vec<Value> = profile
                .states()
                .iter()
                .zip(dist.probs())
                .map(|(c, p)| json!({ "class": c, "probability": p, "memory_fraction": weighted.get(c) }))
                .collect();
            Ok(report(
                "stationary",
                json!({
                    "solver": match solver { Solver::Power => "power", Solver::Direct => "direct" },
                    "residual": stationary_residual(&profile, dist.probs()),
                    "states": states,
                }),
            ))
        }
        Command::Synthesize {
            profile,
            partitions,
            pages,
            seed,
            start,
            reserved,
            output,
        } => {
            let mut parts: Vec<(PathBuf, f64)> = Vec::new();
            match (profile, partitions.is_empty()) {
                (Some(p), true) => parts.push((p, 1.0)),
                (None, false) => {
                    for spec in &partitions {
                        parts.push(parse_partition(spec)?);
                    }
                }
                (Some(_), false) => {
                    return Err(Error::Config(
                        "give either a profile or --partition, not both".into(),
                    ));
                }
                (None, true) => return Err(Error::Config("no profile given".into())),
            }
            let profiles: Vec<Profile> = parts
                .iter()
                .map(|(p, _)| read_profile(p))
                .collect::<Result<_>>()?;
            let weighted: Vec<(&Profile, f64)> = profiles
                .iter()
                .zip(&parts)
                .map(|(p, (_, f))| (p, *f))
                .collect();
            let start_mode = match start {
                StartArg::First => StartMode::FirstState,
                StartArg::Random => StartMode::RandomState,
                StartArg::Stationary => StartMode::StationaryWeighted,
            };
            let config = WalkConfig {
                total_pages: pages,
                seed: seed_or_random(seed),
                start_mode,
                reserved_fraction: reserved,
            };
            let layout = synthesize_partitioned(&weighted, &config)?;
            files::write_layout(&output, &layout)?;
            Ok(report(
                "synthesize",
                json!({
                    "output": output,
                    "pages": layout.total_pages(),
                    "seed": config.seed,
                    "reserved_pages": layout.reserved_pages,
                    "free_pool": layout.free_pool,
                    "releasable": layout.releasable(),
                }),
            ))
        }
        Command::Shrink {
            layout: path,
            demand,
            seed,
            output,
            log,
        } => {
            let mut layout = files::read_layout(&path)?;
            let seed = seed_or_random(seed);
            let outcome = shrink(&mut layout, demand, seed);
            if !layout.is_conserved() {
                return Err(Error::Invariant("shrink lost track of pages".into()));
            }
            files::write_layout(&output, &layout)?;
            if let Some(log) = &log {
                let doc = report(
                    "release-log",
                    json!({ "seed": seed, "demand": demand, "released": outcome.released }),
                );
                let mut bytes = serde_json::to_vec_pretty(&doc)?;
                bytes.push(b'\n');
                files::write_atomic(log, &bytes)?;
            }
            Ok(report(
                "shrink",
                json!({
                    "output": output,
                    "seed": seed,
                    "demand": demand,
                    "released": outcome.released.len(),
                    "shortfall": outcome.shortfall,
                    "free_pool": layout.free_pool,
                }),
            ))
        }
        Command::Score {
            profile,
            snapshot,
            norm,
            include_reserved,
            weighting,
            page_size,
        } => {
            let profile = read_profile(&profile)?;
            let snapshot = files::read_snapshot(&snapshot, InputFormat::Auto, page_size)?;
            let weighting = match weighting {
                WeightingArg::Memory => Weighting::Memory,
                WeightingArg::Region => Weighting::Region,
            };
            let options = ScoreOptions {
                norm: Norm::L2,
                weighting,
                include_reserved,
            };
            let r = score_report_with(&profile, &snapshot, &options)?;
            let mut body = json!({
                "norm": match norm { NormArg::L2 => "l2", NormArg::L1 => "l1", NormArg::All => "all" },
                "weighting": weighting,
                "include_reserved": include_reserved,
            });
            let selected = match norm {
                NormArg::L2 => Some(r.l2),
                NormArg::L1 => Some(r.l1),
                NormArg::All => None,
            };
            if let Some(score) = selected {
                body["score"] = json!(score);
            }
            body["l2"] = json!(r.l2);
            body["l1"] = json!(r.l1);
            body["band"] = json!(band(r.l2));
            body["rows"] = json!(r.rows);
            Ok(report("score", body))
        }
        Command::Series {
            manifest,
            min_run,
            estimator,
            page_size,
        } => {
            let series = files::read_series(&manifest, page_size)?;
            let estimator = match estimator {
                EstimatorArg::Biased => SkewEstimator::Biased,
                EstimatorArg::Corrected => SkewEstimator::BiasCorrected,
            };
            let counts = change_counts(&series)?;
            let mut histogram = vec![0u64; series.len()];
            for &c in &counts {
                histogram[c as usize] += 1;
            }
            let per_frame: Vec<f64> = per_frame_skewness(&series, estimator)
                .into_iter()
                .flatten()
                .collect();
            let mean_frame_skew = (!per_frame.is_empty())
                .then(|| per_frame.iter().sum::<f64>() / per_frame.len() as f64);
            let points = series_points(&series, min_run);
            let correlation = match free_homogeneity_correlation(&points) {
                Ok(c) => json!(c),
                Err(e) => json!({ "error": e.to_string() }),
            };
            let points: Vec<Value> = points
                .iter()
                .map(|&(free, homogeneity)| json!({ "free": free, "homogeneity": homogeneity }))
                .collect();
            Ok(report(
                "series",
                json!({
                    "snapshots": series.len(),
                    "pages": series.page_count(),
                    "changes": {
                        "pages_changed": counts.iter().filter(|&&c| c > 0).count(),
                        "histogram": histogram,
                    },
                    "skewness": {
                        "estimator": match estimator { SkewEstimator::Biased => "biased", SkewEstimator::BiasCorrected => "corrected" },
                        "pooled": pooled_interchange_skewness(&series, estimator),
                        "frames_with_skew": per_frame.len(),
                        "mean_frame_skew": mean_frame_skew,
                    },
                    "min_run": min_run,
                    "points": points,
                    "correlation": correlation,
                }),
            ))
        }
        Command::Render {
            snapshot,
            output,
            width,
            row_gib,
            page_size,
        } => {
            let snapshot = files::read_snapshot(&snapshot, InputFormat::Auto, page_size)?;
            let span = row_gib * (GIB_PAGES as f64) * (DEFAULT_PAGE_SIZE as f64)
                / (snapshot.page_size() as f64);
            if !(span >= 1.0 && span.fract() == 0.0) {
                return Err(Error::Config(format!(
                    "--row-gib {row_gib} is not a whole number of pages"
                )));
            }
            let spec = RenderSpec {
                row_span_pages: span as usize,
                output_width_px: width,
                ..RenderSpec::default()
            };
            let image = render_memory_map(&snapshot, &spec)?;
            files::write_atomic(&output, &image)?;
            Ok(report(
                "render",
                json!({
                    "output": output,
                    "width": width,
                    "rows": snapshot.len().div_ceil(spec.row_span_pages),
                    "row_span_pages": spec.row_span_pages,
                    "downsampling": "plurality",
                }),
            ))
        }
    }
}

fn parse_partition(spec: &str) -> Result<(PathBuf, f64)> {
    let (path, fraction) = spec
        .rsplit_once(':')
        .ok_or_else(|| Error::Config(format!("partition {spec:?} is not PROFILE:FRACTION")))?;
    let fraction: f64 = fraction
        .parse()
        .map_err(|_| Error::Config(format!("partition {spec:?} has a bad fraction")))?;
    Ok((PathBuf::from(path), fraction))
}
