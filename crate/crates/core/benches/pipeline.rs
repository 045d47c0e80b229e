use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use memfrag::markov::{build_profile, build_profiles, BuildOptions};
use memfrag::regions::{
    hugepage_feasibility, hugepage_feasibility_seq, segment, usage_counts, usage_counts_seq,
};
use memfrag::snapshot::{parse_kpageflags, parse_kpageflags_seq};
use memfrag::timeseries::{change_counts, change_counts_seq, SnapshotSeries};
use memfrag::{PageUsage, RegionSequence, Snapshot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const PAGES: usize = 1 << 22;

fn raw_dump(rng: &mut ChaCha8Rng, pages: usize) -> Vec<u8> {
    const BITS: [u32; 5] = [5, 7, 10, 12, 22];
    (0..pages)
        .flat_map(|_| {
            let word: u64 = BITS
                .iter()
                .filter(|_| rng.random_bool(0.3))
                .map(|b| 1u64 << b)
                .sum();
            word.to_le_bytes()
        })
        .collect()
}

fn runs(rng: &mut ChaCha8Rng, pages: usize) -> Vec<PageUsage> {
    let mut out = Vec::with_capacity(pages + 4096);
    while out.len() < pages {
        let u = PageUsage::ALL[rng.random_range(0..5)];
        let len = [1, 4, 64, 512, 2048][rng.random_range(0..5)];
        out.extend(std::iter::repeat_n(u, len));
    }
    out.truncate(pages);
    out
}

fn kernels(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let raw = raw_dump(&mut rng, PAGES);
    let snapshot = Snapshot::new(runs(&mut rng, PAGES), 4096).unwrap();

    let mut g = c.benchmark_group("parse");
    g.throughput(Throughput::Elements(PAGES as u64));
    g.bench_function("seq", |b| {
        b.iter(|| parse_kpageflags_seq(black_box(&raw), 4096).unwrap())
    });
    g.bench_function("par", |b| {
        b.iter(|| parse_kpageflags(black_box(&raw), 4096).unwrap())
    });
    g.finish();

    let mut g = c.benchmark_group("usage_counts");
    g.throughput(Throughput::Elements(PAGES as u64));
    g.bench_function("seq", |b| {
        b.iter(|| usage_counts_seq(black_box(snapshot.pages())))
    });
    g.bench_function("par", |b| {
        b.iter(|| usage_counts(black_box(snapshot.pages())))
    });
    g.finish();

    let mut g = c.benchmark_group("hugepage_feasibility");
    g.throughput(Throughput::Elements(PAGES as u64));
    g.bench_function("seq", |b| {
        b.iter(|| hugepage_feasibility_seq(black_box(&snapshot)))
    });
    g.bench_function("par", |b| {
        b.iter(|| hugepage_feasibility(black_box(&snapshot)))
    });
    g.finish();
}

fn series(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frames = 8;
    let snapshots: Vec<Snapshot> = (0..frames)
        .map(|_| Snapshot::new(runs(&mut rng, PAGES / 4), 4096).unwrap())
        .collect();
    let series = SnapshotSeries::new(snapshots, (0..frames as i64).collect()).unwrap();
    let mut g = c.benchmark_group("change_counts");
    g.throughput(Throughput::Elements((PAGES / 4 * frames) as u64));
    g.bench_function("seq", |b| {
        b.iter(|| change_counts_seq(black_box(&series)).unwrap())
    });
    g.bench_function("par", |b| {
        b.iter(|| change_counts(black_box(&series)).unwrap())
    });
    g.finish();
}

fn profiles(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let options = BuildOptions::default();
    let mut g = c.benchmark_group("build_profiles");
    g.sample_size(10);
    for machines in [4usize, 16] {
        let seqs: Vec<RegionSequence> = (0..machines)
            .map(|_| segment(&Snapshot::new(runs(&mut rng, 1 << 20), 4096).unwrap()))
            .collect();
        g.bench_with_input(BenchmarkId::new("seq", machines), &seqs, |b, seqs| {
            b.iter(|| {
                seqs.iter()
                    .map(|s| build_profile(s, &options))
                    .collect::<Vec<_>>()
            })
        });
        g.bench_with_input(BenchmarkId::new("par", machines), &seqs, |b, seqs| {
            b.iter(|| build_profiles(seqs, &options))
        });
    }
    g.finish();
}

criterion_group!(benches, kernels, series, profiles);
criterion_main!(benches);
