use criterion::{criterion_group, criterion_main, Criterion};
use tn_slicer_bench::bench_tree;
use tn_slicer_core::baselines::greedy_slicer;
use tn_slicer_core::lifetime::{all_lifetimes, extract_stem, restrict_lifetimes};
use tn_slicer_core::refine::{refine, AnnealConfig};
use tn_slicer_core::slicing::{find_slices, FinderPool};

fn planning(c: &mut Criterion) {
    let tree = bench_tree(42, 40);
    let stem = extract_stem(&tree).unwrap();
    let lts = all_lifetimes(&tree).unwrap();
    let intervals = restrict_lifetimes(&tree, &stem, &lts).unwrap();
    let peak = stem.tensors.iter().map(|&e| tree.rank(e)).max().unwrap();
    let t = peak.saturating_sub(2).max(1);

    c.bench_function("lifetimes_40v", |b| b.iter(|| all_lifetimes(&tree).unwrap()));
    c.bench_function("stem_40v", |b| b.iter(|| extract_stem(&tree).unwrap()));
    c.bench_function("finder_40v", |b| {
        b.iter(|| find_slices(&tree, &stem, &intervals, t, FinderPool::Local).unwrap())
    });
    c.bench_function("greedy_40v", |b| b.iter(|| greedy_slicer(&tree, t).unwrap()));
    c.bench_function("refine_200iters_40v", |b| {
        let s0 = find_slices(&tree, &stem, &intervals, t, FinderPool::Local).unwrap();
        let cfg = AnnealConfig {
            max_outer_iters: 200,
            seed: 7,
            ..AnnealConfig::default()
        };
        b.iter(|| refine(&tree, &stem, &intervals, &s0, t, &cfg).unwrap())
    });
}

criterion_group!(benches, planning);
criterion_main!(benches);
