//! Shared fixtures for the integration suites: two fixed-seed synthetic
//! benchmarks and the indexes built over them.
//!
//! Benchmark A imitates image-descriptor data: 128-dim float vectors in
//! clumps of varying tightness with non-negative skewed coordinates.
//! Benchmark B is a plain Gaussian mixture, 100k x 64 float. Both come with
//! query sets drawn from the same mixture and exact ground truth.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hivf::clustering::{
    hierarchical_balanced_cluster, leaf_entries_for_fraction, select_representative,
    BalancedClusteringConfig, LeafPartition,
};
use hivf::eval::{brute_force_topk, GroundTruth};
use hivf::index::{build_index, build_index_with_reps, BuildReport, IndexConfig};
use hivf::navigator::NavigatorStrategy;
use hivf::vectors::{Dataset, Metric};

pub const BENCH_N: usize = 100_000;
pub const BENCH_QUERIES: usize = 1_000;

fn normal(rng: &mut ChaCha8Rng) -> f32 {
    // Box-Muller
    let u1: f32 = rng.random_range(f32::EPSILON..1.0);
    let u2: f32 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f32::consts::PI * u2).cos()
}

/// Descriptor-like mixture: centers with skewed non-negative coordinates,
/// per-cluster spread, values clamped to [0, 255].
fn draw_descriptor(rng: &mut ChaCha8Rng, center: &[f32], sigma: f32, out: &mut Vec<f32>) {
    for &c in center {
        out.push((c + sigma * normal(rng)).clamp(0.0, 255.0));
    }
}

/// Benchmark A: 100k base + 1k query, 128-dim, SIFT-flavored synthetic.
///
/// Clumps come in two kinds: small tight ones and large diffuse ones, so
/// query difficulty spans the wide range the dynamic-pruning rule is
/// designed around (easy queries resolve in a couple of lists, hard ones
/// need dozens).
pub fn bench_a_data() -> (Dataset, Dataset) {
    let dim = 128;
    let n_centers = 2048;
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let mut centers = Vec::with_capacity(n_centers * dim);
    for _ in 0..n_centers * dim {
        let u: f32 = rng.random_range(0.0..1.0);
        centers.push(u * u * 160.0);
    }
    let mut tight_ids = Vec::new();
    let mut broad_ids = Vec::new();
    let sigmas: Vec<f32> = (0..n_centers)
        .map(|c| {
            if rng.random_bool(0.5) {
                tight_ids.push(c);
                rng.random_range(2.0..8.0)
            } else {
                broad_ids.push(c);
                rng.random_range(60.0..110.0)
            }
        })
        .collect();

    // Tight clumps hold few points (a couple of posting lists each); broad
    // clumps carry the bulk of the data.
    let mut base = Vec::with_capacity(BENCH_N * dim);
    for _ in 0..BENCH_N {
        let c = if rng.random_bool(0.3) {
            tight_ids[rng.random_range(0..tight_ids.len())]
        } else {
            broad_ids[rng.random_range(0..broad_ids.len())]
        };
        draw_descriptor(&mut rng, &centers[c * dim..(c + 1) * dim], sigmas[c], &mut base);
    }
    // Queries over-sample the tight clumps, like production workloads that
    // keep hitting well-covered content.
    let mut queries = Vec::with_capacity(BENCH_QUERIES * dim);
    for _ in 0..BENCH_QUERIES {
        let c = if rng.random_bool(0.5) {
            tight_ids[rng.random_range(0..tight_ids.len())]
        } else {
            broad_ids[rng.random_range(0..broad_ids.len())]
        };
        draw_descriptor(&mut rng, &centers[c * dim..(c + 1) * dim], sigmas[c], &mut queries);
    }
    (
        Dataset::from_f32(dim, base).unwrap(),
        Dataset::from_f32(dim, queries).unwrap(),
    )
}

/// Benchmark B: 100k base + 2k queries (first half test, second half
/// train), 64-dim Gaussian mixture.
pub fn bench_b_data() -> (Dataset, Dataset, Dataset) {
    let dim = 64;
    let n_centers = 512;
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0B);
    let mut centers = Vec::with_capacity(n_centers * dim);
    for _ in 0..n_centers * dim {
        centers.push(4.0 * normal(&mut rng));
    }
    let sigma = 1.0f32;

    let draw_set = |n: usize, rng: &mut ChaCha8Rng| {
        let mut vals = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let c = rng.random_range(0..n_centers);
            for d in 0..dim {
                vals.push(centers[c * dim + d] + sigma * normal(rng));
            }
        }
        Dataset::from_f32(dim, vals).unwrap()
    };
    let base = draw_set(BENCH_N, &mut rng);
    let test_q = draw_set(BENCH_QUERIES, &mut rng);
    let train_q = draw_set(BENCH_QUERIES, &mut rng);
    (base, test_q, train_q)
}

pub struct BenchA {
    pub base: Dataset,
    pub queries: Dataset,
    pub gt10: GroundTruth,
    pub leaves: Vec<LeafPartition>,
    pub rep_ids: Vec<u32>,
}

pub struct BuiltIndex {
    pub dir: PathBuf,
    pub report: BuildReport,
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Clustering configuration for benchmark A: reference defaults with the
/// representative fraction set to 16% of the points.
pub fn bench_a_clustering(seed: u64) -> BalancedClusteringConfig {
    let mut cfg = BalancedClusteringConfig::for_dataset(128, hivf::ElemType::F32);
    cfg.max_leaf_entries = Some(leaf_entries_for_fraction(0.16));
    cfg.seed = seed;
    cfg
}

pub fn bench_a() -> &'static BenchA {
    static CELL: OnceLock<BenchA> = OnceLock::new();
    CELL.get_or_init(|| {
        let (base, queries) = bench_a_data();
        let gt10 = brute_force_topk(&base, &queries, 10, Metric::L2).unwrap();
        let cfg = bench_a_clustering(42);
        let leaves = hierarchical_balanced_cluster(&base, &cfg).unwrap();
        let rep_ids = leaves
            .iter()
            .map(|l| select_representative(&base, &l.members, &l.centroid, Metric::L2).unwrap())
            .collect();
        BenchA {
            base,
            queries,
            gt10,
            leaves,
            rep_ids,
        }
    })
}

/// Benchmark A index at a given replica cap, sharing the fixture's
/// representatives so ablations differ only in closure replication.
fn build_a_index(name: &str, replicas: usize, strategy: NavigatorStrategy) -> BuiltIndex {
    let a = bench_a();
    let mut cfg = IndexConfig {
        metric: Metric::L2,
        clustering: bench_a_clustering(42),
        navigator: Default::default(),
    };
    cfg.clustering.max_replicas = replicas;
    cfg.navigator.strategy = strategy;
    cfg.navigator.seed = 42;
    let dir = scratch_dir(name);
    let report = build_index_with_reps(&a.base, a.rep_ids.clone(), &cfg, &dir).unwrap();
    BuiltIndex { dir, report }
}

/// Default benchmark A index: replicas 8, graph navigator.
pub fn a_index() -> &'static BuiltIndex {
    static CELL: OnceLock<BuiltIndex> = OnceLock::new();
    CELL.get_or_init(|| build_a_index("a_index", 8, NavigatorStrategy::NeighborGraph))
}

/// Replica-capped variants with the exact navigator (ablations).
pub fn a_index_replicas(replicas: usize) -> &'static BuiltIndex {
    static R1: OnceLock<BuiltIndex> = OnceLock::new();
    static R4: OnceLock<BuiltIndex> = OnceLock::new();
    static R8: OnceLock<BuiltIndex> = OnceLock::new();
    match replicas {
        1 => R1.get_or_init(|| build_a_index("a_index_r1", 1, NavigatorStrategy::ExactScan)),
        4 => R4.get_or_init(|| build_a_index("a_index_r4", 4, NavigatorStrategy::ExactScan)),
        8 => R8.get_or_init(|| build_a_index("a_index_r8", 8, NavigatorStrategy::ExactScan)),
        _ => panic!("no fixture for {replicas} replicas"),
    }
}

/// Random-representative index with the same representative count as the
/// balanced build (centroid-selection ablation).
pub fn a_index_random_reps() -> &'static BuiltIndex {
    static CELL: OnceLock<BuiltIndex> = OnceLock::new();
    CELL.get_or_init(|| {
        let a = bench_a();
        let n_reps = a.rep_ids.len();
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        let picks = rand::seq::index::sample(&mut rng, a.base.count(), n_reps);
        let mut rep_ids: Vec<u32> = picks.into_iter().map(|i| i as u32).collect();
        rep_ids.sort_unstable();
        let mut cfg = IndexConfig {
            metric: Metric::L2,
            clustering: bench_a_clustering(42),
            navigator: Default::default(),
        };
        cfg.navigator.strategy = NavigatorStrategy::ExactScan;
        let dir = scratch_dir("a_index_rand");
        let report = build_index_with_reps(&a.base, rep_ids, &cfg, &dir).unwrap();
        BuiltIndex { dir, report }
    })
}

pub struct BenchB {
    pub base: Dataset,
    pub test_queries: Dataset,
    pub train_queries: Dataset,
    pub gt10: GroundTruth,
}

pub fn bench_b() -> &'static BenchB {
    static CELL: OnceLock<BenchB> = OnceLock::new();
    CELL.get_or_init(|| {
        let (base, test_queries, train_queries) = bench_b_data();
        let gt10 = brute_force_topk(&base, &test_queries, 10, Metric::L2).unwrap();
        BenchB {
            base,
            test_queries,
            train_queries,
            gt10,
        }
    })
}

/// Benchmark B index: reference posting-limit leaf rule, exact navigator.
pub fn b_index() -> &'static BuiltIndex {
    static CELL: OnceLock<BuiltIndex> = OnceLock::new();
    CELL.get_or_init(|| {
        let b = bench_b();
        let mut cfg = IndexConfig::for_dataset(&b.base);
        cfg.clustering.seed = 4242;
        cfg.navigator.strategy = NavigatorStrategy::ExactScan;
        cfg.navigator.seed = 4242;
        let dir = scratch_dir("b_index");
        let report = build_index(&b.base, &cfg, &dir).unwrap();
        BuiltIndex { dir, report }
    })
}

/// Linear interpolation of mean lists probed at a target recall along a
/// sweep curve (rows ordered by increasing probes).
pub fn probes_at_recall(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    for w in curve.windows(2) {
        let (p0, r0) = w[0];
        let (p1, r1) = w[1];
        if r0 <= target && target <= r1 {
            if (r1 - r0).abs() < 1e-12 {
                return Some(p0);
            }
            return Some(p0 + (p1 - p0) * (target - r0) / (r1 - r0));
        }
    }
    curve
        .first()
        .and_then(|&(p, r)| if r >= target { Some(p) } else { None })
}
