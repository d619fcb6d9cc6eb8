//! Posting-list partition construction: hierarchical balanced clustering,
//! representative selection, closure multi-cluster assignment, and RNG-rule
//! replica filtering.
//!
//! The balanced k-means solver minimizes the usual quantization error plus a
//! size penalty `lambda * scale * current_size`, applied greedily in a fixed
//! scan order, so cluster sizes stay close to `n / k`. The hierarchy splits
//! nodes until a leaf fits the posting byte budget (or an explicit entry
//! budget used to control the number of lists). Closure assignment then
//! replicates boundary vectors into every list whose representative is
//! within `(1 + epsilon1)` of the closest one, capped by `max_replicas` and
//! thinned by the relative-neighborhood rule.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::knn::{bulk_topk_f32, Neighbor, TopK};
use crate::navigator::CentroidTable;
use crate::vectors::{dist_to_centroid, distance_unchecked, Dataset, ElemType, Metric, VectorView};

/// Posting byte limits from the reference configuration, expressed as entry
/// budgets so they scale with dimension: 48KB float lists and 12KB byte
/// lists at dim 128 hold 95 and 93 entries respectively.
pub const DEFAULT_ENTRIES_F32: usize = 95;
pub const DEFAULT_ENTRIES_U8: usize = 93;

/// Default posting byte limit for a dataset shape.
pub fn default_posting_limit_bytes(dim: usize, elem: ElemType) -> usize {
    let entry = 4 + dim * elem.size_bytes();
    match elem {
        ElemType::U8 => DEFAULT_ENTRIES_U8 * entry,
        _ => DEFAULT_ENTRIES_F32 * entry,
    }
}

/// Leaf entry budget that yields roughly `fraction * n` posting lists.
///
/// With near-balanced splits the leaves land between half the budget and the
/// budget, so the mean leaf is about three quarters of it.
pub fn leaf_entries_for_fraction(fraction: f64) -> usize {
    assert!(fraction > 0.0 && fraction <= 1.0);
    ((4.0 / (3.0 * fraction)).round() as usize).max(1)
}

/// Which relative-neighborhood variant filters closure replicas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngRule {
    /// Classical rule: a candidate is kept only if the vector is at least as
    /// close to it as every previously kept representative is.
    AllKept,
    /// Compare only against the immediately preceding candidate in distance
    /// order (ablation variant).
    PredecessorOnly,
    Disabled,
}

#[derive(Debug, Clone)]
pub struct BalancedClusteringConfig {
    /// Branching factor per hierarchy level.
    pub branch_k: usize,
    /// Balance penalty weight; 0 degrades to Lloyd's k-means.
    pub lambda: f32,
    pub max_iters: usize,
    /// Byte cap for every on-disk posting list.
    pub posting_limit_bytes: usize,
    /// Optional leaf entry budget for the hierarchy stop rule; when unset
    /// the stop rule derives from `posting_limit_bytes`.
    pub max_leaf_entries: Option<usize>,
    /// Closure replica cap per vector.
    pub max_replicas: usize,
    /// Closure slack on unsquared distance.
    pub epsilon1: f32,
    pub rng_rule: RngRule,
    /// Hierarchy recursion cap.
    pub max_depth: usize,
    pub seed: u64,
}

impl BalancedClusteringConfig {
    pub fn for_dataset(dim: usize, elem: ElemType) -> BalancedClusteringConfig {
        BalancedClusteringConfig {
            branch_k: 8,
            lambda: 1.0,
            max_iters: 16,
            posting_limit_bytes: default_posting_limit_bytes(dim, elem),
            max_leaf_entries: None,
            max_replicas: 8,
            epsilon1: 10.0,
            rng_rule: RngRule::AllKept,
            max_depth: 48,
            seed: 0,
        }
    }

    fn validate(&self, bytes_per_entry: usize) -> Result<usize> {
        if self.branch_k < 2 {
            return Err(Error::InvalidArgument("branch_k must be >= 2".into()));
        }
        if self.max_replicas < 1 {
            return Err(Error::InvalidArgument("max_replicas must be >= 1".into()));
        }
        if self.epsilon1 < 0.0 || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(
                "epsilon1 and lambda must be non-negative".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        let capacity = self.posting_limit_bytes / bytes_per_entry;
        if capacity == 0 {
            return Err(Error::InvalidArgument(format!(
                "posting_limit_bytes {} cannot hold a single {}-byte entry",
                self.posting_limit_bytes, bytes_per_entry
            )));
        }
        Ok(capacity)
    }

    fn leaf_limit_entries(&self, bytes_per_entry: usize) -> usize {
        self.max_leaf_entries
            .unwrap_or(self.posting_limit_bytes / bytes_per_entry)
            .max(1)
    }
}

/// One pre-closure leaf of the hierarchy: member ids plus the mean centroid.
#[derive(Debug, Clone)]
pub struct LeafPartition {
    pub centroid: Vec<f32>,
    pub members: Vec<u32>,
}

/// Final multi-membership partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Representative vector id per posting list; list ids are positions.
    pub rep_ids: Vec<u32>,
    /// Per vector id: posting lists it belongs to; the primary list first
    /// (the closest representative except for displaced vectors), then
    /// replicas in ascending distance order.
    pub assignment: Vec<Vec<u32>>,
    /// Per posting list: member count (replicas included).
    pub sizes: Vec<u32>,
    /// Pre-closure leaf sizes (empty when the partition did not come from
    /// the hierarchy, e.g. random-representative builds).
    pub leaf_sizes: Vec<u32>,
    /// Closure replicas dropped by the posting byte cap.
    pub dropped_replicas: u64,
    /// Vectors whose closest list was full of closer primaries and that
    /// were placed in their next-nearest candidate list instead.
    pub displaced_primaries: u64,
}

impl ClusterAssignment {
    pub fn num_lists(&self) -> usize {
        self.rep_ids.len()
    }

    pub fn mean_replicas(&self) -> f64 {
        if self.assignment.is_empty() {
            return 0.0;
        }
        let total: u64 = self.assignment.iter().map(|a| a.len() as u64).sum();
        total as f64 / self.assignment.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct KmeansResult {
    /// Row-major `k x dim` cluster means.
    pub centroids: Vec<f32>,
    /// Cluster id per entry of `members`.
    pub labels: Vec<u32>,
    pub sizes: Vec<u32>,
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 step
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mean_of(data: &Dataset, members: &[u32]) -> Vec<f32> {
    let dim = data.dim();
    let mut acc = vec![0.0f64; dim];
    for &m in members {
        match data.row(m as usize) {
            VectorView::F32(row) => {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += *v as f64;
                }
            }
            VectorView::U8(row) => {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += *v as f64;
                }
            }
            VectorView::I32(_) => unreachable!(),
        }
    }
    let n = members.len().max(1) as f64;
    acc.into_iter().map(|a| (a / n) as f32).collect()
}

/// k-means++ style seeding for L2; uniform distinct members otherwise.
fn seed_centroids(
    data: &Dataset,
    members: &[u32],
    k: usize,
    metric: Metric,
    seed: u64,
) -> Vec<f32> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = data.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = members[rng.random_range(0..members.len())];
    centroids.extend(data.row(first as usize).to_f32_vec());

    if metric == Metric::L2 {
        let mut best = vec![f32::INFINITY; members.len()];
        for _ in 1..k {
            let last = &centroids[centroids.len() - dim..];
            let last = last.to_vec();
            for (slot, &m) in best.iter_mut().zip(members.iter()) {
                let d = dist_to_centroid(data.row(m as usize), &last, Metric::L2);
                if d < *slot {
                    *slot = d;
                }
            }
            let total: f64 = best.iter().map(|&d| d as f64).sum();
            let pick = if total <= 0.0 {
                rng.random_range(0..members.len())
            } else {
                let mut target = rng.random_range(0.0..total);
                let mut idx = members.len() - 1;
                for (i, &d) in best.iter().enumerate() {
                    target -= d as f64;
                    if target <= 0.0 {
                        idx = i;
                        break;
                    }
                }
                idx
            };
            centroids.extend(data.row(members[pick] as usize).to_f32_vec());
        }
    } else {
        let mut chosen = vec![first];
        while chosen.len() < k {
            let c = members[rng.random_range(0..members.len())];
            if !chosen.contains(&c) {
                chosen.push(c);
                centroids.extend(data.row(c as usize).to_f32_vec());
            } else if chosen.len() == members.len() {
                break;
            }
        }
    }
    centroids
}

/// Penalized balanced k-means over a member subset of `data`.
///
/// Assignment alternates a greedy pass (fixed member order, online size
/// penalty) with mean recomputation until labels stabilize or `max_iters`
/// is hit. Empty clusters are reseeded from the farthest point of the
/// largest cluster, deterministically. Several seedings are tried and the
/// best penalized objective wins, which avoids balanced-but-skewed local
/// optima on small nodes.
pub fn balanced_kmeans(
    data: &Dataset,
    members: &[u32],
    k: usize,
    lambda: f32,
    max_iters: usize,
    metric: Metric,
    seed: u64,
) -> Result<KmeansResult> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if members.len() < k {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} vectors into {} clusters",
            members.len(),
            k
        )));
    }
    if k == 1 {
        return Ok(KmeansResult {
            centroids: mean_of(data, members),
            labels: vec![0; members.len()],
            sizes: vec![members.len() as u32],
        });
    }

    // Penalty scale: one expected-cluster-size worth of imbalance costs
    // lambda times the typical distance magnitude in this node.
    let global_mean = mean_of(data, members);
    let stride = (members.len() / 256).max(1);
    let mut spread = 0.0f64;
    let mut samples = 0usize;
    let mut i = 0;
    while i < members.len() {
        spread +=
            dist_to_centroid(data.row(members[i] as usize), &global_mean, metric).abs() as f64;
        samples += 1;
        i += stride;
    }
    spread /= samples.max(1) as f64;
    let target = members.len() as f64 / k as f64;
    let scale = (spread / target.max(1.0)) as f32;

    let restarts = if members.len() <= 4096 { 4 } else { 2 };
    let mut best: Option<(f64, KmeansResult)> = None;
    for r in 0..restarts {
        let run = kmeans_once(
            data,
            members,
            k,
            lambda,
            max_iters,
            metric,
            derive_seed(seed, r as u64),
            scale,
        );
        // Objective mirrors the greedy marginal cost: quantization error
        // plus the accumulated size penalty.
        let dim = data.dim();
        let mut obj = 0.0f64;
        for (mi, &m) in members.iter().enumerate() {
            let c = run.labels[mi] as usize;
            obj += dist_to_centroid(data.row(m as usize), &run.centroids[c * dim..(c + 1) * dim], metric)
                as f64;
        }
        for &s in &run.sizes {
            obj += (lambda * scale) as f64 * (s as f64 * (s as f64 - 1.0)) / 2.0;
        }
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, run));
        }
    }
    Ok(best.unwrap().1)
}

#[allow(clippy::too_many_arguments)]
fn kmeans_once(
    data: &Dataset,
    members: &[u32],
    k: usize,
    lambda: f32,
    max_iters: usize,
    metric: Metric,
    seed: u64,
    scale: f32,
) -> KmeansResult {
    let dim = data.dim();
    let mut centroids = seed_centroids(data, members, k, metric, seed);
    let mut labels = vec![u32::MAX; members.len()];
    let mut sizes = vec![0u32; k];
    let mut dists = vec![0.0f32; members.len() * k];

    for _ in 0..max_iters {
        // Parallel distance fill, then the sequential greedy scan that the
        // online size penalty requires.
        dists
            .par_chunks_mut(k * 1024)
            .zip(members.par_chunks(1024))
            .for_each(|(dchunk, mchunk)| {
                for (row, &m) in dchunk.chunks_mut(k).zip(mchunk) {
                    let v = data.row(m as usize);
                    for (c, slot) in row.iter_mut().enumerate() {
                        *slot = dist_to_centroid(v, &centroids[c * dim..(c + 1) * dim], metric);
                    }
                }
            });

        sizes.iter_mut().for_each(|s| *s = 0);
        let mut changed = false;
        for (mi, row) in dists.chunks(k).enumerate() {
            let mut best = 0usize;
            let mut best_cost = row[0] + lambda * scale * sizes[0] as f32;
            for (c, &d) in row.iter().enumerate().skip(1) {
                let cost = d + lambda * scale * sizes[c] as f32;
                if cost < best_cost {
                    best_cost = cost;
                    best = c;
                }
            }
            if labels[mi] != best as u32 {
                labels[mi] = best as u32;
                changed = true;
            }
            sizes[best] += 1;
        }

        // Centroid recomputation.
        let mut acc = vec![0.0f64; k * dim];
        for (mi, &m) in members.iter().enumerate() {
            let c = labels[mi] as usize;
            let slot = &mut acc[c * dim..(c + 1) * dim];
            match data.row(m as usize) {
                VectorView::F32(row) => {
                    for (a, v) in slot.iter_mut().zip(row) {
                        *a += *v as f64;
                    }
                }
                VectorView::U8(row) => {
                    for (a, v) in slot.iter_mut().zip(row) {
                        *a += *v as f64;
                    }
                }
                VectorView::I32(_) => unreachable!(),
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                let inv = 1.0 / sizes[c] as f64;
                for d in 0..dim {
                    centroids[c * dim + d] = (acc[c * dim + d] * inv) as f32;
                }
            }
        }

        // Empty-cluster repair: reseed from the farthest member of the
        // largest cluster.
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let donor = (0..k)
                .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
                .unwrap();
            if sizes[donor] <= 1 {
                continue;
            }
            let dc = &centroids[donor * dim..(donor + 1) * dim];
            let mut far_mi = usize::MAX;
            let mut far_d = f32::NEG_INFINITY;
            for (mi, &m) in members.iter().enumerate() {
                if labels[mi] == donor as u32 {
                    let d = dist_to_centroid(data.row(m as usize), dc, metric);
                    if d > far_d {
                        far_d = d;
                        far_mi = mi;
                    }
                }
            }
            labels[far_mi] = c as u32;
            sizes[donor] -= 1;
            sizes[c] += 1;
            let v = data.row(members[far_mi] as usize).to_f32_vec();
            centroids[c * dim..(c + 1) * dim].copy_from_slice(&v);
            changed = true;
        }

        if !changed {
            break;
        }
    }

    KmeansResult {
        centroids,
        labels,
        sizes,
    }
}

/// Recursive balanced splitting until every leaf fits the entry budget.
///
/// A node splits into `clamp(ceil(size / budget), 2, branch_k)` children, so
/// deep levels branch fully while the last level produces leaves that just
/// fit, which keeps the leaf count close to `n / budget`.
pub fn hierarchical_balanced_cluster(
    data: &Dataset,
    cfg: &BalancedClusteringConfig,
) -> Result<Vec<LeafPartition>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let bpe = data.bytes_per_entry();
    cfg.validate(bpe)?;
    let limit = cfg.leaf_limit_entries(bpe);
    let members: Vec<u32> = (0..data.count() as u32).collect();
    let mut leaves = Vec::new();
    split_node(data, cfg, members, limit, 0, cfg.seed, &mut leaves)?;
    Ok(leaves)
}

fn split_node(
    data: &Dataset,
    cfg: &BalancedClusteringConfig,
    mut members: Vec<u32>,
    limit: usize,
    depth: usize,
    seed: u64,
    out: &mut Vec<LeafPartition>,
) -> Result<()> {
    if members.len() <= limit {
        members.sort_unstable();
        out.push(LeafPartition {
            centroid: mean_of(data, &members),
            members,
        });
        return Ok(());
    }
    if depth >= cfg.max_depth {
        return Err(Error::Internal(format!(
            "clustering recursion exceeded depth {} with {} members above the leaf budget {}",
            cfg.max_depth,
            members.len(),
            limit
        )));
    }
    let branch = members.len().div_ceil(limit).clamp(2, cfg.branch_k);
    let res = balanced_kmeans(
        data,
        &members,
        branch,
        cfg.lambda,
        cfg.max_iters,
        Metric::L2,
        seed,
    )?;
    let mut children: Vec<Vec<u32>> = vec![Vec::new(); branch];
    for (mi, &m) in members.iter().enumerate() {
        children[res.labels[mi] as usize].push(m);
    }
    for (ci, child) in children.into_iter().enumerate() {
        if child.is_empty() {
            continue;
        }
        split_node(
            data,
            cfg,
            child,
            limit,
            depth + 1,
            derive_seed(seed, ci as u64 + 1),
            out,
        )?;
    }
    Ok(())
}

/// Member id closest to the cluster mean; ties go to the smallest id.
pub fn select_representative(
    data: &Dataset,
    members: &[u32],
    centroid: &[f32],
    metric: Metric,
) -> Result<u32> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("empty cluster".into()));
    }
    let mut best = members[0];
    let mut best_d = f32::INFINITY;
    for &m in members {
        let d = dist_to_centroid(data.row(m as usize), centroid, metric);
        if d < best_d || (d == best_d && m < best) {
            best_d = d;
            best = m;
        }
    }
    Ok(best)
}

/// Applies the relative-neighborhood rule to a distance-ordered candidate
/// list. The first candidate is always kept; the output is a subsequence of
/// the input.
pub fn rng_filter(
    candidates: &[(u32, f32)],
    table: &CentroidTable,
    rule: RngRule,
    metric: Metric,
) -> Vec<(u32, f32)> {
    if candidates.len() <= 1 || rule == RngRule::Disabled {
        return candidates.to_vec();
    }
    let mut kept: Vec<(u32, f32)> = vec![candidates[0]];
    match rule {
        RngRule::AllKept => {
            for &(cid, d) in &candidates[1..] {
                let rep_c = table.rep(cid as usize);
                let ok = kept.iter().all(|&(pid, _)| {
                    d <= distance_unchecked(table.rep(pid as usize), rep_c, metric)
                });
                if ok {
                    kept.push((cid, d));
                }
            }
        }
        RngRule::PredecessorOnly => {
            for (j, &(cid, d)) in candidates.iter().enumerate().skip(1) {
                let prev = candidates[j - 1].0;
                let inter = distance_unchecked(
                    table.rep(prev as usize),
                    table.rep(cid as usize),
                    metric,
                );
                if d <= inter {
                    kept.push((cid, d));
                }
            }
        }
        RngRule::Disabled => unreachable!(),
    }
    kept
}

/// Applies the closure slack, replica cap, and RNG filter to a sorted
/// candidate list. Shared by the exact and bulk assignment paths.
fn closure_filter(
    sorted: &[(u32, f32)],
    table: &CentroidTable,
    epsilon1: f32,
    max_replicas: usize,
    rule: RngRule,
    metric: Metric,
) -> Vec<u32> {
    debug_assert!(!sorted.is_empty());
    let threshold = metric.slack_threshold(sorted[0].1, epsilon1);
    let mut cut = sorted.len();
    for (i, &(_, d)) in sorted.iter().enumerate() {
        if d > threshold {
            cut = i;
            break;
        }
    }
    let within = &sorted[..cut.max(1).min(max_replicas.max(1)).min(sorted.len())];
    rng_filter(within, table, rule, metric)
        .into_iter()
        .map(|(cid, _)| cid)
        .collect()
}

/// Posting lists for one vector: every representative within the closure
/// slack of the closest, in ascending distance order, capped and RNG
/// filtered. The closest list is always first.
pub fn closure_assign(
    x: VectorView<'_>,
    table: &CentroidTable,
    epsilon1: f32,
    max_replicas: usize,
    rule: RngRule,
    metric: Metric,
) -> Vec<u32> {
    let mut cands: Vec<(u32, f32)> = (0..table.len())
        .map(|i| (i as u32, distance_unchecked(x, table.rep(i), metric)))
        .collect();
    cands.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    closure_filter(&cands, table, epsilon1, max_replicas, rule, metric)
}

/// Number of nearest representatives fetched per vector in the bulk path;
/// only `max_replicas` can survive the closure rules.
fn closure_candidates(max_replicas: usize, n_reps: usize) -> usize {
    (2 * max_replicas).max(16).min(n_reps)
}

/// Closure-assigns every vector of `data` to the given representatives and
/// applies the posting byte cap.
///
/// Every vector lands in at least one list. The byte cap is strict: when a
/// list's own Voronoi members already exceed it, the members farthest from
/// the representative are displaced to their next-nearest candidate list
/// with room (counted in `displaced_primaries`). Overflowing closure
/// replicas are skipped in rank-major order (all second choices before any
/// third choice), so earlier ranks win deterministically.
pub fn assign_to_reps(
    data: &Dataset,
    rep_ids: Vec<u32>,
    leaf_sizes: Vec<u32>,
    cfg: &BalancedClusteringConfig,
    metric: Metric,
) -> Result<ClusterAssignment> {
    if rep_ids.is_empty() {
        return Err(Error::InvalidArgument("no representatives".into()));
    }
    let capacity = cfg.validate(data.bytes_per_entry())?;
    let table = CentroidTable::from_dataset(data, rep_ids.clone())?;
    let n = data.count();
    let n_reps = rep_ids.len();
    let fetch = closure_candidates(cfg.max_replicas, n_reps);

    struct PerVector {
        /// Nearest representatives, ascending (distance, id).
        cands: Vec<(u32, f32)>,
        /// Closure lists after slack, cap, and RNG filtering.
        closure: Vec<u32>,
    }

    let rank = |sorted: Vec<(u32, f32)>| -> PerVector {
        let closure = closure_filter(
            &sorted,
            &table,
            cfg.epsilon1,
            cfg.max_replicas,
            cfg.rng_rule,
            metric,
        );
        PerVector {
            cands: sorted,
            closure,
        }
    };
    let per_vector: Vec<PerVector> = match data.elem_type() {
        ElemType::F32 => {
            let reps_rows = table.rows_f32().expect("f32 table");
            let cands = bulk_topk_f32(
                reps_rows,
                data.as_f32_rows().expect("f32 data"),
                data.dim(),
                fetch,
                8,
                metric,
            );
            cands
                .into_par_iter()
                .map(|cs| rank(cs.into_iter().map(|n| (n.id, n.dist)).collect()))
                .collect()
        }
        _ => (0..n)
            .into_par_iter()
            .map(|v| {
                let x = data.row(v);
                let mut top = TopK::new(fetch);
                for i in 0..n_reps {
                    top.push(Neighbor::new(
                        i as u32,
                        distance_unchecked(x, table.rep(i), metric),
                    ));
                }
                rank(top.into_sorted().into_iter().map(|n| (n.id, n.dist)).collect())
            })
            .collect(),
    };

    // Primary placement with a strict byte cap. Each list first takes the
    // Voronoi members closest to its representative; members beyond the cap
    // move to their next-nearest candidate list with room.
    let mut sizes = vec![0u32; n_reps];
    let mut kept: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut voronoi: Vec<Vec<(f32, u32)>> = vec![Vec::new(); n_reps];
    for (v, pv) in per_vector.iter().enumerate() {
        let (c0, d0) = pv.cands[0];
        voronoi[c0 as usize].push((d0, v as u32));
    }
    let mut displaced: Vec<u32> = Vec::new();
    for (c, members) in voronoi.iter_mut().enumerate() {
        members.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let take = members.len().min(capacity);
        for &(_, v) in &members[..take] {
            kept[v as usize].push(c as u32);
        }
        sizes[c] = take as u32;
        displaced.extend(members[take..].iter().map(|&(_, v)| v));
    }
    displaced.sort_unstable();
    let displaced_primaries = displaced.len() as u64;
    for v in displaced {
        let pv = &per_vector[v as usize];
        let slot = pv.cands[1..]
            .iter()
            .find(|&&(c, _)| (sizes[c as usize] as usize) < capacity)
            .or_else(|| {
                // Every candidate full: overflow the least-loaded one
                // rather than lose coverage.
                pv.cands[1..].iter().min_by_key(|&&(c, _)| sizes[c as usize])
            })
            .unwrap_or(&pv.cands[0]);
        sizes[slot.0 as usize] += 1;
        kept[v as usize].push(slot.0);
    }

    // Closure replicas, rank-major: all second choices before any third.
    let mut dropped = 0u64;
    let max_rank = per_vector.iter().map(|p| p.closure.len()).max().unwrap_or(1);
    for rank in 1..max_rank {
        for (v, pv) in per_vector.iter().enumerate() {
            if let Some(&c) = pv.closure.get(rank) {
                if kept[v].contains(&c) {
                    continue;
                }
                if (sizes[c as usize] as usize) < capacity {
                    sizes[c as usize] += 1;
                    kept[v].push(c);
                } else {
                    dropped += 1;
                }
            }
        }
    }

    Ok(ClusterAssignment {
        rep_ids,
        assignment: kept,
        sizes,
        leaf_sizes,
        dropped_replicas: dropped,
        displaced_primaries,
    })
}

/// Full partition build: hierarchy, representative replacement, closure
/// assignment. Every vector lands in at least one list, its closest
/// representative's whenever the byte cap allows.
pub fn build_partition(
    data: &Dataset,
    cfg: &BalancedClusteringConfig,
    metric: Metric,
) -> Result<ClusterAssignment> {
    let leaves = hierarchical_balanced_cluster(data, cfg)?;
    let mut rep_ids = Vec::with_capacity(leaves.len());
    let mut leaf_sizes = Vec::with_capacity(leaves.len());
    for leaf in &leaves {
        rep_ids.push(select_representative(data, &leaf.members, &leaf.centroid, metric)?);
        leaf_sizes.push(leaf.members.len() as u32);
    }
    assign_to_reps(data, rep_ids, leaf_sizes, cfg, metric)
}
