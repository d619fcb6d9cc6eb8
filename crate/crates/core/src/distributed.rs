//! Simulated distributed extension: vectors are split into P sub-partitions
//! (balanced clustering + closure assignment), sub-partitions are packed
//! onto M virtual machines by historical query access, and dispatch is
//! simulated to measure machine fan-out, load balance, and recall.
//!
//! Machines are in-process shards; network cost is reported as fan-out
//! counts, not latency.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::clustering::{balanced_kmeans, rng_filter, BalancedClusteringConfig};
use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::knn::{Neighbor, TopK};
use crate::navigator::CentroidTable;
use crate::searcher::dynamic_prune;
use crate::vectors::{dist_to_centroid, distance_unchecked, Dataset, Metric, VectorView};

/// Routing parameters for sub-partition selection, mirroring the searcher's
/// query-aware pruning.
#[derive(Debug, Clone, Copy)]
pub struct DispatchParams {
    pub k: usize,
    /// Sub-partitions the router may propose per query.
    pub max_subs: usize,
    /// `None` disables pruning (all `max_subs` candidates dispatch).
    pub epsilon2: Option<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub machines: usize,
    pub dim: usize,
    /// Row-major P x dim sub-partition centroids; empty for all-dispatch
    /// plans, which route to every machine.
    pub sub_centroids: Vec<f32>,
    /// Closure-replicated member ids per sub-partition.
    pub sub_members: Vec<Vec<u32>>,
    /// Machine owning each sub-partition.
    pub machine_of: Vec<u32>,
    /// Training-query hits per sub-partition (zero when no history given).
    pub predicted_access: Vec<u64>,
    /// Route every query to every machine (random-partition baseline).
    pub all_dispatch: bool,
}

impl PartitionPlan {
    pub fn num_subs(&self) -> usize {
        self.sub_members.len()
    }

    /// Distinct vector ids hosted per machine.
    pub fn machine_vectors(&self) -> Vec<Vec<u32>> {
        let mut hosted: Vec<Vec<u32>> = vec![Vec::new(); self.machines];
        for (sub, members) in self.sub_members.iter().enumerate() {
            hosted[self.machine_of[sub] as usize].extend_from_slice(members);
        }
        for list in hosted.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        hosted
    }
}

/// Best-fit-decreasing packing of `(access, size)` loads into `m` bins:
/// heaviest first, each into the currently lightest bin (access load first,
/// vector count as tie-breaker). Returns the bin per item.
pub fn best_fit_decreasing(loads: &[(u64, u64)], m: usize) -> Vec<u32> {
    let mut order: Vec<usize> = (0..loads.len()).collect();
    order.sort_by(|&a, &b| {
        loads[b]
            .0
            .cmp(&loads[a].0)
            .then(loads[b].1.cmp(&loads[a].1))
            .then(a.cmp(&b))
    });
    let mut bin_access = vec![0u64; m];
    let mut bin_size = vec![0u64; m];
    let mut assignment = vec![0u32; loads.len()];
    for item in order {
        let bin = (0..m)
            .min_by(|&a, &b| {
                bin_access[a]
                    .cmp(&bin_access[b])
                    .then(bin_size[a].cmp(&bin_size[b]))
                    .then(a.cmp(&b))
            })
            .unwrap();
        assignment[item] = bin as u32;
        bin_access[bin] += loads[item].0;
        bin_size[bin] += loads[item].1;
    }
    assignment
}

/// Round-robin packing in item order; the naive baseline the packing
/// invariant is checked against.
pub fn round_robin_packing(n_items: usize, m: usize) -> Vec<u32> {
    (0..n_items).map(|i| (i % m) as u32).collect()
}

/// Sub-partitions a query routes to: nearest sub-centroids, capped at
/// `max_subs`, then query-aware pruning.
fn route_query(
    q: VectorView<'_>,
    sub_centroids: &[f32],
    dim: usize,
    params: &DispatchParams,
    metric: Metric,
) -> Vec<u32> {
    let p = sub_centroids.len() / dim;
    let mut top = TopK::new(params.max_subs.min(p));
    for s in 0..p {
        top.push(Neighbor::new(
            s as u32,
            dist_to_centroid(q, &sub_centroids[s * dim..(s + 1) * dim], metric),
        ));
    }
    let sorted: Vec<(u32, f32)> = top.into_sorted().into_iter().map(|n| (n.id, n.dist)).collect();
    let kept = match params.epsilon2 {
        Some(eps) => dynamic_prune(&sorted, eps, metric),
        None => &sorted[..],
    };
    kept.iter().map(|&(s, _)| s).collect()
}

/// Builds the distributed plan: balanced clustering into P sub-partitions,
/// closure replication, access prediction from training queries, and
/// best-fit-decreasing packing onto M machines.
pub fn build_partition_plan(
    data: &Dataset,
    train_queries: Option<&Dataset>,
    p: usize,
    m: usize,
    cfg: &BalancedClusteringConfig,
    metric: Metric,
    dispatch: &DispatchParams,
) -> Result<PartitionPlan> {
    if m < 1 || p < m {
        return Err(Error::InvalidArgument(format!(
            "need P >= M >= 1, got P={p} M={m}"
        )));
    }
    if data.count() < p {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} vectors into {p} sub-partitions",
            data.count()
        )));
    }
    let dim = data.dim();
    let members: Vec<u32> = (0..data.count() as u32).collect();
    let km = balanced_kmeans(data, &members, p, cfg.lambda, cfg.max_iters, metric, cfg.seed)?;
    let sub_centroids = km.centroids;

    // Closure replication against sub-centroids. The RNG rule needs actual
    // vectors behind each candidate, so each sub-partition is represented
    // by its member closest to the mean.
    let mut rep_of_sub = vec![u32::MAX; p];
    let mut best_d = vec![f32::INFINITY; p];
    for (mi, &mem) in members.iter().enumerate() {
        let c = km.labels[mi] as usize;
        let d = dist_to_centroid(data.row(mem as usize), &sub_centroids[c * dim..(c + 1) * dim], metric);
        if d < best_d[c] {
            best_d[c] = d;
            rep_of_sub[c] = mem;
        }
    }
    let rep_table = CentroidTable::from_dataset(data, rep_of_sub)?;

    let memberships: Vec<Vec<u32>> = (0..data.count())
        .into_par_iter()
        .map(|v| {
            let x = data.row(v);
            let mut cands: Vec<(u32, f32)> = (0..p)
                .map(|s| {
                    (
                        s as u32,
                        dist_to_centroid(x, &sub_centroids[s * dim..(s + 1) * dim], metric),
                    )
                })
                .collect();
            cands.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let thr = metric.slack_threshold(cands[0].1, cfg.epsilon1);
            let mut cut = cands.len();
            for (i, &(_, d)) in cands.iter().enumerate() {
                if d > thr {
                    cut = i;
                    break;
                }
            }
            let within = &cands[..cut.max(1).min(cfg.max_replicas.max(1))];
            rng_filter(within, &rep_table, cfg.rng_rule, metric)
                .into_iter()
                .map(|(s, _)| s)
                .collect()
        })
        .collect();

    let mut sub_members: Vec<Vec<u32>> = vec![Vec::new(); p];
    for (v, subs) in memberships.iter().enumerate() {
        for &s in subs {
            sub_members[s as usize].push(v as u32);
        }
    }

    let mut predicted_access = vec![0u64; p];
    if let Some(train) = train_queries {
        if train.dim() != dim {
            return Err(Error::InvalidArgument("training query dim mismatch".into()));
        }
        let counts: Vec<Vec<u32>> = (0..train.count())
            .into_par_iter()
            .map(|qi| route_query(train.row(qi), &sub_centroids, dim, dispatch, metric))
            .collect();
        for subs in counts {
            for s in subs {
                predicted_access[s as usize] += 1;
            }
        }
    }

    let loads: Vec<(u64, u64)> = predicted_access
        .iter()
        .zip(&sub_members)
        .map(|(&a, mbrs)| (a, mbrs.len() as u64))
        .collect();
    let machine_of = best_fit_decreasing(&loads, m);

    Ok(PartitionPlan {
        machines: m,
        dim,
        sub_centroids,
        sub_members,
        machine_of,
        predicted_access,
        all_dispatch: false,
    })
}

/// Uniform random single-membership partition; dispatch always fans out to
/// every machine.
pub fn random_partition_baseline(data: &Dataset, m: usize, seed: u64) -> Result<PartitionPlan> {
    use rand::Rng;
    use rand::SeedableRng;
    if m < 1 {
        return Err(Error::InvalidArgument("need at least one machine".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut sub_members: Vec<Vec<u32>> = vec![Vec::new(); m];
    for v in 0..data.count() as u32 {
        sub_members[rng.random_range(0..m)].push(v);
    }
    Ok(PartitionPlan {
        machines: m,
        dim: data.dim(),
        sub_centroids: Vec::new(),
        sub_members,
        machine_of: (0..m as u32).collect(),
        predicted_access: vec![0; m],
        all_dispatch: true,
    })
}

#[derive(Debug, Clone)]
pub struct DispatchReport {
    /// Distinct vectors hosted per machine.
    pub machine_vectors: Vec<u64>,
    /// Queries dispatched to each machine.
    pub machine_accesses: Vec<u64>,
    pub mean_fanout: f64,
    pub recall: f64,
    pub queries: usize,
}

impl DispatchReport {
    pub fn max_mean_ratio(counts: &[u64]) -> f64 {
        let max = counts.iter().copied().max().unwrap_or(0) as f64;
        let mean = counts.iter().sum::<u64>() as f64 / counts.len().max(1) as f64;
        if mean == 0.0 {
            0.0
        } else {
            max / mean
        }
    }

    /// CSV block: machine, vectors, accesses.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("machine,vectors,accesses\n");
        for (mi, (v, a)) in self
            .machine_vectors
            .iter()
            .zip(&self.machine_accesses)
            .enumerate()
        {
            out.push_str(&format!("{mi},{v},{a}\n"));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "machines={} queries={} mean_fanout={:.3} recall={:.4} vector_max_mean={:.3} access_max_mean={:.3}",
            self.machine_vectors.len(),
            self.queries,
            self.mean_fanout,
            self.recall,
            Self::max_mean_ratio(&self.machine_vectors),
            Self::max_mean_ratio(&self.machine_accesses),
        )
    }
}

/// Simulates dispatch of every test query against the plan: route to
/// sub-partitions, fan out to the owning machines, exhaustive per-machine
/// top-k over hosted vectors, deterministic global merge. Recall is
/// measured against the provided ground truth.
pub fn simulate_dispatch(
    plan: &PartitionPlan,
    data: &Dataset,
    test_queries: &Dataset,
    gt: &GroundTruth,
    params: &DispatchParams,
) -> Result<DispatchReport> {
    if test_queries.is_empty() {
        return Err(Error::InvalidArgument("no test queries".into()));
    }
    if gt.num_queries() != test_queries.count() || gt.depth() < params.k {
        return Err(Error::InvalidArgument(
            "ground truth does not cover the test queries".into(),
        ));
    }
    let hosted = plan.machine_vectors();
    let per_query: Vec<(Vec<u32>, Vec<Neighbor>)> = (0..test_queries.count())
        .into_par_iter()
        .map(|qi| {
            let q = test_queries.row(qi);
            let machines: Vec<u32> = if plan.all_dispatch {
                (0..plan.machines as u32).collect()
            } else {
                let subs = route_query(q, &plan.sub_centroids, plan.dim, params, Metric::L2);
                let mut ms: Vec<u32> =
                    subs.iter().map(|&s| plan.machine_of[s as usize]).collect();
                ms.sort_unstable();
                ms.dedup();
                ms
            };
            let mut top = TopK::new(params.k);
            let mut seen = std::collections::HashSet::new();
            for &mi in &machines {
                for &v in &hosted[mi as usize] {
                    if seen.insert(v) {
                        top.push(Neighbor::new(
                            v,
                            distance_unchecked(q, data.row(v as usize), Metric::L2),
                        ));
                    }
                }
            }
            (machines, top.into_sorted())
        })
        .collect();

    let mut machine_accesses = vec![0u64; plan.machines];
    let mut fanout_total = 0u64;
    let mut hit_rows = Vec::with_capacity(per_query.len());
    for (machines, hits) in per_query {
        for &m in &machines {
            machine_accesses[m as usize] += 1;
        }
        fanout_total += machines.len() as u64;
        hit_rows.push(hits);
    }
    let recall = crate::eval::recall_at_r(&hit_rows, gt, params.k, crate::eval::DEFAULT_TIE_TOL)?;

    Ok(DispatchReport {
        machine_vectors: hosted.iter().map(|h| h.len() as u64).collect(),
        machine_accesses,
        mean_fanout: fanout_total as f64 / test_queries.count() as f64,
        recall,
        queries: test_queries.count(),
    })
}

/// Even three-way split by row position (train, valid, test).
pub fn split_three(ds: &Dataset) -> Result<(Dataset, Dataset, Dataset)> {
    let n = ds.count();
    let third = n / 3;
    let cut1 = third + usize::from(n % 3 >= 1);
    let cut2 = cut1 + third + usize::from(n % 3 >= 2);
    let slice = |lo: usize, hi: usize| -> Result<Dataset> {
        let dim = ds.dim();
        match ds.data() {
            crate::vectors::VectorData::F32(rows) => {
                Dataset::from_f32(dim, rows[lo * dim..hi * dim].to_vec())
            }
            crate::vectors::VectorData::U8(rows) => {
                Dataset::from_u8(dim, rows[lo * dim..hi * dim].to_vec())
            }
            crate::vectors::VectorData::I32(rows) => {
                Dataset::from_i32(dim, rows[lo * dim..hi * dim].to_vec())
            }
        }
    };
    Ok((slice(0, cut1)?, slice(cut1, cut2)?, slice(cut2, n)?))
}

const PLAN_MAGIC: &[u8; 4] = b"HVPL";
const PLAN_VERSION: u32 = 1;

/// Versioned binary plan file: header, machine map, centroids, member id
/// arrays, access counts, trailing CRC32.
pub fn save_plan(plan: &PartitionPlan, path: &Path) -> Result<()> {
    let mut body: Vec<u8> = Vec::new();
    body.write_u32::<LittleEndian>(PLAN_VERSION).unwrap();
    body.write_u32::<LittleEndian>(plan.machines as u32).unwrap();
    body.write_u32::<LittleEndian>(plan.num_subs() as u32).unwrap();
    body.write_u32::<LittleEndian>(plan.dim as u32).unwrap();
    body.push(u8::from(plan.all_dispatch));
    for &m in &plan.machine_of {
        body.write_u32::<LittleEndian>(m).unwrap();
    }
    body.write_u32::<LittleEndian>((plan.sub_centroids.len() / plan.dim.max(1)) as u32)
        .unwrap();
    for &c in &plan.sub_centroids {
        body.write_f32::<LittleEndian>(c).unwrap();
    }
    for members in &plan.sub_members {
        body.write_u32::<LittleEndian>(members.len() as u32).unwrap();
        for &v in members {
            body.write_u32::<LittleEndian>(v).unwrap();
        }
    }
    for &a in &plan.predicted_access {
        body.write_u64::<LittleEndian>(a).unwrap();
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(PLAN_MAGIC).map_err(|e| Error::io(path, e))?;
    file.write_all(&body).map_err(|e| Error::io(path, e))?;
    file.write_u32::<LittleEndian>(crc32fast::hash(&body))
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_plan(path: &Path) -> Result<PartitionPlan> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != PLAN_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let mut rest = Vec::new();
    file.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
    if rest.len() < 4 {
        return Err(Error::Corruption("plan file truncated".into()));
    }
    let (body, crc_bytes) = rest.split_at(rest.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc_bytes.try_into().unwrap()) {
        return Err(Error::Corruption("plan checksum mismatch".into()));
    }
    let mut cur = std::io::Cursor::new(body);
    let io = |e: std::io::Error| Error::io(path, e);
    let version = cur.read_u32::<LittleEndian>().map_err(io)?;
    if version != PLAN_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let machines = cur.read_u32::<LittleEndian>().map_err(io)? as usize;
    let p = cur.read_u32::<LittleEndian>().map_err(io)? as usize;
    let dim = cur.read_u32::<LittleEndian>().map_err(io)? as usize;
    let all_dispatch = cur.read_u8().map_err(io)? != 0;
    let mut machine_of = Vec::with_capacity(p);
    for _ in 0..p {
        machine_of.push(cur.read_u32::<LittleEndian>().map_err(io)?);
    }
    let n_centroids = cur.read_u32::<LittleEndian>().map_err(io)? as usize;
    let mut sub_centroids = vec![0.0f32; n_centroids * dim];
    cur.read_f32_into::<LittleEndian>(&mut sub_centroids).map_err(io)?;
    let mut sub_members = Vec::with_capacity(p);
    for _ in 0..p {
        let len = cur.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut members = Vec::with_capacity(len);
        for _ in 0..len {
            members.push(cur.read_u32::<LittleEndian>().map_err(io)?);
        }
        sub_members.push(members);
    }
    let mut predicted_access = Vec::with_capacity(p);
    for _ in 0..p {
        predicted_access.push(cur.read_u64::<LittleEndian>().map_err(io)?);
    }
    Ok(PartitionPlan {
        machines,
        dim,
        sub_centroids,
        sub_members,
        machine_of,
        predicted_access,
        all_dispatch,
    })
}
