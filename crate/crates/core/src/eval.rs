//! Evaluation harness: exact ground truth, tie-aware recall, VQ capacity,
//! latency percentiles, and parameter sweeps.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::knn::{scalar_topk, Neighbor};
use crate::searcher::{SearchParams, Searcher};
use crate::vectors::io::{read_vector_file, write_vector_file, VecFormat};
use crate::vectors::{Dataset, Metric};

/// Relative tolerance for float distance ties in recall; integer (u8)
/// distance accumulations should use 0.0 for exact equality.
pub const DEFAULT_TIE_TOL: f32 = 1e-6;

/// Exact top-R ids and distances per query. Distances are required for the
/// tie-aware recall rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub ids: Vec<Vec<u32>>,
    pub dists: Vec<Vec<f32>>,
}

impl GroundTruth {
    pub fn num_queries(&self) -> usize {
        self.ids.len()
    }

    pub fn depth(&self) -> usize {
        self.ids.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Writes the conventional pair: `<prefix>.ivecs` ids and
    /// `<prefix>.fvecs` distances.
    pub fn save(&self, prefix: &Path) -> Result<()> {
        let depth = self.depth();
        let mut flat_ids: Vec<i32> = Vec::with_capacity(self.ids.len() * depth);
        let mut flat_d: Vec<f32> = Vec::with_capacity(self.ids.len() * depth);
        for (row_ids, row_d) in self.ids.iter().zip(&self.dists) {
            if row_ids.len() != depth || row_d.len() != depth {
                return Err(Error::InvalidArgument(
                    "ragged ground truth cannot be saved".into(),
                ));
            }
            flat_ids.extend(row_ids.iter().map(|&v| v as i32));
            flat_d.extend(row_d.iter());
        }
        let ids_ds = Dataset::from_i32(depth, flat_ids)?;
        let d_ds = Dataset::from_f32(depth, flat_d)?;
        write_vector_file(&ids_ds, &with_ext(prefix, "ivecs"), VecFormat::Ivecs)?;
        write_vector_file(&d_ds, &with_ext(prefix, "fvecs"), VecFormat::Fvecs)?;
        Ok(())
    }

    pub fn load(prefix: &Path) -> Result<GroundTruth> {
        let ids_ds = read_vector_file(&with_ext(prefix, "ivecs"), VecFormat::Ivecs)?;
        let d_ds = read_vector_file(&with_ext(prefix, "fvecs"), VecFormat::Fvecs)?;
        if ids_ds.count() != d_ds.count() || ids_ds.dim() != d_ds.dim() {
            return Err(Error::InvalidArgument(
                "ground truth id and distance files disagree".into(),
            ));
        }
        let depth = ids_ds.dim();
        let ids_flat = ids_ds.as_i32_rows().unwrap();
        let d_flat = d_ds.as_f32_rows().unwrap();
        let mut ids = Vec::with_capacity(ids_ds.count());
        let mut dists = Vec::with_capacity(ids_ds.count());
        for qi in 0..ids_ds.count() {
            ids.push(
                ids_flat[qi * depth..(qi + 1) * depth]
                    .iter()
                    .map(|&v| v as u32)
                    .collect(),
            );
            dists.push(d_flat[qi * depth..(qi + 1) * depth].to_vec());
        }
        Ok(GroundTruth { ids, dists })
    }
}

fn with_ext(prefix: &Path, ext: &str) -> std::path::PathBuf {
    let mut p = prefix.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    std::path::PathBuf::from(p)
}

/// Exhaustive top-k over the dataset; ties by ascending id. This is the
/// recall oracle, so it uses the plain scalar distance kernel.
pub fn brute_force_topk(
    base: &Dataset,
    queries: &Dataset,
    k: usize,
    metric: Metric,
) -> Result<GroundTruth> {
    let rows = scalar_topk(base, queries, k, metric)?;
    let mut ids = Vec::with_capacity(rows.len());
    let mut dists = Vec::with_capacity(rows.len());
    for row in rows {
        ids.push(row.iter().map(|n| n.id).collect());
        dists.push(row.iter().map(|n| n.dist).collect());
    }
    Ok(GroundTruth { ids, dists })
}

fn ties_match(a: f32, b: f32, tol: f32) -> bool {
    if tol == 0.0 {
        return a == b;
    }
    let scale = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() <= tol * scale
}

/// Hits of one result row against one ground-truth row, with equal-distance
/// substitution: a returned id scores if it is a true top-R id, or if its
/// distance ties an unmatched ground-truth slot. Each slot matches once.
pub fn recall_hits_one(
    returned: &[Neighbor],
    gt_ids: &[u32],
    gt_dists: &[f32],
    r: usize,
    tie_tol: f32,
) -> usize {
    let mut matched = vec![false; r];
    let mut hits = 0usize;
    for h in returned.iter().take(r) {
        if let Some(pos) = gt_ids[..r].iter().position(|&g| g == h.id) {
            if !matched[pos] {
                matched[pos] = true;
                hits += 1;
                continue;
            }
        }
        if let Some(pos) = (0..r).find(|&j| !matched[j] && ties_match(h.dist, gt_dists[j], tie_tol))
        {
            matched[pos] = true;
            hits += 1;
        }
    }
    hits
}

/// Tie-aware recall@R averaged over queries.
pub fn recall_at_r(
    results: &[Vec<Neighbor>],
    gt: &GroundTruth,
    r: usize,
    tie_tol: f32,
) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidArgument("R must be >= 1".into()));
    }
    if gt.depth() < r {
        return Err(Error::InvalidArgument(format!(
            "ground truth depth {} is shallower than R = {r}",
            gt.depth()
        )));
    }
    if results.len() != gt.num_queries() {
        return Err(Error::InvalidArgument(format!(
            "{} result rows vs {} ground truth rows",
            results.len(),
            gt.num_queries()
        )));
    }
    let mut total = 0.0f64;
    for (row, (gt_ids, gt_d)) in results.iter().zip(gt.ids.iter().zip(&gt.dists)) {
        total += recall_hits_one(row, gt_ids, gt_d, r, tie_tol) as f64 / r as f64;
    }
    Ok(total / results.len().max(1) as f64)
}

/// Vector-query capacity: vectors per KB of serving memory times queries
/// per second.
pub fn vq_capacity(num_vectors: u64, total_kb: f64, qps: f64) -> f64 {
    if total_kb <= 0.0 {
        return 0.0;
    }
    num_vectors as f64 / total_kb * qps
}

/// Resident memory of this process in KB, from /proc (Linux): the peak
/// (VmHWM) when the kernel reports it, otherwise the current VmRSS.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let field = |name: &str| -> Option<u64> {
        status
            .lines()
            .find_map(|l| l.strip_prefix(name))
            .and_then(|rest| rest.trim().trim_end_matches(" kB").trim().parse().ok())
    };
    field("VmHWM:").or_else(|| field("VmRSS:"))
}

/// Nearest-rank percentile of a sorted slice; `p` in [0, 100].
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// How serving memory for VQ was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VqMemorySource {
    /// Peak RSS of the process.
    Measured,
    /// `count * bytes_per_vector / 1024` fallback.
    Formula,
}

impl VqMemorySource {
    pub fn name(self) -> &'static str {
        match self {
            VqMemorySource::Measured => "measured",
            VqMemorySource::Formula => "formula",
        }
    }
}

/// One sweep grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub max_k: usize,
    /// `None` means pruning disabled.
    pub epsilon2: Option<f32>,
    /// (R, recall@R) pairs in requested order.
    pub recalls: Vec<(usize, f64)>,
    pub latency_mean_ms: f64,
    pub latency_p50_ms: f64,
    pub latency_p90_ms: f64,
    pub latency_p99_ms: f64,
    pub qps: f64,
    pub vq: f64,
    pub vq_mem_kb: f64,
    pub vq_mem_source: String,
    pub mean_lists_probed: f64,
    pub mean_bytes_read: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub k: usize,
    /// Recall depths to report; all must be <= ground truth depth.
    pub rs: Vec<usize>,
    pub max_ks: Vec<usize>,
    /// Epsilon2 settings to cross with `max_ks`; `None` = pruning off.
    pub epsilon2s: Vec<Option<f32>>,
    pub tie_tol: f32,
    /// Use the formula fallback instead of measured peak RSS.
    pub vq_formula: bool,
}

/// Evaluates one parameter point end to end.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_point(
    searcher: &Searcher,
    queries: &Dataset,
    gt: &GroundTruth,
    k: usize,
    max_k: usize,
    epsilon2: Option<f32>,
    rs: &[usize],
    tie_tol: f32,
    vq_formula: bool,
) -> Result<EvalRow> {
    let params = SearchParams {
        k,
        max_k,
        epsilon2,
        ef: None,
    };
    let wall = Instant::now();
    let results = searcher.batch_search(queries, &params)?;
    let elapsed = wall.elapsed().as_secs_f64();

    let hits: Vec<Vec<Neighbor>> = results.iter().map(|r| r.hits.clone()).collect();
    let mut recalls = Vec::with_capacity(rs.len());
    for &r in rs {
        recalls.push((r, recall_at_r(&hits, gt, r, tie_tol)?));
    }

    let mut lat: Vec<f64> = results
        .iter()
        .map(|r| r.latency.as_secs_f64() * 1e3)
        .collect();
    lat.sort_by(f64::total_cmp);
    let latency_mean_ms = lat.iter().sum::<f64>() / lat.len().max(1) as f64;
    let qps = if elapsed > 0.0 {
        queries.count() as f64 / elapsed
    } else {
        0.0
    };

    let entry_bytes = searcher.posting_reader().entry_bytes() as u64;
    let (mem_kb, source) = if vq_formula {
        (
            (searcher.count() as u64 * entry_bytes) as f64 / 1024.0,
            VqMemorySource::Formula,
        )
    } else {
        match peak_rss_kb() {
            Some(kb) => (kb as f64, VqMemorySource::Measured),
            None => (
                (searcher.count() as u64 * entry_bytes) as f64 / 1024.0,
                VqMemorySource::Formula,
            ),
        }
    };

    let n = results.len().max(1) as f64;
    Ok(EvalRow {
        max_k,
        epsilon2,
        recalls,
        latency_mean_ms,
        latency_p50_ms: percentile_nearest_rank(&lat, 50.0),
        latency_p90_ms: percentile_nearest_rank(&lat, 90.0),
        latency_p99_ms: percentile_nearest_rank(&lat, 99.0),
        qps,
        vq: vq_capacity(searcher.count() as u64, mem_kb, qps),
        vq_mem_kb: mem_kb,
        vq_mem_source: source.name().to_string(),
        mean_lists_probed: results
            .iter()
            .map(|r| r.stats.posting.lists_read as f64)
            .sum::<f64>()
            / n,
        mean_bytes_read: results
            .iter()
            .map(|r| r.stats.posting.bytes_read as f64)
            .sum::<f64>()
            / n,
    })
}

/// Runs the full grid: one row per (epsilon2, max_k) pair.
pub fn run_sweep(
    searcher: &Searcher,
    queries: &Dataset,
    gt: &GroundTruth,
    spec: &SweepSpec,
) -> Result<Vec<EvalRow>> {
    if spec.max_ks.is_empty() || spec.epsilon2s.is_empty() || spec.rs.is_empty() {
        return Err(Error::InvalidArgument("empty sweep grid".into()));
    }
    let mut rows = Vec::new();
    for &eps in &spec.epsilon2s {
        for &max_k in &spec.max_ks {
            rows.push(evaluate_point(
                searcher,
                queries,
                gt,
                spec.k,
                max_k,
                eps,
                &spec.rs,
                spec.tie_tol,
                spec.vq_formula,
            )?);
        }
    }
    Ok(rows)
}

fn recall_headers(rows: &[EvalRow]) -> Vec<usize> {
    rows.first()
        .map(|r| r.recalls.iter().map(|&(r, _)| r).collect())
        .unwrap_or_default()
}

/// CSV with a header row; floats use the shortest round-trip form so a
/// parsed report reproduces the values exactly.
pub fn rows_to_csv(rows: &[EvalRow]) -> String {
    let rs = recall_headers(rows);
    let mut out = String::from("max_k,epsilon2");
    for r in &rs {
        out.push_str(&format!(",recall@{r}"));
    }
    out.push_str(
        ",latency_mean_ms,latency_p50_ms,latency_p90_ms,latency_p99_ms,qps,vq,vq_mem_kb,vq_mem_source,mean_lists_probed,mean_bytes_read\n",
    );
    for row in rows {
        out.push_str(&row.max_k.to_string());
        out.push(',');
        match row.epsilon2 {
            Some(e) => out.push_str(&e.to_string()),
            None => out.push_str("off"),
        }
        for &(_, v) in &row.recalls {
            out.push(',');
            out.push_str(&v.to_string());
        }
        for v in [
            row.latency_mean_ms,
            row.latency_p50_ms,
            row.latency_p90_ms,
            row.latency_p99_ms,
            row.qps,
            row.vq,
            row.vq_mem_kb,
        ] {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push(',');
        out.push_str(&row.vq_mem_source);
        out.push(',');
        out.push_str(&row.mean_lists_probed.to_string());
        out.push(',');
        out.push_str(&row.mean_bytes_read.to_string());
        out.push('\n');
    }
    out
}

/// Parses the output of [`rows_to_csv`].
pub fn rows_from_csv(text: &str) -> Result<Vec<EvalRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty csv".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let rs: Vec<usize> = cols
        .iter()
        .filter_map(|c| c.strip_prefix("recall@"))
        .map(|r| {
            r.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad recall column `{r}`")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 2 + rs.len() + 10 {
            return Err(Error::InvalidArgument(format!("bad csv row `{line}`")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number `{s}`")))
        };
        let mut idx = 0usize;
        let mut next = || {
            let v = f[idx];
            idx += 1;
            v
        };
        let max_k = next()
            .parse()
            .map_err(|_| Error::InvalidArgument("bad max_k".into()))?;
        let eps_s = next();
        let epsilon2 = if eps_s == "off" {
            None
        } else {
            Some(
                eps_s
                    .parse()
                    .map_err(|_| Error::InvalidArgument("bad epsilon2".into()))?,
            )
        };
        let mut recalls = Vec::with_capacity(rs.len());
        for &r in &rs {
            recalls.push((r, parse(next())?));
        }
        rows.push(EvalRow {
            max_k,
            epsilon2,
            recalls,
            latency_mean_ms: parse(next())?,
            latency_p50_ms: parse(next())?,
            latency_p90_ms: parse(next())?,
            latency_p99_ms: parse(next())?,
            qps: parse(next())?,
            vq: parse(next())?,
            vq_mem_kb: parse(next())?,
            vq_mem_source: next().to_string(),
            mean_lists_probed: parse(next())?,
            mean_bytes_read: parse(next())?,
        });
    }
    Ok(rows)
}

/// Whitespace-separated columns for gnuplot: max_k, mean probes, then one
/// recall column per R.
pub fn rows_to_plot_data(rows: &[EvalRow]) -> String {
    let rs = recall_headers(rows);
    let mut out = String::from("# max_k mean_lists_probed");
    for r in &rs {
        out.push_str(&format!(" recall@{r}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{} {}", row.max_k, row.mean_lists_probed));
        for &(_, v) in &row.recalls {
            out.push_str(&format!(" {v}"));
        }
        out.push('\n');
    }
    out
}

/// Diagnostic: per query, the smallest probe budget (maxK, pruning off)
/// whose top-1 already matches the true nearest neighbor, tie-aware.
/// Binary search over maxK is valid because the probed set grows
/// monotonically with the budget under an exact navigator.
pub fn minimal_probes_for_top1(
    searcher: &Searcher,
    queries: &Dataset,
    gt: &GroundTruth,
    tie_tol: f32,
) -> Result<Vec<usize>> {
    if gt.depth() < 1 || gt.num_queries() != queries.count() {
        return Err(Error::InvalidArgument(
            "ground truth does not cover the queries".into(),
        ));
    }
    let n_lists = searcher.num_lists();
    (0..queries.count())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let found = |max_k: usize| -> Result<bool> {
                let res = searcher.search(
                    q,
                    &SearchParams {
                        k: 1,
                        max_k,
                        epsilon2: None,
                        ef: None,
                    },
                )?;
                Ok(res.hits.first().is_some_and(|h| {
                    h.id == gt.ids[qi][0] || ties_match(h.dist, gt.dists[qi][0], tie_tol)
                }))
            };
            let mut lo = 1usize;
            let mut hi = n_lists;
            if found(lo)? {
                return Ok(1);
            }
            while lo + 1 < hi {
                let mid = lo + (hi - lo) / 2;
                if found(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(hi)
        })
        .collect()
}

/// Results file: one line per query of tab-separated `id:distance` pairs.
pub fn write_results_file(path: &Path, results: &[Vec<Neighbor>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in results {
        let line: Vec<String> = row.iter().map(|n| format!("{}:{}", n.id, n.dist)).collect();
        writeln!(w, "{}", line.join("\t")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results_file(path: &Path) -> Result<Vec<Vec<Neighbor>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut row = Vec::new();
        if !line.trim().is_empty() {
            for pair in line.split('\t') {
                let (id, d) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::format(path, format!("line {ln}: bad pair `{pair}`")))?;
                row.push(Neighbor::new(
                    id.parse()
                        .map_err(|_| Error::format(path, format!("line {ln}: bad id")))?,
                    d.parse()
                        .map_err(|_| Error::format(path, format!("line {ln}: bad distance")))?,
                ));
            }
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_f32(dim, (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn brute_force_simple_line() {
        let base = Dataset::from_f32(2, vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0]).unwrap();
        let q = Dataset::from_f32(2, vec![0.0, 0.0]).unwrap();
        let gt = brute_force_topk(&base, &q, 2, Metric::L2).unwrap();
        assert_eq!(gt.ids[0], vec![0, 1]);
        assert_eq!(gt.dists[0], vec![0.0, 1.0]);
    }

    #[test]
    fn brute_force_k_equals_n() {
        let base = random_dataset(20, 3, 1);
        let q = random_dataset(2, 3, 2);
        let gt = brute_force_topk(&base, &q, 20, Metric::L2).unwrap();
        for row in &gt.dists {
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(gt.ids[0].len(), 20);
    }

    #[test]
    fn recall_identity_is_one() {
        let base = random_dataset(100, 4, 3);
        let q = random_dataset(10, 4, 4);
        let gt = brute_force_topk(&base, &q, 10, Metric::L2).unwrap();
        let as_results: Vec<Vec<Neighbor>> = gt
            .ids
            .iter()
            .zip(&gt.dists)
            .map(|(ids, ds)| {
                ids.iter()
                    .zip(ds)
                    .map(|(&id, &d)| Neighbor::new(id, d))
                    .collect()
            })
            .collect();
        assert_eq!(
            recall_at_r(&as_results, &gt, 10, DEFAULT_TIE_TOL).unwrap(),
            1.0
        );
    }

    #[test]
    fn recall_tie_substitution() {
        // returned {1,2,3}, gt {1,2,4}, dist(3) == dist(4) -> 1.0
        let gt = GroundTruth {
            ids: vec![vec![1, 2, 4]],
            dists: vec![vec![1.0, 2.0, 3.0]],
        };
        let returned = vec![vec![
            Neighbor::new(1, 1.0),
            Neighbor::new(2, 2.0),
            Neighbor::new(3, 3.0),
        ]];
        assert_eq!(recall_at_r(&returned, &gt, 3, DEFAULT_TIE_TOL).unwrap(), 1.0);
    }

    #[test]
    fn recall_disjoint_no_ties_is_zero() {
        let gt = GroundTruth {
            ids: vec![vec![1, 2, 3]],
            dists: vec![vec![1.0, 2.0, 3.0]],
        };
        let returned = vec![vec![
            Neighbor::new(7, 10.0),
            Neighbor::new(8, 11.0),
            Neighbor::new(9, 12.0),
        ]];
        assert_eq!(recall_at_r(&returned, &gt, 3, DEFAULT_TIE_TOL).unwrap(), 0.0);
    }

    #[test]
    fn recall_each_slot_matches_once() {
        // Two returned ids tie the same single gt slot; only one scores.
        let gt = GroundTruth {
            ids: vec![vec![1, 2]],
            dists: vec![vec![1.0, 5.0]],
        };
        let returned = vec![vec![Neighbor::new(8, 1.0), Neighbor::new(9, 1.0)]];
        assert_eq!(recall_at_r(&returned, &gt, 2, DEFAULT_TIE_TOL).unwrap(), 0.5);
    }

    #[test]
    fn recall_depth_checked() {
        let gt = GroundTruth {
            ids: vec![vec![1]],
            dists: vec![vec![1.0]],
        };
        let returned = vec![vec![Neighbor::new(1, 1.0)]];
        assert!(recall_at_r(&returned, &gt, 2, DEFAULT_TIE_TOL).is_err());
    }

    #[test]
    fn recall_permutation_invariant() {
        let base = random_dataset(200, 4, 5);
        let q = random_dataset(5, 4, 6);
        let gt = brute_force_topk(&base, &q, 10, Metric::L2).unwrap();
        let forward: Vec<Vec<Neighbor>> = gt
            .ids
            .iter()
            .zip(&gt.dists)
            .map(|(ids, ds)| {
                ids.iter()
                    .zip(ds)
                    .map(|(&id, &d)| Neighbor::new(id, d))
                    .collect()
            })
            .collect();
        let mut reversed = forward.clone();
        for row in reversed.iter_mut() {
            row.reverse();
        }
        assert_eq!(
            recall_at_r(&forward, &gt, 10, DEFAULT_TIE_TOL).unwrap(),
            recall_at_r(&reversed, &gt, 10, DEFAULT_TIE_TOL).unwrap()
        );
    }

    #[test]
    fn vq_definition_arithmetic() {
        assert_eq!(vq_capacity(1000, 500.0, 100.0), 200.0);
        assert_eq!(vq_capacity(1000, 500.0, 0.0), 0.0);
        let v1 = vq_capacity(1000, 500.0, 50.0);
        let v2 = vq_capacity(1000, 500.0, 100.0);
        assert_eq!(v2, 2.0 * v1);
    }

    #[test]
    fn percentiles_nearest_rank() {
        let vals: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(percentile_nearest_rank(&vals, 50.0), 50.0);
        assert_eq!(percentile_nearest_rank(&vals, 90.0), 90.0);
        assert_eq!(percentile_nearest_rank(&vals, 99.0), 99.0);
        assert_eq!(percentile_nearest_rank(&vals, 100.0), 100.0);
        let one = vec![7.0];
        assert_eq!(percentile_nearest_rank(&one, 50.0), 7.0);
        assert_eq!(percentile_nearest_rank(&one, 99.0), 7.0);
    }

    #[test]
    fn percentile_ordering_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut vals: Vec<f64> = (0..rng.random_range(1..40))
                .map(|_| rng.random_range(0.0..100.0))
                .collect();
            vals.sort_by(f64::total_cmp);
            let p50 = percentile_nearest_rank(&vals, 50.0);
            let p90 = percentile_nearest_rank(&vals, 90.0);
            let p99 = percentile_nearest_rank(&vals, 99.0);
            assert!(p50 <= p90 && p90 <= p99);
        }
    }

    #[test]
    fn ground_truth_file_roundtrip() {
        let base = random_dataset(50, 4, 8);
        let q = random_dataset(4, 4, 9);
        let gt = brute_force_topk(&base, &q, 5, Metric::L2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("gt");
        gt.save(&prefix).unwrap();
        assert_eq!(GroundTruth::load(&prefix).unwrap(), gt);
    }

    #[test]
    fn results_file_roundtrip() {
        let rows = vec![
            vec![Neighbor::new(3, 1.25), Neighbor::new(9, 2.5)],
            vec![],
            vec![Neighbor::new(0, 0.0)],
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.tsv");
        write_results_file(&path, &rows).unwrap();
        assert_eq!(read_results_file(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "3:1.25\t9:2.5");
    }

    #[test]
    fn peak_rss_readable() {
        let kb = peak_rss_kb();
        assert!(kb.is_some_and(|v| v > 0), "VmHWM unavailable: {kb:?}");
    }

    fn searcher_fixture(dir: &std::path::Path, n: usize, seed: u64) -> (Dataset, Searcher) {
        let data = random_dataset(n, 8, seed);
        let mut cfg = crate::index::IndexConfig::for_dataset(&data);
        cfg.clustering.max_leaf_entries = Some(10);
        cfg.navigator.strategy = crate::navigator::NavigatorStrategy::ExactScan;
        crate::index::build_index(&data, &cfg, dir).unwrap();
        (data, Searcher::open(dir).unwrap())
    }

    #[test]
    fn single_point_sweep_equals_direct_eval() {
        let dir = tempfile::tempdir().unwrap();
        let (data, s) = searcher_fixture(dir.path(), 600, 21);
        let queries = random_dataset(15, 8, 22);
        let gt = brute_force_topk(&data, &queries, 10, Metric::L2).unwrap();
        let spec = SweepSpec {
            k: 10,
            rs: vec![1, 10],
            max_ks: vec![8],
            epsilon2s: vec![Some(7.0)],
            tie_tol: DEFAULT_TIE_TOL,
            vq_formula: true,
        };
        let rows = run_sweep(&s, &queries, &gt, &spec).unwrap();
        assert_eq!(rows.len(), 1);
        let direct =
            evaluate_point(&s, &queries, &gt, 10, 8, Some(7.0), &[1, 10], DEFAULT_TIE_TOL, true)
                .unwrap();
        assert_eq!(rows[0].recalls, direct.recalls);
        assert_eq!(rows[0].mean_lists_probed, direct.mean_lists_probed);
        assert_eq!(rows[0].mean_bytes_read, direct.mean_bytes_read);
        assert_eq!(rows[0].vq_mem_source, "formula");
    }

    #[test]
    fn sweep_recall_monotone_without_pruning() {
        let dir = tempfile::tempdir().unwrap();
        let (data, s) = searcher_fixture(dir.path(), 2000, 23);
        let queries = random_dataset(30, 8, 24);
        let gt = brute_force_topk(&data, &queries, 10, Metric::L2).unwrap();
        let spec = SweepSpec {
            k: 10,
            rs: vec![10],
            max_ks: vec![1, 2, 4, 8, 16, 32],
            epsilon2s: vec![None],
            tie_tol: DEFAULT_TIE_TOL,
            vq_formula: true,
        };
        let rows = run_sweep(&s, &queries, &gt, &spec).unwrap();
        let recalls: Vec<f64> = rows.iter().map(|r| r.recalls[0].1).collect();
        assert!(recalls.windows(2).all(|w| w[0] <= w[1]), "{recalls:?}");
        assert!(run_sweep(
            &s,
            &queries,
            &gt,
            &SweepSpec {
                max_ks: vec![],
                ..spec
            }
        )
        .is_err());
    }

    #[test]
    fn minimal_probes_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let (data, s) = searcher_fixture(dir.path(), 1500, 25);
        let queries = random_dataset(25, 8, 26);
        let gt = brute_force_topk(&data, &queries, 1, Metric::L2).unwrap();
        let probes = minimal_probes_for_top1(&s, &queries, &gt, DEFAULT_TIE_TOL).unwrap();
        assert_eq!(probes.len(), 25);
        for (qi, &p) in probes.iter().enumerate() {
            assert!(p >= 1 && p <= s.num_lists());
            // The reported budget really does recover the true top-1...
            let res = s
                .search(
                    queries.row(qi),
                    &SearchParams {
                        k: 1,
                        max_k: p,
                        epsilon2: None,
                        ef: None,
                    },
                )
                .unwrap();
            assert_eq!(res.hits[0].id, gt.ids[qi][0]);
            // ...and one list fewer does not.
            if p > 1 {
                let res = s
                    .search(
                        queries.row(qi),
                        &SearchParams {
                            k: 1,
                            max_k: p - 1,
                            epsilon2: None,
                            ef: None,
                        },
                    )
                    .unwrap();
                assert_ne!(res.hits[0].id, gt.ids[qi][0]);
            }
        }
    }

    #[test]
    fn csv_roundtrip_exact() {
        let rows = vec![EvalRow {
            max_k: 16,
            epsilon2: Some(7.0),
            recalls: vec![(1, 0.912345678), (10, 0.87654321)],
            latency_mean_ms: 1.23456789,
            latency_p50_ms: 1.0,
            latency_p90_ms: 2.5,
            latency_p99_ms: 7.75,
            qps: 1234.5678,
            vq: 3.1e8,
            vq_mem_kb: 51200.0,
            vq_mem_source: "formula".into(),
            mean_lists_probed: 12.875,
            mean_bytes_read: 49152.5,
        },
        EvalRow {
            max_k: 32,
            epsilon2: None,
            recalls: vec![(1, 1.0), (10, 0.999999999)],
            latency_mean_ms: 0.5,
            latency_p50_ms: 0.5,
            latency_p90_ms: 0.5,
            latency_p99_ms: 0.5,
            qps: 10.0,
            vq: 0.0,
            vq_mem_kb: 1.5,
            vq_mem_source: "measured".into(),
            mean_lists_probed: 32.0,
            mean_bytes_read: 0.0,
        }];
        let csv = rows_to_csv(&rows);
        assert!(csv.starts_with("max_k,epsilon2,recall@1,recall@10,"));
        assert_eq!(rows_from_csv(&csv).unwrap(), rows);
    }
}
