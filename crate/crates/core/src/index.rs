//! Index build orchestration: partition, representatives, navigator, and
//! the on-disk directory layout (`meta`, `navigator`, `postings.bin`).

use std::path::Path;
use std::time::{Duration, Instant};

use crate::clustering::{
    assign_to_reps, build_partition, BalancedClusteringConfig, ClusterAssignment, RngRule,
};
use crate::error::{Error, Result};
use crate::navigator::{build_navigator, CentroidTable, NavigatorConfig};
use crate::posting_store::{write_postings, IndexMeta};
use crate::vectors::{Dataset, ElemType, Metric};

#[derive(Debug, Clone)]
pub struct IndexConfig {
    pub metric: Metric,
    pub clustering: BalancedClusteringConfig,
    pub navigator: NavigatorConfig,
}

impl IndexConfig {
    pub fn for_dataset(data: &Dataset) -> IndexConfig {
        IndexConfig {
            metric: Metric::L2,
            clustering: BalancedClusteringConfig::for_dataset(data.dim(), data.elem_type()),
            navigator: NavigatorConfig::default(),
        }
    }
}

/// Build summary; the same numbers are echoed into the `meta` file.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub count: usize,
    pub n_lists: usize,
    pub leaf_size_max: u32,
    pub leaf_size_mean: f64,
    pub mean_replicas: f64,
    pub dropped_replicas: u64,
    pub displaced_primaries: u64,
    pub elapsed: Duration,
}

pub fn rng_rule_name(rule: RngRule) -> &'static str {
    match rule {
        RngRule::AllKept => "all",
        RngRule::PredecessorOnly => "predecessor",
        RngRule::Disabled => "off",
    }
}

pub fn rng_rule_from_name(s: &str) -> Option<RngRule> {
    match s {
        "all" => Some(RngRule::AllKept),
        "predecessor" => Some(RngRule::PredecessorOnly),
        "off" => Some(RngRule::Disabled),
        _ => None,
    }
}

fn write_index_dir(
    data: &Dataset,
    assignment: &ClusterAssignment,
    cfg: &IndexConfig,
    dir: &Path,
    started: Instant,
) -> Result<BuildReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = CentroidTable::from_dataset(data, assignment.rep_ids.clone())?;
    let navigator = build_navigator(&table, &cfg.navigator, cfg.metric)?;
    let nav_path = dir.join(crate::posting_store::NAVIGATOR_FILE);
    navigator.save(&table, &nav_path)?;
    write_postings(dir, data, assignment, cfg.clustering.posting_limit_bytes)?;

    // Checksum echoes: the trailing navigator CRC and the postings offsets
    // table CRC, so the meta file can cross-check the binary artifacts.
    let nav_crc = {
        let bytes = std::fs::read(&nav_path).map_err(|e| Error::io(&nav_path, e))?;
        u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap())
    };
    let postings_crc = {
        let p = dir.join(crate::posting_store::POSTINGS_FILE);
        let mut header = [0u8; 36];
        use std::io::Read;
        let mut f = std::fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
        f.read_exact(&mut header).map_err(|e| Error::io(&p, e))?;
        u32::from_le_bytes(header[32..36].try_into().unwrap())
    };

    let leaf_size_max = assignment.leaf_sizes.iter().copied().max().unwrap_or(0);
    let leaf_size_mean = if assignment.leaf_sizes.is_empty() {
        0.0
    } else {
        assignment.leaf_sizes.iter().map(|&s| s as f64).sum::<f64>()
            / assignment.leaf_sizes.len() as f64
    };

    let mut meta = IndexMeta::new();
    meta.set("metric", cfg.metric.name());
    meta.set("dim", data.dim());
    meta.set("elem_type", data.elem_type().name());
    meta.set("count", data.count());
    meta.set("n_lists", assignment.num_lists());
    meta.set("posting_limit_bytes", cfg.clustering.posting_limit_bytes);
    meta.set("branch_k", cfg.clustering.branch_k);
    meta.set("lambda", cfg.clustering.lambda);
    meta.set("max_iters", cfg.clustering.max_iters);
    meta.set(
        "max_leaf_entries",
        cfg.clustering
            .max_leaf_entries
            .map(|v| v.to_string())
            .unwrap_or_else(|| "auto".into()),
    );
    meta.set("max_replicas", cfg.clustering.max_replicas);
    meta.set("epsilon1", cfg.clustering.epsilon1);
    meta.set("rng_rule", rng_rule_name(cfg.clustering.rng_rule));
    meta.set("seed", cfg.clustering.seed);
    meta.set("navigator", cfg.navigator.strategy.name());
    meta.set("graph_degree", cfg.navigator.graph_degree);
    meta.set("leaf_size_max", leaf_size_max);
    meta.set("leaf_size_mean", leaf_size_mean);
    meta.set("mean_replicas", assignment.mean_replicas());
    meta.set("dropped_replicas", assignment.dropped_replicas);
    meta.set("displaced_primaries", assignment.displaced_primaries);
    meta.set("navigator_crc32", nav_crc);
    meta.set("postings_table_crc32", postings_crc);
    meta.save(dir)?;

    Ok(BuildReport {
        count: data.count(),
        n_lists: assignment.num_lists(),
        leaf_size_max,
        leaf_size_mean,
        mean_replicas: assignment.mean_replicas(),
        dropped_replicas: assignment.dropped_replicas,
        displaced_primaries: assignment.displaced_primaries,
        elapsed: started.elapsed(),
    })
}

/// Builds a complete index directory from a dataset.
pub fn build_index(data: &Dataset, cfg: &IndexConfig, dir: &Path) -> Result<BuildReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if data.elem_type() == ElemType::I32 {
        return Err(Error::InvalidArgument(
            "i32 datasets cannot be indexed".into(),
        ));
    }
    let started = Instant::now();
    let assignment = build_partition(data, &cfg.clustering, cfg.metric)?;
    write_index_dir(data, &assignment, cfg, dir, started)
}

/// Builds an index around caller-chosen representative vectors instead of
/// the clustering hierarchy (used for centroid-selection ablations). The
/// closure pipeline and file layout are identical.
pub fn build_index_with_reps(
    data: &Dataset,
    rep_ids: Vec<u32>,
    cfg: &IndexConfig,
    dir: &Path,
) -> Result<BuildReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let started = Instant::now();
    let assignment = assign_to_reps(data, rep_ids, Vec::new(), &cfg.clustering, cfg.metric)?;
    write_index_dir(data, &assignment, cfg, dir, started)
}
