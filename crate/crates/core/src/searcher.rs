//! Online query pipeline: navigator search, query-aware dynamic pruning,
//! posting fetch, full-precision rerank, deduplicated top-k.

use std::collections::HashSet;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::knn::{Neighbor, TopK};
use crate::navigator::{CentroidTable, Navigator};
use crate::posting_store::{IndexMeta, PostingReadStats, PostingReader, NAVIGATOR_FILE};
use crate::vectors::{distance_unchecked, Dataset, ElemType, Metric, VectorView};

#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    /// Results requested.
    pub k: usize,
    /// Posting lists the navigator may propose.
    pub max_k: usize,
    /// Pruning slack; `None` disables query-aware pruning.
    pub epsilon2: Option<f32>,
    /// Navigator beam width; defaults to `max(4 * max_k, 64)`.
    pub ef: Option<usize>,
}

impl SearchParams {
    pub fn new(k: usize, max_k: usize) -> SearchParams {
        SearchParams {
            k,
            max_k,
            epsilon2: None,
            ef: None,
        }
    }

    pub fn with_epsilon2(mut self, eps: f32) -> SearchParams {
        self.epsilon2 = Some(eps);
        self
    }

    pub fn effective_ef(&self) -> usize {
        self.ef.unwrap_or_else(|| (4 * self.max_k).max(64))
    }

    fn validate(&self) -> Result<()> {
        if self.k < 1 || self.max_k < 1 {
            return Err(Error::InvalidArgument("k and max_k must be >= 1".into()));
        }
        if let Some(e) = self.epsilon2 {
            if e < 0.0 {
                return Err(Error::InvalidArgument("epsilon2 must be >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QueryStats {
    pub posting: PostingReadStats,
    pub lists_pruned: u64,
    pub candidates_scanned: u64,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Ascending (distance, id); at most `k` entries, no duplicate ids.
    pub hits: Vec<Neighbor>,
    pub stats: QueryStats,
    pub latency: Duration,
}

/// Keeps the prefix of a sorted candidate list within `(1 + epsilon2)` of
/// the closest distance. The first candidate always survives.
pub fn dynamic_prune(candidates: &[(u32, f32)], epsilon2: f32, metric: Metric) -> &[(u32, f32)] {
    if candidates.is_empty() {
        return candidates;
    }
    let threshold = metric.slack_threshold(candidates[0].1, epsilon2);
    let mut cut = candidates.len();
    for (i, &(_, d)) in candidates.iter().enumerate().skip(1) {
        if d > threshold {
            cut = i;
            break;
        }
    }
    &candidates[..cut]
}

/// A loaded index: immutable and shareable across threads.
#[derive(Debug)]
pub struct Searcher {
    metric: Metric,
    count: usize,
    table: CentroidTable,
    navigator: Navigator,
    postings: PostingReader,
}

impl Searcher {
    pub fn open(dir: &Path) -> Result<Searcher> {
        let meta = IndexMeta::load(dir)?;
        let metric = Metric::from_name(
            meta.get("metric")
                .ok_or_else(|| Error::Corruption("meta key `metric` missing".into()))?,
        )
        .ok_or_else(|| Error::Corruption("unknown metric in meta".into()))?;
        let count: usize = meta.get_parsed("count")?;
        let (navigator, table) = Navigator::load(&dir.join(NAVIGATOR_FILE))?;
        let postings = PostingReader::open(dir)?;
        if postings.num_lists() != table.len() {
            return Err(Error::Corruption(format!(
                "navigator has {} lists but postings file has {}",
                table.len(),
                postings.num_lists()
            )));
        }
        if postings.dim() != table.dim() {
            return Err(Error::Corruption(
                "navigator and postings dimension mismatch".into(),
            ));
        }
        Ok(Searcher {
            metric,
            count,
            table,
            navigator,
            postings,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn elem_type(&self) -> ElemType {
        self.table.elem_type()
    }

    pub fn num_lists(&self) -> usize {
        self.table.len()
    }

    /// Vectors in the indexed dataset (before closure replication).
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn navigator(&self) -> &Navigator {
        &self.navigator
    }

    pub fn centroid_table(&self) -> &CentroidTable {
        &self.table
    }

    pub fn posting_reader(&self) -> &PostingReader {
        &self.postings
    }

    pub fn search(&self, q: VectorView<'_>, params: &SearchParams) -> Result<SearchResult> {
        params.validate()?;
        if q.dim() != self.table.dim() {
            return Err(Error::InvalidArgument(format!(
                "query dim {} != index dim {}",
                q.dim(),
                self.table.dim()
            )));
        }
        if q.elem_type() != self.table.elem_type() {
            return Err(Error::InvalidArgument(
                "query element type differs from index".into(),
            ));
        }
        let started = Instant::now();
        let candidates = self.navigator.search(
            &self.table,
            q,
            params.max_k,
            params.effective_ef(),
            self.metric,
        );
        let kept = match params.epsilon2 {
            Some(eps) => dynamic_prune(&candidates, eps, self.metric),
            None => &candidates[..],
        };

        let mut stats = QueryStats {
            lists_pruned: (candidates.len() - kept.len()) as u64,
            ..Default::default()
        };
        let mut top = TopK::new(params.k);
        let mut seen: HashSet<u32> = HashSet::new();
        for &(list_id, _) in kept {
            let (block, delta) = self.postings.read_posting(list_id)?;
            stats.posting += delta;
            stats.candidates_scanned += block.len() as u64;
            for i in 0..block.len() {
                let (id, v) = block.entry(i);
                if seen.insert(id) {
                    top.push(Neighbor::new(id, distance_unchecked(q, v, self.metric)));
                }
            }
        }
        Ok(SearchResult {
            hits: top.into_sorted(),
            stats,
            latency: started.elapsed(),
        })
    }

    /// Element-wise equal to a sequential loop of [`Searcher::search`];
    /// queries run concurrently.
    pub fn batch_search(
        &self,
        queries: &Dataset,
        params: &SearchParams,
    ) -> Result<Vec<SearchResult>> {
        (0..queries.count())
            .into_par_iter()
            .map(|qi| self.search(queries.row(qi), params))
            .collect()
    }
}
