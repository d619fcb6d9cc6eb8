//! In-memory navigating index over posting-list representatives.
//!
//! Answers "closest K representatives" queries either by exhaustive scan or
//! by best-first search over a degree-bounded k-NN graph pruned with the
//! relative-neighborhood rule. Both strategies return results in ascending
//! (distance, list id) order; the graph strategy trades a little recall for
//! sublinear scans, recovered by widening the beam (`ef`).

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::knn::{bulk_topk_f32, Neighbor, TopK};
use crate::vectors::{distance_unchecked, Dataset, ElemType, Metric, VectorData, VectorView};

/// Representative vectors held in memory: one per posting list, each an
/// actual data vector. List ids are row positions; `rep_ids` maps a row back
/// to the original vector id.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTable {
    dim: usize,
    reps: VectorData,
    rep_ids: Vec<u32>,
}

impl CentroidTable {
    /// Gathers the rows of `data` named by `rep_ids`.
    pub fn from_dataset(data: &Dataset, rep_ids: Vec<u32>) -> Result<CentroidTable> {
        if rep_ids.is_empty() {
            return Err(Error::InvalidArgument("no representatives".into()));
        }
        let dim = data.dim();
        let reps = match data.data() {
            VectorData::F32(rows) => {
                let mut out = Vec::with_capacity(rep_ids.len() * dim);
                for &id in &rep_ids {
                    out.extend_from_slice(&rows[id as usize * dim..(id as usize + 1) * dim]);
                }
                VectorData::F32(out)
            }
            VectorData::U8(rows) => {
                let mut out = Vec::with_capacity(rep_ids.len() * dim);
                for &id in &rep_ids {
                    out.extend_from_slice(&rows[id as usize * dim..(id as usize + 1) * dim]);
                }
                VectorData::U8(out)
            }
            VectorData::I32(_) => {
                return Err(Error::InvalidArgument(
                    "i32 datasets cannot provide representatives".into(),
                ))
            }
        };
        Ok(CentroidTable { dim, reps, rep_ids })
    }

    pub fn new(dim: usize, reps: VectorData, rep_ids: Vec<u32>) -> Result<CentroidTable> {
        if dim == 0 || reps.len() != rep_ids.len() * dim {
            return Err(Error::InvalidArgument("malformed centroid table".into()));
        }
        Ok(CentroidTable { dim, reps, rep_ids })
    }

    pub fn len(&self) -> usize {
        self.rep_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rep_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elem_type(&self) -> ElemType {
        self.reps.elem_type()
    }

    pub fn rep_ids(&self) -> &[u32] {
        &self.rep_ids
    }

    pub fn rep(&self, list_id: usize) -> VectorView<'_> {
        let lo = list_id * self.dim;
        let hi = lo + self.dim;
        match &self.reps {
            VectorData::F32(v) => VectorView::F32(&v[lo..hi]),
            VectorData::U8(v) => VectorView::U8(&v[lo..hi]),
            VectorData::I32(_) => unreachable!(),
        }
    }

    pub fn rows_f32(&self) -> Option<&[f32]> {
        match &self.reps {
            VectorData::F32(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NavigatorStrategy {
    ExactScan,
    NeighborGraph,
}

impl NavigatorStrategy {
    pub fn name(self) -> &'static str {
        match self {
            NavigatorStrategy::ExactScan => "exact",
            NavigatorStrategy::NeighborGraph => "graph",
        }
    }

    pub fn from_name(s: &str) -> Option<NavigatorStrategy> {
        match s {
            "exact" => Some(NavigatorStrategy::ExactScan),
            "graph" => Some(NavigatorStrategy::NeighborGraph),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NavigatorConfig {
    pub strategy: NavigatorStrategy,
    /// Degree bound after RNG pruning.
    pub graph_degree: usize,
    /// Neighbor candidates gathered per node before pruning.
    pub build_candidates: usize,
    /// Above this table size the k-NN graph is refined iteratively instead
    /// of computed exactly.
    pub exact_build_threshold: usize,
    pub entry_points: usize,
    pub seed: u64,
}

impl Default for NavigatorConfig {
    fn default() -> Self {
        NavigatorConfig {
            strategy: NavigatorStrategy::NeighborGraph,
            graph_degree: 32,
            build_candidates: 64,
            exact_build_threshold: 200_000,
            entry_points: 8,
            seed: 0,
        }
    }
}

/// Compact adjacency: `neighbors[offsets[i]..offsets[i+1]]` are node `i`'s
/// out-edges, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
struct Graph {
    degree: usize,
    offsets: Vec<u32>,
    neighbors: Vec<u32>,
}

impl Graph {
    fn edges(&self, node: usize) -> &[u32] {
        &self.neighbors[self.offsets[node] as usize..self.offsets[node + 1] as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Navigator {
    strategy: NavigatorStrategy,
    graph: Option<Graph>,
    entries: Vec<u32>,
}

impl Navigator {
    pub fn strategy(&self) -> NavigatorStrategy {
        self.strategy
    }

    pub fn graph_degree(&self) -> Option<usize> {
        self.graph.as_ref().map(|g| g.degree)
    }

    /// Adjacency of one node (NeighborGraph only); exposed for diagnostics.
    pub fn neighbors(&self, node: usize) -> Option<&[u32]> {
        self.graph.as_ref().map(|g| g.edges(node))
    }
}

/// Builds the navigating index for a centroid table.
pub fn build_navigator(
    table: &CentroidTable,
    cfg: &NavigatorConfig,
    metric: Metric,
) -> Result<Navigator> {
    if table.is_empty() {
        return Err(Error::InvalidArgument("empty centroid table".into()));
    }
    match cfg.strategy {
        NavigatorStrategy::ExactScan => Ok(Navigator {
            strategy: NavigatorStrategy::ExactScan,
            graph: None,
            entries: Vec::new(),
        }),
        NavigatorStrategy::NeighborGraph => {
            if cfg.graph_degree < 1 {
                return Err(Error::InvalidArgument("graph_degree must be >= 1".into()));
            }
            let graph = build_graph(table, cfg, metric);
            let entries = pick_entries(table.len(), cfg.entry_points, cfg.seed);
            Ok(Navigator {
                strategy: NavigatorStrategy::NeighborGraph,
                graph: Some(graph),
                entries,
            })
        }
    }
}

fn pick_entries(n: usize, want: usize, seed: u64) -> Vec<u32> {
    use rand::SeedableRng;
    let take = want.clamp(1, n);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, n, take)
        .into_iter()
        .map(|i| i as u32)
        .collect::<Vec<_>>();
    picks.sort_unstable();
    picks
}

fn knn_candidates(table: &CentroidTable, k: usize, cfg: &NavigatorConfig, metric: Metric) -> Vec<Vec<Neighbor>> {
    let n = table.len();
    if n <= cfg.exact_build_threshold {
        match table.rows_f32() {
            Some(rows) => {
                let mut cands = bulk_topk_f32(rows, rows, table.dim(), k + 1, 8, metric);
                for (i, c) in cands.iter_mut().enumerate() {
                    c.retain(|nb| nb.id as usize != i);
                    c.truncate(k);
                }
                cands
            }
            None => (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut top = TopK::new(k);
                    for j in 0..n {
                        if i != j {
                            top.push(Neighbor::new(
                                j as u32,
                                distance_unchecked(table.rep(i), table.rep(j), metric),
                            ));
                        }
                    }
                    top.into_sorted()
                })
                .collect(),
        }
    } else {
        nn_descent(table, k, cfg, metric)
    }
}

/// Approximate k-NN refinement for large tables: start from random
/// neighbors and repeatedly improve every list with its neighbors'
/// neighbors.
fn nn_descent(table: &CentroidTable, k: usize, cfg: &NavigatorConfig, metric: Metric) -> Vec<Vec<Neighbor>> {
    use rand::Rng;
    use rand::SeedableRng;
    let n = table.len();
    let mut lists: Vec<Vec<Neighbor>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ (i as u64).wrapping_mul(0x9E37));
            let mut top = TopK::new(k);
            let mut tried = 0;
            while tried < k * 2 {
                let j = rng.random_range(0..n);
                if j != i {
                    top.push(Neighbor::new(
                        j as u32,
                        distance_unchecked(table.rep(i), table.rep(j), metric),
                    ));
                }
                tried += 1;
            }
            top.into_sorted()
        })
        .collect();

    for _ in 0..6 {
        let snapshot = lists.clone();
        lists = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut top = TopK::new(k);
                let mut seen: Vec<u32> = Vec::with_capacity(k * (k + 1));
                for nb in &snapshot[i] {
                    top.push(*nb);
                    for nb2 in &snapshot[nb.id as usize] {
                        if nb2.id as usize != i && !seen.contains(&nb2.id) {
                            seen.push(nb2.id);
                            top.push(Neighbor::new(
                                nb2.id,
                                distance_unchecked(
                                    table.rep(i),
                                    table.rep(nb2.id as usize),
                                    metric,
                                ),
                            ));
                        }
                    }
                }
                top.into_sorted()
            })
            .collect();
    }
    lists
}

fn build_graph(table: &CentroidTable, cfg: &NavigatorConfig, metric: Metric) -> Graph {
    let n = table.len();
    let k = cfg.build_candidates.max(cfg.graph_degree).min(n.saturating_sub(1));
    let cands = knn_candidates(table, k, cfg, metric);

    // RNG-prune each candidate list to the degree bound.
    let pruned: Vec<Vec<u32>> = cands
        .into_par_iter()
        .enumerate()
        .map(|(i, list)| rng_prune(table, i, &list, cfg.graph_degree, metric))
        .collect();

    // Add reverse edges so no node is unreachable, re-pruning on overflow.
    let mut reverse: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (u, edges) in pruned.iter().enumerate() {
        for &v in edges {
            reverse[v as usize].push(u as u32);
        }
    }
    let merged: Vec<Vec<u32>> = pruned
        .into_par_iter()
        .enumerate()
        .map(|(i, mut edges)| {
            for &r in &reverse[i] {
                if !edges.contains(&r) {
                    edges.push(r);
                }
            }
            if edges.len() > cfg.graph_degree {
                let mut list: Vec<Neighbor> = edges
                    .into_iter()
                    .map(|id| {
                        Neighbor::new(
                            id,
                            distance_unchecked(table.rep(i), table.rep(id as usize), metric),
                        )
                    })
                    .collect();
                list.sort_unstable();
                rng_prune(table, i, &list, cfg.graph_degree, metric)
            } else {
                edges
            }
        })
        .collect();

    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::new();
    offsets.push(0u32);
    for mut edges in merged {
        edges.sort_unstable();
        edges.dedup();
        neighbors.extend_from_slice(&edges);
        offsets.push(neighbors.len() as u32);
    }
    Graph {
        degree: cfg.graph_degree,
        offsets,
        neighbors,
    }
}

/// Keeps a candidate only if the node is at least as close to it as every
/// already kept neighbor is; bounded by `degree`.
fn rng_prune(
    table: &CentroidTable,
    node: usize,
    sorted: &[Neighbor],
    degree: usize,
    metric: Metric,
) -> Vec<u32> {
    let mut kept: Vec<u32> = Vec::with_capacity(degree);
    for nb in sorted {
        if kept.len() == degree {
            break;
        }
        if nb.id as usize == node {
            continue;
        }
        let ok = kept.iter().all(|&p| {
            nb.dist <= distance_unchecked(table.rep(p as usize), table.rep(nb.id as usize), metric)
        });
        if ok {
            kept.push(nb.id);
        }
    }
    kept
}

impl Navigator {
    /// Closest-K list ids for a query, ascending (distance, id), length
    /// `min(k, N)`.
    pub fn search(
        &self,
        table: &CentroidTable,
        q: VectorView<'_>,
        k: usize,
        ef: usize,
        metric: Metric,
    ) -> Vec<(u32, f32)> {
        match self.strategy {
            NavigatorStrategy::ExactScan => {
                let mut top = TopK::new(k);
                for i in 0..table.len() {
                    top.push(Neighbor::new(
                        i as u32,
                        distance_unchecked(q, table.rep(i), metric),
                    ));
                }
                top.into_sorted().into_iter().map(|n| (n.id, n.dist)).collect()
            }
            NavigatorStrategy::NeighborGraph => self.beam_search(table, q, k, ef.max(k), metric),
        }
    }

    fn beam_search(
        &self,
        table: &CentroidTable,
        q: VectorView<'_>,
        k: usize,
        ef: usize,
        metric: Metric,
    ) -> Vec<(u32, f32)> {
        let graph = self.graph.as_ref().expect("graph strategy");
        let mut visited = vec![false; table.len()];
        // frontier: nearest-first; result: bounded worst-first.
        let mut frontier: BinaryHeap<Reverse<Neighbor>> = BinaryHeap::new();
        let mut result = TopK::new(ef);
        for &e in &self.entries {
            if !visited[e as usize] {
                visited[e as usize] = true;
                let d = distance_unchecked(q, table.rep(e as usize), metric);
                let nb = Neighbor::new(e, d);
                frontier.push(Reverse(nb));
                result.push(nb);
            }
        }
        while let Some(Reverse(cur)) = frontier.pop() {
            if let Some(worst) = result.threshold() {
                if cur > worst {
                    break;
                }
            }
            for &v in graph.edges(cur.id as usize) {
                if !visited[v as usize] {
                    visited[v as usize] = true;
                    let d = distance_unchecked(q, table.rep(v as usize), metric);
                    let nb = Neighbor::new(v, d);
                    let admit = match result.threshold() {
                        Some(worst) => nb < worst,
                        None => true,
                    };
                    if admit {
                        frontier.push(Reverse(nb));
                        result.push(nb);
                    }
                }
            }
        }
        let mut out: Vec<(u32, f32)> =
            result.into_sorted().into_iter().map(|n| (n.id, n.dist)).collect();
        out.truncate(k);
        out
    }
}

const NAV_MAGIC: &[u8; 4] = b"HVNV";
const NAV_VERSION: u32 = 1;

fn write_varint(buf: &mut Vec<u8>, mut v: u32) {
    loop {
        let byte = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            buf.push(byte);
            break;
        }
        buf.push(byte | 0x80);
    }
}

fn read_varint(buf: &[u8], pos: &mut usize) -> Result<u32> {
    let mut out = 0u32;
    let mut shift = 0;
    loop {
        let byte = *buf
            .get(*pos)
            .ok_or_else(|| Error::Corruption("truncated varint".into()))?;
        *pos += 1;
        out |= ((byte & 0x7F) as u32) << shift;
        if byte & 0x80 == 0 {
            return Ok(out);
        }
        shift += 7;
        if shift >= 32 {
            return Err(Error::Corruption("varint overflow".into()));
        }
    }
}

impl Navigator {
    /// Serializes the navigator together with its centroid table.
    ///
    /// Layout: magic, version, strategy, N, dim, element type, degree,
    /// entry points, representative ids, representative matrix, then
    /// per-node delta-encoded adjacency; a CRC32 of everything after the
    /// magic trails the file.
    pub fn save(&self, table: &CentroidTable, path: &Path) -> Result<()> {
        let mut body: Vec<u8> = Vec::new();
        body.write_u32::<LittleEndian>(NAV_VERSION).unwrap();
        body.push(match self.strategy {
            NavigatorStrategy::ExactScan => 0,
            NavigatorStrategy::NeighborGraph => 1,
        });
        body.push(match table.elem_type() {
            ElemType::F32 => 0,
            ElemType::U8 => 1,
            ElemType::I32 => {
                return Err(Error::InvalidArgument("i32 centroid table".into()));
            }
        });
        body.write_u64::<LittleEndian>(table.len() as u64).unwrap();
        body.write_u32::<LittleEndian>(table.dim() as u32).unwrap();
        let degree = self.graph.as_ref().map(|g| g.degree as u32).unwrap_or(0);
        body.write_u32::<LittleEndian>(degree).unwrap();
        body.write_u32::<LittleEndian>(self.entries.len() as u32).unwrap();
        for &e in &self.entries {
            body.write_u32::<LittleEndian>(e).unwrap();
        }
        for &id in table.rep_ids() {
            body.write_u32::<LittleEndian>(id).unwrap();
        }
        match &table.reps {
            VectorData::F32(rows) => {
                for v in rows {
                    body.write_f32::<LittleEndian>(*v).unwrap();
                }
            }
            VectorData::U8(rows) => body.extend_from_slice(rows),
            VectorData::I32(_) => unreachable!(),
        }
        if let Some(graph) = &self.graph {
            for node in 0..table.len() {
                let edges = graph.edges(node);
                write_varint(&mut body, edges.len() as u32);
                let mut prev = 0u32;
                for (i, &e) in edges.iter().enumerate() {
                    let delta = if i == 0 { e } else { e - prev };
                    write_varint(&mut body, delta);
                    prev = e;
                }
            }
        }

        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(NAV_MAGIC).map_err(|e| Error::io(path, e))?;
        file.write_all(&body).map_err(|e| Error::io(path, e))?;
        let crc = crc32fast::hash(&body);
        file.write_u32::<LittleEndian>(crc).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Navigator, CentroidTable)> {
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != NAV_MAGIC {
            return Err(Error::format(path, "bad magic"));
        }
        let mut rest = Vec::new();
        file.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
        if rest.len() < 4 {
            return Err(Error::Corruption("navigator file truncated".into()));
        }
        let (body, crc_bytes) = rest.split_at(rest.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Corruption("navigator checksum mismatch".into()));
        }

        let mut cur = std::io::Cursor::new(body);
        let version = cur.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
        if version != NAV_VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let strategy = match cur.read_u8().map_err(|e| Error::io(path, e))? {
            0 => NavigatorStrategy::ExactScan,
            1 => NavigatorStrategy::NeighborGraph,
            other => return Err(Error::format(path, format!("unknown strategy {other}"))),
        };
        let elem = match cur.read_u8().map_err(|e| Error::io(path, e))? {
            0 => ElemType::F32,
            1 => ElemType::U8,
            other => return Err(Error::format(path, format!("unknown elem type {other}"))),
        };
        let n = cur.read_u64::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let dim = cur.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let degree = cur.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let n_entries = cur.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
        let mut entries = Vec::with_capacity(n_entries);
        for _ in 0..n_entries {
            entries.push(cur.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?);
        }
        let mut rep_ids = Vec::with_capacity(n);
        for _ in 0..n {
            rep_ids.push(cur.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?);
        }
        let reps = match elem {
            ElemType::F32 => {
                let mut rows = vec![0.0f32; n * dim];
                cur.read_f32_into::<LittleEndian>(&mut rows)
                    .map_err(|e| Error::io(path, e))?;
                VectorData::F32(rows)
            }
            ElemType::U8 => {
                let mut rows = vec![0u8; n * dim];
                cur.read_exact(&mut rows).map_err(|e| Error::io(path, e))?;
                VectorData::U8(rows)
            }
            ElemType::I32 => unreachable!(),
        };
        let table = CentroidTable::new(dim, reps, rep_ids)?;

        let graph = match strategy {
            NavigatorStrategy::ExactScan => None,
            NavigatorStrategy::NeighborGraph => {
                let mut pos = cur.position() as usize;
                let mut offsets = Vec::with_capacity(n + 1);
                let mut neighbors = Vec::new();
                offsets.push(0u32);
                for _ in 0..n {
                    let cnt = read_varint(body, &mut pos)?;
                    let mut prev = 0u32;
                    for i in 0..cnt {
                        let delta = read_varint(body, &mut pos)?;
                        let id = if i == 0 { delta } else { prev + delta };
                        neighbors.push(id);
                        prev = id;
                    }
                    offsets.push(neighbors.len() as u32);
                }
                Some(Graph {
                    degree,
                    offsets,
                    neighbors,
                })
            }
        };
        Ok((
            Navigator {
                strategy,
                graph,
                entries,
            },
            table,
        ))
    }
}
