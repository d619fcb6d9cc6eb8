//! Exact top-k primitives shared by index construction and evaluation.
//!
//! Two engines live here: a plain scalar scan used wherever results feed an
//! oracle comparison (deterministic sequential accumulation), and a blocked
//! GEMM path for build-time bulk jobs (all-vectors-to-all-representatives)
//! where the candidate set is re-scored with the scalar kernel afterwards so
//! downstream comparisons see scalar-exact distances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::vectors::{distance_unchecked, Dataset, Metric};

/// A scored candidate. Ordering is ascending distance with ties broken by
/// ascending id, which is the tie rule used across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub dist: f32,
}

impl Neighbor {
    pub fn new(id: u32, dist: f32) -> Neighbor {
        Neighbor { id, dist }
    }
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Bounded selector keeping the `k` smallest neighbors seen so far.
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Neighbor>,
}

impl TopK {
    pub fn new(k: usize) -> TopK {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, n: Neighbor) {
        if self.heap.len() < self.k {
            self.heap.push(n);
        } else if let Some(worst) = self.heap.peek() {
            if n < *worst {
                self.heap.pop();
                self.heap.push(n);
            }
        }
    }

    /// Current worst kept distance, if the selector is full.
    #[inline]
    pub fn threshold(&self) -> Option<Neighbor> {
        if self.heap.len() == self.k {
            self.heap.peek().copied()
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Drains into ascending (dist, id) order.
    pub fn into_sorted(self) -> Vec<Neighbor> {
        let mut v = self.heap.into_vec();
        v.sort_unstable();
        v
    }
}

/// Exact top-k of every query against the full base, scalar kernel, one
/// query per rayon task. Tie order is (distance, id) ascending.
pub fn scalar_topk(
    base: &Dataset,
    queries: &Dataset,
    k: usize,
    metric: Metric,
) -> Result<Vec<Vec<Neighbor>>> {
    if base.is_empty() {
        return Err(Error::InvalidArgument("empty base dataset".into()));
    }
    if queries.dim() != base.dim() {
        return Err(Error::InvalidArgument(format!(
            "query dim {} != base dim {}",
            queries.dim(),
            base.dim()
        )));
    }
    if queries.elem_type() != base.elem_type() {
        return Err(Error::InvalidArgument(
            "query element type differs from base".into(),
        ));
    }
    let out = (0..queries.count())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let mut top = TopK::new(k);
            for id in 0..base.count() {
                let d = distance_unchecked(q, base.row(id), metric);
                top.push(Neighbor::new(id as u32, d));
            }
            top.into_sorted()
        })
        .collect();
    Ok(out)
}

/// Block edge for the GEMM path: queries per tile.
const QUERY_BLOCK: usize = 512;
/// Block edge for the GEMM path: base rows per tile.
const BASE_BLOCK: usize = 8192;

/// Exact top-k for f32 data via blocked `Q x B^T` products.
///
/// Candidates are gathered with GEMM arithmetic (whose rounding differs
/// slightly from the scalar kernel), over-fetched by `extra`, then re-scored
/// with the scalar kernel and re-sorted, so callers see the same distances
/// `distance()` would produce. Intended for build-time jobs; evaluation
/// oracles should call [`scalar_topk`].
pub fn bulk_topk_f32(
    base: &[f32],
    queries: &[f32],
    dim: usize,
    k: usize,
    extra: usize,
    metric: Metric,
) -> Vec<Vec<Neighbor>> {
    assert!(dim > 0 && base.len().is_multiple_of(dim) && queries.len().is_multiple_of(dim));
    let nb = base.len() / dim;
    let nq = queries.len() / dim;
    let fetch = (k + extra).min(nb);

    let base_norms: Vec<f32> = match metric {
        Metric::L2 => (0..nb)
            .map(|i| {
                let row = &base[i * dim..(i + 1) * dim];
                row.iter().map(|v| v * v).sum()
            })
            .collect(),
        Metric::InnerProduct => Vec::new(),
    };

    let mut out: Vec<Vec<Neighbor>> = Vec::with_capacity(nq);
    let blocks: Vec<Vec<Vec<Neighbor>>> = (0..nq)
        .step_by(QUERY_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|q0| {
            let qn = QUERY_BLOCK.min(nq - q0);
            let qblock = &queries[q0 * dim..(q0 + qn) * dim];
            let mut tops: Vec<TopK> = (0..qn).map(|_| TopK::new(fetch)).collect();
            let mut prod = vec![0.0f32; qn * BASE_BLOCK.min(nb)];
            let mut b0 = 0;
            while b0 < nb {
                let bn = BASE_BLOCK.min(nb - b0);
                let bblock = &base[b0 * dim..(b0 + bn) * dim];
                // prod[qi*bn + bi] = qblock[qi] . bblock[bi]
                unsafe {
                    matrixmultiply::sgemm(
                        qn,
                        dim,
                        bn,
                        1.0,
                        qblock.as_ptr(),
                        dim as isize,
                        1,
                        bblock.as_ptr(),
                        1,
                        dim as isize,
                        0.0,
                        prod.as_mut_ptr(),
                        bn as isize,
                        1,
                    );
                }
                for (qi, top) in tops.iter_mut().enumerate() {
                    let row = &prod[qi * bn..(qi + 1) * bn];
                    match metric {
                        Metric::L2 => {
                            // query norm cancels in the ranking; omit it
                            for (bi, dot) in row.iter().enumerate() {
                                let score = base_norms[b0 + bi] - 2.0 * dot;
                                top.push(Neighbor::new((b0 + bi) as u32, score));
                            }
                        }
                        Metric::InnerProduct => {
                            for (bi, dot) in row.iter().enumerate() {
                                top.push(Neighbor::new((b0 + bi) as u32, -dot));
                            }
                        }
                    }
                }
                b0 += bn;
            }
            // scalar rescore of the candidate set
            tops.into_iter()
                .enumerate()
                .map(|(qi, top)| {
                    let q = &qblock[qi * dim..(qi + 1) * dim];
                    let mut cands = top.into_sorted();
                    for c in cands.iter_mut() {
                        let b = &base[c.id as usize * dim..(c.id as usize + 1) * dim];
                        c.dist = match metric {
                            Metric::L2 => crate::vectors::l2_f32(q, b),
                            Metric::InnerProduct => crate::vectors::ip_f32(q, b),
                        };
                    }
                    cands.sort_unstable();
                    cands.truncate(k);
                    cands
                })
                .collect()
        })
        .collect();
    for mut block in blocks {
        out.append(&mut block);
    }
    out
}
