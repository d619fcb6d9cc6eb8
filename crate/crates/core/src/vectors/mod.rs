//! Core vector and dataset types plus the distance primitives every other
//! module builds on.
//!
//! Datasets are dense row-major matrices with a uniform element type and
//! implicit vector ids `0..count`. Distances are metric-native: L2 is kept
//! squared, inner product is negated, so smaller always means closer.

pub mod io;

use crate::error::{Error, Result};

/// Element type of a dataset. `I32` appears only in ground-truth id lists
/// (ivecs); indexes are built over `F32` or `U8` data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemType {
    F32,
    U8,
    I32,
}

impl ElemType {
    pub fn size_bytes(self) -> usize {
        match self {
            ElemType::F32 | ElemType::I32 => 4,
            ElemType::U8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemType::F32 => "f32",
            ElemType::U8 => "u8",
            ElemType::I32 => "i32",
        }
    }

    pub fn from_name(s: &str) -> Option<ElemType> {
        match s {
            "f32" => Some(ElemType::F32),
            "u8" => Some(ElemType::U8),
            "i32" => Some(ElemType::I32),
            _ => None,
        }
    }
}

/// Typed row-major storage behind a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub enum VectorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

impl VectorData {
    pub fn elem_type(&self) -> ElemType {
        match self {
            VectorData::F32(_) => ElemType::F32,
            VectorData::U8(_) => ElemType::U8,
            VectorData::I32(_) => ElemType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VectorData::F32(v) => v.len(),
            VectorData::U8(v) => v.len(),
            VectorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_capacity(elem: ElemType, cap: usize) -> VectorData {
        match elem {
            ElemType::F32 => VectorData::F32(Vec::with_capacity(cap)),
            ElemType::U8 => VectorData::U8(Vec::with_capacity(cap)),
            ElemType::I32 => VectorData::I32(Vec::with_capacity(cap)),
        }
    }
}

/// Borrowed view of a single vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VectorView<'a> {
    F32(&'a [f32]),
    U8(&'a [u8]),
    I32(&'a [i32]),
}

impl<'a> VectorView<'a> {
    pub fn dim(&self) -> usize {
        match self {
            VectorView::F32(s) => s.len(),
            VectorView::U8(s) => s.len(),
            VectorView::I32(s) => s.len(),
        }
    }

    pub fn elem_type(&self) -> ElemType {
        match self {
            VectorView::F32(_) => ElemType::F32,
            VectorView::U8(_) => ElemType::U8,
            VectorView::I32(_) => ElemType::I32,
        }
    }

    pub fn as_f32(&self) -> Option<&'a [f32]> {
        match self {
            VectorView::F32(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<&'a [u8]> {
        match self {
            VectorView::U8(s) => Some(s),
            _ => None,
        }
    }

    /// Copies the vector into an f32 buffer, promoting integer elements.
    pub fn to_f32_vec(&self) -> Vec<f32> {
        match self {
            VectorView::F32(s) => s.to_vec(),
            VectorView::U8(s) => s.iter().map(|&v| v as f32).collect(),
            VectorView::I32(s) => s.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// A dense vector collection: `count` rows of dimension `dim`, uniform
/// element type, ids implicit `0..count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: VectorData,
}

impl Dataset {
    pub fn new(dim: usize, data: VectorData) -> Result<Dataset> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::InvalidArgument(
                "dataset with zero dim must be empty".into(),
            ));
        }
        if dim > 0 && !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "data length {} is not a multiple of dim {}",
                data.len(),
                dim
            )));
        }
        Ok(Dataset { dim, data })
    }

    pub fn from_f32(dim: usize, values: Vec<f32>) -> Result<Dataset> {
        Dataset::new(dim, VectorData::F32(values))
    }

    pub fn from_u8(dim: usize, values: Vec<u8>) -> Result<Dataset> {
        Dataset::new(dim, VectorData::U8(values))
    }

    pub fn from_i32(dim: usize, values: Vec<i32>) -> Result<Dataset> {
        Dataset::new(dim, VectorData::I32(values))
    }

    /// Empty dataset of the given element type; dim is undefined (0).
    pub fn empty(elem: ElemType) -> Dataset {
        Dataset {
            dim: 0,
            data: VectorData::with_capacity(elem, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn elem_type(&self) -> ElemType {
        self.data.elem_type()
    }

    pub fn data(&self) -> &VectorData {
        &self.data
    }

    pub fn row(&self, i: usize) -> VectorView<'_> {
        let lo = i * self.dim;
        let hi = lo + self.dim;
        match &self.data {
            VectorData::F32(v) => VectorView::F32(&v[lo..hi]),
            VectorData::U8(v) => VectorView::U8(&v[lo..hi]),
            VectorData::I32(v) => VectorView::I32(&v[lo..hi]),
        }
    }

    pub fn as_f32_rows(&self) -> Option<&[f32]> {
        match &self.data {
            VectorData::F32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u8_rows(&self) -> Option<&[u8]> {
        match &self.data {
            VectorData::U8(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i32_rows(&self) -> Option<&[i32]> {
        match &self.data {
            VectorData::I32(v) => Some(v),
            _ => None,
        }
    }

    /// On-disk bytes of one posting entry for this dataset: 4-byte id plus
    /// the raw vector payload.
    pub fn bytes_per_entry(&self) -> usize {
        4 + self.dim * self.elem_type().size_bytes()
    }
}

/// Distance metric. Both variants are "smaller is closer": L2 is squared
/// Euclidean distance, InnerProduct is the negated dot product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    L2,
    InnerProduct,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::InnerProduct => "ip",
        }
    }

    pub fn from_name(s: &str) -> Option<Metric> {
        match s {
            "l2" => Some(Metric::L2),
            "ip" => Some(Metric::InnerProduct),
            _ => None,
        }
    }

    /// Largest metric-native distance still within `(1 + eps)` of `base`
    /// in unsquared terms.
    ///
    /// L2 distances are stored squared, so the unsquared comparison
    /// `sqrt(d) <= (1 + eps) * sqrt(base)` becomes `d <= (1+eps)^2 * base`.
    /// Negated dot products can be negative; the slack then shrinks the
    /// magnitude instead of growing it so that the threshold always moves
    /// away from "closer".
    pub fn slack_threshold(self, base: f32, eps: f32) -> f32 {
        let f = 1.0 + eps;
        match self {
            Metric::L2 => f * f * base,
            Metric::InnerProduct => {
                if base >= 0.0 {
                    base * f
                } else {
                    base / f
                }
            }
        }
    }
}

#[inline]
pub(crate) fn l2_f32(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[inline]
pub(crate) fn ip_f32(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    -acc
}

#[inline]
pub(crate) fn l2_u8(a: &[u8], b: &[u8]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    // Promote to i32 so the squared term is exact; sums stay within u32
    // for dim <= 4096.
    let mut acc = 0u32;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = *x as i32 - *y as i32;
        acc += (d * d) as u32;
    }
    acc as f32
}

#[inline]
pub(crate) fn ip_u8(a: &[u8], b: &[u8]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0u32;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (*x as u32) * (*y as u32);
    }
    -(acc as f32)
}

/// Distance of a raw vector to an f32 centroid; used at build time where
/// cluster means are always f32.
#[inline]
pub(crate) fn dist_to_centroid(v: VectorView<'_>, c: &[f32], metric: Metric) -> f32 {
    match (v, metric) {
        (VectorView::F32(s), Metric::L2) => l2_f32(s, c),
        (VectorView::F32(s), Metric::InnerProduct) => ip_f32(s, c),
        (VectorView::U8(s), Metric::L2) => {
            let mut acc = 0.0f32;
            for (x, y) in s.iter().zip(c.iter()) {
                let d = *x as f32 - y;
                acc += d * d;
            }
            acc
        }
        (VectorView::U8(s), Metric::InnerProduct) => {
            let mut acc = 0.0f32;
            for (x, y) in s.iter().zip(c.iter()) {
                acc += *x as f32 * y;
            }
            -acc
        }
        (VectorView::I32(_), _) => unreachable!("i32 vectors are id lists, not points"),
    }
}

/// Metric distance between two vectors of the same element type.
///
/// Returns squared L2 or the negated dot product, deterministically for
/// identical inputs. Mixed element types must be promoted by the caller.
pub fn distance(a: VectorView<'_>, b: VectorView<'_>, metric: Metric) -> Result<f32> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    match (a, b) {
        (VectorView::F32(x), VectorView::F32(y)) => Ok(match metric {
            Metric::L2 => l2_f32(x, y),
            Metric::InnerProduct => ip_f32(x, y),
        }),
        (VectorView::U8(x), VectorView::U8(y)) => Ok(match metric {
            Metric::L2 => l2_u8(x, y),
            Metric::InnerProduct => ip_u8(x, y),
        }),
        _ => Err(Error::InvalidArgument(
            "element type mismatch: promote vectors to a common type first".into(),
        )),
    }
}

/// Infallible distance for internal hot paths where dims and types are
/// known to agree.
#[inline]
pub(crate) fn distance_unchecked(a: VectorView<'_>, b: VectorView<'_>, metric: Metric) -> f32 {
    match (a, b) {
        (VectorView::F32(x), VectorView::F32(y)) => match metric {
            Metric::L2 => l2_f32(x, y),
            Metric::InnerProduct => ip_f32(x, y),
        },
        (VectorView::U8(x), VectorView::U8(y)) => match metric {
            Metric::L2 => l2_u8(x, y),
            Metric::InnerProduct => ip_u8(x, y),
        },
        _ => unreachable!("mixed element types in internal distance"),
    }
}
