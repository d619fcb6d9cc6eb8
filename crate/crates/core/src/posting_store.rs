//! On-disk posting lists: one packed file with an in-memory offsets table.
//!
//! `postings.bin` layout (all little endian):
//!
//! ```text
//! magic "HVPS" | version u32 | n_lists u64 | dim u32 | elem u8 | pad [u8;3]
//! posting_limit u64 | table_crc u32
//! offsets table: n_lists x { offset u64 (payload-relative), len u32, crc u32 }
//! payload: per list, entries of [id u32][vector bytes], sorted by id
//! ```
//!
//! Every list is bounded by `posting_limit` bytes, so a read touches at most
//! `ceil(limit / 4096)` pages. Read statistics are counted in 4KB pages,
//! matching the disk-access budget the limit is designed around.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::ops::AddAssign;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::vectors::{Dataset, ElemType, VectorData, VectorView};

pub const PAGE_SIZE: u64 = 4096;
pub const POSTINGS_FILE: &str = "postings.bin";
pub const NAVIGATOR_FILE: &str = "navigator";
pub const META_FILE: &str = "meta";

const MAGIC: &[u8; 4] = b"HVPS";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 4 + 1 + 3 + 8 + 4;
const TABLE_ENTRY_LEN: u64 = 8 + 4 + 4;

/// IO accounting for posting reads within one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PostingReadStats {
    pub lists_read: u64,
    pub bytes_read: u64,
    pub read_calls: u64,
}

impl AddAssign for PostingReadStats {
    fn add_assign(&mut self, rhs: Self) {
        self.lists_read += rhs.lists_read;
        self.bytes_read += rhs.bytes_read;
        self.read_calls += rhs.read_calls;
    }
}

#[derive(Debug, Clone, Copy)]
struct ListLocation {
    offset: u64,
    len: u32,
    crc: u32,
}

/// Decoded posting list: parallel ids and row-major vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PostingBlock {
    dim: usize,
    pub ids: Vec<u32>,
    pub vectors: VectorData,
}

impl PostingBlock {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn entry(&self, i: usize) -> (u32, VectorView<'_>) {
        let lo = i * self.dim;
        let hi = lo + self.dim;
        let v = match &self.vectors {
            VectorData::F32(rows) => VectorView::F32(&rows[lo..hi]),
            VectorData::U8(rows) => VectorView::U8(&rows[lo..hi]),
            VectorData::I32(rows) => VectorView::I32(&rows[lo..hi]),
        };
        (self.ids[i], v)
    }
}

fn encode_entries(data: &Dataset, members: &[u32], out: &mut Vec<u8>) {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    for id in sorted {
        out.extend_from_slice(&id.to_le_bytes());
        match data.row(id as usize) {
            VectorView::F32(row) => {
                for v in row {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            VectorView::U8(row) => out.extend_from_slice(row),
            VectorView::I32(_) => unreachable!(),
        }
    }
}

/// Writes `postings.bin` for a partition. Lists are laid out in list-id
/// order with entries sorted by vector id, so identical inputs produce
/// identical bytes.
pub fn write_postings(
    dir: &Path,
    data: &Dataset,
    assignment: &ClusterAssignment,
    posting_limit_bytes: usize,
) -> Result<()> {
    let n_lists = assignment.num_lists();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); n_lists];
    for (v, lists) in assignment.assignment.iter().enumerate() {
        for &c in lists {
            members[c as usize].push(v as u32);
        }
    }

    let mut table = Vec::with_capacity(n_lists);
    let mut payload: Vec<u8> = Vec::new();
    let mut buf: Vec<u8> = Vec::new();
    for list in &members {
        buf.clear();
        encode_entries(data, list, &mut buf);
        if buf.len() > posting_limit_bytes {
            return Err(Error::Internal(format!(
                "posting list of {} bytes exceeds the {}-byte limit; clustering contract breach",
                buf.len(),
                posting_limit_bytes
            )));
        }
        table.push(ListLocation {
            offset: payload.len() as u64,
            len: buf.len() as u32,
            crc: crc32fast::hash(&buf),
        });
        payload.extend_from_slice(&buf);
    }

    let mut table_bytes = Vec::with_capacity(n_lists * TABLE_ENTRY_LEN as usize);
    for loc in &table {
        table_bytes.write_u64::<LittleEndian>(loc.offset).unwrap();
        table_bytes.write_u32::<LittleEndian>(loc.len).unwrap();
        table_bytes.write_u32::<LittleEndian>(loc.crc).unwrap();
    }

    let path = dir.join(POSTINGS_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(|e| Error::io(&path, e))?;
    w.write_u32::<LittleEndian>(VERSION)
        .map_err(|e| Error::io(&path, e))?;
    w.write_u64::<LittleEndian>(n_lists as u64)
        .map_err(|e| Error::io(&path, e))?;
    w.write_u32::<LittleEndian>(data.dim() as u32)
        .map_err(|e| Error::io(&path, e))?;
    w.write_u8(match data.elem_type() {
        ElemType::F32 => 0,
        ElemType::U8 => 1,
        ElemType::I32 => {
            return Err(Error::InvalidArgument(
                "i32 datasets cannot be indexed".into(),
            ))
        }
    })
    .map_err(|e| Error::io(&path, e))?;
    w.write_all(&[0u8; 3]).map_err(|e| Error::io(&path, e))?;
    w.write_u64::<LittleEndian>(posting_limit_bytes as u64)
        .map_err(|e| Error::io(&path, e))?;
    w.write_u32::<LittleEndian>(crc32fast::hash(&table_bytes))
        .map_err(|e| Error::io(&path, e))?;
    w.write_all(&table_bytes).map_err(|e| Error::io(&path, e))?;
    w.write_all(&payload).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Read-side handle: header and offsets table in memory, payload accessed
/// by positioned reads. Safe to share across threads.
#[derive(Debug)]
pub struct PostingReader {
    path: PathBuf,
    file: File,
    dim: usize,
    elem: ElemType,
    posting_limit: u64,
    payload_base: u64,
    table: Vec<ListLocation>,
}

impl PostingReader {
    pub fn open(dir: &Path) -> Result<PostingReader> {
        let path = dir.join(POSTINGS_FILE);
        let mut file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut header = vec![0u8; HEADER_LEN as usize];
        file.read_exact(&mut header)
            .map_err(|e| Error::io(&path, e))?;
        if &header[..4] != MAGIC {
            return Err(Error::format(&path, "bad magic"));
        }
        let version = LittleEndian::read_u32(&header[4..8]);
        if version != VERSION {
            return Err(Error::format(
                &path,
                format!("unsupported version {version}"),
            ));
        }
        let n_lists = LittleEndian::read_u64(&header[8..16]) as usize;
        let dim = LittleEndian::read_u32(&header[16..20]) as usize;
        let elem = match header[20] {
            0 => ElemType::F32,
            1 => ElemType::U8,
            other => return Err(Error::format(&path, format!("unknown elem type {other}"))),
        };
        let posting_limit = LittleEndian::read_u64(&header[24..32]);
        let table_crc = LittleEndian::read_u32(&header[32..36]);

        let mut table_bytes = vec![0u8; n_lists * TABLE_ENTRY_LEN as usize];
        file.read_exact(&mut table_bytes)
            .map_err(|e| Error::io(&path, e))?;
        if crc32fast::hash(&table_bytes) != table_crc {
            return Err(Error::Corruption(
                "postings offsets table checksum mismatch".into(),
            ));
        }
        let payload_base = HEADER_LEN + table_bytes.len() as u64;
        let file_len = file.metadata().map_err(|e| Error::io(&path, e))?.len();

        let mut table = Vec::with_capacity(n_lists);
        let mut cursor = &table_bytes[..];
        let mut end_prev = 0u64;
        for i in 0..n_lists {
            let offset = cursor.read_u64::<LittleEndian>().unwrap();
            let len = cursor.read_u32::<LittleEndian>().unwrap();
            let crc = cursor.read_u32::<LittleEndian>().unwrap();
            if offset != end_prev || payload_base + offset + len as u64 > file_len {
                return Err(Error::Corruption(format!(
                    "posting list {i} has an inconsistent extent"
                )));
            }
            if len as u64 > posting_limit {
                return Err(Error::Corruption(format!(
                    "posting list {i} exceeds the byte limit"
                )));
            }
            end_prev = offset + len as u64;
            table.push(ListLocation { offset, len, crc });
        }

        Ok(PostingReader {
            path,
            file,
            dim,
            elem,
            posting_limit,
            payload_base,
            table,
        })
    }

    pub fn num_lists(&self) -> usize {
        self.table.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elem_type(&self) -> ElemType {
        self.elem
    }

    pub fn posting_limit_bytes(&self) -> u64 {
        self.posting_limit
    }

    pub fn entry_bytes(&self) -> usize {
        4 + self.dim * self.elem.size_bytes()
    }

    /// Serialized byte length of one list without reading it.
    pub fn list_len_bytes(&self, list_id: u32) -> Result<u32> {
        self.table
            .get(list_id as usize)
            .map(|l| l.len)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "list id {list_id} out of range ({} lists)",
                    self.table.len()
                ))
            })
    }

    /// Fetches one posting list and reports the page-granular IO cost.
    pub fn read_posting(&self, list_id: u32) -> Result<(PostingBlock, PostingReadStats)> {
        let loc = *self.table.get(list_id as usize).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "list id {list_id} out of range ({} lists)",
                self.table.len()
            ))
        })?;
        let mut raw = vec![0u8; loc.len as usize];
        self.file
            .read_exact_at(&mut raw, self.payload_base + loc.offset)
            .map_err(|e| Error::io(&self.path, e))?;
        if crc32fast::hash(&raw) != loc.crc {
            return Err(Error::Corruption(format!(
                "posting list {list_id} checksum mismatch"
            )));
        }
        let pages = (loc.len as u64).div_ceil(PAGE_SIZE);
        let stats = PostingReadStats {
            lists_read: 1,
            bytes_read: pages * PAGE_SIZE,
            read_calls: pages,
        };

        let entry = self.entry_bytes();
        debug_assert_eq!(raw.len() % entry, 0);
        let n = raw.len() / entry;
        let mut ids = Vec::with_capacity(n);
        let mut vectors = VectorData::with_capacity(self.elem, n * self.dim);
        for chunk in raw.chunks_exact(entry) {
            ids.push(LittleEndian::read_u32(&chunk[..4]));
            match &mut vectors {
                VectorData::F32(out) => {
                    let start = out.len();
                    out.resize(start + self.dim, 0.0);
                    LittleEndian::read_f32_into(&chunk[4..], &mut out[start..]);
                }
                VectorData::U8(out) => out.extend_from_slice(&chunk[4..]),
                VectorData::I32(_) => unreachable!(),
            }
        }
        Ok((
            PostingBlock {
                dim: self.dim,
                ids,
                vectors,
            },
            stats,
        ))
    }
}

/// Versioned key-value text metadata for an index directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexMeta {
    entries: std::collections::BTreeMap<String, String>,
}

impl IndexMeta {
    pub const FORMAT: &'static str = "hivf-index";
    pub const VERSION: &'static str = "1";

    pub fn new() -> IndexMeta {
        let mut m = IndexMeta::default();
        m.set("format", Self::FORMAT);
        m.set("version", Self::VERSION);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .ok_or_else(|| Error::Corruption(format!("meta key `{key}` missing")))?
            .parse()
            .map_err(|_| Error::Corruption(format!("meta key `{key}` unparseable")))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(META_FILE);
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<IndexMeta> {
        let path = dir.join(META_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut meta = IndexMeta::default();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(&path, format!("bad meta line `{line}`")))?;
            meta.set(k, v);
        }
        if meta.get("format") != Some(Self::FORMAT) {
            return Err(Error::format(&path, "not an index meta file"));
        }
        if meta.get("version") != Some(Self::VERSION) {
            return Err(Error::format(&path, "unsupported index version"));
        }
        Ok(meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{build_partition, BalancedClusteringConfig};
    use crate::vectors::Metric;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_f32(dim, (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .unwrap()
    }

    fn manual_assignment(n_lists: usize, memberships: Vec<Vec<u32>>) -> ClusterAssignment {
        let mut sizes = vec![0u32; n_lists];
        for a in &memberships {
            for &c in a {
                sizes[c as usize] += 1;
            }
        }
        ClusterAssignment {
            rep_ids: (0..n_lists as u32).collect(),
            assignment: memberships,
            sizes,
            leaf_sizes: Vec::new(),
            dropped_replicas: 0,
            displaced_primaries: 0,
        }
    }

    #[test]
    fn roundtrip_written_lists() {
        let data = random_dataset(8, 3, 1);
        let asg = manual_assignment(
            4,
            vec![
                vec![0],
                vec![0, 1],
                vec![1],
                vec![2],
                vec![2, 3],
                vec![3],
                vec![3],
                vec![0],
            ],
        );
        let dir = tempfile::tempdir().unwrap();
        write_postings(dir.path(), &data, &asg, 1024).unwrap();
        let reader = PostingReader::open(dir.path()).unwrap();
        assert_eq!(reader.num_lists(), 4);
        let (block, stats) = reader.read_posting(0).unwrap();
        assert_eq!(block.ids, vec![0, 1, 7]);
        assert_eq!(stats.lists_read, 1);
        for i in 0..block.len() {
            let (id, v) = block.entry(i);
            assert_eq!(v, data.row(id as usize));
        }
    }

    #[test]
    fn empty_list_is_valid() {
        let data = random_dataset(2, 2, 2);
        let asg = manual_assignment(3, vec![vec![0], vec![0]]);
        let dir = tempfile::tempdir().unwrap();
        write_postings(dir.path(), &data, &asg, 1024).unwrap();
        let reader = PostingReader::open(dir.path()).unwrap();
        let (block, stats) = reader.read_posting(1).unwrap();
        assert!(block.is_empty());
        assert_eq!(stats.bytes_read, 0);
        let (block2, _) = reader.read_posting(2).unwrap();
        assert!(block2.is_empty());
    }

    #[test]
    fn out_of_range_list_rejected() {
        let data = random_dataset(2, 2, 3);
        let asg = manual_assignment(2, vec![vec![0], vec![1]]);
        let dir = tempfile::tempdir().unwrap();
        write_postings(dir.path(), &data, &asg, 1024).unwrap();
        let reader = PostingReader::open(dir.path()).unwrap();
        assert!(matches!(
            reader.read_posting(2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn oversized_list_is_contract_breach() {
        let data = random_dataset(10, 2, 4);
        let asg = manual_assignment(1, (0..10).map(|_| vec![0u32]).collect());
        let dir = tempfile::tempdir().unwrap();
        // 10 entries of 12 bytes > 64-byte limit
        assert!(matches!(
            write_postings(dir.path(), &data, &asg, 64),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn full_scan_recovers_closure_expanded_multiset() {
        let data = random_dataset(300, 4, 5);
        let mut cfg = BalancedClusteringConfig::for_dataset(4, data.elem_type());
        cfg.max_leaf_entries = Some(8);
        let asg = build_partition(&data, &cfg, Metric::L2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_postings(dir.path(), &data, &asg, cfg.posting_limit_bytes).unwrap();
        let reader = PostingReader::open(dir.path()).unwrap();
        let mut seen = vec![0u32; 300];
        for list in 0..reader.num_lists() as u32 {
            let (block, _) = reader.read_posting(list).unwrap();
            for &id in &block.ids {
                seen[id as usize] += 1;
            }
        }
        let want: Vec<u32> = asg.assignment.iter().map(|a| a.len() as u32).collect();
        assert_eq!(seen, want);
    }

    /// Independent byte-level scan of the offsets table; does not go
    /// through PostingReader.
    #[test]
    fn independent_file_scan_verifies_byte_bound() {
        let data = random_dataset(1000, 4, 6);
        let mut cfg = BalancedClusteringConfig::for_dataset(4, data.elem_type());
        cfg.max_leaf_entries = Some(10);
        let asg = build_partition(&data, &cfg, Metric::L2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_postings(dir.path(), &data, &asg, cfg.posting_limit_bytes).unwrap();

        let bytes = std::fs::read(dir.path().join(POSTINGS_FILE)).unwrap();
        assert_eq!(&bytes[..4], b"HVPS");
        let n_lists = LittleEndian::read_u64(&bytes[8..16]) as usize;
        let limit = LittleEndian::read_u64(&bytes[24..32]);
        let table = &bytes[HEADER_LEN as usize..HEADER_LEN as usize + n_lists * 16];
        let mut end_prev = 0u64;
        for i in 0..n_lists {
            let off = LittleEndian::read_u64(&table[i * 16..i * 16 + 8]);
            let len = LittleEndian::read_u32(&table[i * 16 + 8..i * 16 + 12]) as u64;
            assert!(len <= limit, "list {i} length {len} over {limit}");
            assert_eq!(off, end_prev, "list {i} extents must be contiguous");
            end_prev = off + len;
        }
        assert_eq!(
            HEADER_LEN + (n_lists as u64) * 16 + end_prev,
            bytes.len() as u64
        );
    }

    #[test]
    fn corruption_detected_by_checksum() {
        let data = random_dataset(50, 3, 7);
        let asg = manual_assignment(2, (0..50).map(|i| vec![(i % 2) as u32]).collect());
        let dir = tempfile::tempdir().unwrap();
        write_postings(dir.path(), &data, &asg, 4096).unwrap();
        let path = dir.path().join(POSTINGS_FILE);
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        let reader = PostingReader::open(dir.path()).unwrap();
        let res: Vec<_> = (0..2).map(|l| reader.read_posting(l)).collect();
        assert!(res.iter().any(|r| matches!(r, Err(Error::Corruption(_)))));
    }

    #[test]
    fn stats_are_additive_and_page_bounded() {
        let data = random_dataset(400, 16, 8);
        let asg = manual_assignment(4, (0..400).map(|i| vec![(i % 4) as u32]).collect());
        let dir = tempfile::tempdir().unwrap();
        let limit = 100 * (4 + 16 * 4);
        write_postings(dir.path(), &data, &asg, limit).unwrap();
        let reader = PostingReader::open(dir.path()).unwrap();
        let mut sum = PostingReadStats::default();
        for l in 0..4 {
            let (_, s) = reader.read_posting(l).unwrap();
            assert!(s.bytes_read <= (limit as u64).div_ceil(PAGE_SIZE) * PAGE_SIZE);
            assert_eq!(s.read_calls, s.bytes_read.div_ceil(PAGE_SIZE));
            sum += s;
        }
        assert_eq!(sum.lists_read, 4);
        let (_, s0) = reader.read_posting(0).unwrap();
        let (_, s1) = reader.read_posting(1).unwrap();
        let mut separate = s0;
        separate += s1;
        let mut together = PostingReadStats::default();
        for l in [0u32, 1] {
            let (_, s) = reader.read_posting(l).unwrap();
            together += s;
        }
        assert_eq!(together, separate);
    }

    #[test]
    fn deterministic_bytes() {
        let data = random_dataset(200, 4, 9);
        let mut cfg = BalancedClusteringConfig::for_dataset(4, data.elem_type());
        cfg.max_leaf_entries = Some(8);
        cfg.seed = 11;
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        for d in [&d1, &d2] {
            let asg = build_partition(&data, &cfg, Metric::L2).unwrap();
            write_postings(d.path(), &data, &asg, cfg.posting_limit_bytes).unwrap();
        }
        let b1 = std::fs::read(d1.path().join(POSTINGS_FILE)).unwrap();
        let b2 = std::fs::read(d2.path().join(POSTINGS_FILE)).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn unknown_version_rejected() {
        let data = random_dataset(4, 2, 10);
        let asg = manual_assignment(2, vec![vec![0], vec![1], vec![0], vec![1]]);
        let dir = tempfile::tempdir().unwrap();
        write_postings(dir.path(), &data, &asg, 1024).unwrap();
        let path = dir.path().join(POSTINGS_FILE);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            PostingReader::open(dir.path()),
            Err(Error::Format { .. })
        ));
    }

    /// The reference limits keep reads within a handful of pages: 12KB byte
    /// lists span at most 3, 48KB float lists at most 12.
    #[test]
    fn reference_limits_page_budget() {
        let u8_limit = crate::clustering::default_posting_limit_bytes(128, ElemType::U8) as u64;
        let f32_limit = crate::clustering::default_posting_limit_bytes(128, ElemType::F32) as u64;
        assert!(u8_limit.div_ceil(PAGE_SIZE) <= 3, "{u8_limit}");
        assert!(f32_limit.div_ceil(PAGE_SIZE) <= 12, "{f32_limit}");
    }

    #[test]
    fn meta_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut meta = IndexMeta::new();
        meta.set("metric", "l2");
        meta.set("dim", 128usize);
        meta.save(dir.path()).unwrap();
        let back = IndexMeta::load(dir.path()).unwrap();
        assert_eq!(back.get("metric"), Some("l2"));
        assert_eq!(back.get_parsed::<usize>("dim").unwrap(), 128);
        assert_eq!(meta, back);
    }
}
