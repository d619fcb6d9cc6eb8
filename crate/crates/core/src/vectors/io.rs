//! Readers and writers for the fvecs/bvecs/ivecs benchmark file family.
//!
//! Each record is a 4-byte little-endian signed dimension header followed by
//! `dim` elements (f32 LE, u8, or i32 LE). All records in a file must share
//! one dimension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::vectors::{Dataset, ElemType, VectorData};

/// File format; determines the element type of the decoded dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecFormat {
    Fvecs,
    Bvecs,
    Ivecs,
}

impl VecFormat {
    pub fn elem_type(self) -> ElemType {
        match self {
            VecFormat::Fvecs => ElemType::F32,
            VecFormat::Bvecs => ElemType::U8,
            VecFormat::Ivecs => ElemType::I32,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VecFormat::Fvecs => "fvecs",
            VecFormat::Bvecs => "bvecs",
            VecFormat::Ivecs => "ivecs",
        }
    }

    pub fn from_name(s: &str) -> Option<VecFormat> {
        match s {
            "fvecs" => Some(VecFormat::Fvecs),
            "bvecs" => Some(VecFormat::Bvecs),
            "ivecs" => Some(VecFormat::Ivecs),
            _ => None,
        }
    }

    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<VecFormat> {
        path.extension()
            .and_then(|e| e.to_str())
            .and_then(VecFormat::from_name)
    }
}

/// Reads a whole vector file into memory.
///
/// An empty file decodes to an empty dataset. A record whose dimension
/// disagrees with the first record, or a truncated trailing record, is a
/// format error carrying the offending record index.
pub fn read_vector_file(path: &Path, format: VecFormat) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut dim: Option<usize> = None;
    let mut data = VectorData::with_capacity(format.elem_type(), 0);
    let mut record = 0usize;

    loop {
        let header = match reader.read_i32::<LittleEndian>() {
            Ok(v) => v,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(path, e)),
        };
        if header <= 0 {
            return Err(Error::format(
                path,
                format!("record {record}: non-positive dimension {header}"),
            ));
        }
        let d = header as usize;
        match dim {
            None => dim = Some(d),
            Some(expect) if expect != d => {
                return Err(Error::format(
                    path,
                    format!("record {record}: dimension {d} differs from first record {expect}"),
                ));
            }
            _ => {}
        }
        let res = match &mut data {
            VectorData::F32(out) => read_exact_f32(&mut reader, out, d),
            VectorData::U8(out) => read_exact_u8(&mut reader, out, d),
            VectorData::I32(out) => read_exact_i32(&mut reader, out, d),
        };
        res.map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(path, format!("record {record}: truncated"))
            } else {
                Error::io(path, e)
            }
        })?;
        record += 1;
    }

    match dim {
        Some(d) => Dataset::new(d, data),
        None => Ok(Dataset::empty(format.elem_type())),
    }
}

fn read_exact_f32(r: &mut impl Read, out: &mut Vec<f32>, n: usize) -> std::io::Result<()> {
    let start = out.len();
    out.resize(start + n, 0.0);
    r.read_f32_into::<LittleEndian>(&mut out[start..])
        .inspect_err(|_| out.truncate(start))
}

fn read_exact_u8(r: &mut impl Read, out: &mut Vec<u8>, n: usize) -> std::io::Result<()> {
    let start = out.len();
    out.resize(start + n, 0);
    r.read_exact(&mut out[start..])
        .inspect_err(|_| out.truncate(start))
}

fn read_exact_i32(r: &mut impl Read, out: &mut Vec<i32>, n: usize) -> std::io::Result<()> {
    let start = out.len();
    out.resize(start + n, 0);
    r.read_i32_into::<LittleEndian>(&mut out[start..])
        .inspect_err(|_| out.truncate(start))
}

/// Writes a dataset in the given format. The dataset element type must
/// match the format exactly; no conversion is performed, which keeps
/// read-after-write bit-exact.
pub fn write_vector_file(ds: &Dataset, path: &Path, format: VecFormat) -> Result<()> {
    if ds.count() > 0 && ds.elem_type() != format.elem_type() {
        return Err(Error::InvalidArgument(format!(
            "dataset element type {} cannot be written as {}",
            ds.elem_type().name(),
            format.name()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let dim = ds.dim();
    for i in 0..ds.count() {
        w.write_i32::<LittleEndian>(dim as i32)
            .map_err(|e| Error::io(path, e))?;
        let res = match ds.row(i) {
            crate::vectors::VectorView::F32(row) => {
                row.iter().try_for_each(|v| w.write_f32::<LittleEndian>(*v))
            }
            crate::vectors::VectorView::U8(row) => w.write_all(row),
            crate::vectors::VectorView::I32(row) => {
                row.iter().try_for_each(|v| w.write_i32::<LittleEndian>(*v))
            }
        };
        res.map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmpfile(name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        (dir, p)
    }

    #[test]
    fn decode_two_records() {
        let (_d, p) = tmpfile("a.fvecs");
        let mut f = File::create(&p).unwrap();
        for rec in [[1.0f32, 2.0], [3.0, 4.0]] {
            f.write_all(&2i32.to_le_bytes()).unwrap();
            for v in rec {
                f.write_all(&v.to_le_bytes()).unwrap();
            }
        }
        let ds = read_vector_file(&p, VecFormat::Fvecs).unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.count(), 2);
        assert_eq!(ds.as_f32_rows().unwrap(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let (_d, p) = tmpfile("e.fvecs");
        File::create(&p).unwrap();
        let ds = read_vector_file(&p, VecFormat::Fvecs).unwrap();
        assert_eq!(ds.count(), 0);
    }

    #[test]
    fn inconsistent_dim_reports_record_index() {
        let (_d, p) = tmpfile("bad.fvecs");
        let mut f = File::create(&p).unwrap();
        f.write_all(&2i32.to_le_bytes()).unwrap();
        f.write_all(&[0u8; 8]).unwrap();
        f.write_all(&3i32.to_le_bytes()).unwrap();
        f.write_all(&[0u8; 12]).unwrap();
        let err = read_vector_file(&p, VecFormat::Fvecs).unwrap_err();
        match err {
            Error::Format { msg, .. } => assert!(msg.contains("record 1"), "{msg}"),
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn truncated_record_is_format_error() {
        let (_d, p) = tmpfile("trunc.fvecs");
        let mut f = File::create(&p).unwrap();
        f.write_all(&4i32.to_le_bytes()).unwrap();
        f.write_all(&[0u8; 10]).unwrap(); // needs 16
        assert!(matches!(
            read_vector_file(&p, VecFormat::Fvecs),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn write_empty_dataset_gives_zero_length_file() {
        let (_d, p) = tmpfile("empty.fvecs");
        write_vector_file(&Dataset::empty(ElemType::F32), &p, VecFormat::Fvecs).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 0);
    }

    #[test]
    fn element_type_mismatch_rejected() {
        let (_d, p) = tmpfile("mismatch.fvecs");
        let ds = Dataset::from_u8(2, vec![1, 2, 3, 4]).unwrap();
        assert!(matches!(
            write_vector_file(&ds, &p, VecFormat::Fvecs),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (_d, p) = tmpfile("rt.fvecs");
        let ds = Dataset::from_f32(4, (0..12).map(|i| i as f32 * 0.25 - 1.0).collect()).unwrap();
        write_vector_file(&ds, &p, VecFormat::Fvecs).unwrap();
        let back = read_vector_file(&p, VecFormat::Fvecs).unwrap();
        assert_eq!(ds, back);
        let bytes1 = std::fs::read(&p).unwrap();
        write_vector_file(&back, &p, VecFormat::Fvecs).unwrap();
        assert_eq!(bytes1, std::fs::read(&p).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn roundtrip_f32(rows in 0usize..6, dim in 1usize..9, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f32> = (0..rows * dim).map(|_| rng.random_range(-1000.0..1000.0)).collect();
            let ds = if rows == 0 {
                Dataset::empty(ElemType::F32)
            } else {
                Dataset::from_f32(dim, vals).unwrap()
            };
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("x.fvecs");
            write_vector_file(&ds, &p, VecFormat::Fvecs).unwrap();
            let back = read_vector_file(&p, VecFormat::Fvecs).unwrap();
            prop_assert_eq!(ds.count(), back.count());
            if ds.count() > 0 {
                prop_assert_eq!(ds, back);
            }
        }

        #[test]
        fn roundtrip_u8(rows in 1usize..6, dim in 1usize..9, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<u8> = (0..rows * dim).map(|_| rng.random()).collect();
            let ds = Dataset::from_u8(dim, vals).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("x.bvecs");
            write_vector_file(&ds, &p, VecFormat::Bvecs).unwrap();
            prop_assert_eq!(ds, read_vector_file(&p, VecFormat::Bvecs).unwrap());
        }
    }
}
