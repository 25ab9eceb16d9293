//! PFEB embedding interchange files.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "PFEB" | u32 version = 1 | u64 n_examples | u64 dim | u32 n_classes
//! n_classes x { u16 name_len | name (UTF-8) }
//! n_examples x { u32 class_index | dim x f32 }
//! ```

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{LabeledDataset, LabeledExample};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PFEB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 28;

pub fn save_embeddings(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(dataset)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Features are narrowed to `f32`.
pub fn to_bytes(dataset: &LabeledDataset) -> Result<Vec<u8>> {
    let dim = dataset.dim();
    let mut out = Vec::with_capacity(
        HEADER_LEN as usize + dataset.len() * (4 + 4 * dim),
    );
    out.write_all(&MAGIC).unwrap();
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    out.write_u64::<LittleEndian>(dataset.len() as u64).unwrap();
    out.write_u64::<LittleEndian>(dim as u64).unwrap();
    let n_classes = u32::try_from(dataset.n_classes())
        .map_err(|_| Error::InvalidClassName("too many classes".into()))?;
    out.write_u32::<LittleEndian>(n_classes).unwrap();
    for name in &dataset.class_names {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidClassName(format!("{} bytes is too long", name.len())))?;
        out.write_u16::<LittleEndian>(len).unwrap();
        out.write_all(name.as_bytes()).unwrap();
    }
    for ex in &dataset.examples {
        out.write_u32::<LittleEndian>(ex.label as u32).unwrap();
        for &x in &ex.features {
            out.write_f32::<LittleEndian>(x as f32).unwrap();
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<LabeledDataset> {
    let actual = bytes.len() as u64;
    let short = |expected: u64| Error::TruncatedFile { expected, actual };
    let mut cur = Cursor::new(bytes);

    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(|_| short(HEADER_LEN))?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let version = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| short(HEADER_LEN))?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n_examples = cur
        .read_u64::<LittleEndian>()
        .map_err(|_| short(HEADER_LEN))?;
    let dim = cur
        .read_u64::<LittleEndian>()
        .map_err(|_| short(HEADER_LEN))?;
    let n_classes = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| short(HEADER_LEN))?;

    let mut class_names = Vec::with_capacity(n_classes.min(1 << 16) as usize);
    for _ in 0..n_classes {
        let pos = cur.position();
        let len = cur.read_u16::<LittleEndian>().map_err(|_| short(pos + 2))? as usize;
        let mut name = vec![0u8; len];
        cur.read_exact(&mut name)
            .map_err(|_| short(pos + 2 + len as u64))?;
        let name = String::from_utf8(name)
            .map_err(|e| Error::InvalidClassName(format!("not UTF-8: {e}")))?;
        class_names.push(name);
    }

    let expected = dim
        .checked_mul(4)
        .and_then(|r| r.checked_add(4))
        .and_then(|r| r.checked_mul(n_examples))
        .and_then(|r| r.checked_add(cur.position()))
        .unwrap_or(u64::MAX);
    if actual != expected {
        return Err(short(expected));
    }

    let dim = dim as usize;
    let mut examples = Vec::with_capacity(n_examples as usize);
    for source_id in 0..n_examples as usize {
        let index = cur.read_u32::<LittleEndian>().unwrap();
        if index >= n_classes {
            return Err(Error::ClassIndexOutOfRange { index, n_classes });
        }
        let features = (0..dim)
            .map(|_| f64::from(cur.read_f32::<LittleEndian>().unwrap()))
            .collect();
        examples.push(LabeledExample {
            features,
            label: index as usize,
            source_id,
        });
    }
    LabeledDataset::with_dim(class_names, examples, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        LabeledDataset::new(
            vec!["TB".into()],
            vec![LabeledExample {
                features: vec![0.5, -1.25],
                label: 0,
                source_id: 0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn minimal_file_is_44_bytes() {
        let bytes = to_bytes(&tiny()).unwrap();
        // 28 header + (2 + 2) class entry + (4 + 2 * 4) example.
        assert_eq!(bytes.len(), 28 + 4 + 12);
        assert_eq!(&bytes[..4], b"PFEB");
        assert_eq!(&bytes[28..32], &[2, 0, b'T', b'B']);
        assert_eq!(&bytes[36..40], &0.5f32.to_le_bytes());
        assert_eq!(from_bytes(&bytes).unwrap(), tiny());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = to_bytes(&tiny()).unwrap();
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(from_bytes(&bad), Err(Error::UnsupportedVersion(9))));
        assert!(matches!(
            from_bytes(&bytes[..43]),
            Err(Error::TruncatedFile { expected: 44, actual: 43 })
        ));
        assert!(matches!(from_bytes(&bytes[..20]), Err(Error::TruncatedFile { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(from_bytes(&long), Err(Error::TruncatedFile { .. })));
        let mut bad = bytes.clone();
        bad[32] = 1;
        assert!(matches!(
            from_bytes(&bad),
            Err(Error::ClassIndexOutOfRange { index: 1, n_classes: 1 })
        ));
    }

    #[test]
    fn empty_dataset_round_trips() {
        let d = LabeledDataset::with_dim(vec!["a".into(), "b".into()], vec![], 7).unwrap();
        let back = from_bytes(&to_bytes(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.dim(), 7);
    }
}
