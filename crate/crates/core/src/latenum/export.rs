//! CSV export and a little-endian binary cache for enumerated elements.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{EnumError, LatticeElement};
use crate::quaternion::{quat_norm, AlgebraDesc, QuatElt};

pub const CACHE_MAGIC: &[u8; 8] = b"HYPLATC1";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a cache file (bad magic)")]
    BadMagic,
    #[error("cache was written for a different configuration")]
    KeyMismatch,
    #[error("cache file truncated or malformed")]
    Malformed,
    #[error("cached element failed re-verification: {0}")]
    Verify(String),
    #[error(transparent)]
    Enum(#[from] EnumError),
}

/// Write `bytes` to a sibling temporary file and rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// CSV text with columns `c0..c7, t1, t2, norm_check`; `norm_check` is the exact
/// reduced norm written as `n0+n1w`.
pub fn elements_csv(elements: &[LatticeElement], a: &AlgebraDesc) -> Result<String, EnumError> {
    let mut s = String::from("c0,c1,c2,c3,c4,c5,c6,c7,t1,t2,norm_check\n");
    for el in elements {
        let n = quat_norm(&el.q, a)?;
        for c in el.coords() {
            let _ = write!(s, "{c},");
        }
        let _ = writeln!(s, "{:.12},{:.12},{}{:+}w", el.radii.0, el.radii.1, n.a, n.b);
    }
    Ok(s)
}

pub fn write_csv(path: &Path, elements: &[LatticeElement], a: &AlgebraDesc) -> Result<(), CacheError> {
    write_atomic(path, elements_csv(elements, a)?.as_bytes())?;
    Ok(())
}

/// Layout: magic, key length (u32), key, count (u64), then per element eight
/// i64 coordinates and the two radii as f64, all little-endian.
pub fn encode_cache(key: &[u8], elements: &[LatticeElement]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + key.len() + elements.len() * 80);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(key.len() as u32).to_le_bytes());
    out.extend_from_slice(key);
    out.extend_from_slice(&(elements.len() as u64).to_le_bytes());
    for el in elements {
        for c in el.coords() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&el.radii.0.to_le_bytes());
        out.extend_from_slice(&el.radii.1.to_le_bytes());
    }
    out
}

pub fn write_cache(path: &Path, key: &[u8], elements: &[LatticeElement]) -> Result<(), CacheError> {
    write_atomic(path, &encode_cache(key, elements))?;
    Ok(())
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CacheError> {
        if self.0.len() < N {
            return Err(CacheError::Malformed);
        }
        let (h, t) = self.0.split_at(N);
        self.0 = t;
        Ok(h.try_into().expect("length checked"))
    }
}

/// Decode a cache, recomputing matrices and checking the stored radii and norms.
pub fn decode_cache(bytes: &[u8], key: &[u8], a: &AlgebraDesc) -> Result<Vec<LatticeElement>, CacheError> {
    let mut r = Reader(bytes);
    if &r.take::<8>()? != CACHE_MAGIC {
        return Err(CacheError::BadMagic);
    }
    let klen = u32::from_le_bytes(r.take()?) as usize;
    if r.0.len() < klen {
        return Err(CacheError::Malformed);
    }
    if &r.0[..klen] != key {
        return Err(CacheError::KeyMismatch);
    }
    r.0 = &r.0[klen..];
    let n = u64::from_le_bytes(r.take()?) as usize;
    if r.0.len() != n.checked_mul(80).ok_or(CacheError::Malformed)? {
        return Err(CacheError::Malformed);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = [0i64; 8];
        for x in c.iter_mut() {
            *x = i64::from_le_bytes(r.take()?);
        }
        let t1 = f64::from_le_bytes(r.take()?);
        let t2 = f64::from_le_bytes(r.take()?);
        let q = QuatElt::from_coords(&c);
        if !super::norm_is_one(&c, a)? {
            return Err(CacheError::Verify(format!("{c:?} has norm != 1")));
        }
        let el = LatticeElement::from_quat(q, a)?;
        if el.radii.0.to_bits() != t1.to_bits() || el.radii.1.to_bits() != t2.to_bits() {
            return Err(CacheError::Verify(format!("{c:?} radii differ from recomputation")));
        }
        out.push(el);
    }
    Ok(out)
}

/// `Ok(None)` if the file does not exist.
pub fn read_cache(path: &Path, key: &[u8], a: &AlgebraDesc) -> Result<Option<Vec<LatticeElement>>, CacheError> {
    match std::fs::read(path) {
        Ok(b) => decode_cache(&b, key, a).map(Some),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latenum::{enumerate_units_with, EnumOptions};

    #[test]
    fn cache_roundtrip_and_key_check() {
        let a = AlgebraDesc::preset_q17();
        let els = enumerate_units_with(&a, 3.0, 3.0, &EnumOptions::default()).unwrap();
        let bytes = encode_cache(b"k1", &els);
        assert_eq!(decode_cache(&bytes, b"k1", &a).unwrap(), els);
        assert!(matches!(decode_cache(&bytes, b"k2", &a), Err(CacheError::KeyMismatch)));
        assert!(matches!(decode_cache(&bytes[..bytes.len() - 1], b"k1", &a), Err(CacheError::Malformed)));
        let mut bad = bytes.clone();
        bad[0] ^= 1;
        assert!(matches!(decode_cache(&bad, b"k1", &a), Err(CacheError::BadMagic)));
    }

    #[test]
    fn csv_shape() {
        let a = AlgebraDesc::preset_q17();
        let els = enumerate_units_with(&a, 0.0, 0.0, &EnumOptions::default()).unwrap();
        let s = elements_csv(&els, &a).unwrap();
        assert_eq!(s, "c0,c1,c2,c3,c4,c5,c6,c7,t1,t2,norm_check\n1,0,0,0,0,0,0,0,0.000000000000,0.000000000000,1+0w\n");
    }
}
