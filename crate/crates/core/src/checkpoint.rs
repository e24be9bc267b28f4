//! Versioned binary container of named arrays.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic  b"MGCK"
//! u32    format version
//! u32    entry count
//! entry* u8 kind (0 = f64 tensor, 1 = bytes)
//!        u32 name length, name bytes (UTF-8)
//!        tensor: u32 ndim, u64 dims[ndim], f64 data[prod(dims)]
//!        bytes:  u64 length, raw bytes
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MGCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0} (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("entry `{0}` is malformed")]
    Malformed(String),
    #[error("missing entry `{0}`")]
    Missing(String),
    #[error("entry `{name}` has shape {actual:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Tensor { shape: Vec<usize>, data: Vec<f64> },
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    entries: Vec<(String, Payload)>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        if end > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    fn insert(&mut self, name: &str, payload: Payload) {
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| n == name) {
            slot.1 = payload;
        } else {
            self.entries.push((name.to_string(), payload));
        }
    }

    pub fn put_tensor(&mut self, name: &str, shape: &[usize], data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.insert(
            name,
            Payload::Tensor {
                shape: shape.to_vec(),
                data,
            },
        );
    }

    pub fn put_matrix(&mut self, name: &str, m: &Array2<f64>) {
        let (r, c) = m.dim();
        self.put_tensor(name, &[r, c], m.iter().copied().collect());
    }

    pub fn put_bytes(&mut self, name: &str, bytes: Vec<u8>) {
        self.insert(name, Payload::Bytes(bytes));
    }

    pub fn get(&self, name: &str) -> Option<&Payload> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f64]), CheckpointError> {
        match self.get(name) {
            Some(Payload::Tensor { shape, data }) => Ok((shape, data)),
            Some(_) => Err(CheckpointError::Malformed(name.into())),
            None => Err(CheckpointError::Missing(name.into())),
        }
    }

    pub fn matrix(&self, name: &str) -> Result<Array2<f64>, CheckpointError> {
        let (shape, data) = self.tensor(name)?;
        if shape.len() != 2 {
            return Err(CheckpointError::Malformed(name.into()));
        }
        Array2::from_shape_vec((shape[0], shape[1]), data.to_vec())
            .map_err(|_| CheckpointError::Malformed(name.into()))
    }

    /// Loads a matrix and checks its shape against `expected`.
    pub fn matrix_like(
        &self,
        name: &str,
        expected: (usize, usize),
    ) -> Result<Array2<f64>, CheckpointError> {
        let m = self.matrix(name)?;
        if m.dim() != expected {
            return Err(CheckpointError::Shape {
                name: name.into(),
                expected: vec![expected.0, expected.1],
                actual: vec![m.nrows(), m.ncols()],
            });
        }
        Ok(m)
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8], CheckpointError> {
        match self.get(name) {
            Some(Payload::Bytes(b)) => Ok(b),
            Some(_) => Err(CheckpointError::Malformed(name.into())),
            None => Err(CheckpointError::Missing(name.into())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, payload) in &self.entries {
            let kind: u8 = match payload {
                Payload::Tensor { .. } => 0,
                Payload::Bytes(_) => 1,
            };
            out.push(kind);
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match payload {
                Payload::Tensor { shape, data } => {
                    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
                    for &d in shape {
                        out.extend_from_slice(&(d as u64).to_le_bytes());
                    }
                    for v in data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Payload::Bytes(b) => {
                    out.extend_from_slice(&(b.len() as u64).to_le_bytes());
                    out.extend_from_slice(b);
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let kind = r.u8()?;
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Malformed("<name>".into()))?;
            let payload = match kind {
                0 => {
                    let ndim = r.u32()? as usize;
                    let mut shape = Vec::with_capacity(ndim.min(8));
                    for _ in 0..ndim {
                        shape.push(r.u64()? as usize);
                    }
                    let n = shape
                        .iter()
                        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                        .ok_or_else(|| CheckpointError::Malformed(name.clone()))?;
                    let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
                    let data = raw
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Payload::Tensor { shape, data }
                }
                1 => {
                    let len = r.u64()? as usize;
                    Payload::Bytes(r.take(len)?.to_vec())
                }
                _ => return Err(CheckpointError::Malformed(name)),
            };
            entries.push((name, payload));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        // Write-then-rename so an interrupted save never clobbers the last
        // good checkpoint.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Serializes an `f64` by its bit pattern so non-finite values survive
/// text formats that lack them.
pub mod f64_bits {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(v.to_bits())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(f64::from_bits(u64::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn round_trip_mixed_entries() {
        let mut c = Container::new();
        c.put_matrix("w", &array![[1.0, -2.5], [f64::MIN_POSITIVE, 3.0]]);
        c.put_bytes("meta", b"{\"iteration\":3}".to_vec());
        c.put_tensor("scalar", &[], vec![4.0]);
        let back = Container::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.matrix("w").unwrap(), array![[1.0, -2.5], [f64::MIN_POSITIVE, 3.0]]);
        assert_eq!(back.bytes("meta").unwrap(), b"{\"iteration\":3}");
    }

    #[test]
    fn header_errors() {
        assert!(matches!(Container::from_bytes(b"NOPE"), Err(CheckpointError::BadMagic)));
        let mut bytes = Container::new().to_bytes();
        bytes[4] = 99;
        assert!(matches!(
            Container::from_bytes(&bytes),
            Err(CheckpointError::UnsupportedVersion(99))
        ));
        let mut c = Container::new();
        c.put_matrix("w", &array![[1.0]]);
        let bytes = c.to_bytes();
        assert!(matches!(
            Container::from_bytes(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated)
        ));
    }

    #[test]
    fn shape_checked_load() {
        let mut c = Container::new();
        c.put_matrix("w", &Array2::zeros((2, 3)));
        assert!(c.matrix_like("w", (2, 3)).is_ok());
        assert!(matches!(c.matrix_like("w", (3, 2)), Err(CheckpointError::Shape { .. })));
        assert!(matches!(c.matrix("nope"), Err(CheckpointError::Missing(_))));
    }

    proptest! {
        #[test]
        fn tensors_round_trip(data in proptest::collection::vec(any::<f64>(), 0..40), cols in 1usize..5) {
            let rows = data.len() / cols;
            let data = data[..rows * cols].to_vec();
            let mut c = Container::new();
            c.put_tensor("t", &[rows, cols], data.clone());
            let back = Container::from_bytes(&c.to_bytes()).unwrap();
            let (shape, got) = back.tensor("t").unwrap();
            prop_assert_eq!(shape, &[rows, cols][..]);
            prop_assert_eq!(got.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
