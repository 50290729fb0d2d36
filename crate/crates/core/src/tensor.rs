//! Dense row-major tensors and the XTEN binary container.
//!
//! XTEN layout (all integers little-endian):
//!
//! | bytes            | content                          |
//! |------------------|----------------------------------|
//! | 4                | magic `XTEN`                     |
//! | 1                | rank, 1..=4                      |
//! | 4 × rank         | `u32` dims                       |
//! | 4 × product(dims)| `f32` values, row-major          |
//!
//! Values are stored as `f32` and promoted to the tensor's scalar type on load.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const XTEN_MAGIC: &[u8; 4] = b"XTEN";
pub const MAX_RANK: usize = 4;

/// Rank ≤ 4 row-major array of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f64> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!(
                "dims {:?} need {} values, got {}",
                dims,
                len,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims)?;
        let len = dims.iter().product();
        Ok(Tensor {
            dims,
            data: vec![T::zero(); len],
        })
    }

    pub fn from_vec(data: Vec<T>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    /// Builds a tensor without the finiteness scan. Callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(dims: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Row-major flat offset of a multi-index. Panics if out of range.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index {i} out of range for dim {d}");
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims)?;
        if dims.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        Ok(Tensor {
            dims,
            data: self.data,
        })
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossless())).collect(),
        }
    }

    /// Serializes to XTEN bytes.
    pub fn to_xten_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(XTEN_MAGIC);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&(v.to_f64_lossless() as f32).to_le_bytes());
        }
        out
    }

    /// Parses one XTEN blob from the front of `bytes`, returning the tensor and
    /// the number of bytes consumed. `base` is added to reported error offsets.
    pub fn from_xten_prefix(bytes: &[u8], base: u64) -> Result<(Self, usize)> {
        if bytes.len() < 4 {
            return Err(Error::format(base, "truncated magic"));
        }
        if &bytes[..4] != XTEN_MAGIC {
            return Err(Error::format(
                base,
                format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4])),
            ));
        }
        let rank = *bytes
            .get(4)
            .ok_or_else(|| Error::format(base + 4, "missing rank byte"))? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::format(base + 4, format!("rank {rank} outside 1..=4")));
        }
        let mut pos = 5;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let raw = bytes
                .get(pos..pos + 4)
                .ok_or_else(|| Error::format(base + pos as u64, "truncated dims"))?;
            let d = u32::from_le_bytes(raw.try_into().unwrap()) as usize;
            if d == 0 {
                return Err(Error::format(base + pos as u64, "zero dimension"));
            }
            dims.push(d);
            pos += 4;
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format(base + 5, "dims overflow"))?;
        let payload_len = count
            .checked_mul(4)
            .ok_or_else(|| Error::format(base + 5, "dims overflow"))?;
        let payload = bytes.get(pos..pos + payload_len).ok_or_else(|| {
            Error::format(
                base + pos as u64,
                format!(
                    "payload needs {payload_len} bytes, {} available",
                    bytes.len().saturating_sub(pos)
                ),
            )
        })?;
        let mut data = Vec::with_capacity(count);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "non-finite value at byte {}",
                    base + (pos + 4 * i) as u64
                )));
            }
            data.push(T::lit(v as f64));
        }
        Ok((Tensor { dims, data }, pos + payload_len))
    }

    /// Parses a complete XTEN file image; trailing bytes are rejected.
    pub fn from_xten_bytes(bytes: &[u8]) -> Result<Self> {
        let (t, used) = Self::from_xten_prefix(bytes, 0)?;
        if used != bytes.len() {
            return Err(Error::format(used as u64, "trailing bytes after payload"));
        }
        Ok(t)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_xten_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_xten_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(Error::shape(format!(
            "rank {} outside 1..={MAX_RANK}",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::shape(format!("zero dimension in {dims:?}")));
    }
    if dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::shape(format!("dimension too large in {dims:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_small() {
        let t = Tensor::<f64>::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        let back = Tensor::<f64>::from_xten_bytes(&t.to_xten_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get(&[1, 2]), 5.0);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = Tensor::<f64>::zeros(vec![2]).unwrap().to_xten_bytes();
        bytes[3] = b'X';
        match Tensor::<f64>::from_xten_bytes(&bytes) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_rank_and_truncation() {
        let mut bytes = Tensor::<f64>::zeros(vec![2, 2]).unwrap().to_xten_bytes();
        bytes[4] = 5;
        assert!(matches!(
            Tensor::<f64>::from_xten_bytes(&bytes),
            Err(Error::Format { offset: 4, .. })
        ));
        let bytes = Tensor::<f64>::zeros(vec![2, 2]).unwrap().to_xten_bytes();
        assert!(matches!(
            Tensor::<f64>::from_xten_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format { offset: 13, .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(Error::Validation(_))
        ));
        let mut bytes = Tensor::<f64>::zeros(vec![1]).unwrap().to_xten_bytes();
        bytes[9..13].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            Tensor::<f64>::from_xten_bytes(&bytes),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn shape_checks() {
        assert!(Tensor::<f64>::zeros(vec![]).is_err());
        assert!(Tensor::<f64>::zeros(vec![1, 1, 1, 1, 1]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0f64; 3]).is_err());
    }

    proptest! {
        #[test]
        fn xten_bytes_round_trip(dims in proptest::collection::vec(1usize..5, 1..=4), seed in any::<u64>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 40) as f32) / 1024.0 - 4.0)
                .collect();
            let t = Tensor::<f32>::new(dims, data).unwrap();
            let bytes = t.to_xten_bytes();
            let back = Tensor::<f64>::from_xten_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_xten_bytes(), bytes);
        }
    }
}
