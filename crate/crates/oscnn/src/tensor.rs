//! Dense n-dimensional arrays in row-major layout.
//!
//! `Tensor<f32>` is the working precision for everything (activations,
//! weights, gradients, images); `Tensor<f64>` exists so gradient checks can
//! run finite differences without 32-bit noise swamping the tolerance. The
//! numeric kernels live in [`ops`].
//!
//! Layout is NCHW row-major throughout; there are no strided views or
//! broadcasting, and backward passes are hand-written per kernel.

pub mod ops;

use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub use ops::ConvSpec;

/// Magic bytes of the raw tensor file format.
pub const TENSOR_MAGIC: [u8; 4] = *b"OSTN";
/// Current version byte of the raw tensor file format.
pub const TENSOR_FORMAT_VERSION: u8 = 1;

/// Element type of a [`Tensor`]: `f32` (working precision, dtype code 0) or
/// `f64` (gradient-check precision, dtype code 1).
pub trait Real:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    const DTYPE_CODE: u8;
    const BYTE_WIDTH: usize;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn put_le(self, out: &mut Vec<u8>);
    /// Decode one value from exactly `BYTE_WIDTH` little-endian bytes.
    fn get_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE_CODE: u8 = 0;
    const BYTE_WIDTH: usize = 4;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte slice"))
    }
}

impl Real for f64 {
    const DTYPE_CODE: u8 = 1;
    const BYTE_WIDTH: usize = 8;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte slice"))
    }
}

/// Dense n-dimensional array, row-major. The product of `dims` always equals
/// `data.len()`; an empty dims list is a scalar.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn filled(dims: &[usize], value: T) -> Self {
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            dims: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::shape(
                "Tensor::from_vec",
                format!("{} values for dims {:?}", expected, dims),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
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

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        let mut off = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.dims).enumerate() {
            assert!(ix < d, "index {ix} out of range for axis {i} (extent {d})");
            off = off * d + ix;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same data, new dims; the element count must match.
    pub fn reshaped(&self, dims: &[usize]) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != self.data.len() {
            return Err(Error::shape(
                "Tensor::reshaped",
                format!("product {}", self.data.len()),
                format!("dims {:?} (product {})", dims, expected),
            ));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute elementwise difference, in f64. Panics on dims mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims, "max_abs_diff dims mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Element-for-element conversion via f64.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Encode in the raw tensor format: magic, version, dtype code, rank,
    /// 32-bit little-endian extents, then data row-major little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mut buf = Vec::with_capacity(7 + self.dims.len() * 4 + self.data.len() * T::BYTE_WIDTH);
        buf.extend_from_slice(&TENSOR_MAGIC);
        buf.push(TENSOR_FORMAT_VERSION);
        buf.push(T::DTYPE_CODE);
        buf.push(u8::try_from(self.dims.len()).expect("rank fits in u8"));
        for &d in &self.dims {
            buf.extend_from_slice(&u32::try_from(d).expect("extent fits in u32").to_le_bytes());
        }
        for &v in &self.data {
            v.put_le(&mut buf);
        }
        w.write_all(&buf)
    }

    /// Decode a tensor written by [`Tensor::write_to`]. The stored dtype must
    /// match `T`.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: "<tensor stream>".into(),
            message,
        };
        let mut head = [0u8; 7];
        r.read_exact(&mut head)
            .map_err(|_| bad("truncated header".into()))?;
        if head[0..4] != TENSOR_MAGIC {
            return Err(bad(format!("bad magic {:?}", &head[0..4])));
        }
        if head[4] != TENSOR_FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", head[4])));
        }
        if head[5] != T::DTYPE_CODE {
            return Err(bad(format!(
                "dtype code {} does not match requested element type (code {})",
                head[5],
                T::DTYPE_CODE
            )));
        }
        let rank = head[6] as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut ext = [0u8; 4];
        for _ in 0..rank {
            r.read_exact(&mut ext)
                .map_err(|_| bad("truncated extents".into()))?;
            dims.push(u32::from_le_bytes(ext) as usize);
        }
        let count: usize = dims.iter().product();
        let mut raw = vec![0u8; count * T::BYTE_WIDTH];
        r.read_exact(&mut raw)
            .map_err(|_| bad("truncated data".into()))?;
        let data = raw
            .chunks_exact(T::BYTE_WIDTH)
            .map(T::get_le)
            .collect::<Vec<_>>();
        Ok(Tensor { dims, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(&mut f).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut f).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<_> = self.data.iter().take(8).collect();
        write!(
            f,
            "Tensor{:?} {:?}{}",
            self.dims,
            preview,
            if self.data.len() > 8 { " ..." } else { "" }
        )
    }
}
