use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    I32,
    F32,
    F64,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::U8, DType::I32, DType::F32, DType::F64];

    /// Wire tag used by the artifact format.
    pub fn tag(self) -> u8 {
        match self {
            DType::U8 => 1,
            DType::I32 => 2,
            DType::F32 => 3,
            DType::F64 => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(DType::U8),
            2 => Some(DType::I32),
            3 => Some(DType::F32),
            4 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::I32 | DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, DType::U8 | DType::I32)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::U8 => "u8",
            DType::I32 => "i32",
            DType::F32 => "f32",
            DType::F64 => "f64",
        })
    }
}

/// Flat row-major element buffer.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    U8(Vec<u8>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::U8(v) => v.len(),
            ArrayData::I32(v) => v.len(),
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            ArrayData::U8(_) => DType::U8,
            ArrayData::I32(_) => DType::I32,
            ArrayData::F32(_) => DType::F32,
            ArrayData::F64(_) => DType::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArrayError {
    #[error("array rank must be at least 1")]
    ZeroRank,
    #[error("axis {0} has zero length")]
    ZeroAxis(usize),
    #[error("shape {shape:?} implies {expected} elements, buffer holds {actual}")]
    LengthMismatch { shape: Vec<usize>, expected: usize, actual: usize },
    #[error("unknown dtype tag {0}")]
    UnknownDType(u8),
}

/// N-dimensional numeric array passed between loaders, hooks, and backends.
#[derive(Debug, Clone, PartialEq)]
pub struct DataArray {
    shape: Vec<usize>,
    data: ArrayData,
}

impl DataArray {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self, ArrayError> {
        if shape.is_empty() {
            return Err(ArrayError::ZeroRank);
        }
        if let Some(axis) = shape.iter().position(|&n| n == 0) {
            return Err(ArrayError::ZeroAxis(axis));
        }
        let expected = shape.iter().product::<usize>();
        if expected != data.len() {
            return Err(ArrayError::LengthMismatch { shape, expected, actual: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn from_u8(shape: Vec<usize>, data: Vec<u8>) -> Result<Self, ArrayError> {
        Self::new(shape, ArrayData::U8(data))
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, ArrayError> {
        Self::new(shape, ArrayData::F32(data))
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, ArrayError> {
        Self::new(shape, ArrayData::F64(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &ArrayData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            ArrayData::U8(v) => Some(v),
            _ => None,
        }
    }

    /// Element `i` widened to f64.
    pub fn get_f64(&self, i: usize) -> f64 {
        match &self.data {
            ArrayData::U8(v) => f64::from(v[i]),
            ArrayData::I32(v) => f64::from(v[i]),
            ArrayData::F32(v) => f64::from(v[i]),
            ArrayData::F64(v) => v[i],
        }
    }

    pub fn byte_len(&self) -> usize {
        self.len() * self.dtype().size()
    }

    /// Little-endian element bytes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        match &self.data {
            ArrayData::U8(v) => out.extend_from_slice(v),
            ArrayData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_le_bytes(dtype: DType, shape: Vec<usize>, bytes: &[u8]) -> Result<Self, ArrayError> {
        let size = dtype.size();
        if bytes.len() % size != 0 {
            let expected = shape.iter().product::<usize>();
            return Err(ArrayError::LengthMismatch { shape, expected, actual: bytes.len() / size });
        }
        let data = match dtype {
            DType::U8 => ArrayData::U8(bytes.to_vec()),
            DType::I32 => ArrayData::I32(
                bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::F32 => ArrayData::F32(
                bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::F64 => ArrayData::F64(
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
        };
        Self::new(shape, data)
    }

    /// Equality on shape, dtype, and element bit patterns (NaN-safe).
    pub fn bit_eq(&self, other: &DataArray) -> bool {
        self.shape == other.shape
            && self.dtype() == other.dtype()
            && self.to_le_bytes() == other.to_le_bytes()
    }
}
