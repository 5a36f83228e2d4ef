//! Tensor types and dense tensors.
//!
//! Payloads are stored as `f64` regardless of dtype and rounded to the
//! dtype on construction, so one set of kernels serves every dtype.

use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted dimension extent.
pub const MAX_EXTENT: i64 = i32::MAX as i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
    I32,
    I64,
    Bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DTypeClass {
    Float,
    Int,
    Bool,
}

impl DType {
    pub const ALL: [DType; 5] = [DType::F32, DType::F64, DType::I32, DType::I64, DType::Bool];

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::I32 => "i32",
            DType::I64 => "i64",
            DType::Bool => "bool",
        }
    }

    pub fn parse(s: &str) -> Option<DType> {
        DType::ALL.into_iter().find(|d| d.name() == s)
    }

    pub fn class(self) -> DTypeClass {
        match self {
            DType::F32 | DType::F64 => DTypeClass::Float,
            DType::I32 | DType::I64 => DTypeClass::Int,
            DType::Bool => DTypeClass::Bool,
        }
    }

    pub fn is_float(self) -> bool {
        self.class() == DTypeClass::Float
    }

    /// Rounds an `f64` to the nearest value representable in this dtype.
    /// Integers wrap like two's-complement storage.
    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            DType::F64 => v,
            DType::F32 => v as f32 as f64,
            DType::I32 => (v as i64) as i32 as f64,
            DType::I64 => (v as i64) as f64,
            DType::Bool => {
                if v != 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn byte_width(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::F64 | DType::I64 => 8,
            DType::Bool => 1,
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TensorType {
    pub dtype: DType,
    pub shape: Vec<i64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("negative extent {0}")]
    Negative(i64),
    #[error("extent {0} exceeds {MAX_EXTENT}")]
    TooLarge(i64),
    #[error("cannot parse tensor type `{0}`")]
    Syntax(String),
}

impl TensorType {
    pub fn new(dtype: DType, shape: Vec<i64>) -> TensorType {
        TensorType { dtype, shape }
    }

    pub fn f32(shape: &[i64]) -> TensorType {
        TensorType::new(DType::F32, shape.to_vec())
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Element count, or `None` on overflow.
    pub fn numel(&self) -> Option<i64> {
        self.shape.iter().try_fold(1i64, |acc, &d| acc.checked_mul(d))
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        for &d in &self.shape {
            if d < 0 {
                return Err(TypeError::Negative(d));
            }
            if d > MAX_EXTENT {
                return Err(TypeError::TooLarge(d));
            }
        }
        Ok(())
    }

    /// Parses the `f32[2,3]` notation used in graph text.
    pub fn parse(s: &str) -> Result<TensorType, TypeError> {
        let err = || TypeError::Syntax(s.to_string());
        let s = s.trim();
        let open = s.find('[').ok_or_else(err)?;
        if !s.ends_with(']') {
            return Err(err());
        }
        let dtype = DType::parse(&s[..open]).ok_or_else(err)?;
        let body = &s[open + 1..s.len() - 1];
        let shape = if body.trim().is_empty() {
            Vec::new()
        } else {
            body.split(',')
                .map(|d| d.trim().parse::<i64>().map_err(|_| err()))
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(TensorType { dtype, shape })
    }
}

impl fmt::Display for TensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.dtype)?;
        for (i, d) in self.shape.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str("]")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub ty: TensorType,
    pub data: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum PayloadError {
    #[error("base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("payload has {got} bytes, expected {want}")]
    Length { got: usize, want: usize },
    #[error("tensor type: {0}")]
    Type(#[from] TypeError),
}

impl Tensor {
    pub fn new(ty: TensorType, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(ty.numel(), Some(data.len() as i64));
        let dtype = ty.dtype;
        Tensor {
            ty,
            data: data.into_iter().map(|v| dtype.round(v)).collect(),
        }
    }

    pub fn zeros(ty: TensorType) -> Tensor {
        let n = ty.numel().unwrap_or(0) as usize;
        Tensor { ty, data: vec![0.0; n] }
    }

    pub fn scalar(dtype: DType, v: f64) -> Tensor {
        Tensor::new(TensorType::new(dtype, vec![]), vec![v])
    }

    pub fn dtype(&self) -> DType {
        self.ty.dtype
    }

    pub fn shape(&self) -> &[i64] {
        &self.ty.shape
    }

    /// Uniform payload: floats in `[-float_range, float_range]`, integers in
    /// `[-int_range, int_range]`, bools fair.
    pub fn random<R: Rng + ?Sized>(ty: &TensorType, float_range: f64, int_range: i64, rng: &mut R) -> Tensor {
        let n = ty.numel().unwrap_or(0) as usize;
        let data = (0..n)
            .map(|_| match ty.dtype.class() {
                DTypeClass::Float => rng.gen_range(-float_range..=float_range),
                DTypeClass::Int => rng.gen_range(-int_range..=int_range) as f64,
                DTypeClass::Bool => rng.gen_bool(0.5) as u8 as f64,
            })
            .collect();
        Tensor::new(ty.clone(), data)
    }

    /// Little-endian row-major bytes in the tensor's dtype.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * self.ty.dtype.byte_width());
        for &v in &self.data {
            match self.ty.dtype {
                DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
                DType::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
                DType::I64 => out.extend_from_slice(&(v as i64).to_le_bytes()),
                DType::Bool => out.push((v != 0.0) as u8),
            }
        }
        out
    }

    pub fn from_bytes(ty: TensorType, bytes: &[u8]) -> Result<Tensor, PayloadError> {
        ty.validate()?;
        let w = ty.dtype.byte_width();
        let n = ty.numel().unwrap_or(0) as usize;
        if bytes.len() != n * w {
            return Err(PayloadError::Length {
                got: bytes.len(),
                want: n * w,
            });
        }
        let data = bytes
            .chunks_exact(w)
            .map(|c| match ty.dtype {
                DType::F32 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
                DType::F64 => f64::from_le_bytes(c.try_into().unwrap()),
                DType::I32 => i32::from_le_bytes(c.try_into().unwrap()) as f64,
                DType::I64 => i64::from_le_bytes(c.try_into().unwrap()) as f64,
                DType::Bool => (c[0] != 0) as u8 as f64,
            })
            .collect();
        Ok(Tensor { ty, data })
    }

    pub fn to_base64(&self) -> String {
        B64.encode(self.to_bytes())
    }

    pub fn from_base64(ty: TensorType, text: &str) -> Result<Tensor, PayloadError> {
        Tensor::from_bytes(ty, &B64.decode(text)?)
    }

    /// Bitwise equality of type and payload (NaNs with equal bits match).
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.ty == other.ty
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Row-major strides for a shape.
pub fn strides(shape: &[i64]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1] as usize;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn type_text_round_trip() {
        for s in ["f32[2,3]", "i64[]", "bool[0,7,1]"] {
            assert_eq!(TensorType::parse(s).unwrap().to_string(), s);
        }
        assert!(TensorType::parse("f16[2]").is_err());
        assert!(TensorType::parse("f32[2,x]").is_err());
    }

    #[test]
    fn validation() {
        assert!(TensorType::f32(&[3, 0]).validate().is_ok());
        assert_eq!(TensorType::f32(&[-1]).validate(), Err(TypeError::Negative(-1)));
        assert!(TensorType::f32(&[MAX_EXTENT + 1]).validate().is_err());
    }

    #[test]
    fn payload_round_trip_per_dtype() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for dt in DType::ALL {
            let t = Tensor::random(&TensorType::new(dt, vec![2, 3]), 5.0, 10, &mut rng);
            let back = Tensor::from_base64(t.ty.clone(), &t.to_base64()).unwrap();
            assert!(t.bit_eq(&back), "{dt}");
        }
    }

    #[test]
    fn rounding_follows_dtype() {
        assert_eq!(DType::I32.round(2.9), 2.0);
        assert_eq!(DType::I32.round((i32::MAX as f64) + 1.0), i32::MIN as f64);
        assert_eq!(DType::Bool.round(-3.0), 1.0);
        assert_eq!(DType::F32.round(0.1), 0.1f32 as f64);
    }

    #[test]
    fn row_major_strides() {
        assert_eq!(strides(&[2, 3, 4]), vec![12, 4, 1]);
        assert!(strides(&[]).is_empty());
    }
}
