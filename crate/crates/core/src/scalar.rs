//! Scalar abstraction over the floating-point element type.
//!
//! All numeric code in this crate is generic over [`Scalar`], so the same
//! pipeline runs in 32-bit (training default) or 64-bit (gradient checking).
//! Concrete aliases live at the crate root: [`crate::Tensor32`] and
//! [`crate::Tensor64`].

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element dtype as stored in the PDRT tensor container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    /// Container dtype code: 0 = f32, 1 = f64.
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Floating-point scalar usable as a tensor element.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    const DTYPE: Dtype;

    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 -> scalar conversion")
    }

    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar -> f64 conversion")
    }

    /// Append the little-endian byte representation to `out`.
    fn write_le(self, out: &mut Vec<u8>);

    /// Read one value from a little-endian byte slice of exactly
    /// `Self::DTYPE.size_bytes()` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes for f32"))
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes for f64"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dtype_codes_roundtrip() {
        assert_eq!(Dtype::from_code(Dtype::F32.code()), Some(Dtype::F32));
        assert_eq!(Dtype::from_code(Dtype::F64.code()), Some(Dtype::F64));
        assert_eq!(Dtype::from_code(7), None);
    }

    #[test]
    fn le_bytes_roundtrip() {
        let mut buf = Vec::new();
        1.5f32.write_le(&mut buf);
        (-2.25f64).write_le(&mut buf);
        assert_eq!(f32::read_le(&buf[..4]), 1.5);
        assert_eq!(f64::read_le(&buf[4..12]), -2.25);
    }
}
