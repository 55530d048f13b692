//! Floating-point scalar abstraction for the encoder and its training kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Storage precision of model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::Single => 32,
            Precision::Double => 64,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            32 => Some(Precision::Single),
            64 => Some(Precision::Double),
            _ => None,
        }
    }
}

impl Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// Real scalar usable as an encoder parameter type.
///
/// Implemented for `f32` and `f64`. The byte codec is little-endian IEEE-754,
/// which is what model artifacts store.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const PRECISION: Precision;
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::Single;
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::Double;
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codec_roundtrip<S: Scalar>(v: S) -> S {
        let mut buf = Vec::new();
        v.write_le(&mut buf);
        assert_eq!(buf.len(), S::BYTES);
        S::read_le(&buf)
    }

    #[test]
    fn le_codec_is_bit_exact() {
        for v in [0.0f32, -1.5, f32::MIN_POSITIVE, 3.1e-7] {
            assert_eq!(codec_roundtrip(v).to_bits(), v.to_bits());
        }
        for v in [0.0f64, -1.5, 1e-300, std::f64::consts::PI] {
            assert_eq!(codec_roundtrip(v).to_bits(), v.to_bits());
        }
    }

    #[test]
    fn precision_bits() {
        assert_eq!(Precision::from_bits(32), Some(Precision::Single));
        assert_eq!(Precision::from_bits(16), None);
        assert_eq!(<f64 as Scalar>::PRECISION.bits(), 64);
    }
}
