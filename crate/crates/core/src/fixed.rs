//! Fixed-point representation, quantization and sign-digit bit slicing.
//!
//! Values are stored as plain integers with a power-of-two scale. Signed
//! values use a sign-magnitude view when sliced into bits: every digit is
//! `sign(v) * bit_i(|v|)`, so a negative activation contributes `-1` digits
//! and a non-negative one contributes `+1` digits. The representable signed
//! range is symmetric, `[-(2^(N-1) - 1), 2^(N-1) - 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accumulator type used for every MAC. 64 bits cover `2 * 16 + 16` bits of
/// growth for the largest supported configuration.
pub type WideAcc = i64;

/// Bit width, binary point position and signedness of a fixed-point tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedSpec {
    pub bits: u8,
    pub frac: u8,
    pub signed: bool,
}

impl FixedSpec {
    pub const MIN_BITS: u8 = 2;
    pub const MAX_BITS: u8 = 16;

    pub fn new(bits: u8, frac: u8, signed: bool) -> Result<Self> {
        let spec = FixedSpec { bits, frac, signed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(Self::MIN_BITS..=Self::MAX_BITS).contains(&self.bits) {
            return Err(Error::InvalidSpec(format!(
                "bit width {} outside [{}, {}]",
                self.bits,
                Self::MIN_BITS,
                Self::MAX_BITS
            )));
        }
        if self.frac >= self.bits {
            return Err(Error::InvalidSpec(format!(
                "frac bits {} must be below bit width {}",
                self.frac, self.bits
            )));
        }
        Ok(())
    }

    /// Number of bit-serial iterations needed to stream one value.
    pub fn iterations(&self) -> usize {
        self.bits as usize
    }

    /// Largest representable integer.
    pub fn max_int(&self) -> i64 {
        if self.signed {
            (1i64 << (self.bits - 1)) - 1
        } else {
            (1i64 << self.bits) - 1
        }
    }

    /// Smallest representable integer (symmetric for signed specs).
    pub fn min_int(&self) -> i64 {
        if self.signed {
            -self.max_int()
        } else {
            0
        }
    }

    pub fn contains(&self, v: i64) -> bool {
        v >= self.min_int() && v <= self.max_int()
    }

    pub fn saturate(&self, v: i64) -> i64 {
        v.clamp(self.min_int(), self.max_int())
    }

    pub fn scale(&self) -> f64 {
        (self.frac as f64).exp2()
    }

    pub fn check(&self, v: i64) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::ValueOutOfRange {
                value: v,
                min: self.min_int(),
                max: self.max_int(),
            })
        }
    }
}

/// Integer tensor with a fixed-point interpretation, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QTensor {
    shape: Vec<usize>,
    spec: FixedSpec,
    data: Vec<i32>,
}

impl QTensor {
    pub fn new(shape: Vec<usize>, spec: FixedSpec, data: Vec<i32>) -> Result<Self> {
        spec.validate()?;
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::LengthMismatch {
                left: len,
                right: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|&&v| !spec.contains(v as i64)) {
            return Err(Error::ValueOutOfRange {
                value: bad as i64,
                min: spec.min_int(),
                max: spec.max_int(),
            });
        }
        Ok(QTensor { shape, spec, data })
    }

    pub fn zeros(shape: Vec<usize>, spec: FixedSpec) -> Self {
        let len = shape.iter().product();
        QTensor {
            shape,
            spec,
            data: vec![0; len],
        }
    }

    /// Crate-internal constructor for data already known to be in range.
    pub(crate) fn from_parts(shape: Vec<usize>, spec: FixedSpec, data: Vec<i32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|&v| spec.contains(v as i64)));
        QTensor { shape, spec, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spec(&self) -> FixedSpec {
        self.spec
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<i32> {
        self.data
    }

    pub fn dequantize(&self) -> Vec<f64> {
        let s = self.spec.scale();
        self.data.iter().map(|&v| v as f64 / s).collect()
    }
}

/// Quantize real values: round half to even at the spec's scale, then
/// saturate to the representable range.
pub fn quantize(values: &[f64], shape: Vec<usize>, spec: FixedSpec) -> Result<QTensor> {
    spec.validate()?;
    let len: usize = shape.iter().product();
    if len != values.len() {
        return Err(Error::LengthMismatch {
            left: len,
            right: values.len(),
        });
    }
    let data = values.iter().map(|&v| quantize_scalar(v, spec)).collect();
    Ok(QTensor { shape, spec, data })
}

pub fn quantize_scalar(v: f64, spec: FixedSpec) -> i32 {
    debug_assert!(v.is_finite());
    let scaled = (v * spec.scale()).round_ties_even();
    let lo = spec.min_int() as f64;
    let hi = spec.max_int() as f64;
    scaled.clamp(lo, hi) as i32
}

/// Signed digit of `value` at bit `position` under sign-magnitude slicing.
pub fn digit_at(value: i64, position: u32, spec: FixedSpec) -> Result<i8> {
    if position >= spec.bits as u32 {
        return Err(Error::PositionOutOfRange {
            position,
            bits: spec.bits,
        });
    }
    spec.check(value)?;
    Ok(digit_unchecked(value, position))
}

/// [`digit_at`] without range checks.
#[inline]
pub fn digit_unchecked(value: i64, position: u32) -> i8 {
    let bit = ((value.unsigned_abs() >> position) & 1) as i8;
    if value < 0 {
        -bit
    } else {
        bit
    }
}

/// Exact integer inner product.
pub fn dot_exact(activations: &[i32], weights: &[i32]) -> Result<WideAcc> {
    if activations.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: activations.len(),
            right: weights.len(),
        });
    }
    Ok(activations
        .iter()
        .zip(weights)
        .map(|(&a, &w)| a as i64 * w as i64)
        .sum())
}

/// Arithmetic right shift with round-half-to-even. Negative shifts scale up.
pub fn shift_round_even(acc: WideAcc, shift: i32) -> WideAcc {
    if shift <= 0 {
        let s = (-shift) as u32;
        return acc
            .checked_shl(s)
            .filter(|v| v >> s == acc)
            .unwrap_or(if acc < 0 { i64::MIN } else { i64::MAX });
    }
    if shift >= 63 {
        return 0;
    }
    let s = shift as u32;
    let floor = acc >> s;
    let rem = acc - (floor << s);
    let half = 1i64 << (s - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Bring an accumulator back to an output spec: rounding shift by `shift`
/// bits, then saturation.
pub fn requantize(acc: WideAcc, shift: i32, out: FixedSpec) -> i32 {
    out.saturate(shift_round_even(acc, shift)) as i32
}
