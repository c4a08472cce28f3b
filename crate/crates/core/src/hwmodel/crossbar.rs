//! Bitline-level model of one bit-serial iteration on a differential
//! crossbar pair. Weight magnitudes are split into `cell_bits` slices,
//! least significant first; positive weights live in one crossbar and
//! negative weights in the other.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightSlices {
    /// Conductance levels of the positive crossbar, LSB slice first.
    pub positive: Vec<u8>,
    pub negative: Vec<u8>,
}

pub fn slice_count(weight_bits: u8, cell_bits: u32) -> usize {
    (weight_bits as usize).div_ceil(cell_bits as usize)
}

/// Split a signed weight into per-cell levels.
pub fn slice_weight(w: i32, weight_bits: u8, cell_bits: u32) -> Result<WeightSlices> {
    if cell_bits == 0 || cell_bits > 8 {
        return Err(Error::InvalidConfig(format!(
            "cell_bits {cell_bits} outside 1..=8"
        )));
    }
    let limit = (1i64 << (weight_bits - 1)) - 1;
    if (w as i64).abs() > limit {
        return Err(Error::ValueOutOfRange {
            value: w as i64,
            min: -limit,
            max: limit,
        });
    }
    let n = slice_count(weight_bits, cell_bits);
    let mask = (1u32 << cell_bits) - 1;
    let mag = w.unsigned_abs();
    let levels: Vec<u8> = (0..n)
        .map(|k| ((mag >> (k as u32 * cell_bits)) & mask) as u8)
        .collect();
    let zeros = vec![0u8; n];
    Ok(if w >= 0 {
        WeightSlices {
            positive: levels,
            negative: zeros,
        }
    } else {
        WeightSlices {
            positive: zeros,
            negative: levels,
        }
    })
}

/// One iteration: apply input digits on the wordlines, sense every
/// bitline of both crossbars, subtract and shift-add the slice results.
pub fn crossbar_mac_faithful(
    digits: &[i8],
    weights: &[WeightSlices],
    cell_bits: u32,
) -> Result<i64> {
    if digits.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: digits.len(),
            right: weights.len(),
        });
    }
    let n = weights.first().map_or(0, |w| w.positive.len());
    let mut total = 0i64;
    for k in 0..n {
        let mut pos = 0i64;
        let mut neg = 0i64;
        for (&d, w) in digits.iter().zip(weights) {
            if !(-1..=1).contains(&d) {
                return Err(Error::ValueOutOfRange {
                    value: d as i64,
                    min: -1,
                    max: 1,
                });
            }
            pos += d as i64 * w.positive[k] as i64;
            neg += d as i64 * w.negative[k] as i64;
        }
        total += (pos - neg) << (k as u32 * cell_bits);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_are_lsb_first() {
        let s = slice_weight(-8, 8, 2).unwrap();
        assert_eq!(s.positive, vec![0, 0, 0, 0]);
        assert_eq!(s.negative, vec![0, 2, 0, 0]);
        let s = slice_weight(0b01_11_10, 8, 2).unwrap();
        assert_eq!(s.positive, vec![2, 3, 1, 0]);
        assert!(slice_weight(128, 8, 2).is_err());
    }

    #[test]
    fn exhaustive_four_bit_weights() {
        for w0 in -7..=7 {
            for w1 in -7..=7 {
                let ws = [
                    slice_weight(w0, 4, 2).unwrap(),
                    slice_weight(w1, 4, 2).unwrap(),
                ];
                for d0 in -1i8..=1 {
                    for d1 in -1i8..=1 {
                        let got = crossbar_mac_faithful(&[d0, d1], &ws, 2).unwrap();
                        assert_eq!(got, d0 as i64 * w0 as i64 + d1 as i64 * w1 as i64);
                    }
                }
            }
        }
    }

    #[test]
    fn length_mismatch() {
        let ws = [slice_weight(1, 4, 2).unwrap()];
        assert!(crossbar_mac_faithful(&[1, 1], &ws, 2).is_err());
    }
}
