//! Per-layer bit-digit statistics gathered from calibration images.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::digit_unchecked;
use crate::net::infer::infer_exact;
use crate::net::{LabeledImage, NetworkModel};

pub const MIN_CALIBRATION_IMAGES: usize = 2;

/// Average and span of a per-image probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbStat {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
}

impl ProbStat {
    pub const ZERO: ProbStat = ProbStat {
        avg: 0.0,
        min: 0.0,
        max: 0.0,
    };

    pub const FULL_SPAN: ProbStat = ProbStat {
        avg: 0.5,
        min: 0.0,
        max: 1.0,
    };

    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        ProbStat {
            avg: samples.iter().sum::<f64>() / n,
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Probabilities of a `+1` and a `-1` digit at one bit position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionProbs {
    pub plus: ProbStat,
    pub minus: ProbStat,
}

/// Digit statistics for the input activations of one MAC layer, indexed by
/// bit position (0 = LSB).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerBitProbability {
    pub layer: usize,
    pub bits: u8,
    pub nonnegative: bool,
    pub positions: Vec<PositionProbs>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitProbability {
    pub calibration_images: usize,
    pub layers: Vec<LayerBitProbability>,
}

impl BitProbability {
    pub fn for_layer(&self, layer: usize) -> Option<&LayerBitProbability> {
        self.layers.iter().find(|l| l.layer == layer)
    }

    /// Spans forced to `[0, 1]`, except `-1` digits which stay impossible on
    /// layers whose inputs are non-negative.
    pub fn full_span(model: &NetworkModel) -> Self {
        let nonneg = model.nonnegative_inputs();
        let layers = model
            .mac_layers()
            .map(|i| {
                let bits = model.layers[i].desc.input_spec.bits;
                let minus = if nonneg[i] {
                    ProbStat::ZERO
                } else {
                    ProbStat::FULL_SPAN
                };
                LayerBitProbability {
                    layer: i,
                    bits,
                    nonnegative: nonneg[i],
                    positions: vec![
                        PositionProbs {
                            plus: ProbStat::FULL_SPAN,
                            minus
                        };
                        bits as usize
                    ],
                }
            })
            .collect();
        BitProbability {
            calibration_images: 0,
            layers,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Fraction of `+1` and `-1` digits at each bit position of `values`.
pub fn digit_fractions(values: &[i32], bits: u8) -> Vec<(f64, f64)> {
    let mut plus = vec![0u64; bits as usize];
    let mut minus = vec![0u64; bits as usize];
    for &v in values {
        for p in 0..bits as u32 {
            match digit_unchecked(v as i64, p) {
                1 => plus[p as usize] += 1,
                -1 => minus[p as usize] += 1,
                _ => {}
            }
        }
    }
    let n = values.len().max(1) as f64;
    plus.iter()
        .zip(&minus)
        .map(|(&p, &m)| (p as f64 / n, m as f64 / n))
        .collect()
}

/// Digit probabilities of every MAC layer's inputs, pooled over spatial
/// positions per image, with avg/min/max taken across images.
pub fn extract_probabilities(
    model: &NetworkModel,
    images: &[LabeledImage],
) -> Result<BitProbability> {
    if images.len() < MIN_CALIBRATION_IMAGES {
        return Err(Error::NotEnoughCalibration {
            needed: MIN_CALIBRATION_IMAGES,
            got: images.len(),
        });
    }
    let mac: Vec<usize> = model.mac_layers().collect();
    // per image -> per mac layer -> per position (p_plus, p_minus)
    let per_image: Vec<Vec<Vec<(f64, f64)>>> = images
        .par_iter()
        .map(|img| {
            let out = infer_exact(model, &img.pixels)?;
            Ok(mac
                .iter()
                .map(|&i| {
                    let input = if i == 0 {
                        &img.pixels
                    } else {
                        &out.activations[i - 1]
                    };
                    digit_fractions(input.data(), input.spec().bits)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let nonneg = model.nonnegative_inputs();
    let layers = mac
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let bits = model.layers[i].desc.input_spec.bits;
            let positions = (0..bits as usize)
                .map(|p| {
                    let plus: Vec<f64> = per_image.iter().map(|img| img[k][p].0).collect();
                    let minus: Vec<f64> = per_image.iter().map(|img| img[k][p].1).collect();
                    PositionProbs {
                        plus: ProbStat::from_samples(&plus),
                        minus: ProbStat::from_samples(&minus),
                    }
                })
                .collect();
            LayerBitProbability {
                layer: i,
                bits,
                nonnegative: nonneg[i],
                positions,
            }
        })
        .collect();
    Ok(BitProbability {
        calibration_images: images.len(),
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_have_no_digits() {
        for (p, m) in digit_fractions(&[0; 32], 8) {
            assert_eq!((p, m), (0.0, 0.0));
        }
    }

    #[test]
    fn uniform_four_bit_msb_is_half() {
        let values: Vec<i32> = (0..16).collect();
        let f = digit_fractions(&values, 4);
        // P(value >= 8) for a uniform 4-bit population
        let brute = values.iter().filter(|&&v| v >= 8).count() as f64 / 16.0;
        assert_eq!(f[3].0, brute);
        assert_eq!(f[3].0, 0.5);
        assert!(f.iter().all(|&(_, m)| m == 0.0));
    }

    #[test]
    fn signed_values_give_minus_digits() {
        let f = digit_fractions(&[-1, 1, -3, 0], 4);
        assert_eq!(f[0], (0.25, 0.5));
        assert_eq!(f[1], (0.0, 0.25));
        for (p, m) in f {
            assert!(p + m <= 1.0);
        }
    }
}
