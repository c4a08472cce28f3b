//! Cumulative Max/Min tables consulted after every bit-serial iteration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::bounds::{per_iteration_bounds, BoundsMode, KernelSums};
use crate::estimator::probs::{BitProbability, LayerBitProbability};
use crate::net::NetworkModel;

/// Bounds on the sum of the partial results still to come after iteration
/// `t`, stored at index `t - 1` for `t = 1..N-1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutRow {
    pub max: Vec<i64>,
    pub min: Vec<i64>,
}

impl LutRow {
    pub fn len(&self) -> usize {
        self.max.len()
    }

    pub fn is_empty(&self) -> bool {
        self.max.is_empty()
    }

    pub fn zeros(bits: usize) -> Self {
        LutRow {
            max: vec![0; bits - 1],
            min: vec![0; bits - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerLut {
    pub layer: usize,
    pub bits: u8,
    pub channels: Vec<LutRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateLut {
    pub mode: BoundsMode,
    pub layers: Vec<LayerLut>,
}

impl EstimateLut {
    pub fn for_layer(&self, layer: usize) -> Option<&LayerLut> {
        self.layers.iter().find(|l| l.layer == layer)
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

/// One channel's row: per-position bounds summed over the positions that
/// remain after each iteration.
pub fn lut_row(
    sums: KernelSums,
    probs: Option<&LayerBitProbability>,
    bits: u8,
    mode: BoundsMode,
    nonnegative_inputs: bool,
) -> Result<LutRow> {
    let n = bits as usize;
    // prefix[k] = bounds summed over positions 0..k
    let mut prefix_max = vec![0i64; n + 1];
    let mut prefix_min = vec![0i64; n + 1];
    for i in 0..n {
        let p = probs.and_then(|lp| lp.positions.get(i));
        let (mx, mn) = per_iteration_bounds(sums, p, i as u32, mode, nonnegative_inputs)?;
        prefix_max[i + 1] = prefix_max[i] + mx;
        prefix_min[i + 1] = prefix_min[i] + mn;
    }
    // after iteration t, positions 0..N-t remain
    Ok(LutRow {
        max: (1..n).map(|t| prefix_max[n - t]).collect(),
        min: (1..n).map(|t| prefix_min[n - t]).collect(),
    })
}

/// Build the table for every MAC layer of `model`.
pub fn build_lut(
    model: &NetworkModel,
    probs: Option<&BitProbability>,
    mode: BoundsMode,
) -> Result<EstimateLut> {
    if mode == BoundsMode::Oracle {
        return Err(Error::InvalidPolicy(
            "oracle mode has no precomputed table".into(),
        ));
    }
    let nonneg = model.nonnegative_inputs();
    let mut layers = Vec::new();
    for i in model.mac_layers() {
        let layer = &model.layers[i];
        let bits = layer.desc.input_spec.bits;
        let lp = match mode {
            BoundsMode::Statistical => {
                let lp = probs.and_then(|p| p.for_layer(i)).ok_or_else(|| {
                    Error::InvalidPolicy(format!("no bit probabilities for layer {i}"))
                })?;
                if lp.positions.len() != bits as usize {
                    return Err(Error::LengthMismatch {
                        left: bits as usize,
                        right: lp.positions.len(),
                    });
                }
                Some(lp)
            }
            _ => None,
        };
        let channels = (0..layer.desc.out_channels())
            .map(|z| lut_row(KernelSums::of(layer.kernel(z)), lp, bits, mode, nonneg[i]))
            .collect::<Result<Vec<_>>>()?;
        layers.push(LayerLut {
            layer: i,
            bits,
            channels,
        });
    }
    Ok(EstimateLut { mode, layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_weight_geometric_tail() {
        let row = lut_row(KernelSums::of(&[1]), None, 4, BoundsMode::WorstCase, true).unwrap();
        assert_eq!(row.max, vec![7, 3, 1]);
        assert_eq!(row.min, vec![0, 0, 0]);
    }

    #[test]
    fn zero_kernel() {
        let row = lut_row(
            KernelSums::of(&[0, 0, 0]),
            None,
            8,
            BoundsMode::WorstCase,
            false,
        )
        .unwrap();
        assert_eq!(row, LutRow::zeros(8));
    }

    #[test]
    fn figure_two_kernel() {
        let row = lut_row(
            KernelSums::of(&[4, -8, -5]),
            None,
            4,
            BoundsMode::WorstCase,
            true,
        )
        .unwrap();
        assert_eq!(row.max, vec![28, 12, 4]);
        assert_eq!(row.min, vec![-91, -39, -13]);
    }

    #[test]
    fn telescoping_and_monotone() {
        let sums = KernelSums::of(&[3, -7, 2, 9, -1]);
        for nonneg in [true, false] {
            let row = lut_row(sums, None, 12, BoundsMode::WorstCase, nonneg).unwrap();
            assert_eq!(row.len(), 11);
            for t in 1..row.len() {
                // entry_t - entry_{t+1} is the bound of position N-t-1
                let pos = 12 - t - 1;
                let (mx, mn) =
                    per_iteration_bounds(sums, None, pos as u32, BoundsMode::WorstCase, nonneg)
                        .unwrap();
                assert_eq!(row.max[t - 1] - row.max[t], mx);
                assert_eq!(row.min[t - 1] - row.min[t], mn);
                assert!(row.max[t].abs() <= row.max[t - 1].abs());
                assert!(row.min[t].abs() <= row.min[t - 1].abs());
            }
            for t in 0..row.len() {
                assert!(row.min[t] <= row.max[t]);
                if nonneg {
                    assert!(row.max[t] >= 0 && row.min[t] <= 0);
                }
            }
        }
    }
}
