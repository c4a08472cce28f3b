//! Static placement of MAC layers onto IPUs, IMAs and tiles.
//!
//! A layer's kernels are split into row groups of `crossbar_rows` inputs
//! and channel groups of `channels_per_ipu` outputs. Each (channel group,
//! row group) pair occupies one IPU. The row groups of one channel group
//! (its "kernel group") stay inside one IMA whenever they fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hwmodel::config::HwConfig;
use crate::net::{LayerKind, NetworkModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpuSlot {
    pub tile: usize,
    /// Global IMA index.
    pub ima: usize,
    /// IPU index inside its IMA.
    pub ipu: usize,
    pub channel_group: usize,
    pub row_group: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMapping {
    pub layer: usize,
    pub kind: LayerKind,
    pub rows: usize,
    pub row_groups: usize,
    pub channels: usize,
    pub channels_per_ipu: usize,
    pub channel_groups: usize,
    pub positions: usize,
    pub act_bits: u8,
    pub weight_bits: u8,
    /// Channel-group major, row group minor.
    pub slots: Vec<IpuSlot>,
    /// Distinct IMAs spanned by each channel group.
    pub imas_per_group: Vec<usize>,
}

impl LayerMapping {
    pub fn ipus(&self) -> usize {
        self.slots.len()
    }

    pub fn group_of(&self, channel: usize) -> usize {
        channel / self.channels_per_ipu
    }

    /// Distinct IMAs used by the whole layer.
    pub fn imas(&self) -> usize {
        let mut v: Vec<usize> = self.slots.iter().map(|s| s.ima).collect();
        v.dedup();
        v.len()
    }

    pub fn tiles(&self) -> usize {
        let mut v: Vec<usize> = self.slots.iter().map(|s| s.tile).collect();
        v.dedup();
        v.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub layers: Vec<LayerMapping>,
    pub ipus_used: usize,
    pub imas_used: usize,
    pub tiles_used: usize,
}

impl MappingPlan {
    pub fn for_layer(&self, layer: usize) -> Option<&LayerMapping> {
        self.layers.iter().find(|m| m.layer == layer)
    }
}

/// Place every MAC layer of `model`; fails when more than `max_tiles` are needed.
pub fn map_network(model: &NetworkModel, config: &HwConfig) -> Result<MappingPlan> {
    config.validate()?;
    let per_ima = config.ipus_per_ima;
    let mut cursor = 0usize; // next free global IPU index
    let mut layers = Vec::new();

    for i in model.mac_layers() {
        let d = &model.layers[i].desc;
        let weight_bits = d.weight_spec.expect("mac layer").bits;
        let rows = d.kernel_len();
        let row_groups = rows.div_ceil(config.crossbar_rows);
        let cpi = config.channels_per_ipu(weight_bits);
        let channels = d.out_channels();
        let channel_groups = channels.div_ceil(cpi);

        let mut slots = Vec::with_capacity(row_groups * channel_groups);
        let mut imas_per_group = Vec::with_capacity(channel_groups);
        for g in 0..channel_groups {
            let room = per_ima - cursor % per_ima;
            if row_groups <= per_ima && row_groups > room {
                cursor += room;
            }
            let first_ima = cursor / per_ima;
            for r in 0..row_groups {
                let ima = cursor / per_ima;
                slots.push(IpuSlot {
                    tile: ima / config.imas_per_tile,
                    ima,
                    ipu: cursor % per_ima,
                    channel_group: g,
                    row_group: r,
                });
                cursor += 1;
            }
            imas_per_group.push((cursor - 1) / per_ima - first_ima + 1);
        }
        layers.push(LayerMapping {
            layer: i,
            kind: d.kind,
            rows,
            row_groups,
            channels,
            channels_per_ipu: cpi,
            channel_groups,
            positions: d.positions(),
            act_bits: d.input_spec.bits,
            weight_bits,
            slots,
            imas_per_group,
        });
    }

    let mut imas: Vec<usize> = layers
        .iter()
        .flat_map(|l| l.slots.iter().map(|s| s.ima))
        .collect();
    imas.dedup();
    let tiles_used = imas.last().map_or(0, |&m| m / config.imas_per_tile + 1);
    if tiles_used > config.max_tiles {
        return Err(Error::DoesNotFit(format!(
            "{} needs {tiles_used} tiles, only {} available",
            model.name, config.max_tiles
        )));
    }
    Ok(MappingPlan {
        ipus_used: layers.iter().map(|l| l.ipus()).sum(),
        imas_used: imas.len(),
        tiles_used,
        layers,
    })
}
