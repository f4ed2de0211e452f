//! Weight-stationary placement of conv/fc parameters onto MR banks.
//!
//! Each output neuron's flattened weight row is cut into chunks of at most
//! one bank width. Chunks take consecutive slots of their block (conv layers
//! go to the CONV block, fc layers to the FC block); slot `s` lands on
//! unit `s % units`, bank `(s / units) % banks_per_unit`, reuse round
//! `s / (units * banks_per_unit)`. The slot counter runs on across layers,
//! so a layer that does not fit wraps onto banks already holding parameters
//! from earlier rounds.

use serde::{Deserialize, Serialize};

use super::{Accelerator, AcceleratorError, BankId, Block, Result};
use crate::nn::{Layer, Model};

/// One chunk of one dot product, pinned to one bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub neuron: u32,
    /// Offset of the chunk within the flattened weight row.
    pub start: u32,
    pub len: u32,
    pub unit: u32,
    pub bank: u32,
    pub round: u32,
}

impl Tile {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start as usize..(self.start + self.len) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMapping {
    /// Index into `Model::layers`.
    pub layer_index: usize,
    pub name: String,
    pub block: Block,
    pub neurons: usize,
    pub fan_in: usize,
    /// Largest weight magnitude in the layer; MR imprints are `|w| / scale`.
    pub weight_scale: f32,
    /// Sign bit per parameter (`true` = negative), row-major like the weights.
    pub negative: Vec<bool>,
    /// Tiles of neuron `n` are `tiles[n * tiles_per_neuron..][..tiles_per_neuron]`.
    pub tiles: Vec<Tile>,
    pub tiles_per_neuron: usize,
}

impl LayerMapping {
    pub fn neuron_tiles(&self, neuron: usize) -> &[Tile] {
        &self.tiles[neuron * self.tiles_per_neuron..(neuron + 1) * self.tiles_per_neuron]
    }

    pub fn bank_of(&self, acc: &Accelerator, tile: &Tile) -> BankId {
        acc.bank_id(self.block, tile.unit as usize, tile.bank as usize)
    }

    pub fn mapped_slots(&self) -> usize {
        self.tiles.iter().map(|t| t.len as usize).sum()
    }

    pub fn rounds(&self) -> u32 {
        self.tiles.iter().map(|t| t.round + 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub layers: Vec<LayerMapping>,
}

impl MappingPlan {
    pub fn layer(&self, layer_index: usize) -> Option<&LayerMapping> {
        self.layers.iter().find(|l| l.layer_index == layer_index)
    }

    pub fn mapped_slots(&self) -> usize {
        self.layers.iter().map(LayerMapping::mapped_slots).sum()
    }
}

fn max_abs(values: &[f32]) -> f32 {
    values.iter().fold(0.0f32, |m, v| m.max(v.abs()))
}

/// Places every conv/fc layer of `model` onto `acc`. Deterministic.
pub fn map_model(model: &Model, acc: &Accelerator) -> Result<MappingPlan> {
    if model.layers.is_empty() {
        return Err(AcceleratorError::Mapping("model has no layers".into()));
    }
    let mut next_slot = [0usize; 2];
    let mut layers = Vec::new();
    for (index, layer) in model.layers.iter().enumerate() {
        let (block, name, neurons, fan_in, weight) = match layer {
            Layer::Conv2d(c) => (Block::Conv, &c.name, c.out_ch, c.fan_in(), &c.weight),
            Layer::Fc(l) => (Block::Fc, &l.name, l.out_features, l.in_features, &l.weight),
            _ => continue,
        };
        if fan_in == 0 || neurons == 0 || weight.len() != neurons * fan_in {
            return Err(AcceleratorError::Mapping(format!(
                "{name}: {neurons} x {fan_in} layer has {} weights",
                weight.len()
            )));
        }
        let cfg = acc.block(block).config;
        let width = cfg.bank_width;
        let banks = cfg.banks();
        let tiles_per_neuron = fan_in.div_ceil(width);
        let counter = &mut next_slot[block as usize];
        let mut tiles = Vec::with_capacity(neurons * tiles_per_neuron);
        for neuron in 0..neurons {
            for chunk in 0..tiles_per_neuron {
                let start = chunk * width;
                let len = width.min(fan_in - start);
                let slot = *counter;
                *counter += 1;
                tiles.push(Tile {
                    neuron: neuron as u32,
                    start: start as u32,
                    len: len as u32,
                    unit: (slot % cfg.units) as u32,
                    bank: ((slot / cfg.units) % cfg.banks_per_unit) as u32,
                    round: (slot / banks) as u32,
                });
            }
        }
        layers.push(LayerMapping {
            layer_index: index,
            name: name.clone(),
            block,
            neurons,
            fan_in,
            weight_scale: max_abs(weight),
            negative: weight.iter().map(|w| w.is_sign_negative() && *w != 0.0).collect(),
            tiles,
            tiles_per_neuron,
        });
    }
    Ok(MappingPlan { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accelerator::AcceleratorConfig;
    use crate::nn::{Conv2d, Linear};

    fn fc(name: &str, inp: usize, out: usize) -> Layer {
        Layer::Fc(Linear {
            name: name.into(),
            in_features: inp,
            out_features: out,
            weight: (0..inp * out).map(|i| (i as f32 * 0.3).sin()).collect(),
            bias: None,
        })
    }

    fn model(layers: Vec<Layer>) -> Model {
        Model {
            name: "m".into(),
            dataset: "none".into(),
            variant: "original".into(),
            input_shape: vec![3],
            num_classes: 1,
            layers,
        }
    }

    #[test]
    fn three_wide_fc_on_toy_is_one_tile() {
        let acc = Accelerator::build(AcceleratorConfig::toy(3)).unwrap();
        let plan = map_model(&model(vec![fc("f", 3, 1)]), &acc).unwrap();
        let l = &plan.layers[0];
        assert_eq!(l.tiles, vec![Tile { neuron: 0, start: 0, len: 3, unit: 0, bank: 0, round: 0 }]);
        assert_eq!(l.block, Block::Fc);
    }

    #[test]
    fn long_kernel_splits_into_two_tiles() {
        let acc = Accelerator::build(AcceleratorConfig::default()).unwrap();
        let conv = Layer::Conv2d(Conv2d {
            name: "c".into(),
            in_ch: 1,
            out_ch: 2,
            kernel_h: 5,
            kernel_w: 5,
            stride: 1,
            padding: 0,
            weight: vec![0.5; 50],
            bias: None,
        });
        let plan = map_model(&model(vec![conv]), &acc).unwrap();
        let t = plan.layers[0].neuron_tiles(0);
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].start, t[0].len, t[1].start, t[1].len), (0, 20, 20, 5));
        assert_eq!(t[0].neuron, t[1].neuron);
        assert_eq!((t[0].unit, t[1].unit, t[0].round), (0, 1, 0));
        assert_eq!(plan.layers[0].neuron_tiles(1)[0].unit, 2);
    }

    #[test]
    fn wraps_onto_reuse_rounds() {
        // 1 unit x 1 bank of width 3: every tile beyond the first is a new round.
        let acc = Accelerator::build(AcceleratorConfig::toy(3)).unwrap();
        let plan = map_model(&model(vec![fc("a", 7, 2), fc("b", 2, 1)]), &acc).unwrap();
        let rounds: Vec<u32> = plan.layers.iter().flat_map(|l| l.tiles.iter().map(|t| t.round)).collect();
        assert_eq!(rounds, (0..7).collect::<Vec<_>>());
        assert_eq!(plan.mapped_slots(), 16);
    }

    #[test]
    fn empty_model_is_an_error() {
        let acc = Accelerator::build(AcceleratorConfig::toy(3)).unwrap();
        assert!(map_model(&model(vec![]), &acc).is_err());
    }

    #[test]
    fn mapping_is_deterministic_and_covers_every_weight() {
        let acc = Accelerator::build(AcceleratorConfig::default()).unwrap();
        let m = model(vec![fc("a", 300, 40), Layer::Relu, fc("b", 40, 10)]);
        let a = map_model(&m, &acc).unwrap();
        let b = map_model(&m, &acc).unwrap();
        assert_eq!(a, b);
        for l in &a.layers {
            let mut covered = vec![0u8; l.neurons * l.fan_in];
            for t in &l.tiles {
                for k in t.range() {
                    covered[t.neuron as usize * l.fan_in + k] += 1;
                }
            }
            assert!(covered.iter().all(|&c| c == 1));
        }
        assert_eq!(a.layers[1].layer_index, 2);
    }
}
