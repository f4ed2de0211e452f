//! Per-trial compilation of the channel model into per-neuron programs.
//!
//! A fault state is fixed for a whole trial, so every carrier of every tile
//! reduces to a term `coef * sign(a[slot]) * g(a)`, where `g` is the tile's
//! activation scale when no input MR reaches the carrier, `|a[k]|` when one
//! does, and `prod |a[k]| / scale^(n-1)` when `n > 1` do. Neurons whose banks
//! carry no faults run as plain dot products on the original weights.

use std::collections::HashMap;

use super::execute::{max_abs, sign};
use super::mapping::{LayerMapping, MappingPlan, Tile};
use super::{AcceleratorError, ArrayRole, FaultedAccelerator, MrCoordinate, Result};
use crate::nn::{self, Conv2d, Layer, Linear, MacEngine, Model, Tensor};
use crate::photonics::MrState;

#[derive(Debug, Clone, PartialEq)]
struct Term {
    tile_start: u32,
    tile_len: u32,
    slot: u32,
    coef: f32,
    inputs: Vec<u32>,
}

impl Term {
    fn eval(&self, x: &[f32]) -> f32 {
        let s = sign(x[self.slot as usize]);
        match self.inputs.as_slice() {
            [k] => self.coef * s * x[*k as usize].abs(),
            inputs => {
                let r = self.tile_start as usize..(self.tile_start + self.tile_len) as usize;
                let scale = max_abs(&x[r]);
                if scale == 0.0 {
                    return 0.0;
                }
                let g = if inputs.is_empty() {
                    scale
                } else {
                    let prod: f32 = inputs.iter().map(|&k| x[k as usize].abs() / scale).product();
                    prod * scale
                };
                self.coef * s * g
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FaultedNeuron {
    /// Healthy weights plus single-input terms reading their own slot.
    /// Exact for any activation signs.
    exact: Vec<f32>,
    /// `exact` with `cross` folded in; valid when activations are non-negative.
    folded: Vec<f32>,
    /// Single-input terms reading another slot's activation.
    cross: Vec<Term>,
    /// Terms with zero or several inputs.
    nonlinear: Vec<Term>,
}

impl FaultedNeuron {
    fn eval(&self, x: &[f32], nonneg: bool) -> f32 {
        let mut acc = if nonneg {
            dot(&self.folded, x)
        } else {
            dot(&self.exact, x) + self.cross.iter().map(|t| t.eval(x)).sum::<f32>()
        };
        acc += self.nonlinear.iter().map(|t| t.eval(x)).sum::<f32>();
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Program {
    Healthy,
    Faulted(Box<FaultedNeuron>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLayer {
    fan_in: usize,
    programs: Vec<Program>,
    corrupted_slots: usize,
}

impl CompiledLayer {
    fn eval(&self, neuron: usize, weights: &[f32], x: &[f32], nonneg: bool) -> f32 {
        match &self.programs[neuron] {
            Program::Healthy => dot(weights, x),
            Program::Faulted(f) => f.eval(x, nonneg),
        }
    }

    pub fn faulted_neurons(&self) -> usize {
        self.programs.iter().filter(|p| matches!(p, Program::Faulted(_))).count()
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum::<f64>() as f32
}

/// What reaches one carrier of a tile.
#[derive(Default)]
struct Carrier {
    inputs: Vec<u32>,
    input_const: f32,
    weight_factor: f32,
    canonical_input: bool,
    canonical_weight: bool,
    foreign: bool,
}

/// Compiles one tile. Returns the per-carrier terms and the number of
/// corrupted slots (carriers whose term differs from the fault-free one).
fn compile_tile(
    facc: &FaultedAccelerator,
    layer: &LayerMapping,
    tile: &Tile,
    weights: &[f32],
    negative: &[bool],
) -> (Vec<Term>, usize) {
    let acc = facc.accelerator();
    let policy = facc.policy().0;
    let len = tile.len as usize;
    let start = tile.start;
    let w_scale = layer.weight_scale;
    let mut carriers: Vec<Carrier> = (0..len)
        .map(|_| Carrier {
            input_const: 1.0,
            weight_factor: 1.0,
            ..Default::default()
        })
        .collect();
    for role in [ArrayRole::Input, ArrayRole::Weight] {
        for column in 0..len {
            let id = acc.mr_id(&MrCoordinate {
                block: layer.block,
                unit: tile.unit as usize,
                bank: tile.bank as usize,
                column,
                role,
            });
            let state = facc.state(id);
            let Some(c) = state.active_channel(column) else { continue };
            if c >= len {
                continue;
            }
            let carrier = &mut carriers[c];
            let off = matches!(state, MrState::OffResonance);
            match (role, off) {
                (ArrayRole::Input, true) => {
                    carrier.input_const *= policy;
                    carrier.foreign = true;
                }
                (ArrayRole::Input, false) => {
                    carrier.inputs.push(start + column as u32);
                    if column == c {
                        carrier.canonical_input = true;
                    } else {
                        carrier.foreign = true;
                    }
                }
                (ArrayRole::Weight, true) => {
                    carrier.weight_factor *= policy;
                    carrier.foreign = true;
                }
                (ArrayRole::Weight, false) => {
                    let t = if w_scale > 0.0 { (weights[column].abs() / w_scale).min(1.0) } else { 0.0 };
                    carrier.weight_factor *= t;
                    if column == c {
                        carrier.canonical_weight = true;
                    } else {
                        carrier.foreign = true;
                    }
                }
            }
        }
    }
    let mut corrupted = 0;
    let terms = carriers
        .into_iter()
        .enumerate()
        .map(|(c, carrier)| {
            if carrier.foreign || !carrier.canonical_input || !carrier.canonical_weight {
                corrupted += 1;
            }
            let s = if negative[c] { -1.0 } else { 1.0 };
            Term {
                tile_start: start,
                tile_len: tile.len,
                slot: start + c as u32,
                coef: s * carrier.input_const * carrier.weight_factor * w_scale,
                inputs: carrier.inputs,
            }
        })
        .collect();
    (terms, corrupted)
}

fn compile_layer(
    facc: &FaultedAccelerator,
    mapping: &LayerMapping,
    weight: &[f32],
) -> CompiledLayer {
    let acc = facc.accelerator();
    let fan_in = mapping.fan_in;
    let mut corrupted_slots = 0;
    let programs = (0..mapping.neurons)
        .map(|n| {
            let tiles = mapping.neuron_tiles(n);
            if !tiles.iter().any(|t| facc.bank_is_faulted(mapping.bank_of(acc, t))) {
                return Program::Healthy;
            }
            let row = &weight[n * fan_in..(n + 1) * fan_in];
            let negative = &mapping.negative[n * fan_in..(n + 1) * fan_in];
            let mut exact = vec![0.0f32; fan_in];
            let mut cross = Vec::new();
            let mut nonlinear = Vec::new();
            for tile in tiles {
                let r = tile.range();
                if !facc.bank_is_faulted(mapping.bank_of(acc, tile)) {
                    exact[r.clone()].copy_from_slice(&row[r]);
                    continue;
                }
                let (terms, corrupted) = compile_tile(facc, mapping, tile, &row[r.clone()], &negative[r]);
                corrupted_slots += corrupted;
                for term in terms {
                    match term.inputs.as_slice() {
                        [k] if *k == term.slot => exact[*k as usize] += term.coef,
                        [_] => cross.push(term),
                        _ => nonlinear.push(term),
                    }
                }
            }
            let mut folded = exact.clone();
            for t in &cross {
                folded[t.inputs[0] as usize] += t.coef;
            }
            Program::Faulted(Box::new(FaultedNeuron {
                exact,
                folded,
                cross,
                nonlinear,
            }))
        })
        .collect();
    CompiledLayer {
        fan_in,
        programs,
        corrupted_slots,
    }
}

/// A model's accelerated layers compiled against one fault state.
#[derive(Debug, Clone)]
pub struct CompiledNetwork {
    layers: HashMap<usize, CompiledLayer>,
}

impl CompiledNetwork {
    pub fn new(model: &Model, plan: &MappingPlan, facc: &FaultedAccelerator) -> Result<Self> {
        let mut layers = HashMap::new();
        for (i, layer) in model.layers.iter().enumerate() {
            let weight = match layer {
                Layer::Conv2d(c) => &c.weight,
                Layer::Fc(l) => &l.weight,
                _ => continue,
            };
            let mapping = plan.layer(i).ok_or_else(|| {
                AcceleratorError::Contract(format!("layer {i} ({}) is not mapped", layer.kind()))
            })?;
            if mapping.neurons * mapping.fan_in != weight.len() {
                return Err(AcceleratorError::Contract(format!(
                    "layer {i}: plan covers {} x {} weights, model has {}",
                    mapping.neurons,
                    mapping.fan_in,
                    weight.len()
                )));
            }
            layers.insert(i, compile_layer(facc, mapping, weight));
        }
        Ok(Self { layers })
    }

    /// Mapped parameter slots whose carrier term differs from fault-free.
    pub fn corrupted_slots(&self) -> usize {
        self.layers.values().map(|l| l.corrupted_slots).sum()
    }

    pub fn faulted_neurons(&self) -> usize {
        self.layers.values().map(CompiledLayer::faulted_neurons).sum()
    }

    fn layer(&self, index: usize) -> nn::Result<&CompiledLayer> {
        self.layers
            .get(&index)
            .ok_or_else(|| AcceleratorError::Contract(format!("layer {index} is not mapped")).into())
    }
}

impl MacEngine for CompiledNetwork {
    fn conv(&self, layer_index: usize, conv: &Conv2d, input: &Tensor) -> nn::Result<Tensor> {
        let compiled = self.layer(layer_index)?;
        let (cols, oh, ow) = nn::ops::im2col(conv, input)?;
        let fan_in = compiled.fan_in;
        let positions = oh * ow;
        let nonneg: Vec<bool> = cols
            .chunks(fan_in)
            .map(|p| p.iter().all(|v| *v >= 0.0))
            .collect();
        let mut out = vec![0.0f32; conv.out_ch * positions];
        for o in 0..conv.out_ch {
            let row = &conv.weight[o * fan_in..(o + 1) * fan_in];
            let bias = conv.bias.as_ref().map_or(0.0, |b| b[o]);
            let dst = &mut out[o * positions..(o + 1) * positions];
            for (p, v) in dst.iter_mut().enumerate() {
                let patch = &cols[p * fan_in..(p + 1) * fan_in];
                *v = compiled.eval(o, row, patch, nonneg[p]) + bias;
            }
        }
        Tensor::new(vec![conv.out_ch, oh, ow], out)
    }

    fn fc(&self, layer_index: usize, layer: &Linear, input: &Tensor) -> nn::Result<Tensor> {
        let compiled = self.layer(layer_index)?;
        if input.len() != layer.in_features || input.shape().len() != 1 {
            return Err(nn::NnError::Shape(format!(
                "{}: expects [{}], got {:?}",
                layer.name,
                layer.in_features,
                input.shape()
            )));
        }
        let x = input.data();
        let nonneg = x.iter().all(|v| *v >= 0.0);
        let out = (0..layer.out_features)
            .map(|o| {
                let row = &layer.weight[o * layer.in_features..(o + 1) * layer.in_features];
                compiled.eval(o, row, x, nonneg) + layer.bias.as_ref().map_or(0.0, |b| b[o])
            })
            .collect();
        Tensor::new(vec![layer.out_features], out)
    }
}
