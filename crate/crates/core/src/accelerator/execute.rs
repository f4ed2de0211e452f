//! Channel-by-channel simulation of a VDP pass through an MR bank pair.
//!
//! This is the literal device model and is slow; [`super::CompiledNetwork`]
//! reduces the same semantics to a per-neuron program for bulk inference and
//! is tested against this module.

use super::mapping::{LayerMapping, MappingPlan, Tile};
use super::{AcceleratorError, ArrayRole, FaultedAccelerator, MrCoordinate, Result};
use crate::nn::{self, Conv2d, Layer, Linear, MacEngine, Tensor};
use crate::photonics::mr_transmission;

pub(crate) fn max_abs(values: &[f32]) -> f32 {
    values.iter().fold(0.0f32, |m, v| m.max(v.abs()))
}

pub(crate) fn sign(x: f32) -> f32 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn normalized(v: f32, scale: f32) -> f64 {
    if scale > 0.0 {
        (f64::from(v.abs()) / f64::from(scale)).min(1.0)
    } else {
        0.0
    }
}

/// One tile's partial sum, denormalized and signed.
///
/// Carriers `0..len` are lit. Each carrier's amplitude is multiplied by every
/// input-array MR and then every weight-array MR that acts on it; a carrier
/// with no MR of an array acting on it passes that array untouched. Columns
/// at or beyond `len` are parked and never act. After photodetection the
/// sign bits of slot `c` are applied to carrier `c`.
fn tile_partial(
    facc: &FaultedAccelerator,
    layer: &LayerMapping,
    tile: &Tile,
    weights: &[f32],
    negative: &[bool],
    activations: &[f32],
) -> Result<f64> {
    let acc = facc.accelerator();
    let policy = facc.policy();
    let len = tile.len as usize;
    let a_scale = max_abs(activations);
    let w_scale = layer.weight_scale;
    let mut carrier_in = vec![1.0f64; len];
    let mut carrier_w = vec![1.0f64; len];
    for (role, values, scale, carriers) in [
        (ArrayRole::Input, activations, a_scale, &mut carrier_in),
        (ArrayRole::Weight, weights, w_scale, &mut carrier_w),
    ] {
        for column in 0..len {
            let id = acc.mr_id(&MrCoordinate {
                block: layer.block,
                unit: tile.unit as usize,
                bank: tile.bank as usize,
                column,
                role,
            });
            let state = facc.state(id);
            if let Some(c) = state.active_channel(column) {
                if c < len {
                    let t = mr_transmission(&state, normalized(values[column], scale), policy)
                        .map_err(|e| AcceleratorError::Contract(e.to_string()))?;
                    carriers[c] *= t;
                }
            }
        }
    }
    let mut sum = 0.0f64;
    for c in 0..len {
        let s = if negative[c] { -1.0 } else { 1.0 } * sign(activations[c]);
        sum += f64::from(s) * carrier_in[c] * carrier_w[c];
    }
    Ok(sum * f64::from(a_scale) * f64::from(w_scale))
}

/// Computes one output neuron's dot product through its tiles.
///
/// `weights` and `activations` are the neuron's full weight row and the
/// matching input vector.
pub fn execute_dot_product(
    facc: &FaultedAccelerator,
    layer: &LayerMapping,
    neuron: usize,
    weights: &[f32],
    activations: &[f32],
) -> Result<f32> {
    if neuron >= layer.neurons {
        return Err(AcceleratorError::Contract(format!(
            "{}: neuron {neuron} not mapped ({} neurons)",
            layer.name, layer.neurons
        )));
    }
    if weights.len() != layer.fan_in || activations.len() != layer.fan_in {
        return Err(AcceleratorError::Contract(format!(
            "{}: dot product of length {} got {} weights and {} activations",
            layer.name,
            layer.fan_in,
            weights.len(),
            activations.len()
        )));
    }
    let negative = &layer.negative[neuron * layer.fan_in..(neuron + 1) * layer.fan_in];
    let mut total = 0.0f64;
    for tile in layer.neuron_tiles(neuron) {
        let r = tile.range();
        total += tile_partial(
            facc,
            layer,
            tile,
            &weights[r.clone()],
            &negative[r.clone()],
            &activations[r],
        )?;
    }
    Ok(total as f32)
}

fn mapping_for<'p>(plan: &'p MappingPlan, index: usize, name: &str) -> Result<&'p LayerMapping> {
    plan.layer(index)
        .ok_or_else(|| AcceleratorError::Contract(format!("layer {index} ({name}) is not mapped")))
}

fn conv_via_accelerator(
    conv: &Conv2d,
    mapping: &LayerMapping,
    input: &Tensor,
    facc: &FaultedAccelerator,
) -> Result<Tensor> {
    let (cols, oh, ow) = nn::ops::im2col(conv, input).map_err(|e| AcceleratorError::Contract(e.to_string()))?;
    let fan_in = conv.fan_in();
    let mut out = vec![0.0f32; conv.out_ch * oh * ow];
    for o in 0..conv.out_ch {
        let row = &conv.weight[o * fan_in..(o + 1) * fan_in];
        let bias = conv.bias.as_ref().map_or(0.0, |b| b[o]);
        for p in 0..oh * ow {
            let patch = &cols[p * fan_in..(p + 1) * fan_in];
            out[o * oh * ow + p] = execute_dot_product(facc, mapping, o, row, patch)? + bias;
        }
    }
    Tensor::new(vec![conv.out_ch, oh, ow], out).map_err(|e| AcceleratorError::Contract(e.to_string()))
}

fn fc_via_accelerator(
    fc: &Linear,
    mapping: &LayerMapping,
    input: &Tensor,
    facc: &FaultedAccelerator,
) -> Result<Tensor> {
    if input.len() != fc.in_features {
        return Err(AcceleratorError::Contract(format!(
            "{}: expects {} inputs, got {}",
            fc.name,
            fc.in_features,
            input.len()
        )));
    }
    let out = (0..fc.out_features)
        .map(|o| {
            let row = &fc.weight[o * fc.in_features..(o + 1) * fc.in_features];
            let bias = fc.bias.as_ref().map_or(0.0, |b| b[o]);
            Ok(execute_dot_product(facc, mapping, o, row, input.data())? + bias)
        })
        .collect::<Result<Vec<f32>>>()?;
    Tensor::new(vec![fc.out_features], out).map_err(|e| AcceleratorError::Contract(e.to_string()))
}

/// Runs one conv or fc layer with every output produced by
/// [`execute_dot_product`]. Biases are added electronically.
pub fn layer_forward_via_accelerator(
    layer: &Layer,
    layer_index: usize,
    input: &Tensor,
    plan: &MappingPlan,
    facc: &FaultedAccelerator,
) -> Result<Tensor> {
    match layer {
        Layer::Conv2d(c) => conv_via_accelerator(c, mapping_for(plan, layer_index, &c.name)?, input, facc),
        Layer::Fc(l) => fc_via_accelerator(l, mapping_for(plan, layer_index, &l.name)?, input, facc),
        other => Err(AcceleratorError::Contract(format!(
            "{} layers do not run on the accelerator",
            other.kind()
        ))),
    }
}

/// [`MacEngine`] backed by the channel-level simulation.
pub struct DeviceLevel<'a> {
    pub plan: &'a MappingPlan,
    pub facc: &'a FaultedAccelerator,
}

impl MacEngine for DeviceLevel<'_> {
    fn conv(&self, layer_index: usize, conv: &Conv2d, input: &Tensor) -> nn::Result<Tensor> {
        let mapping = mapping_for(self.plan, layer_index, &conv.name)?;
        Ok(conv_via_accelerator(conv, mapping, input, self.facc)?)
    }

    fn fc(&self, layer_index: usize, layer: &Linear, input: &Tensor) -> nn::Result<Tensor> {
        let mapping = mapping_for(self.plan, layer_index, &layer.name)?;
        Ok(fc_via_accelerator(layer, mapping, input, self.facc)?)
    }
}
