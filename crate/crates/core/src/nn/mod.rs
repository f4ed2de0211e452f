//! CNN forward passes: a dense reference path, and a path where every conv
//! and fc dot product runs through the (possibly faulted) accelerator.

pub mod model;
pub mod ops;
mod tensor;

pub use model::{BatchNorm, Conv2d, Layer, Linear, Model, ParameterSummary};
pub use tensor::Tensor;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accelerator::{AcceleratorError, CompiledNetwork, FaultedAccelerator, MappingPlan};
use crate::model_io::Dataset;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Accelerator(#[from] Box<AcceleratorError>),
}

impl From<AcceleratorError> for NnError {
    fn from(e: AcceleratorError) -> Self {
        NnError::Accelerator(Box::new(e))
    }
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Supplies the multiply-accumulate layers of a forward pass.
pub trait MacEngine {
    fn conv(&self, layer_index: usize, conv: &Conv2d, input: &Tensor) -> Result<Tensor>;
    fn fc(&self, layer_index: usize, layer: &Linear, input: &Tensor) -> Result<Tensor>;
}

/// Exact dense arithmetic.
pub struct Reference;

impl MacEngine for Reference {
    fn conv(&self, _: usize, conv: &Conv2d, input: &Tensor) -> Result<Tensor> {
        ops::conv2d(conv, input)
    }

    fn fc(&self, _: usize, layer: &Linear, input: &Tensor) -> Result<Tensor> {
        ops::linear(layer, input)
    }
}

/// Runs `model` on one `(C, H, W)` input, delegating conv/fc to `engine` and
/// computing every other operator exactly.
pub fn forward_with<E: MacEngine + ?Sized>(model: &Model, input: &Tensor, engine: &E) -> Result<Tensor> {
    if input.shape() != model.input_shape.as_slice() {
        return Err(NnError::Shape(format!(
            "input shape {:?} does not match model input {:?}",
            input.shape(),
            model.input_shape
        )));
    }
    let keep: Vec<usize> = model
        .layers
        .iter()
        .filter_map(|l| match l {
            Layer::ResidualAdd { from } => Some(*from),
            _ => None,
        })
        .collect();
    let mut saved: Vec<(usize, Tensor)> = Vec::new();
    if keep.contains(&0) {
        saved.push((0, input.clone()));
    }
    let mut x = input.clone();
    for (i, layer) in model.layers.iter().enumerate() {
        x = match layer {
            Layer::Conv2d(c) => engine.conv(i, c, &x)?,
            Layer::Fc(l) => engine.fc(i, l, &x)?,
            Layer::Relu => ops::relu(x),
            Layer::MaxPool2d { kernel, stride } => ops::max_pool2d(&x, *kernel, *stride)?,
            Layer::AvgPool2d { kernel, stride } => ops::avg_pool2d(&x, *kernel, *stride)?,
            Layer::Flatten => ops::flatten(x),
            Layer::ResidualAdd { from } => {
                let other = saved
                    .iter()
                    .find(|(k, _)| k == from)
                    .map(|(_, t)| t)
                    .ok_or_else(|| NnError::Shape(format!("layer {i}: residual source {from} unavailable")))?;
                ops::residual_add(x, other)?
            }
            Layer::BatchNorm(bn) => ops::batchnorm(bn, x)?,
        };
        if keep.contains(&(i + 1)) {
            saved.push((i + 1, x.clone()));
        }
    }
    Ok(x)
}

/// Dense forward pass with no accelerator involvement.
pub fn reference_forward(model: &Model, input: &Tensor) -> Result<Tensor> {
    forward_with(model, input, &Reference)
}

/// Forward pass with conv/fc layers executed on the faulted accelerator.
///
/// Compiles the fault state on every call; evaluate many inputs through
/// [`CompiledNetwork`] instead.
pub fn accelerated_forward(
    model: &Model,
    input: &Tensor,
    plan: &MappingPlan,
    facc: &FaultedAccelerator,
) -> Result<Tensor> {
    let net = CompiledNetwork::new(model, plan, facc)?;
    forward_with(model, input, &net)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub per_class_correct: Vec<usize>,
    pub per_class_total: Vec<usize>,
}

/// Top-1 accuracy of the accelerated model over a dataset.
pub fn evaluate_accuracy(
    model: &Model,
    dataset: &Dataset,
    plan: &MappingPlan,
    facc: &FaultedAccelerator,
) -> Result<AccuracyReport> {
    let net = CompiledNetwork::new(model, plan, facc)?;
    evaluate_with(model, dataset, &net)
}

pub fn evaluate_with<E: MacEngine + Sync + ?Sized>(
    model: &Model,
    dataset: &Dataset,
    engine: &E,
) -> Result<AccuracyReport> {
    if dataset.is_empty() {
        return Err(NnError::Evaluation("dataset is empty".into()));
    }
    if let Some(&bad) = dataset.labels().iter().find(|&&l| l as usize >= model.num_classes) {
        return Err(NnError::Evaluation(format!(
            "label {bad} out of range for {} classes",
            model.num_classes
        )));
    }
    let predictions: Vec<usize> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let image = dataset.image(i);
            let logits = forward_with(model, &image, engine)?;
            logits
                .argmax()
                .ok_or_else(|| NnError::Evaluation("model produced no logits".into()))
        })
        .collect::<Result<_>>()?;
    let mut per_class_correct = vec![0; model.num_classes];
    let mut per_class_total = vec![0; model.num_classes];
    for (pred, &label) in predictions.iter().zip(dataset.labels()) {
        per_class_total[label as usize] += 1;
        if *pred == label as usize {
            per_class_correct[label as usize] += 1;
        }
    }
    let correct: usize = per_class_correct.iter().sum();
    Ok(AccuracyReport {
        correct,
        total: dataset.len(),
        accuracy: correct as f64 / dataset.len() as f64,
        per_class_correct,
        per_class_total,
    })
}
