#![allow(dead_code)]

use std::path::{Path, PathBuf};

use onn_trojan_sim::accelerator::{map_model, Accelerator, AcceleratorConfig, MappingPlan};
use onn_trojan_sim::campaign::CampaignConfig;
use onn_trojan_sim::model_io::{load_archive, load_idx, Dataset};
use onn_trojan_sim::nn::{Layer, Linear, Model};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn mnist_test_set() -> Dataset {
    let dir = fixtures().join("mnist");
    load_idx(dir.join("test-images-idx3-ubyte"), dir.join("test-labels-idx1-ubyte")).expect("MNIST fixture")
}

pub fn original_model() -> Model {
    load_archive(fixtures().join("original.slwa")).expect("baseline archive").0
}

/// Campaign over the MNIST fixture writing into `out`.
pub fn mnist_campaign(out: &Path, trials: usize, subsample: usize) -> CampaignConfig {
    let text = format!(
        r#"
seed = 20240607
trials = {trials}
subsample = {subsample}
output_dir = "{out}"

[dataset]
images = "mnist/test-images-idx3-ubyte"
labels = "mnist/test-labels-idx1-ubyte"

[[variants]]
name = "original"
archive = "original.slwa"
"#,
        out = out.display()
    );
    CampaignConfig::from_toml(&text, fixtures()).expect("campaign config")
}

pub fn linear(name: &str, inputs: usize, outputs: usize, weight: Vec<f32>) -> Layer {
    Layer::Fc(Linear {
        name: name.into(),
        in_features: inputs,
        out_features: outputs,
        weight,
        bias: None,
    })
}

pub fn model(input_shape: Vec<usize>, num_classes: usize, layers: Vec<Layer>) -> Model {
    Model {
        name: "test".into(),
        dataset: "synthetic".into(),
        variant: "original".into(),
        input_shape,
        num_classes,
        layers,
    }
}

/// One 3-wide dot product on the two-array toy bank.
pub fn toy_bank(weights: [f32; 3], cfg: AcceleratorConfig) -> (Accelerator, Model, MappingPlan) {
    let acc = Accelerator::build(cfg).unwrap();
    let m = model(vec![3], 1, vec![linear("fc", 3, 1, weights.to_vec())]);
    let plan = map_model(&m, &acc).unwrap();
    (acc, m, plan)
}
