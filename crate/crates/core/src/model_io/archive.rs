//! The SLWA weights archive.
//!
//! ```text
//! "SLWA"                      4 bytes
//! version                     u16 LE (currently 1)
//! manifest length, manifest   u32 LE, UTF-8 JSON
//! tensor count                u32 LE
//! per tensor:
//!   name length, name         u16 LE, UTF-8
//!   rank                      u8
//!   dims                      rank x u32 LE
//!   values                    prod(dims) x f32 LE
//! ```

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{BatchNorm, Conv2d, Layer, Linear, Model};

pub const MAGIC: &[u8; 4] = b"SLWA";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArchiveError {
    #[error("bad magic {0:?}, expected \"SLWA\"")]
    BadMagic([u8; 4]),
    #[error("unsupported archive version {0} (this build reads {VERSION})")]
    UnsupportedVersion(u16),
    #[error("truncated archive while reading {0}")]
    Truncated(String),
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("{0} unexpected bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("invalid UTF-8 in {0}")]
    Utf8(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
    #[error("{0} does not fit the format's length fields")]
    TooLarge(String),
}

impl ArchiveError {
    pub fn code(&self) -> &'static str {
        match self {
            ArchiveError::BadMagic(_) => "bad_magic",
            ArchiveError::UnsupportedVersion(_) => "unsupported_version",
            ArchiveError::Truncated(_) => "truncated",
            ArchiveError::DuplicateName(_) => "duplicate_name",
            ArchiveError::TrailingBytes(_) => "trailing_bytes",
            ArchiveError::Utf8(_) => "utf8",
            ArchiveError::Manifest(_) => "manifest",
            ArchiveError::Tensor { .. } => "tensor",
            ArchiveError::TooLarge(_) => "too_large",
        }
    }
}

pub type Result<T> = std::result::Result<T, ArchiveError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

/// Raw archive contents: manifest text plus named tensors in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsArchive {
    pub manifest: String,
    pub tensors: Vec<TensorRecord>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ArchiveError::Truncated(what.to_string()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn text(&mut self, n: usize, what: &str) -> Result<String> {
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| ArchiveError::Utf8(what.to_string()))
    }
}

impl WeightsArchive {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if &magic != MAGIC {
            return Err(ArchiveError::BadMagic(magic));
        }
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(ArchiveError::UnsupportedVersion(version));
        }
        let len = r.u32("manifest length")? as usize;
        let manifest = r.text(len, "manifest")?;
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        let mut seen = HashSet::new();
        for i in 0..count {
            let len = r.u16(&format!("tensor {i} name length"))? as usize;
            let name = r.text(len, &format!("tensor {i} name"))?;
            if !seen.insert(name.clone()) {
                return Err(ArchiveError::DuplicateName(name));
            }
            let rank = r.u8(&format!("{name} rank"))?;
            let dims = (0..rank)
                .map(|_| r.u32(&format!("{name} dims")))
                .collect::<Result<Vec<u32>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d as usize))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| ArchiveError::Truncated(format!("{name} values")))?;
            let data = r
                .take(n, &format!("{name} values"))?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(TensorRecord { name, dims, data });
        }
        if r.at != bytes.len() {
            return Err(ArchiveError::TrailingBytes(bytes.len() - r.at));
        }
        Ok(Self { manifest, tensors })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend(VERSION.to_le_bytes());
        let m = self.manifest.as_bytes();
        let len = u32::try_from(m.len()).map_err(|_| ArchiveError::TooLarge("manifest".into()))?;
        out.extend(len.to_le_bytes());
        out.extend_from_slice(m);
        let count = u32::try_from(self.tensors.len()).map_err(|_| ArchiveError::TooLarge("tensor count".into()))?;
        out.extend(count.to_le_bytes());
        let mut seen = HashSet::new();
        for t in &self.tensors {
            if !seen.insert(t.name.as_str()) {
                return Err(ArchiveError::DuplicateName(t.name.clone()));
            }
            let name = t.name.as_bytes();
            let nlen = u16::try_from(name.len()).map_err(|_| ArchiveError::TooLarge(format!("name {:?}", t.name)))?;
            let rank = u8::try_from(t.dims.len()).map_err(|_| ArchiveError::TooLarge(format!("rank of {}", t.name)))?;
            let expected: usize = t.dims.iter().map(|&d| d as usize).product();
            if expected != t.data.len() {
                return Err(ArchiveError::Tensor {
                    name: t.name.clone(),
                    reason: format!("dims {:?} hold {expected} values, data has {}", t.dims, t.data.len()),
                });
            }
            out.extend(nlen.to_le_bytes());
            out.extend_from_slice(name);
            out.push(rank);
            for d in &t.dims {
                out.extend(d.to_le_bytes());
            }
            for v in &t.data {
                out.extend(v.to_le_bytes());
            }
        }
        Ok(out)
    }
}

/// Layer description as it appears in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        name: String,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Fc {
        name: String,
        #[serde(rename = "in")]
        in_features: usize,
        #[serde(rename = "out")]
        out_features: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Relu,
    Maxpool2d {
        kernel: usize,
        stride: usize,
    },
    Avgpool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    ResidualAdd {
        from: usize,
    },
    Batchnorm {
        name: String,
        channels: usize,
        #[serde(default = "bn_eps")]
        eps: f32,
    },
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn bn_eps() -> f32 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSetRef {
    pub images: String,
    pub labels: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

/// Archive manifest. Fields this crate does not interpret (training
/// hyperparameters and the like) are kept in `extra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub dataset: String,
    pub variant: String,
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_parameters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_set: Option<TestSetRef>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    /// A manifest describing `model` with no recorded accuracy.
    pub fn for_model(model: &Model) -> Self {
        Self {
            name: model.name.clone(),
            dataset: model.dataset.clone(),
            variant: model.variant.clone(),
            input_shape: model.input_shape.clone(),
            num_classes: model.num_classes,
            layers: model.layers.iter().map(layer_spec).collect(),
            total_parameters: Some(model.parameter_summary().total_parameters),
            test_accuracy: None,
            test_set: None,
            extra: BTreeMap::new(),
        }
    }
}

fn layer_spec(layer: &Layer) -> LayerSpec {
    match layer {
        Layer::Conv2d(c) => LayerSpec::Conv2d {
            name: c.name.clone(),
            in_ch: c.in_ch,
            out_ch: c.out_ch,
            kernel: c.kernel_h,
            stride: c.stride,
            padding: c.padding,
            bias: c.bias.is_some(),
        },
        Layer::Fc(l) => LayerSpec::Fc {
            name: l.name.clone(),
            in_features: l.in_features,
            out_features: l.out_features,
            bias: l.bias.is_some(),
        },
        Layer::Relu => LayerSpec::Relu,
        Layer::MaxPool2d { kernel, stride } => LayerSpec::Maxpool2d { kernel: *kernel, stride: *stride },
        Layer::AvgPool2d { kernel, stride } => LayerSpec::Avgpool2d { kernel: *kernel, stride: *stride },
        Layer::Flatten => LayerSpec::Flatten,
        Layer::ResidualAdd { from } => LayerSpec::ResidualAdd { from: *from },
        Layer::BatchNorm(b) => LayerSpec::Batchnorm {
            name: b.name.clone(),
            channels: b.channels,
            eps: b.eps,
        },
    }
}

fn layer_tensors(layer: &Layer) -> Vec<TensorRecord> {
    let rec = |name: String, dims: Vec<usize>, data: &[f32]| TensorRecord {
        name,
        dims: dims.into_iter().map(|d| d as u32).collect(),
        data: data.to_vec(),
    };
    let mut out = Vec::new();
    match layer {
        Layer::Conv2d(c) => {
            out.push(rec(format!("{}.weight", c.name), vec![c.out_ch, c.in_ch, c.kernel_h, c.kernel_w], &c.weight));
            if let Some(b) = &c.bias {
                out.push(rec(format!("{}.bias", c.name), vec![c.out_ch], b));
            }
        }
        Layer::Fc(l) => {
            out.push(rec(format!("{}.weight", l.name), vec![l.out_features, l.in_features], &l.weight));
            if let Some(b) = &l.bias {
                out.push(rec(format!("{}.bias", l.name), vec![l.out_features], b));
            }
        }
        Layer::BatchNorm(b) => {
            let n = b.channels;
            out.push(rec(format!("{}.weight", b.name), vec![n], &b.gamma));
            out.push(rec(format!("{}.bias", b.name), vec![n], &b.beta));
            out.push(rec(format!("{}.running_mean", b.name), vec![n], &b.mean));
            out.push(rec(format!("{}.running_var", b.name), vec![n], &b.var));
        }
        _ => {}
    }
    out
}

/// Serializes `model` under `manifest`. The manifest's layer list and
/// parameter total are rewritten from the model so the two cannot disagree.
pub fn write_archive(model: &Model, manifest: &Manifest) -> Result<Vec<u8>> {
    let mut manifest = manifest.clone();
    manifest.layers = model.layers.iter().map(layer_spec).collect();
    manifest.total_parameters = Some(model.parameter_summary().total_parameters);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| ArchiveError::Manifest(e.to_string()))?;
    WeightsArchive {
        manifest: text,
        tensors: model.layers.iter().flat_map(layer_tensors).collect(),
    }
    .to_bytes()
}

struct Tensors {
    by_name: BTreeMap<String, TensorRecord>,
}

impl Tensors {
    fn take(&mut self, name: &str, dims: &[usize]) -> Result<Vec<f32>> {
        let t = self.by_name.remove(name).ok_or_else(|| ArchiveError::Tensor {
            name: name.to_string(),
            reason: "missing".into(),
        })?;
        let got: Vec<usize> = t.dims.iter().map(|&d| d as usize).collect();
        if got != dims {
            return Err(ArchiveError::Tensor {
                name: name.to_string(),
                reason: format!("expected dims {dims:?}, found {got:?}"),
            });
        }
        Ok(t.data)
    }

    fn take_bias(&mut self, name: &str, present: bool, n: usize) -> Result<Option<Vec<f32>>> {
        present.then(|| self.take(&format!("{name}.bias"), &[n])).transpose()
    }
}

/// Builds the model described by the manifest from the archive's tensors.
/// Batchnorm layers are folded into the preceding convolution.
pub fn read_archive(bytes: &[u8]) -> Result<(Model, Manifest)> {
    let archive = WeightsArchive::from_bytes(bytes)?;
    let manifest: Manifest =
        serde_json::from_str(&archive.manifest).map_err(|e| ArchiveError::Manifest(e.to_string()))?;
    let mut tensors = Tensors {
        by_name: archive.tensors.into_iter().map(|t| (t.name.clone(), t)).collect(),
    };
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for spec in &manifest.layers {
        layers.push(match spec.clone() {
            LayerSpec::Conv2d { name, in_ch, out_ch, kernel, stride, padding, bias } => Layer::Conv2d(Conv2d {
                weight: tensors.take(&format!("{name}.weight"), &[out_ch, in_ch, kernel, kernel])?,
                bias: tensors.take_bias(&name, bias, out_ch)?,
                name,
                in_ch,
                out_ch,
                kernel_h: kernel,
                kernel_w: kernel,
                stride,
                padding,
            }),
            LayerSpec::Fc { name, in_features, out_features, bias } => Layer::Fc(Linear {
                weight: tensors.take(&format!("{name}.weight"), &[out_features, in_features])?,
                bias: tensors.take_bias(&name, bias, out_features)?,
                name,
                in_features,
                out_features,
            }),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Maxpool2d { kernel, stride } => Layer::MaxPool2d { kernel, stride },
            LayerSpec::Avgpool2d { kernel, stride } => Layer::AvgPool2d { kernel, stride },
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::ResidualAdd { from } => Layer::ResidualAdd { from },
            LayerSpec::Batchnorm { name, channels, eps } => {
                let n = [channels];
                let bn = BatchNorm {
                    gamma: tensors.take(&format!("{name}.weight"), &n)?,
                    beta: tensors.take(&format!("{name}.bias"), &n)?,
                    mean: tensors.take(&format!("{name}.running_mean"), &n)?,
                    var: tensors.take(&format!("{name}.running_var"), &n)?,
                    name: name.clone(),
                    channels,
                    eps,
                };
                // Bookkeeping counter some exporters include.
                tensors.by_name.remove(&format!("{name}.num_batches_tracked"));
                Layer::BatchNorm(bn)
            }
        });
    }
    if let Some(name) = tensors.by_name.keys().next() {
        return Err(ArchiveError::Tensor {
            name: name.clone(),
            reason: "not referenced by any layer".into(),
        });
    }
    let mut model = Model {
        name: manifest.name.clone(),
        dataset: manifest.dataset.clone(),
        variant: manifest.variant.clone(),
        input_shape: manifest.input_shape.clone(),
        num_classes: manifest.num_classes,
        layers,
    };
    model.validate().map_err(|e| ArchiveError::Manifest(e.to_string()))?;
    if let Some(total) = manifest.total_parameters {
        let counted = model.parameter_summary().total_parameters;
        if total != counted {
            return Err(ArchiveError::Manifest(format!(
                "manifest declares {total} parameters, tensors hold {counted}"
            )));
        }
    }
    model.fold_batchnorm();
    Ok((model, manifest))
}
