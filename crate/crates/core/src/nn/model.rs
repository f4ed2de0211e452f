use serde::{Deserialize, Serialize};

use super::{NnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    /// `(out_ch, in_ch, kernel_h, kernel_w)`, row-major.
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl Conv2d {
    /// Length of one flattened kernel, i.e. the dot-product length.
    pub fn fan_in(&self) -> usize {
        self.in_ch * self.kernel_h * self.kernel_w
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < self.kernel_h || pw < self.kernel_w || self.stride == 0 {
            return Err(NnError::Shape(format!(
                "{}: kernel {}x{} does not fit padded input {ph}x{pw}",
                self.name, self.kernel_h, self.kernel_w
            )));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    /// `(out_features, in_features)`, row-major.
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub name: String,
    pub channels: usize,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub eps: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Fc(Linear),
    Relu,
    MaxPool2d { kernel: usize, stride: usize },
    AvgPool2d { kernel: usize, stride: usize },
    Flatten,
    /// Adds activation `from` elementwise; activation 0 is the model input
    /// and activation `i + 1` is the output of layer `i`.
    ResidualAdd { from: usize },
    BatchNorm(BatchNorm),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Fc(_) => "fc",
            Layer::Relu => "relu",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::AvgPool2d { .. } => "avgpool2d",
            Layer::Flatten => "flatten",
            Layer::ResidualAdd { .. } => "residual_add",
            Layer::BatchNorm(_) => "batchnorm",
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.weight.len() + c.bias.as_ref().map_or(0, Vec::len),
            Layer::Fc(l) => l.weight.len() + l.bias.as_ref().map_or(0, Vec::len),
            Layer::BatchNorm(b) => b.gamma.len() + b.beta.len(),
            _ => 0,
        }
    }

    /// Parameters that are imprinted on MRs (weights only; biases stay electronic).
    pub fn mapped_weight_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.weight.len(),
            Layer::Fc(l) => l.weight.len(),
            _ => 0,
        }
    }
}

/// A CNN as an ordered layer list.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub dataset: String,
    /// Variant tag such as `original`, `l2` or `l2+n3`.
    pub variant: String,
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    pub layers: Vec<Layer>,
}

/// Parameter totals split the way the accelerator sees them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub conv_layers: usize,
    pub conv_parameters: usize,
    pub fc_layers: usize,
    pub fc_parameters: usize,
    pub total_parameters: usize,
    pub mapped_weights: usize,
}

impl Model {
    pub fn parameter_summary(&self) -> ParameterSummary {
        let mut s = ParameterSummary::default();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(_) => {
                    s.conv_layers += 1;
                    s.conv_parameters += layer.parameter_count();
                }
                Layer::Fc(_) => {
                    s.fc_layers += 1;
                    s.fc_parameters += layer.parameter_count();
                }
                _ => {}
            }
            s.total_parameters += layer.parameter_count();
            s.mapped_weights += layer.mapped_weight_count();
        }
        s
    }

    /// Shapes of every activation, starting with the input.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().unwrap();
            let next = match layer {
                Layer::Conv2d(c) => {
                    let [ch, h, w] = cur[..] else {
                        return Err(NnError::Shape(format!("{}: expects (C, H, W), got {cur:?}", c.name)));
                    };
                    if ch != c.in_ch {
                        return Err(NnError::Shape(format!(
                            "{}: expects {} input channels, got {ch}",
                            c.name, c.in_ch
                        )));
                    }
                    if c.weight.len() != c.out_ch * c.fan_in() {
                        return Err(NnError::Shape(format!("{}: weight length mismatch", c.name)));
                    }
                    if c.bias.as_ref().is_some_and(|b| b.len() != c.out_ch) {
                        return Err(NnError::Shape(format!("{}: bias length mismatch", c.name)));
                    }
                    let (oh, ow) = c.output_hw(h, w)?;
                    vec![c.out_ch, oh, ow]
                }
                Layer::Fc(l) => {
                    let n: usize = cur.iter().product();
                    if cur.len() != 1 || n != l.in_features {
                        return Err(NnError::Shape(format!(
                            "{}: expects [{}], got {cur:?}",
                            l.name, l.in_features
                        )));
                    }
                    if l.weight.len() != l.in_features * l.out_features {
                        return Err(NnError::Shape(format!("{}: weight length mismatch", l.name)));
                    }
                    if l.bias.as_ref().is_some_and(|b| b.len() != l.out_features) {
                        return Err(NnError::Shape(format!("{}: bias length mismatch", l.name)));
                    }
                    vec![l.out_features]
                }
                Layer::Relu => cur.clone(),
                Layer::MaxPool2d { kernel, stride } | Layer::AvgPool2d { kernel, stride } => {
                    let [ch, h, w] = cur[..] else {
                        return Err(NnError::Shape(format!("layer {i}: pooling expects (C, H, W), got {cur:?}")));
                    };
                    if *kernel == 0 || *stride == 0 || h < *kernel || w < *kernel {
                        return Err(NnError::Shape(format!(
                            "layer {i}: pool {kernel}/{stride} does not fit {h}x{w}"
                        )));
                    }
                    vec![ch, (h - kernel) / stride + 1, (w - kernel) / stride + 1]
                }
                Layer::Flatten => vec![cur.iter().product()],
                Layer::ResidualAdd { from } => {
                    let Some(other) = shapes.get(*from) else {
                        return Err(NnError::Shape(format!(
                            "layer {i}: residual source {from} is not an earlier activation"
                        )));
                    };
                    if other != cur {
                        return Err(NnError::Shape(format!(
                            "layer {i}: residual shapes differ, {other:?} vs {cur:?}"
                        )));
                    }
                    cur.clone()
                }
                Layer::BatchNorm(b) => {
                    if cur.first() != Some(&b.channels) || cur.len() != 3 {
                        return Err(NnError::Shape(format!(
                            "{}: expects {} channels, got {cur:?}",
                            b.name, b.channels
                        )));
                    }
                    cur.clone()
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(NnError::Shape("model has no layers".into()));
        }
        let shapes = self.activation_shapes()?;
        let out = shapes.last().unwrap();
        if out.iter().product::<usize>() != self.num_classes {
            return Err(NnError::Shape(format!(
                "model output {out:?} does not match {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Folds every batchnorm that directly follows a convolution into that
    /// convolution's weights and bias, so faults hit the folded values once.
    pub fn fold_batchnorm(&mut self) {
        let mut out: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for layer in self.layers.drain(..) {
            if let Layer::BatchNorm(bn) = &layer {
                if let Some(Layer::Conv2d(conv)) = out.last_mut() {
                    if conv.out_ch == bn.channels {
                        let per = conv.fan_in();
                        let bias = conv.bias.get_or_insert_with(|| vec![0.0; bn.channels]);
                        for o in 0..bn.channels {
                            let scale = bn.gamma[o] / (bn.var[o] + bn.eps).sqrt();
                            for w in &mut conv.weight[o * per..(o + 1) * per] {
                                *w *= scale;
                            }
                            bias[o] = (bias[o] - bn.mean[o]) * scale + bn.beta[o];
                        }
                        continue;
                    }
                }
            }
            out.push(layer);
        }
        self.layers = out;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model {
        Model {
            name: "tiny".into(),
            dataset: "synthetic".into(),
            variant: "original".into(),
            input_shape: vec![1, 6, 6],
            num_classes: 3,
            layers: vec![
                Layer::Conv2d(Conv2d {
                    name: "c".into(),
                    in_ch: 1,
                    out_ch: 2,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 0,
                    weight: vec![0.1; 18],
                    bias: Some(vec![0.0; 2]),
                }),
                Layer::Relu,
                Layer::MaxPool2d { kernel: 2, stride: 2 },
                Layer::Flatten,
                Layer::Fc(Linear {
                    name: "f".into(),
                    in_features: 8,
                    out_features: 3,
                    weight: vec![0.2; 24],
                    bias: None,
                }),
            ],
        }
    }

    #[test]
    fn shapes_chain() {
        let m = tiny();
        let shapes = m.activation_shapes().unwrap();
        assert_eq!(shapes[1], vec![2, 4, 4]);
        assert_eq!(shapes[3], vec![2, 2, 2]);
        assert_eq!(shapes[5], vec![3]);
        m.validate().unwrap();
        let s = m.parameter_summary();
        assert_eq!((s.conv_parameters, s.fc_parameters, s.mapped_weights), (20, 24, 42));
    }

    #[test]
    fn broken_chain_is_reported() {
        let mut m = tiny();
        if let Layer::Fc(l) = &mut m.layers[4] {
            l.in_features = 9;
            l.weight = vec![0.0; 27];
        }
        assert!(matches!(m.validate(), Err(NnError::Shape(_))));
        m.layers.clear();
        assert!(m.validate().is_err());
    }

    #[test]
    fn batchnorm_folds_into_conv() {
        let mut m = tiny();
        m.layers.insert(
            1,
            Layer::BatchNorm(BatchNorm {
                name: "bn".into(),
                channels: 2,
                gamma: vec![2.0, 1.0],
                beta: vec![0.5, 0.0],
                mean: vec![1.0, 0.0],
                var: vec![1.0 - 1e-5, 4.0 - 1e-5],
                eps: 1e-5,
            }),
        );
        m.fold_batchnorm();
        assert_eq!(m.layers.len(), 5);
        let Layer::Conv2d(c) = &m.layers[0] else { panic!() };
        assert!((c.weight[0] - 0.2).abs() < 1e-6);
        assert!((c.weight[9] - 0.05).abs() < 1e-6);
        let b = c.bias.as_ref().unwrap();
        assert!((b[0] - (-2.0 + 0.5)).abs() < 1e-6);
        assert!(b[1].abs() < 1e-6);
    }
}
