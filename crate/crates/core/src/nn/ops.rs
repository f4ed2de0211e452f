//! Dense reference operators. Dot products accumulate in f64.
//! Pooling, activations and batchnorm are also what the accelerator path uses
//! for its electronic stages.

use super::model::{BatchNorm, Conv2d, Linear};
use super::{NnError, Result, Tensor};

/// Direct convolution, no accelerator involvement.
pub fn conv2d(conv: &Conv2d, input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if c != conv.in_ch {
        return Err(NnError::Shape(format!(
            "{}: expects {} channels, got {c}",
            conv.name, conv.in_ch
        )));
    }
    let (oh, ow) = conv.output_hw(h, w)?;
    let x = input.data();
    let (kh, kw, pad, stride) = (conv.kernel_h, conv.kernel_w, conv.padding as isize, conv.stride);
    let mut out = vec![0.0f32; conv.out_ch * oh * ow];
    for o in 0..conv.out_ch {
        let bias = conv.bias.as_ref().map_or(0.0, |b| b[o]);
        let kernel = &conv.weight[o * conv.fan_in()..(o + 1) * conv.fan_in()];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for ci in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += f64::from(kernel[(ci * kh + ky) * kw + kx])
                                * f64::from(x[(ci * h + iy as usize) * w + ix as usize]);
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc as f32 + bias;
            }
        }
    }
    Tensor::new(vec![conv.out_ch, oh, ow], out)
}

/// Unrolls every receptive field into a row of length `in_ch * kh * kw`,
/// matching the flattened kernel layout. Padding positions read as zero.
pub fn im2col(conv: &Conv2d, input: &Tensor) -> Result<(Vec<f32>, usize, usize)> {
    let (c, h, w) = input.dims3()?;
    if c != conv.in_ch {
        return Err(NnError::Shape(format!(
            "{}: expects {} channels, got {c}",
            conv.name, conv.in_ch
        )));
    }
    let (oh, ow) = conv.output_hw(h, w)?;
    let fan_in = conv.fan_in();
    let x = input.data();
    let (kh, kw, pad, stride) = (conv.kernel_h, conv.kernel_w, conv.padding as isize, conv.stride);
    let mut cols = vec![0.0f32; oh * ow * fan_in];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * fan_in..(oy * ow + ox + 1) * fan_in];
            for ci in 0..c {
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        row[(ci * kh + ky) * kw + kx] = x[(ci * h + iy as usize) * w + ix as usize];
                    }
                }
            }
        }
    }
    Ok((cols, oh, ow))
}

pub fn linear(layer: &Linear, input: &Tensor) -> Result<Tensor> {
    if input.len() != layer.in_features || input.shape().len() != 1 {
        return Err(NnError::Shape(format!(
            "{}: expects [{}], got {:?}",
            layer.name,
            layer.in_features,
            input.shape()
        )));
    }
    let x = input.data();
    let out = (0..layer.out_features)
        .map(|o| {
            let row = &layer.weight[o * layer.in_features..(o + 1) * layer.in_features];
            let dot: f64 = row.iter().zip(x).map(|(&w, &a)| f64::from(w) * f64::from(a)).sum();
            dot as f32 + layer.bias.as_ref().map_or(0.0, |b| b[o])
        })
        .collect();
    Tensor::new(vec![layer.out_features], out)
}

pub fn relu(mut input: Tensor) -> Tensor {
    for v in input.data_mut() {
        *v = v.max(0.0);
    }
    input
}

fn pool(input: &Tensor, kernel: usize, stride: usize, max: bool) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if kernel == 0 || stride == 0 || h < kernel || w < kernel {
        return Err(NnError::Shape(format!(
            "pool {kernel}/{stride} does not fit {h}x{w}"
        )));
    }
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = if max { f32::NEG_INFINITY } else { 0.0 };
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let v = x[(ci * h + oy * stride + ky) * w + ox * stride + kx];
                        if max {
                            acc = acc.max(v);
                        } else {
                            acc += v;
                        }
                    }
                }
                out.push(if max { acc } else { acc / (kernel * kernel) as f32 });
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

pub fn max_pool2d(input: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    pool(input, kernel, stride, true)
}

pub fn avg_pool2d(input: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    pool(input, kernel, stride, false)
}

pub fn flatten(input: Tensor) -> Tensor {
    let n = input.len();
    input.reshape(vec![n]).expect("flatten preserves length")
}

pub fn residual_add(mut input: Tensor, other: &Tensor) -> Result<Tensor> {
    if input.shape() != other.shape() {
        return Err(NnError::Shape(format!(
            "residual shapes differ: {:?} vs {:?}",
            input.shape(),
            other.shape()
        )));
    }
    for (a, b) in input.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
    Ok(input)
}

pub fn batchnorm(bn: &BatchNorm, mut input: Tensor) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if c != bn.channels {
        return Err(NnError::Shape(format!(
            "{}: expects {} channels, got {c}",
            bn.name, bn.channels
        )));
    }
    for (ci, plane) in input.data_mut().chunks_mut(h * w).enumerate() {
        let scale = bn.gamma[ci] / (bn.var[ci] + bn.eps).sqrt();
        for v in plane {
            *v = (*v - bn.mean[ci]) * scale + bn.beta[ci];
        }
    }
    Ok(input)
}
