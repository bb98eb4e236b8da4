use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation shape, channel-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) convolution.
    Conv {
        kernel: usize,
        channels: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Relu,
    /// Non-overlapping max pooling; trailing rows/columns that do not fill a
    /// window are dropped.
    #[serde(rename = "maxpool")]
    MaxPool { window: usize },
    Flatten,
    Dense { out_dim: usize },
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Conv {
                kernel,
                channels,
                stride,
            } => {
                if kernel == 0 || stride == 0 || channels == 0 {
                    return Err(Error::InvalidConfig(format!("degenerate layer {self:?}")));
                }
                if kernel > input.height || kernel > input.width {
                    return Err(Error::DimensionMismatch(format!(
                        "{kernel}x{kernel} kernel on a {}x{} input",
                        input.height, input.width
                    )));
                }
                Ok(Shape::new(
                    channels,
                    (input.height - kernel) / stride + 1,
                    (input.width - kernel) / stride + 1,
                ))
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::MaxPool { window } => {
                if window == 0 || window > input.height || window > input.width {
                    return Err(Error::DimensionMismatch(format!(
                        "pool window {window} on a {}x{} input",
                        input.height, input.width
                    )));
                }
                Ok(Shape::new(input.channels, input.height / window, input.width / window))
            }
            LayerSpec::Flatten => Ok(Shape::new(input.len(), 1, 1)),
            LayerSpec::Dense { out_dim } => {
                if out_dim == 0 {
                    return Err(Error::InvalidConfig("dense layer with zero outputs".into()));
                }
                Ok(Shape::new(out_dim, 1, 1))
            }
        }
    }

    /// Number of weights (including biases) the layer owns.
    pub fn param_count(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Conv {
                kernel, channels, ..
            } => channels * input.channels * kernel * kernel + channels,
            LayerSpec::Dense { out_dim } => out_dim * input.len() + out_dim,
            _ => 0,
        }
    }

    /// Fan-in of one output unit, for initialization.
    pub fn fan_in(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Conv { kernel, .. } => input.channels * kernel * kernel,
            LayerSpec::Dense { .. } => input.len(),
            _ => 0,
        }
    }
}

/// Forward pass of one layer. `argmax` receives the winning input index of
/// every pooled output.
pub(crate) fn forward(
    spec: &LayerSpec,
    input_shape: Shape,
    output_shape: Shape,
    weights: &[f64],
    input: &[f64],
    argmax: &mut Vec<usize>,
) -> Vec<f64> {
    match *spec {
        LayerSpec::Conv { kernel, stride, .. } => {
            conv_forward(input_shape, output_shape, kernel, stride, weights, input)
        }
        LayerSpec::Relu => input.iter().map(|&x| x.max(0.0)).collect(),
        LayerSpec::MaxPool { window } => {
            maxpool_forward(input_shape, output_shape, window, input, argmax)
        }
        LayerSpec::Flatten => input.to_vec(),
        LayerSpec::Dense { out_dim } => dense_forward(out_dim, weights, input),
    }
}

/// Backward pass of one layer: accumulates weight gradients into `grad` and
/// returns the gradient with respect to the layer input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    spec: &LayerSpec,
    input_shape: Shape,
    output_shape: Shape,
    weights: &[f64],
    input: &[f64],
    argmax: &[usize],
    grad_out: &[f64],
    grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    match *spec {
        LayerSpec::Conv { kernel, stride, .. } => conv_backward(
            input_shape,
            output_shape,
            kernel,
            stride,
            weights,
            input,
            grad_out,
            grad,
            need_input_grad,
        ),
        LayerSpec::Relu => input
            .iter()
            .zip(grad_out)
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect(),
        LayerSpec::MaxPool { .. } => {
            let mut gin = vec![0.0; input.len()];
            for (&src, &g) in argmax.iter().zip(grad_out) {
                gin[src] += g;
            }
            gin
        }
        LayerSpec::Flatten => grad_out.to_vec(),
        LayerSpec::Dense { out_dim } => {
            dense_backward(out_dim, weights, input, grad_out, grad, need_input_grad)
        }
    }
}

// weights: [out][in][ky][kx] followed by one bias per output channel
fn conv_forward(
    ins: Shape,
    outs: Shape,
    k: usize,
    stride: usize,
    weights: &[f64],
    input: &[f64],
) -> Vec<f64> {
    let (oh, ow) = (outs.height, outs.width);
    let kernel_len = ins.channels * k * k;
    let bias = &weights[outs.channels * kernel_len..];
    let mut out = vec![0.0; outs.len()];
    for o in 0..outs.channels {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(bias[o]);
        for c in 0..ins.channels {
            let src = &input[c * ins.height * ins.width..(c + 1) * ins.height * ins.width];
            let wk = &weights[(o * ins.channels + c) * k * k..(o * ins.channels + c + 1) * k * k];
            for y in 0..oh {
                let row_out = &mut plane[y * ow..(y + 1) * ow];
                for ky in 0..k {
                    let row_in = &src[(y * stride + ky) * ins.width..(y * stride + ky + 1) * ins.width];
                    for kx in 0..k {
                        let w = wk[ky * k + kx];
                        if stride == 1 {
                            for (acc, &v) in row_out.iter_mut().zip(&row_in[kx..kx + ow]) {
                                *acc += w * v;
                            }
                        } else {
                            for (acc, &v) in row_out.iter_mut().zip(row_in[kx..].iter().step_by(stride)) {
                                *acc += w * v;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    ins: Shape,
    outs: Shape,
    k: usize,
    stride: usize,
    weights: &[f64],
    input: &[f64],
    grad_out: &[f64],
    grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let (oh, ow) = (outs.height, outs.width);
    let kernel_len = ins.channels * k * k;
    let plane_in = ins.height * ins.width;
    let mut gin = if need_input_grad {
        vec![0.0; input.len()]
    } else {
        Vec::new()
    };
    let (gw, gb) = grad.split_at_mut(outs.channels * kernel_len);
    let mut acc = vec![0.0; ow];
    for o in 0..outs.channels {
        let go = &grad_out[o * oh * ow..(o + 1) * oh * ow];
        gb[o] += go.iter().sum::<f64>();
        for c in 0..ins.channels {
            let src = &input[c * plane_in..(c + 1) * plane_in];
            let base = (o * ins.channels + c) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    // column-wise partial sums vectorize; the row is summed once at the end
                    acc.fill(0.0);
                    for y in 0..oh {
                        let row_in = &src[(y * stride + ky) * ins.width..];
                        let row_go = &go[y * ow..(y + 1) * ow];
                        if stride == 1 {
                            for ((a, g), v) in acc.iter_mut().zip(row_go).zip(&row_in[kx..kx + ow]) {
                                *a += g * v;
                            }
                        } else {
                            let strided = row_in[kx..].iter().step_by(stride);
                            for ((a, g), v) in acc.iter_mut().zip(row_go).zip(strided) {
                                *a += g * v;
                            }
                        }
                    }
                    gw[base + ky * k + kx] += acc.iter().sum::<f64>();
                }
            }
            if need_input_grad {
                let dst = &mut gin[c * plane_in..(c + 1) * plane_in];
                let wk = &weights[base..base + k * k];
                for y in 0..oh {
                    let row_go = &go[y * ow..(y + 1) * ow];
                    for ky in 0..k {
                        let row_in = &mut dst[(y * stride + ky) * ins.width..];
                        for kx in 0..k {
                            let w = wk[ky * k + kx];
                            if stride == 1 {
                                for (d, g) in row_in[kx..kx + ow].iter_mut().zip(row_go) {
                                    *d += w * g;
                                }
                            } else {
                                for (d, g) in row_in[kx..].iter_mut().step_by(stride).zip(row_go) {
                                    *d += w * g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gin
}

fn maxpool_forward(
    ins: Shape,
    outs: Shape,
    window: usize,
    input: &[f64],
    argmax: &mut Vec<usize>,
) -> Vec<f64> {
    argmax.clear();
    argmax.reserve(outs.len());
    let mut out = Vec::with_capacity(outs.len());
    for c in 0..ins.channels {
        for y in 0..outs.height {
            for x in 0..outs.width {
                // first maximum in row-major window order wins ties
                let mut best = usize::MAX;
                let mut best_val = f64::NEG_INFINITY;
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = (c * ins.height + y * window + dy) * ins.width + x * window + dx;
                        if best == usize::MAX || input[idx] > best_val {
                            best = idx;
                            best_val = input[idx];
                        }
                    }
                }
                argmax.push(best);
                out.push(best_val);
            }
        }
    }
    out
}

// weights: row-major [out][in] followed by one bias per output
fn dense_forward(out_dim: usize, weights: &[f64], input: &[f64]) -> Vec<f64> {
    let n = input.len();
    let bias = &weights[out_dim * n..];
    (0..out_dim)
        .map(|o| {
            let row = &weights[o * n..(o + 1) * n];
            bias[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

fn dense_backward(
    out_dim: usize,
    weights: &[f64],
    input: &[f64],
    grad_out: &[f64],
    grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let n = input.len();
    let (gw, gb) = grad.split_at_mut(out_dim * n);
    let mut gin = if need_input_grad { vec![0.0; n] } else { Vec::new() };
    for o in 0..out_dim {
        let g = grad_out[o];
        gb[o] += g;
        if g == 0.0 {
            continue;
        }
        for (w, x) in gw[o * n..(o + 1) * n].iter_mut().zip(input) {
            *w += g * x;
        }
        if need_input_grad {
            for (gi, w) in gin.iter_mut().zip(&weights[o * n..(o + 1) * n]) {
                *gi += g * w;
            }
        }
    }
    gin
}
