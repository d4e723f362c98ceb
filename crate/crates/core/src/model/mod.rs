//! A small feedforward network runtime: the prediction function that every
//! attribution method explains.
//!
//! Activations are `(channels, height, width)` tensors stored row-major; the
//! network input is a single-channel spectrogram with height = frequency
//! bins and width = frames. The final layer emits two raw logits,
//! index 0 = bona fide, index 1 = spoof.

mod builder;
mod manifest;
mod train;

pub use builder::{Architecture, NetworkBuilder};
pub use manifest::{load_model, save_model, Frontend, ModelFile};
pub use train::{accuracy, predict, softmax, train_sgd, LabeledExample, TrainConfig};

use crate::error::{Error, Result};
use crate::signal::Spectrogram;

pub const NUM_CLASSES: usize = 2;

/// Below this absolute input difference the rescale rule falls back to the
/// gradient at the actual activation.
pub const RESCALE_EPSILON: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
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

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// One network layer. Weight arrays are row-major:
/// dense `[units][inputs]`, conv `[out][in][kh][kw]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// Fully connected; the incoming tensor is read in flattened order.
    Dense {
        inputs: usize,
        units: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Cross-correlation with zero padding.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    MaxPool2d {
        kernel: [usize; 2],
        stride: [usize; 2],
    },
    AvgPool2d {
        kernel: [usize; 2],
        stride: [usize; 2],
    },
    Flatten,
    /// Saves the current activation for the matching `ResidualAdd`.
    ResidualBegin,
    /// Adds the activation saved by the innermost open `ResidualBegin`.
    ResidualAdd,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::AvgPool2d { .. } => "avgpool2d",
            Layer::Flatten => "flatten",
            Layer::ResidualBegin => "residual_begin",
            Layer::ResidualAdd => "residual_add",
        }
    }

    pub(crate) fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Dense { weights, bias, .. } | Layer::Conv2d { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Dense { weights, bias, .. } | Layer::Conv2d { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }
}

fn pooled_len(len: usize, kernel: usize, stride: usize) -> usize {
    (len - kernel) / stride + 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_shape: (usize, usize),
    layers: Vec<Layer>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output.
    shapes: Vec<Shape>,
    /// For each `ResidualAdd`, the index of its `ResidualBegin`.
    skips: Vec<Option<usize>>,
}

impl Network {
    /// Validates that layer shapes compose and ends in exactly two logits.
    pub fn new(input_shape: (usize, usize), layers: Vec<Layer>) -> Result<Self> {
        let (bins, frames) = input_shape;
        if bins == 0 || frames == 0 {
            return Err(Error::invalid("network input shape must be non-empty"));
        }
        let mut shapes = vec![Shape::new(1, bins, frames)];
        let mut skips = vec![None; layers.len()];
        let mut open = Vec::new();
        for (index, layer) in layers.iter().enumerate() {
            let input = *shapes.last().expect("non-empty");
            let fail = |message: String| Error::Layer {
                index,
                kind: layer.kind().to_string(),
                message,
            };
            let output = match layer {
                Layer::Dense {
                    inputs,
                    units,
                    weights,
                    bias,
                } => {
                    if *inputs != input.len() {
                        return Err(fail(format!(
                            "declares {inputs} inputs but receives {input} = {}",
                            input.len()
                        )));
                    }
                    if *units == 0 {
                        return Err(fail("units must be positive".into()));
                    }
                    check_len(weights, inputs * units, "weights").map_err(fail)?;
                    check_len(bias, *units, "bias").map_err(fail)?;
                    Shape::new(*units, 1, 1)
                }
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    weights,
                    bias,
                } => {
                    if *in_channels != input.channels {
                        return Err(fail(format!(
                            "declares {in_channels} input channels but receives {input}"
                        )));
                    }
                    if *out_channels == 0 {
                        return Err(fail("out_channels must be positive".into()));
                    }
                    let h = input.height + 2 * padding[0];
                    let w = input.width + 2 * padding[1];
                    check_window(*kernel, *stride, h, w).map_err(fail)?;
                    check_len(
                        weights,
                        out_channels * in_channels * kernel[0] * kernel[1],
                        "weights",
                    )
                    .map_err(fail)?;
                    check_len(bias, *out_channels, "bias").map_err(fail)?;
                    Shape::new(
                        *out_channels,
                        pooled_len(h, kernel[0], stride[0]),
                        pooled_len(w, kernel[1], stride[1]),
                    )
                }
                Layer::MaxPool2d { kernel, stride } | Layer::AvgPool2d { kernel, stride } => {
                    check_window(*kernel, *stride, input.height, input.width).map_err(fail)?;
                    Shape::new(
                        input.channels,
                        pooled_len(input.height, kernel[0], stride[0]),
                        pooled_len(input.width, kernel[1], stride[1]),
                    )
                }
                Layer::Relu => input,
                Layer::Flatten => Shape::new(input.len(), 1, 1),
                Layer::ResidualBegin => {
                    open.push(index);
                    input
                }
                Layer::ResidualAdd => {
                    let begin = open
                        .pop()
                        .ok_or_else(|| fail("no matching residual_begin".into()))?;
                    let saved = shapes[begin];
                    if saved != input {
                        return Err(fail(format!(
                            "branch output {input} does not match skip input {saved}"
                        )));
                    }
                    skips[index] = Some(begin);
                    input
                }
            };
            shapes.push(output);
        }
        if let Some(&begin) = open.last() {
            return Err(Error::Layer {
                index: begin,
                kind: "residual_begin".into(),
                message: "never closed by residual_add".into(),
            });
        }
        let out = *shapes.last().expect("non-empty");
        if out.len() != NUM_CLASSES {
            return Err(Error::invalid(format!(
                "final layer must emit {NUM_CLASSES} logits, emits {out}"
            )));
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
            skips,
        })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.0 * self.input_shape.1
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Input shape of each layer followed by the output shape.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Errors unless `len` equals `M * N`.
    pub fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_len() {
            return Err(Error::ShapeMismatch {
                expected: format!(
                    "{}x{} input ({} values)",
                    self.input_shape.0,
                    self.input_shape.1,
                    self.input_len()
                ),
                found: format!("{len} values"),
            });
        }
        Ok(())
    }

    fn check_spectrogram(&self, x: &Spectrogram) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} spectrogram", self.input_shape.0, self.input_shape.1),
                found: format!("{}x{}", x.bins(), x.frames()),
            });
        }
        Ok(())
    }

    /// Raw logits `[bona fide, spoof]`.
    pub fn forward(&self, x: &Spectrogram) -> Result<[f64; NUM_CLASSES]> {
        self.check_spectrogram(x)?;
        Ok(self.logits(x.values()))
    }

    /// Logits for a flat frequency-major input; panics on a length mismatch.
    pub fn logits(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let acts = self.trace(x);
        let out = acts.last().expect("non-empty");
        [out[0], out[1]]
    }

    pub fn forward_values(&self, x: &[f64]) -> Result<[f64; NUM_CLASSES]> {
        self.check_input(x.len())?;
        Ok(self.logits(x))
    }

    /// `d logit[class] / d x(m, n)` for every input bin.
    pub fn input_gradient(&self, x: &Spectrogram, class: usize) -> Result<Vec<f64>> {
        self.check_spectrogram(x)?;
        check_class(class)?;
        let acts = self.trace(x.values());
        let grads = self.backprop(&acts, None, one_hot(class), None);
        Ok(grads.into_iter().next().expect("input gradient"))
    }

    /// Every activation: `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub(crate) fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.input_len(), "input length");
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = &acts[i];
            let (in_shape, out_shape) = (self.shapes[i], self.shapes[i + 1]);
            let out = match layer {
                Layer::Dense {
                    inputs,
                    units,
                    weights,
                    bias,
                } => (0..*units)
                    .map(|u| {
                        let row = &weights[u * inputs..(u + 1) * inputs];
                        bias[u] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
                    })
                    .collect(),
                Layer::Conv2d {
                    in_channels,
                    kernel,
                    stride,
                    padding,
                    weights,
                    bias,
                    ..
                } => conv_forward(
                    input,
                    in_shape,
                    out_shape,
                    *in_channels,
                    *kernel,
                    *stride,
                    *padding,
                    weights,
                    bias,
                ),
                Layer::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
                Layer::MaxPool2d { kernel, stride } => {
                    let mut out = vec![0.0; out_shape.len()];
                    for_each_window(in_shape, out_shape, *kernel, *stride, |o, window| {
                        out[o] = window.map(|j| input[j]).fold(f64::NEG_INFINITY, f64::max);
                    });
                    out
                }
                Layer::AvgPool2d { kernel, stride } => {
                    let area = (kernel[0] * kernel[1]) as f64;
                    let mut out = vec![0.0; out_shape.len()];
                    for_each_window(in_shape, out_shape, *kernel, *stride, |o, window| {
                        out[o] = window.map(|j| input[j]).sum::<f64>() / area;
                    });
                    out
                }
                Layer::Flatten | Layer::ResidualBegin => input.clone(),
                Layer::ResidualAdd => {
                    let begin = self.skips[i].expect("validated residual");
                    input.iter().zip(&acts[begin]).map(|(a, b)| a + b).collect()
                }
            };
            acts.push(out);
        }
        acts
    }

    /// Reverse pass from `seed` (the gradient or multiplier at the output).
    ///
    /// With `reference` activations, relu layers use the rescale rule
    /// against them; otherwise every layer uses its gradient. Returns the
    /// multiplier for every activation (`result[i]` pairs with `acts[i]`).
    /// When `params` is given, parameter gradients are accumulated into it.
    pub(crate) fn backprop(
        &self,
        acts: &[Vec<f64>],
        reference: Option<&[Vec<f64>]>,
        seed: Vec<f64>,
        mut params: Option<&mut ParamGrads>,
    ) -> Vec<Vec<f64>> {
        let n = self.layers.len();
        let mut grads = vec![Vec::new(); n + 1];
        grads[n] = seed;
        let mut pending: Vec<Option<Vec<f64>>> = vec![None; n];
        for i in (0..n).rev() {
            let (in_shape, out_shape) = (self.shapes[i], self.shapes[i + 1]);
            let g_out = grads[i + 1].clone();
            let input = &acts[i];
            let g_in = match &self.layers[i] {
                Layer::Dense {
                    inputs,
                    units,
                    weights,
                    ..
                } => {
                    let mut g_in = vec![0.0; *inputs];
                    for u in 0..*units {
                        let g = g_out[u];
                        if g == 0.0 {
                            continue;
                        }
                        let row = &weights[u * inputs..(u + 1) * inputs];
                        for (gi, w) in g_in.iter_mut().zip(row) {
                            *gi += g * w;
                        }
                    }
                    if let Some(p) = params.as_deref_mut() {
                        let (dw, db) = (&mut p.weights[i], &mut p.bias[i]);
                        for u in 0..*units {
                            let g = g_out[u];
                            db[u] += g;
                            for (d, x) in dw[u * inputs..(u + 1) * inputs].iter_mut().zip(input) {
                                *d += g * x;
                            }
                        }
                    }
                    g_in
                }
                Layer::Conv2d {
                    in_channels,
                    kernel,
                    stride,
                    padding,
                    weights,
                    ..
                } => conv_backward(
                    input,
                    &g_out,
                    in_shape,
                    out_shape,
                    *in_channels,
                    *kernel,
                    *stride,
                    *padding,
                    weights,
                    params
                        .as_deref_mut()
                        .map(|p| (&mut p.weights[i], &mut p.bias[i])),
                ),
                Layer::Relu => match reference {
                    None => input
                        .iter()
                        .zip(&g_out)
                        .map(|(&a, &g)| if a > 0.0 { g } else { 0.0 })
                        .collect(),
                    Some(reference) => input
                        .iter()
                        .zip(&reference[i])
                        .zip(&g_out)
                        .map(|((&a, &r), &g)| g * rescale_multiplier(a, r))
                        .collect(),
                },
                Layer::MaxPool2d { kernel, stride } => {
                    let mut g_in = vec![0.0; in_shape.len()];
                    for_each_window(in_shape, out_shape, *kernel, *stride, |o, window| {
                        // Strict comparison keeps the lowest linear index on ties.
                        let mut best = None::<(usize, f64)>;
                        for j in window {
                            if best.is_none_or(|(_, v)| input[j] > v) {
                                best = Some((j, input[j]));
                            }
                        }
                        g_in[best.expect("non-empty window").0] += g_out[o];
                    });
                    g_in
                }
                Layer::AvgPool2d { kernel, stride } => {
                    let area = (kernel[0] * kernel[1]) as f64;
                    let mut g_in = vec![0.0; in_shape.len()];
                    for_each_window(in_shape, out_shape, *kernel, *stride, |o, window| {
                        let g = g_out[o] / area;
                        for j in window {
                            g_in[j] += g;
                        }
                    });
                    g_in
                }
                Layer::Flatten => g_out,
                Layer::ResidualBegin => {
                    let mut g = g_out;
                    if let Some(skip) = pending[i].take() {
                        for (a, b) in g.iter_mut().zip(skip) {
                            *a += b;
                        }
                    }
                    g
                }
                Layer::ResidualAdd => {
                    let begin = self.skips[i].expect("validated residual");
                    pending[begin] = Some(g_out.clone());
                    g_out
                }
            };
            grads[i] = g_in;
        }
        grads
    }
}

/// DeepLIFT rescale multiplier for a relu with input `a` and reference `r`.
pub fn rescale_multiplier(a: f64, r: f64) -> f64 {
    let delta = a - r;
    if delta.abs() < RESCALE_EPSILON {
        if a > 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (a.max(0.0) - r.max(0.0)) / delta
    }
}

/// Parameter gradients, indexed by layer; empty for parameter-free layers.
#[derive(Clone, Debug)]
pub(crate) struct ParamGrads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros(net: &Network) -> Self {
        let (weights, bias) = net
            .layers
            .iter()
            .map(|l| match l.params() {
                Some((w, b)) => (vec![0.0; w.len()], vec![0.0; b.len()]),
                None => (Vec::new(), Vec::new()),
            })
            .unzip();
        Self { weights, bias }
    }

    pub fn clear(&mut self) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            v.fill(0.0);
        }
    }
}

pub(crate) fn one_hot(class: usize) -> Vec<f64> {
    let mut v = vec![0.0; NUM_CLASSES];
    v[class] = 1.0;
    v
}

pub(crate) fn check_class(class: usize) -> Result<()> {
    if class >= NUM_CLASSES {
        return Err(Error::invalid(format!(
            "class index {class} out of range (0..{NUM_CLASSES})"
        )));
    }
    Ok(())
}

fn check_len(values: &[f64], expected: usize, what: &str) -> std::result::Result<(), String> {
    if values.len() != expected {
        return Err(format!(
            "expected {expected} {what}, found {}",
            values.len()
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format!("{what} contain non-finite values"));
    }
    Ok(())
}

fn check_window(
    kernel: [usize; 2],
    stride: [usize; 2],
    h: usize,
    w: usize,
) -> std::result::Result<(), String> {
    if kernel.contains(&0) || stride.contains(&0) {
        return Err(format!(
            "kernel {kernel:?} and stride {stride:?} must be at least 1"
        ));
    }
    if kernel[0] > h || kernel[1] > w {
        return Err(format!("kernel {kernel:?} larger than {h}x{w} input"));
    }
    Ok(())
}

/// Calls `f(output_index, input_indices)` for every pooling window.
fn for_each_window(
    in_shape: Shape,
    out_shape: Shape,
    kernel: [usize; 2],
    stride: [usize; 2],
    mut f: impl FnMut(usize, &mut dyn Iterator<Item = usize>),
) {
    let (ih, iw) = (in_shape.height, in_shape.width);
    for c in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let o = (c * out_shape.height + oy) * out_shape.width + ox;
                let (y0, x0) = (oy * stride[0], ox * stride[1]);
                let mut window = (y0..y0 + kernel[0])
                    .flat_map(move |y| (x0..x0 + kernel[1]).map(move |x| (c * ih + y) * iw + x));
                f(o, &mut window);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    input: &[f64],
    in_shape: Shape,
    out_shape: Shape,
    in_channels: usize,
    kernel: [usize; 2],
    stride: [usize; 2],
    padding: [usize; 2],
    weights: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (ih, iw) = (in_shape.height as isize, in_shape.width as isize);
    let (oh, ow) = (out_shape.height, out_shape.width);
    let [kh, kw] = kernel;
    let mut out = vec![0.0; out_shape.len()];
    for o in 0..out_shape.channels {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(bias[o]);
        for c in 0..in_channels {
            let src =
                &input[c * in_shape.height * in_shape.width..][..in_shape.height * in_shape.width];
            for ky in 0..kh {
                for kx in 0..kw {
                    let w = weights[((o * in_channels + c) * kh + ky) * kw + kx];
                    if w == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let y = (oy * stride[0] + ky) as isize - padding[0] as isize;
                        if y < 0 || y >= ih {
                            continue;
                        }
                        let row = &src[y as usize * iw as usize..][..iw as usize];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let x = (ox * stride[1] + kx) as isize - padding[1] as isize;
                            if x >= 0 && x < iw {
                                *d += w * row[x as usize];
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
    input: &[f64],
    g_out: &[f64],
    in_shape: Shape,
    out_shape: Shape,
    in_channels: usize,
    kernel: [usize; 2],
    stride: [usize; 2],
    padding: [usize; 2],
    weights: &[f64],
    mut params: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
) -> Vec<f64> {
    let (ih, iw) = (in_shape.height as isize, in_shape.width as isize);
    let plane_len = in_shape.height * in_shape.width;
    let (oh, ow) = (out_shape.height, out_shape.width);
    let [kh, kw] = kernel;
    let mut g_in = vec![0.0; in_shape.len()];
    for o in 0..out_shape.channels {
        let g_plane = &g_out[o * oh * ow..(o + 1) * oh * ow];
        if let Some((_, db)) = params.as_mut() {
            db[o] += g_plane.iter().sum::<f64>();
        }
        for c in 0..in_channels {
            let src = &input[c * plane_len..(c + 1) * plane_len];
            let dst = &mut g_in[c * plane_len..(c + 1) * plane_len];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wi = ((o * in_channels + c) * kh + ky) * kw + kx;
                    let w = weights[wi];
                    let mut dw = 0.0;
                    for oy in 0..oh {
                        let y = (oy * stride[0] + ky) as isize - padding[0] as isize;
                        if y < 0 || y >= ih {
                            continue;
                        }
                        let base = y as usize * iw as usize;
                        for ox in 0..ow {
                            let x = (ox * stride[1] + kx) as isize - padding[1] as isize;
                            if x < 0 || x >= iw {
                                continue;
                            }
                            let g = g_plane[oy * ow + ox];
                            dst[base + x as usize] += g * w;
                            dw += g * src[base + x as usize];
                        }
                    }
                    if let Some((dws, _)) = params.as_mut() {
                        dws[wi] += dw;
                    }
                }
            }
        }
    }
    g_in
}
