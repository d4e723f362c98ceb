use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, Network, Shape};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
enum Proto {
    Dense {
        units: usize,
    },
    Conv2d {
        out_channels: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
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
    ResidualBegin,
    ResidualAdd,
}

/// Declares a topology; `build` draws the weights.
///
/// Weights are uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases start
/// at zero. With `zero_head`, a final dense layer starts with zero weights
/// so every class logit is initially constant.
#[derive(Clone, Debug)]
pub struct NetworkBuilder {
    input_shape: (usize, usize),
    protos: Vec<Proto>,
    zero_head: bool,
}

impl NetworkBuilder {
    pub fn new(bins: usize, frames: usize) -> Self {
        Self {
            input_shape: (bins, frames),
            protos: Vec::new(),
            zero_head: false,
        }
    }

    pub fn zero_head(mut self) -> Self {
        self.zero_head = true;
        self
    }

    pub fn dense(mut self, units: usize) -> Self {
        self.protos.push(Proto::Dense { units });
        self
    }

    pub fn conv2d(
        mut self,
        out_channels: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: [usize; 2],
    ) -> Self {
        self.protos.push(Proto::Conv2d {
            out_channels,
            kernel,
            stride,
            padding,
        });
        self
    }

    pub fn relu(mut self) -> Self {
        self.protos.push(Proto::Relu);
        self
    }

    pub fn max_pool(mut self, kernel: [usize; 2], stride: [usize; 2]) -> Self {
        self.protos.push(Proto::MaxPool2d { kernel, stride });
        self
    }

    pub fn avg_pool(mut self, kernel: [usize; 2], stride: [usize; 2]) -> Self {
        self.protos.push(Proto::AvgPool2d { kernel, stride });
        self
    }

    pub fn flatten(mut self) -> Self {
        self.protos.push(Proto::Flatten);
        self
    }

    pub fn residual_begin(mut self) -> Self {
        self.protos.push(Proto::ResidualBegin);
        self
    }

    pub fn residual_add(mut self) -> Self {
        self.protos.push(Proto::ResidualAdd);
        self
    }

    pub fn build(&self, seed: u64) -> Result<Network> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = Shape::new(1, self.input_shape.0, self.input_shape.1);
        let mut layers = Vec::with_capacity(self.protos.len());
        let window = |len: usize, k: usize, s: usize| len.saturating_sub(k) / s.max(1) + 1;
        for (i, proto) in self.protos.iter().enumerate() {
            let layer = match *proto {
                Proto::Dense { units } => {
                    let inputs = shape.len();
                    shape = Shape::new(units, 1, 1);
                    let weights = if self.zero_head && i + 1 == self.protos.len() {
                        vec![0.0; inputs * units]
                    } else {
                        uniform(&mut rng, inputs * units, inputs)
                    };
                    Layer::Dense {
                        inputs,
                        units,
                        weights,
                        bias: vec![0.0; units],
                    }
                }
                Proto::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let fan_in = shape.channels * kernel[0] * kernel[1];
                    let layer = Layer::Conv2d {
                        in_channels: shape.channels,
                        out_channels,
                        kernel,
                        stride,
                        padding,
                        weights: uniform(&mut rng, out_channels * fan_in, fan_in),
                        bias: vec![0.0; out_channels],
                    };
                    shape = Shape::new(
                        out_channels,
                        window(shape.height + 2 * padding[0], kernel[0], stride[0]),
                        window(shape.width + 2 * padding[1], kernel[1], stride[1]),
                    );
                    layer
                }
                Proto::MaxPool2d { kernel, stride } | Proto::AvgPool2d { kernel, stride } => {
                    shape = Shape::new(
                        shape.channels,
                        window(shape.height, kernel[0], stride[0]),
                        window(shape.width, kernel[1], stride[1]),
                    );
                    if matches!(proto, Proto::MaxPool2d { .. }) {
                        Layer::MaxPool2d { kernel, stride }
                    } else {
                        Layer::AvgPool2d { kernel, stride }
                    }
                }
                Proto::Relu => Layer::Relu,
                Proto::Flatten => {
                    shape = Shape::new(shape.len(), 1, 1);
                    Layer::Flatten
                }
                Proto::ResidualBegin => Layer::ResidualBegin,
                Proto::ResidualAdd => Layer::ResidualAdd,
            };
            layers.push(layer);
        }
        Network::new(self.input_shape, layers)
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// Bundled classifier topologies for full-size spectrogram inputs.
///
/// Both pool away time entirely before the head, so the logit depends on
/// how much of each frequency band is present rather than where in the
/// utterance it occurs. They expect per-bin standardized inputs (see
/// [`crate::signal::BinNormalization`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// Downsample, one conv + relu stage, pool over time, linear head.
    Compact,
    /// As `Compact` with an extra padded conv + relu wrapped in a residual skip.
    Residual,
}

impl Architecture {
    pub const ALL: [Architecture; 2] = [Architecture::Compact, Architecture::Residual];

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Compact => "compact",
            Architecture::Residual => "residual",
        }
    }

    pub fn builder(&self, bins: usize, frames: usize) -> NetworkBuilder {
        let pool = [2.min(bins), 8.min(frames)];
        let (h, w) = (bins / pool[0], frames / pool[1]);
        let b = NetworkBuilder::new(bins, frames).avg_pool(pool, pool);
        let b = match self {
            Architecture::Compact => b.conv2d(4, [3, 3], [1, 1], [1, 1]).relu(),
            Architecture::Residual => b
                .conv2d(4, [3, 3], [1, 1], [1, 1])
                .relu()
                .residual_begin()
                .conv2d(4, [3, 3], [1, 1], [1, 1])
                .relu()
                .residual_add(),
        };
        let head = [4.min(h), w];
        b.avg_pool(head, head).flatten().dense(2).zero_head()
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown architecture '{s}' (expected compact or residual)"
                ))
            })
    }
}
