//! JSON model manifest.
//!
//! ```json
//! {
//!   "format": "specshap-model",
//!   "version": 1,
//!   "input_shape": [513, 493],
//!   "num_classes": 2,
//!   "frontend": { "sample_rate": 16000, "duration_s": 4.0, "stft": { ... },
//!                 "normalization": { "mean": [...], "std": [...] } },
//!   "layers": [
//!     { "kind": "avgpool2d", "kernel": [4, 8], "stride": [4, 8] },
//!     { "kind": "conv2d", "in_channels": 1, "out_channels": 4, "kernel": [3, 3],
//!       "stride": [1, 1], "padding": [1, 1], "weights": [...], "bias": [...] },
//!     { "kind": "relu" },
//!     { "kind": "flatten" },
//!     { "kind": "dense", "inputs": 8, "units": 2, "weights": [...], "bias": [...] }
//!   ]
//! }
//! ```
//!
//! Weights are flat row-major arrays. Unknown fields are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, Network, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::signal::{BinNormalization, Spectrogram, StftConfig, Waveform};

const FORMAT: &str = "specshap-model";
const VERSION: u32 = 1;

/// How raw audio becomes the network input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frontend {
    pub sample_rate: u32,
    pub duration_s: f64,
    pub stft: StftConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<BinNormalization>,
}

impl Default for Frontend {
    fn default() -> Self {
        Self {
            sample_rate: crate::signal::SAMPLE_RATE,
            duration_s: 4.0,
            stft: StftConfig::default(),
            normalization: None,
        }
    }
}

impl Frontend {
    /// Fixed-length spectrogram of `waveform` before normalization.
    pub fn raw_spectrogram(&self, waveform: &Waveform) -> Result<Spectrogram> {
        if waveform.sample_rate() != self.sample_rate {
            return Err(Error::invalid(format!(
                "waveform is sampled at {} Hz, model expects {} Hz",
                waveform.sample_rate(),
                self.sample_rate
            )));
        }
        let fixed = crate::signal::fix_duration(waveform, self.duration_s)?;
        crate::signal::stft(&fixed, &self.stft)
    }

    /// Applies the stored normalization, if any, to a raw spectrogram.
    pub fn features(&self, raw: &Spectrogram) -> Result<Spectrogram> {
        match &self.normalization {
            Some(norm) => norm.apply(raw),
            None => Ok(raw.clone()),
        }
    }

    /// The network input for `waveform`.
    pub fn spectrogram(&self, waveform: &Waveform) -> Result<Spectrogram> {
        self.features(&self.raw_spectrogram(waveform)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub network: Network,
    pub frontend: Option<Frontend>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    format: String,
    version: u32,
    input_shape: [usize; 2],
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frontend: Option<Frontend>,
    layers: Vec<RawLayer>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inputs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    units: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    in_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
}

impl RawLayer {
    fn from_layer(layer: &Layer) -> Self {
        let kind = layer.kind().to_string();
        match layer.clone() {
            Layer::Dense {
                inputs,
                units,
                weights,
                bias,
            } => RawLayer {
                kind,
                inputs: Some(inputs),
                units: Some(units),
                weights: Some(weights),
                bias: Some(bias),
                ..Default::default()
            },
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weights,
                bias,
            } => RawLayer {
                kind,
                in_channels: Some(in_channels),
                out_channels: Some(out_channels),
                kernel: Some(kernel),
                stride: Some(stride),
                padding: Some(padding),
                weights: Some(weights),
                bias: Some(bias),
                ..Default::default()
            },
            Layer::MaxPool2d { kernel, stride } | Layer::AvgPool2d { kernel, stride } => RawLayer {
                kind,
                kernel: Some(kernel),
                stride: Some(stride),
                ..Default::default()
            },
            Layer::Relu | Layer::Flatten | Layer::ResidualBegin | Layer::ResidualAdd => RawLayer {
                kind,
                ..Default::default()
            },
        }
    }

    fn into_layer(self, index: usize) -> Result<Layer> {
        let kind = self.kind.clone();
        let fail = |message: String| Error::Layer {
            index,
            kind: kind.clone(),
            message,
        };
        let need =
            |v: Option<usize>, name: &str| v.ok_or_else(|| fail(format!("missing field '{name}'")));
        let need2 = |v: Option<[usize; 2]>, name: &str| {
            v.ok_or_else(|| fail(format!("missing field '{name}'")))
        };
        let present: Vec<&str> = [
            ("inputs", self.inputs.is_some()),
            ("units", self.units.is_some()),
            ("in_channels", self.in_channels.is_some()),
            ("out_channels", self.out_channels.is_some()),
            ("kernel", self.kernel.is_some()),
            ("stride", self.stride.is_some()),
            ("padding", self.padding.is_some()),
            ("weights", self.weights.is_some()),
            ("bias", self.bias.is_some()),
        ]
        .into_iter()
        .filter_map(|(name, set)| set.then_some(name))
        .collect();
        let allow = |allowed: &[&str]| -> Result<()> {
            match present.iter().find(|p| !allowed.contains(p)) {
                Some(extra) => Err(fail(format!("field '{extra}' does not apply to this kind"))),
                None => Ok(()),
            }
        };
        let layer = match self.kind.as_str() {
            "dense" => {
                allow(&["inputs", "units", "weights", "bias"])?;
                Layer::Dense {
                    inputs: need(self.inputs, "inputs")?,
                    units: need(self.units, "units")?,
                    weights: self
                        .weights
                        .ok_or_else(|| fail("missing field 'weights'".into()))?,
                    bias: self
                        .bias
                        .ok_or_else(|| fail("missing field 'bias'".into()))?,
                }
            }
            "conv2d" => {
                allow(&[
                    "in_channels",
                    "out_channels",
                    "kernel",
                    "stride",
                    "padding",
                    "weights",
                    "bias",
                ])?;
                Layer::Conv2d {
                    in_channels: need(self.in_channels, "in_channels")?,
                    out_channels: need(self.out_channels, "out_channels")?,
                    kernel: need2(self.kernel, "kernel")?,
                    stride: need2(self.stride, "stride")?,
                    padding: self.padding.unwrap_or([0, 0]),
                    weights: self
                        .weights
                        .ok_or_else(|| fail("missing field 'weights'".into()))?,
                    bias: self
                        .bias
                        .ok_or_else(|| fail("missing field 'bias'".into()))?,
                }
            }
            "maxpool2d" | "avgpool2d" => {
                allow(&["kernel", "stride"])?;
                let kernel = need2(self.kernel, "kernel")?;
                let stride = need2(self.stride, "stride")?;
                if self.kind == "maxpool2d" {
                    Layer::MaxPool2d { kernel, stride }
                } else {
                    Layer::AvgPool2d { kernel, stride }
                }
            }
            "relu" | "flatten" | "residual_begin" | "residual_add" => {
                allow(&[])?;
                match self.kind.as_str() {
                    "relu" => Layer::Relu,
                    "flatten" => Layer::Flatten,
                    "residual_begin" => Layer::ResidualBegin,
                    _ => Layer::ResidualAdd,
                }
            }
            other => return Err(fail(format!("unknown kind '{other}'"))),
        };
        Ok(layer)
    }
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        let (bins, frames) = self.network.input_shape();
        let raw = RawManifest {
            format: FORMAT.into(),
            version: VERSION,
            input_shape: [bins, frames],
            num_classes: NUM_CLASSES,
            frontend: self.frontend.clone(),
            layers: self
                .network
                .layers()
                .iter()
                .map(RawLayer::from_layer)
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawManifest =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        if raw.format != FORMAT {
            return Err(Error::Manifest(format!(
                "format '{}' is not '{FORMAT}'",
                raw.format
            )));
        }
        if raw.version != VERSION {
            return Err(Error::Manifest(format!(
                "unsupported version {}",
                raw.version
            )));
        }
        if raw.num_classes != NUM_CLASSES {
            return Err(Error::Manifest(format!(
                "num_classes must be {NUM_CLASSES}, found {}",
                raw.num_classes
            )));
        }
        if let Some(frontend) = &raw.frontend {
            frontend.stft.validate()?;
            if frontend.stft.num_bins() != raw.input_shape[0] {
                return Err(Error::Manifest(format!(
                    "frontend produces {} bins but input_shape has {}",
                    frontend.stft.num_bins(),
                    raw.input_shape[0]
                )));
            }
            if let Some(norm) = &frontend.normalization {
                norm.validate()?;
                if norm.bins() != raw.input_shape[0] {
                    return Err(Error::Manifest(format!(
                        "normalization covers {} bins but input_shape has {}",
                        norm.bins(),
                        raw.input_shape[0]
                    )));
                }
            }
        }
        let layers = raw
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.into_layer(i))
            .collect::<Result<Vec<_>>>()?;
        let network = Network::new((raw.input_shape[0], raw.input_shape[1]), layers)?;
        Ok(Self {
            network,
            frontend: raw.frontend,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    ModelFile {
        network: net.clone(),
        frontend: None,
    }
    .save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    Ok(ModelFile::load(path)?.network)
}
