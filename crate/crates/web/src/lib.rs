//! WebAssembly bindings for the static demo page in `www/`.
//!
//! [`Demo::new`] synthesizes a small one-second corpus, fits the per-bin
//! normalization and trains the compact network, all in memory. The page
//! then asks for spectrogram images of fresh utterances, explains one class
//! logit with a chosen estimator and reads time or frequency profiles off
//! the result.
//!
//! Errors cross the boundary as plain strings, which keeps the bindings
//! callable (and testable) on native targets too.

use specshap::analysis::{self, profile, AttributionMap, Axis, Sign};
use specshap::deepshap::{deep_shap, BackgroundSet, DeepShapOptions};
use specshap::model::{train_sgd, Architecture, Frontend, LabeledExample, Network, TrainConfig};
use specshap::render::diverging_rgb;
use specshap::shapley::{
    exact_shapley, explain_with, kernel_shapley, make_grouping, permutation_shapley,
    CoalitionBudget, Method, ValueFunction, DEFAULT_ENUMERATION_CAP,
};
use specshap::signal::{BinNormalization, Spectrogram};
use specshap::synth::{synth_utterance, CorpusSpec, SilenceRange};
use specshap::Class;
use wasm_bindgen::prelude::*;

/// Utterances per class in the training corpus.
pub const TRAIN_PER_CLASS: usize = 16;
pub const DURATION_S: f64 = 1.0;
/// Perm and kernel refuse groupings with more players than this; each
/// player costs a few network evaluations per sample in the browser.
pub const MAX_SAMPLED_FEATURES: usize = 64;

const PERMUTATIONS: usize = 50;
const KERNEL_COALITIONS: usize = 512;

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// The corpus spec the demo trains on: the default band artefact, with
/// silences shortened to suit one-second utterances.
pub fn demo_spec() -> CorpusSpec {
    let silence = SilenceRange {
        lead_s: [0.05, 0.1],
        trail_s: [0.05, 0.1],
    };
    CorpusSpec {
        duration_s: DURATION_S,
        bonafide: silence,
        spoof: silence,
        ..CorpusSpec::default()
    }
}

/// RGBA pixels, row-major from the top-left, highest frequency first.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Image {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl Image {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

impl Image {
    fn from_fn(bins: usize, frames: usize, mut pixel: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut rgba = Vec::with_capacity(bins * frames * 4);
        for m in (0..bins).rev() {
            for n in 0..frames {
                rgba.extend_from_slice(&pixel(m, n));
                rgba.push(255);
            }
        }
        Self {
            width: frames,
            height: bins,
            rgba,
        }
    }
}

/// Grayscale image of a spectrogram, black at its minimum.
pub fn spectrogram_image(spec: &Spectrogram) -> Image {
    let lo = spec.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = spec
        .values()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    Image::from_fn(spec.bins(), spec.frames(), |m, n| {
        let v = (255.0 * (spec.get(m, n) - lo) / span).round() as u8;
        [v, v, v]
    })
}

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Explanation {
    map: AttributionMap,
    base: f64,
    output: f64,
}

#[wasm_bindgen]
impl Explanation {
    /// Logit at the background reference.
    #[wasm_bindgen(getter)]
    pub fn base(&self) -> f64 {
        self.base
    }

    /// Logit at the explained input.
    #[wasm_bindgen(getter)]
    pub fn output(&self) -> f64 {
        self.output
    }

    /// Sum of all attributions; equals `output - base` up to rounding.
    #[wasm_bindgen(getter)]
    pub fn total(&self) -> f64 {
        self.map.total()
    }

    pub fn image(&self) -> Image {
        let scale = self.map.max_abs();
        Image::from_fn(self.map.bins(), self.map.frames(), |m, n| {
            diverging_rgb(self.map.get(m, n), scale)
        })
    }

    /// Attribution averaged over the other axis; `axis` is `time` or `freq`,
    /// `sign` is `both`, `pos` or `neg`.
    pub fn profile(&self, axis: &str, sign: &str) -> Result<Vec<f64>, String> {
        let axis: Axis = axis.parse().map_err(err)?;
        let sign: Sign = sign.parse().map_err(err)?;
        Ok(profile(&self.map, axis, sign).values)
    }

    /// Positions of the profile entries: seconds for `time`, Hz for `freq`.
    pub fn profile_axis(&self, axis: &str) -> Result<Vec<f64>, String> {
        let axis: Axis = axis.parse().map_err(err)?;
        Ok(profile(&self.map, axis, Sign::Both).coords)
    }
}

#[wasm_bindgen]
pub struct Demo {
    frontend: Frontend,
    network: Network,
    background: BackgroundSet,
    accuracy: f64,
    seed: u64,
}

#[wasm_bindgen]
impl Demo {
    /// Trains the compact network on a fresh corpus drawn from `seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, epochs: usize) -> Result<Demo, String> {
        let spec = demo_spec();
        let mut frontend = Frontend {
            duration_s: DURATION_S,
            ..Frontend::default()
        };
        let mut raw = Vec::with_capacity(2 * TRAIN_PER_CLASS);
        for i in 0..TRAIN_PER_CLASS {
            for label in Class::BOTH {
                let utt = synth_utterance(&spec, label, i, u64::from(seed)).map_err(err)?;
                raw.push((frontend.raw_spectrogram(&utt.waveform).map_err(err)?, label));
            }
        }
        let spectrograms: Vec<Spectrogram> = raw.iter().map(|(s, _)| s.clone()).collect();
        let norm = BinNormalization::fit(&spectrograms).map_err(err)?;
        let mut examples = Vec::with_capacity(raw.len());
        let mut bona = Vec::new();
        for (s, label) in &raw {
            let features = norm.apply(s).map_err(err)?;
            if *label == Class::Bonafide {
                bona.push(features.clone());
            }
            examples.push(LabeledExample {
                input: features.into_values(),
                label: label.index(),
            });
        }
        frontend.normalization = Some(norm);
        let (bins, frames) = spectrograms[0].shape();
        let config = TrainConfig {
            epochs,
            seed: u64::from(seed),
            output_l1: 0.5,
            ..TrainConfig::default()
        };
        let init = Architecture::Compact
            .builder(bins, frames)
            .build(config.seed)
            .map_err(err)?;
        let (network, _) = train_sgd(&init, &examples, &config).map_err(err)?;
        let accuracy = specshap::model::accuracy(&network, &examples);
        let background = BackgroundSet::new(bona, Some(Class::Bonafide)).map_err(err)?;
        Ok(Demo {
            frontend,
            network,
            background,
            accuracy,
            seed: config.seed,
        })
    }

    /// Training-set accuracy.
    #[wasm_bindgen(getter)]
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    /// Log-power spectrogram of held-out utterance `index` (from zero).
    pub fn spectrogram(&self, label: &str, index: usize) -> Result<Image, String> {
        Ok(spectrogram_image(&self.raw_input(label, index)?))
    }

    /// The `[bonafide, spoof]` logits of a held-out utterance.
    pub fn logits(&self, label: &str, index: usize) -> Result<Vec<f64>, String> {
        Ok(self
            .network
            .logits(self.input(label, index)?.values())
            .to_vec())
    }

    /// Explains the `class` logit of a held-out utterance against the
    /// bona fide training utterances.
    ///
    /// `method` is `deepshap`, `exact`, `perm` or `kernel`; tiles are
    /// `rows` bins by `cols` frames. DeepSHAP runs per bin and is summed
    /// into tiles; the others treat each tile as one player.
    #[allow(clippy::too_many_arguments)]
    pub fn explain(
        &self,
        label: &str,
        index: usize,
        class: &str,
        method: &str,
        rows: usize,
        cols: usize,
        seed: u32,
    ) -> Result<Explanation, String> {
        let input = self.input(label, index)?;
        let class: Class = class.parse().map_err(err)?;
        let method: Method = method.parse().map_err(err)?;
        let (bins, frames) = self.network.input_shape();
        let grouping = make_grouping(bins, frames, rows, cols).map_err(err)?;
        let d = grouping.len();
        let seed = u64::from(seed);
        let mut attr = match method {
            Method::Deepshap | Method::DeepshapMeanRef => {
                let opts = DeepShapOptions {
                    mean_reference: method == Method::DeepshapMeanRef,
                };
                let per_bin =
                    deep_shap(&self.network, &input, &self.background, class.index(), opts)
                        .map_err(err)?;
                if (rows, cols) == (1, 1) {
                    per_bin
                } else {
                    analysis::pool_to_groups(&per_bin, &grouping).map_err(err)?
                }
            }
            _ => {
                let cap = if method == Method::Exact {
                    DEFAULT_ENUMERATION_CAP
                } else {
                    MAX_SAMPLED_FEATURES
                };
                if d > cap {
                    return Err(format!("{d} tiles are too many for {} in the browser (limit {cap}); use larger tiles", method.name()));
                }
                let vf = ValueFunction::new(
                    &self.network,
                    class.index(),
                    grouping.clone(),
                    self.background.mean(),
                    input.values().to_vec(),
                )
                .map_err(err)?;
                explain_with(&vf, |game| match method {
                    Method::Exact => exact_shapley(game, DEFAULT_ENUMERATION_CAP),
                    Method::Perm => permutation_shapley(game, PERMUTATIONS, seed),
                    _ => kernel_shapley(
                        game,
                        CoalitionBudget::Sampled(KERNEL_COALITIONS.max(2 * d + 2)),
                        seed,
                    ),
                })
                .map_err(err)?
            }
        };
        attr.axes = Some(input.axes());
        let output = self.network.logits(input.values())[class.index()];
        let map = analysis::to_map(&attr, &grouping).map_err(err)?;
        Ok(Explanation {
            map,
            base: attr.base,
            output,
        })
    }
}

impl Demo {
    fn raw_input(&self, label: &str, index: usize) -> Result<Spectrogram, String> {
        let label: Class = label.parse().map_err(err)?;
        // Training used indices 0..TRAIN_PER_CLASS; held-out ones follow.
        let utt = synth_utterance(&demo_spec(), label, TRAIN_PER_CLASS + index, self.seed)
            .map_err(err)?;
        self.frontend.raw_spectrogram(&utt.waveform).map_err(err)
    }

    fn input(&self, label: &str, index: usize) -> Result<Spectrogram, String> {
        let raw = self.raw_input(label, index)?;
        self.frontend.features(&raw).map_err(err)
    }

    pub fn network(&self) -> &Network {
        &self.network
    }
}
