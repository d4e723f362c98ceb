//! File-level building blocks shared by the subcommands and the acceptance
//! suite: training on a corpus directory, loading inputs and backgrounds,
//! and dispatching an explanation to one estimator.

use std::path::Path;

use anyhow::{bail, Context, Result};
use specshap::deepshap::{deep_shap, BackgroundSet, DeepShapOptions};
use specshap::model::{
    accuracy, train_sgd, Architecture, Frontend, LabeledExample, ModelFile, TrainConfig,
};
use specshap::shapley::{
    exact_shapley, explain_with, kernel_shapley, make_grouping, permutation_shapley, Attribution,
    CoalitionBudget, Method, ValueFunction, DEFAULT_ENUMERATION_CAP,
};
use specshap::signal::{load_wav, BinNormalization, Scale, Spectrogram};
use specshap::synth::{corpus_entries, CorpusSpec, CORPUS_SPEC_FILE};
use specshap::{analysis, Class, Error};

/// Largest `D` the kernel estimator accepts; its normal equations are dense
/// `(D - 1) x (D - 1)`.
pub const KERNEL_MAX_FEATURES: usize = 2048;

/// Kernel SHAP enumerates every coalition up to this many features.
pub const KERNEL_FULL_MAX_FEATURES: usize = 12;

pub const DEFAULT_PERMUTATIONS: usize = 200;
pub const DEFAULT_KERNEL_COALITIONS: usize = 2048;

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub architecture: Architecture,
    pub config: TrainConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            architecture: Architecture::Compact,
            config: TrainConfig {
                epochs: 30,
                output_l1: 0.5,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub examples: usize,
    pub accuracy: f64,
    pub final_loss: f64,
}

/// Frontend matching a corpus directory: its recorded duration if
/// `corpus.json` is present, the defaults otherwise. No normalization.
pub fn corpus_frontend(dir: &Path) -> Result<Frontend> {
    let spec_path = dir.join(CORPUS_SPEC_FILE);
    let mut frontend = Frontend::default();
    if spec_path.exists() {
        frontend.duration_s = CorpusSpec::load(&spec_path)?.duration_s;
    }
    Ok(frontend)
}

/// Raw (unnormalized) spectrograms of every corpus utterance with labels,
/// in manifest order.
pub fn corpus_spectrograms(dir: &Path, frontend: &Frontend) -> Result<Vec<(Spectrogram, Class)>> {
    let entries =
        corpus_entries(dir).with_context(|| format!("reading corpus {}", dir.display()))?;
    if entries.is_empty() {
        bail!("corpus {} lists no utterances", dir.display());
    }
    entries
        .into_iter()
        .map(|(path, row)| {
            let wav = load_wav(&path)?;
            Ok((frontend.raw_spectrogram(&wav)?, row.label))
        })
        .collect()
}

/// Fits per-bin normalization on the corpus, builds the chosen architecture
/// from `config.seed` and trains it.
pub fn train_on_corpus(dir: &Path, options: &TrainOptions) -> Result<(ModelFile, TrainSummary)> {
    let mut frontend = corpus_frontend(dir)?;
    let raw = corpus_spectrograms(dir, &frontend)?;
    let spectrograms: Vec<Spectrogram> = raw.iter().map(|(s, _)| s.clone()).collect();
    let norm = BinNormalization::fit(&spectrograms)?;
    let examples = raw
        .iter()
        .map(|(s, label)| {
            Ok(LabeledExample {
                input: norm.apply(s)?.into_values(),
                label: label.index(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    frontend.normalization = Some(norm);
    let (bins, frames) = spectrograms[0].shape();
    let init = options
        .architecture
        .builder(bins, frames)
        .build(options.config.seed)?;
    let (network, losses) = train_sgd(&init, &examples, &options.config)?;
    let summary = TrainSummary {
        examples: examples.len(),
        accuracy: accuracy(&network, &examples),
        final_loss: *losses.last().expect("at least one epoch"),
    };
    Ok((
        ModelFile {
            network,
            frontend: Some(frontend),
        },
        summary,
    ))
}

/// Network input for a WAV file (through the model frontend) or a CSV
/// spectrogram (raw values; the frontend normalization is still applied).
pub fn load_input(model: &ModelFile, path: &Path) -> Result<Spectrogram> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let spec = match (&model.frontend, is_csv) {
        (Some(frontend), false) => frontend.spectrogram(&load_wav(path)?)?,
        (None, false) => bail!(
            "{}: the model has no frontend, so only CSV spectrogram inputs are accepted",
            path.display()
        ),
        (frontend, true) => {
            let axes = frontend
                .as_ref()
                .map(|f| f.stft.axes(f.sample_rate))
                .unwrap_or_default();
            let scale = frontend.as_ref().map_or(Scale::LogPower, |f| f.stft.scale);
            let raw = Spectrogram::read_csv(path, axes, scale)?;
            match frontend {
                Some(f) => f.features(&raw)?,
                None => raw,
            }
        }
    };
    model.network.check_input(spec.values().len())?;
    Ok(spec)
}

/// The first `size` utterances of the background corpus (manifest order)
/// whose label matches `class`, or of any label when `class` is `None`.
pub fn load_background(
    model: &ModelFile,
    dir: &Path,
    class: Option<Class>,
    size: usize,
) -> Result<BackgroundSet> {
    if size == 0 {
        bail!("background size must be at least 1");
    }
    let entries = corpus_entries(dir)
        .with_context(|| format!("reading background corpus {}", dir.display()))?;
    let references = entries
        .iter()
        .filter(|(_, row)| class.is_none_or(|c| row.label == c))
        .take(size)
        .map(|(path, _)| load_input(model, path))
        .collect::<Result<Vec<_>>>()?;
    if references.is_empty() {
        let which = class.map_or("any".to_string(), |c| c.to_string());
        bail!(
            "background corpus {} has no {which} utterances",
            dir.display()
        );
    }
    Ok(BackgroundSet::new(references, class)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExplainOptions {
    /// `Method::Deepshap` or `Method::DeepshapMeanRef` select DeepSHAP.
    pub method: Method,
    /// Tile size `(rows, cols)` in bins and frames.
    pub grouping: (usize, usize),
    /// Permutations (perm) or coalitions (kernel); ignored otherwise.
    pub samples: Option<usize>,
    pub seed: u64,
}

/// Explains one class logit of `model` on `input` against `background`.
///
/// DeepSHAP attributions are computed per bin and then summed into tiles;
/// the other methods treat each tile as one player, absent tiles taking the
/// per-bin background mean.
pub fn explain(
    model: &ModelFile,
    input: &Spectrogram,
    background: &BackgroundSet,
    class: Class,
    options: &ExplainOptions,
) -> Result<Attribution> {
    let net = &model.network;
    let (bins, frames) = net.input_shape();
    let grouping = make_grouping(bins, frames, options.grouping.0, options.grouping.1)?;
    let d = grouping.len();
    let mut attr = match options.method {
        Method::Deepshap | Method::DeepshapMeanRef => {
            if options.samples.is_some() {
                bail!("--samples does not apply to deepshap; use --background-size to choose the reference count");
            }
            let opts = DeepShapOptions {
                mean_reference: options.method == Method::DeepshapMeanRef,
            };
            let per_bin = deep_shap(net, input, background, class.index(), opts)?;
            if options.grouping == (1, 1) {
                per_bin
            } else {
                analysis::pool_to_groups(&per_bin, &grouping)?
            }
        }
        Method::Exact | Method::Perm | Method::Kernel => {
            if options.method == Method::Exact {
                if d > DEFAULT_ENUMERATION_CAP {
                    return Err(Error::EnumerationCap {
                        players: d,
                        cap: DEFAULT_ENUMERATION_CAP,
                    }
                    .into());
                }
                if options.samples.is_some() {
                    bail!("--samples does not apply to exact enumeration");
                }
            }
            if options.method == Method::Kernel && d > KERNEL_MAX_FEATURES {
                bail!(
                    "kernel regression over {d} feature groups exceeds the limit of {KERNEL_MAX_FEATURES}; \
                     use a coarser grouping or the perm or deepshap method"
                );
            }
            let vf = ValueFunction::new(
                net,
                class.index(),
                grouping,
                background.mean(),
                input.values().to_vec(),
            )?;
            explain_with(&vf, |game| match options.method {
                Method::Exact => exact_shapley(game, DEFAULT_ENUMERATION_CAP),
                Method::Perm => permutation_shapley(
                    game,
                    options.samples.unwrap_or(DEFAULT_PERMUTATIONS),
                    options.seed,
                ),
                _ => {
                    let budget = match options.samples {
                        Some(n) => CoalitionBudget::Sampled(n),
                        None if d <= KERNEL_FULL_MAX_FEATURES => CoalitionBudget::Full,
                        None => CoalitionBudget::Sampled(DEFAULT_KERNEL_COALITIONS.max(2 * d + 2)),
                    };
                    kernel_shapley(game, budget, options.seed)
                }
            })?
        }
    };
    attr.axes = Some(input.axes());
    attr.seed = Some(options.seed);
    if attr.output.is_none() {
        attr.output = Some(net.logits(input.values())[class.index()]);
    }
    Ok(attr)
}
