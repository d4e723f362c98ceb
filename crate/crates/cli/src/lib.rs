//! The `specshap` command-line driver.
//!
//! Six subcommands, each reading and writing files only:
//! `gen-corpus`, `train`, `explain`, `aggregate`, `render` and `compare`.
//! [`run`] parses an argument vector and executes one of them; the binary
//! turns an error into a single stderr line and a non-zero exit status.

pub mod pipeline;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use specshap::analysis::{compare, profile, AttributionMap, Axis, Sign};
use specshap::deepshap::DEFAULT_BACKGROUND_SIZE;
use specshap::model::{Architecture, ModelFile, TrainConfig};
use specshap::render::render_heatmap;
use specshap::shapley::{Attribution, Method};
use specshap::synth::{generate_corpus, CorpusSpec};
use specshap::Class;

use crate::pipeline::{ExplainOptions, TrainOptions};

#[derive(Debug, Parser)]
#[command(
    name = "specshap",
    version,
    about = "Shapley-value attribution for spectrogram classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a labelled corpus of WAV files with a manifest.
    GenCorpus(GenCorpusArgs),
    /// Train a classifier on a corpus directory.
    Train(TrainArgs),
    /// Attribute a model's logit on one input to spectrogram regions.
    Explain(ExplainArgs),
    /// Reduce an attribution to a time or frequency profile (CSV).
    Aggregate(AggregateArgs),
    /// Render an attribution as a PPM heatmap.
    Render(RenderArgs),
    /// Compare two attributions of the same input.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    /// Corpus spec JSON; the built-in band-artefact spec when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Utterances per class.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output model manifest.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// Seeds both weight initialization and minibatch shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ArchChoice::Compact)]
    arch: ArchChoice,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// L1 penalty on the output layer's weights.
    #[arg(long, default_value_t = 0.5)]
    output_l1: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// WAV file, or a CSV spectrogram (one row per bin).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodChoice::Deepshap)]
    method: MethodChoice,
    /// Tile size in bins x frames, e.g. `1x1` or `129x124`.
    #[arg(long, default_value = "1x1", value_parser = parse_grouping)]
    grouping: (usize, usize),
    #[arg(long, value_enum, default_value_t = ClassChoice::Both)]
    class: ClassChoice,
    /// Corpus directory supplying background references.
    #[arg(long)]
    background: PathBuf,
    /// Label of the background utterances to use.
    #[arg(long, value_enum, default_value_t = BackgroundChoice::Bonafide)]
    background_class: BackgroundChoice,
    /// Number of background utterances (manifest order).
    #[arg(long, default_value_t = DEFAULT_BACKGROUND_SIZE)]
    background_size: usize,
    /// Permutations (perm) or sampled coalitions (kernel).
    #[arg(long)]
    samples: Option<usize>,
    /// Explain against the mean background reference (deepshap only).
    #[arg(long)]
    mean_ref: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; with `--class both` the class name is inserted before
    /// the extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    #[arg(long)]
    attr: PathBuf,
    #[arg(long, value_parser = parse_via_fromstr::<Axis>)]
    axis: Axis,
    #[arg(long, default_value = "both", value_parser = parse_via_fromstr::<Sign>)]
    sign: Sign,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    attr: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    attr_a: PathBuf,
    #[arg(long)]
    attr_b: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArchChoice {
    Compact,
    Residual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodChoice {
    Exact,
    Perm,
    Kernel,
    Deepshap,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ClassChoice {
    Bonafide,
    Spoof,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackgroundChoice {
    Bonafide,
    Spoof,
    All,
}

fn parse_grouping(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grouping '{s}' is not of the form RxC"))?;
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match (parse(r), parse(c)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(format!("grouping '{s}' needs two positive integers")),
    }
}

fn parse_via_fromstr<T: std::str::FromStr<Err = specshap::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: specshap::Error| e.to_string())
}

/// Formats an error chain on one line.
pub fn one_line(err: &anyhow::Error) -> String {
    format!("{err:#}")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            bail!("{}", first.trim_start_matches("error: "));
        }
    };
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Train(a) => train(a),
        Command::Explain(a) => explain(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Render(a) => render(a),
        Command::Compare(a) => compare_cmd(a),
    }
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => CorpusSpec::load(path)?,
        None => CorpusSpec::default(),
    };
    let rows = generate_corpus(&spec, a.n, &a.out, a.seed)?;
    println!("wrote {} utterances to {}", rows.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let options = TrainOptions {
        architecture: match a.arch {
            ArchChoice::Compact => Architecture::Compact,
            ArchChoice::Residual => Architecture::Residual,
        },
        config: TrainConfig {
            epochs: a.epochs,
            learning_rate: a.lr,
            batch_size: a.batch_size,
            seed: a.seed,
            momentum: a.momentum,
            weight_decay: a.weight_decay,
            output_l1: a.output_l1,
            ..TrainConfig::default()
        },
    };
    let (model, summary) = pipeline::train_on_corpus(&a.corpus, &options)?;
    model.save(&a.model)?;
    println!(
        "trained {} on {} utterances: accuracy {:.4}, final loss {:.6}",
        options.architecture.name(),
        summary.examples,
        summary.accuracy,
        summary.final_loss
    );
    Ok(())
}

/// `out` with `.{class}` inserted before the extension.
pub fn class_output_path(out: &Path, class: Class) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.{class}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{class}"),
    };
    out.with_file_name(name)
}

fn explain(a: ExplainArgs) -> Result<()> {
    let method = match (a.method, a.mean_ref) {
        (MethodChoice::Deepshap, false) => Method::Deepshap,
        (MethodChoice::Deepshap, true) => Method::DeepshapMeanRef,
        (_, true) => bail!("--mean-ref applies to the deepshap method only"),
        (MethodChoice::Exact, _) => Method::Exact,
        (MethodChoice::Perm, _) => Method::Perm,
        (MethodChoice::Kernel, _) => Method::Kernel,
    };
    let model = ModelFile::load(&a.model)?;
    let input = pipeline::load_input(&model, &a.input)?;
    let bg_class = match a.background_class {
        BackgroundChoice::Bonafide => Some(Class::Bonafide),
        BackgroundChoice::Spoof => Some(Class::Spoof),
        BackgroundChoice::All => None,
    };
    let background = pipeline::load_background(&model, &a.background, bg_class, a.background_size)?;
    let options = ExplainOptions {
        method,
        grouping: a.grouping,
        samples: a.samples,
        seed: a.seed,
    };
    let targets: Vec<(Class, PathBuf)> = match a.class {
        ClassChoice::Bonafide => vec![(Class::Bonafide, a.out.clone())],
        ClassChoice::Spoof => vec![(Class::Spoof, a.out.clone())],
        ClassChoice::Both => Class::BOTH
            .iter()
            .map(|&c| (c, class_output_path(&a.out, c)))
            .collect(),
    };
    for (class, path) in targets {
        let attr = pipeline::explain(&model, &input, &background, class, &options)?;
        attr.save(&path)?;
        println!("wrote {class} attribution to {}", path.display());
    }
    Ok(())
}

fn load_map(path: &Path) -> Result<AttributionMap> {
    let attr = Attribution::load(path)?;
    AttributionMap::from_attribution(&attr).with_context(|| format!("{}", path.display()))
}

fn aggregate(a: AggregateArgs) -> Result<()> {
    let map = load_map(&a.attr)?;
    profile(&map, a.axis, a.sign).write_csv(&a.out)?;
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    render_heatmap(&load_map(&a.attr)?, &a.out)?;
    Ok(())
}

fn compare_cmd(a: CompareArgs) -> Result<()> {
    let report = compare(&load_map(&a.attr_a)?, &load_map(&a.attr_b)?)?;
    let path = &a.out;
    std::fs::write(path, report.to_json()? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
