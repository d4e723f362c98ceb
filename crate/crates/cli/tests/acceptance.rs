//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs as a plain binary (`harness = false`) so the lines
//! always reach the test log.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specshap::analysis::{
    band_mass, frame_mass, noisiness, pearson, profile, AttributionMap, Axis, CompareReport, Sign,
};
use specshap::deepshap::{deep_shap, deep_shap_values, BackgroundSet, DeepShapOptions};
use specshap::model::{Layer, ModelFile, Network, NetworkBuilder};
use specshap::shapley::{
    exact_shapley, kernel_shapley, make_grouping, permutation_shapley, Attribution,
    CoalitionBudget, CoalitionGame, FeatureMask, TableGame, ValueFunction, DEFAULT_ENUMERATION_CAP,
};
use specshap::signal::{stft, Axes, Scale, Spectrogram, StftConfig, Waveform, SAMPLE_RATE};
use specshap::synth::{corpus_entries, generate_corpus, CorpusSpec, SpoofVariant};
use specshap::Class;
use specshap_cli::pipeline::{self, TrainOptions};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_values(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn spectrogram(shape: (usize, usize), values: Vec<f64>) -> Spectrogram {
    Spectrogram::new(shape.0, shape.1, values, Axes::default(), Scale::LogPower).unwrap()
}

/// Replaces every bias with a seeded random value so nets are not
/// zero-biased at the origin.
fn with_random_biases(net: Network, seed: u64) -> Network {
    let mut r = rng(seed ^ 0xb1a5);
    let mut layers = net.layers().to_vec();
    for layer in &mut layers {
        if let Layer::Dense { bias, .. } | Layer::Conv2d { bias, .. } = layer {
            bias.iter_mut().for_each(|b| *b = r.random_range(-0.5..0.5));
        }
    }
    Network::new(net.input_shape(), layers).unwrap()
}

fn table_game(players: usize, f: impl Fn(u64) -> f64) -> TableGame {
    TableGame::new(players, (0..1u64 << players).map(f).collect()).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for players in 2..=6usize {
        for seed in 0..10u64 {
            let mut r = rng(seed * 31 + players as u64);
            let table: Vec<f64> = (0..1u64 << players)
                .map(|_| r.random_range(-5.0..5.0))
                .collect();
            let v = table_game(players, |b| table[b as usize]);
            let w_table: Vec<f64> = (0..1u64 << players)
                .map(|_| r.random_range(-5.0..5.0))
                .collect();
            let w = table_game(players, |b| w_table[b as usize]);
            let phi_v = exact_shapley(&v, DEFAULT_ENUMERATION_CAP)
                .map_err(|e| e.to_string())?
                .values;
            let phi_w = exact_shapley(&w, DEFAULT_ENUMERATION_CAP)
                .map_err(|e| e.to_string())?
                .values;

            // Efficiency.
            let full = table[(1 << players) - 1];
            let delta = full - table[0];
            let sum: f64 = phi_v.iter().sum();
            ensure((sum - delta).abs() <= 1e-9 * delta.abs().max(1.0), || {
                format!("efficiency D={players} seed {seed}: sum {sum} vs {delta}")
            })?;

            // Linearity: phi(a v + b w) = a phi(v) + b phi(w).
            let (a, b) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
            let mix = table_game(players, |bits| {
                a * table[bits as usize] + b * w_table[bits as usize]
            });
            let phi_mix = exact_shapley(&mix, DEFAULT_ENUMERATION_CAP)
                .map_err(|e| e.to_string())?
                .values;
            let expected: Vec<f64> = phi_v
                .iter()
                .zip(&phi_w)
                .map(|(x, y)| a * x + b * y)
                .collect();
            ensure(max_abs_diff(&phi_mix, &expected) <= 1e-9, || {
                format!("linearity D={players} seed {seed}")
            })?;

            // Symmetry: players 0 and 1 enter only through how many of them are present.
            let sym = table_game(players, |bits| {
                let pair = (bits & 1) + ((bits >> 1) & 1);
                let rest = (bits >> 2) as usize;
                table[(rest << 2) | [0, 1, 3][pair as usize]]
            });
            let phi = exact_shapley(&sym, DEFAULT_ENUMERATION_CAP)
                .map_err(|e| e.to_string())?
                .values;
            ensure((phi[0] - phi[1]).abs() <= 1e-9, || {
                format!("symmetry D={players} seed {seed}: {} vs {}", phi[0], phi[1])
            })?;

            // Dummy: the last player never changes the value.
            let last = 1u64 << (players - 1);
            let dummy = table_game(players, |bits| table[(bits & !last) as usize]);
            let phi = exact_shapley(&dummy, DEFAULT_ENUMERATION_CAP)
                .map_err(|e| e.to_string())?
                .values;
            ensure(phi[players - 1].abs() <= 1e-12, || {
                format!("dummy D={players} seed {seed}: {}", phi[players - 1])
            })?;
            checked += 1;
        }
    }
    within(start.elapsed(), 10)?;
    Ok(format!(
        "{checked} games, D = 2..6, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

/// Small random nets over a `rows x cols` input grid.
fn random_net(shape: (usize, usize), seed: u64) -> Network {
    let b = NetworkBuilder::new(shape.0, shape.1);
    let b = match seed % 3 {
        0 => b.dense(4).relu().dense(2),
        1 => b.conv2d(2, [2, 2], [1, 1], [0, 0]).relu().dense(2),
        _ => b
            .conv2d(3, [2, 2], [1, 1], [1, 1])
            .relu()
            .avg_pool([2, 2], [2, 2])
            .flatten()
            .dense(2),
    };
    with_random_biases(b.build(seed).unwrap(), seed)
}

fn value_function(net: &Network, tile: (usize, usize), seed: u64) -> ValueFunction<'_> {
    let (bins, frames) = net.input_shape();
    let grouping = make_grouping(bins, frames, tile.0, tile.1).unwrap();
    let n = bins * frames;
    ValueFunction::new(
        net,
        (seed % 2) as usize,
        grouping,
        random_values(n, seed + 500),
        random_values(n, seed + 900),
    )
    .unwrap()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let net = random_net((4, 8), seed);
        let vf = value_function(&net, (2, 2), seed);
        ensure(vf.num_players() == 8, || {
            format!("D = {}", vf.num_players())
        })?;
        let exact = exact_shapley(&vf, DEFAULT_ENUMERATION_CAP).map_err(|e| e.to_string())?;
        let kernel = kernel_shapley(&vf, CoalitionBudget::Full, seed).map_err(|e| e.to_string())?;
        let err = max_abs_diff(&exact.values, &kernel.values);
        worst = worst.max(err);
        ensure(err <= 1e-6, || {
            format!("seed {seed}: max |kernel - exact| = {err:e}")
        })?;
    }
    within(start.elapsed(), 60)?;
    Ok(format!(
        "10 nets, D = 8, max error {worst:.1e}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let net = random_net((2, 10), seed);
        let vf = value_function(&net, (1, 2), seed);
        ensure(vf.num_players() == 10, || {
            format!("D = {}", vf.num_players())
        })?;
        let values: Vec<f64> = (0..1u64 << 10)
            .map(|b| vf.value(&FeatureMask::from_bits(b, 10)))
            .collect();
        let range = values.iter().cloned().fold(f64::MIN, f64::max)
            - values.iter().cloned().fold(f64::MAX, f64::min);
        let exact = exact_shapley(&vf, DEFAULT_ENUMERATION_CAP).map_err(|e| e.to_string())?;
        let perm = permutation_shapley(&vf, 5000, seed).map_err(|e| e.to_string())?;
        let rel = max_abs_diff(&exact.values, &perm.values) / range;
        worst = worst.max(rel);
        ensure(rel <= 0.02, || {
            format!("seed {seed}: max error {:.2}% of range", rel * 100.0)
        })?;
    }
    within(start.elapsed(), 120)?;
    Ok(format!(
        "10 seeds, D = 10, worst error {:.2}% of range, {:.2} s",
        worst * 100.0,
        start.elapsed().as_secs_f64()
    ))
}

fn maxpool_free_net(seed: u64) -> Network {
    let net = match seed % 5 {
        0 => NetworkBuilder::new(4, 4).dense(2),
        1 => NetworkBuilder::new(4, 4)
            .dense(6)
            .relu()
            .dense(3)
            .relu()
            .dense(2),
        2 => NetworkBuilder::new(6, 6)
            .conv2d(3, [3, 3], [1, 1], [1, 1])
            .relu()
            .avg_pool([2, 2], [2, 2])
            .dense(2),
        3 => NetworkBuilder::new(6, 8)
            .conv2d(2, [3, 3], [1, 1], [1, 1])
            .relu()
            .residual_begin()
            .conv2d(2, [3, 3], [1, 1], [1, 1])
            .relu()
            .residual_add()
            .avg_pool([2, 4], [2, 4])
            .flatten()
            .dense(2),
        _ => NetworkBuilder::new(8, 8)
            .avg_pool([2, 2], [2, 2])
            .conv2d(4, [2, 2], [2, 2], [0, 0])
            .relu()
            .dense(2),
    };
    with_random_biases(net.build(seed).unwrap(), seed)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for seed in 0..20 {
        let net = maxpool_free_net(seed);
        let n = net.input_len();
        let x = random_values(n, seed + 10);
        for r in 0..5 {
            let reference = random_values(n, seed * 100 + r);
            let bg = BackgroundSet::from_values(net.input_shape(), vec![reference], None).unwrap();
            for class in 0..2 {
                let attr = deep_shap_values(&net, &x, &bg, class, DeepShapOptions::default())
                    .map_err(|e| e.to_string())?;
                let err = (attr.base + attr.total() - net.logits(&x)[class]).abs();
                worst = worst.max(err);
                ensure(err <= 1e-4, || {
                    format!("seed {seed} reference {r} class {class}: error {err:e}")
                })?;
                cases += 1;
            }
        }
    }
    within(start.elapsed(), 60)?;
    Ok(format!(
        "{cases} net/reference/class cases, worst |base + sum - f(x)| {worst:.1e}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let shape = (3, 4);
        let net = with_random_biases(
            NetworkBuilder::new(shape.0, shape.1)
                .dense(2)
                .build(seed)
                .unwrap(),
            seed,
        );
        let Layer::Dense {
            weights, inputs, ..
        } = &net.layers()[0]
        else {
            return Err("expected a dense layer".into());
        };
        let x = random_values(12, seed + 1);
        let refs: Vec<Vec<f64>> = (0..5)
            .map(|i| random_values(12, seed * 10 + 100 + i))
            .collect();
        let bg = BackgroundSet::from_values(shape, refs, None).unwrap();
        let mean = bg.mean();
        for class in 0..2 {
            let closed: Vec<f64> = (0..12)
                .map(|j| weights[class * inputs + j] * (x[j] - mean[j]))
                .collect();
            let deep = deep_shap(
                &net,
                &spectrogram(shape, x.clone()),
                &bg,
                class,
                DeepShapOptions::default(),
            )
            .map_err(|e| e.to_string())?;
            let vf = ValueFunction::new(
                &net,
                class,
                make_grouping(3, 4, 1, 1).unwrap(),
                mean.clone(),
                x.clone(),
            )
            .unwrap();
            let exact = exact_shapley(&vf, DEFAULT_ENUMERATION_CAP).map_err(|e| e.to_string())?;
            let err = max_abs_diff(&deep.values, &closed).max(max_abs_diff(&exact.values, &closed));
            worst = worst.max(err);
            ensure(err <= 1e-6, || {
                format!("seed {seed} class {class}: error {err:e}")
            })?;
        }
    }
    Ok(format!(
        "10 linear models, DeepSHAP = exact = w(x - mean), worst {worst:.1e}"
    ))
}

fn gradient_net(seed: u64) -> Network {
    let net = match seed % 4 {
        0 => NetworkBuilder::new(4, 4).dense(3).relu().dense(2),
        1 => NetworkBuilder::new(5, 5)
            .conv2d(2, [3, 3], [1, 1], [0, 0])
            .relu()
            .dense(2),
        2 => NetworkBuilder::new(4, 6)
            .conv2d(2, [2, 2], [1, 1], [0, 0])
            .relu()
            .avg_pool([3, 5], [1, 1])
            .dense(2),
        _ => NetworkBuilder::new(4, 4)
            .max_pool([2, 2], [2, 2])
            .dense(3)
            .relu()
            .dense(2),
    };
    with_random_biases(net.build(seed).unwrap(), seed)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let net = gradient_net(seed);
        ensure(net.num_params() <= 64, || {
            format!("seed {seed}: {} parameters", net.num_params())
        })?;
        let x = random_values(net.input_len(), seed + 77);
        for class in 0..2 {
            let grad = net
                .input_gradient(&spectrogram(net.input_shape(), x.clone()), class)
                .map_err(|e| e.to_string())?;
            let h = 1e-5;
            let fd: Vec<f64> = (0..x.len())
                .map(|i| {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[i] += h;
                    xm[i] -= h;
                    (net.logits(&xp)[class] - net.logits(&xm)[class]) / (2.0 * h)
                })
                .collect();
            let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            let err = max_abs_diff(&grad, &fd) / scale;
            worst = worst.max(err);
            ensure(err <= 1e-3, || {
                format!("seed {seed} class {class}: relative error {err:e}")
            })?;
        }
    }
    within(start.elapsed(), 60)?;
    Ok(format!("20 nets, worst relative error {worst:.1e}"))
}

fn criterion_7() -> Outcome {
    let cfg = StftConfig::default();
    let sr = f64::from(SAMPLE_RATE);
    for (seconds, frames) in [(4.0, 493), (6.0, 743)] {
        let n = (seconds * sr) as usize;
        let w = Waveform::new(vec![0.0; n], SAMPLE_RATE).unwrap();
        let s = stft(&w, &cfg).map_err(|e| e.to_string())?;
        ensure(s.shape() == (513, frames), || {
            format!("{seconds} s: shape {:?}", s.shape())
        })?;
    }
    for k in [8usize, 38, 100, 257, 500] {
        let f = k as f64 * sr / 1024.0;
        let samples: Vec<f64> = (0..16_000)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * f * i as f64 / sr).sin())
            .collect();
        let s =
            stft(&Waveform::new(samples, SAMPLE_RATE).unwrap(), &cfg).map_err(|e| e.to_string())?;
        for frame in 0..s.frames() {
            let peak = (0..s.bins())
                .max_by(|&a, &b| s.get(a, frame).total_cmp(&s.get(b, frame)))
                .unwrap();
            ensure(peak == k, || {
                format!("{f} Hz frame {frame}: peak bin {peak}, expected {k}")
            })?;
        }
    }
    Ok("513x493 (4 s), 513x743 (6 s), 5 sinusoids peak at their bin in every frame".into())
}

struct Trained {
    model: ModelFile,
    train_dir: tempfile::TempDir,
    test_dir: tempfile::TempDir,
    elapsed: Duration,
}

fn train_on(spec: &CorpusSpec, options: &TrainOptions) -> Result<Trained, String> {
    let train_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let test_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate_corpus(spec, 40, train_dir.path(), 1).map_err(|e| e.to_string())?;
    generate_corpus(spec, 20, test_dir.path(), 2).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let (model, _) =
        pipeline::train_on_corpus(train_dir.path(), options).map_err(|e| format!("{e:#}"))?;
    Ok(Trained {
        model,
        train_dir,
        test_dir,
        elapsed: start.elapsed(),
    })
}

fn held_out_accuracy(t: &Trained) -> Result<f64, String> {
    let entries = corpus_entries(t.test_dir.path()).map_err(|e| e.to_string())?;
    let mut correct = 0;
    for (path, row) in &entries {
        let x = pipeline::load_input(&t.model, path).map_err(|e| format!("{e:#}"))?;
        let logits = t.model.network.logits(x.values());
        let predicted = if logits[1] > logits[0] {
            Class::Spoof
        } else {
            Class::Bonafide
        };
        correct += usize::from(predicted == row.label);
    }
    Ok(correct as f64 / entries.len() as f64)
}

/// DeepSHAP spoof-class maps for the held-out spoofed utterances, against 20
/// bona fide training utterances.
fn spoof_maps(t: &Trained) -> Result<Vec<(AttributionMap, specshap::synth::ManifestRow)>, String> {
    let bg = pipeline::load_background(&t.model, t.train_dir.path(), Some(Class::Bonafide), 20)
        .map_err(|e| format!("{e:#}"))?;
    let entries = corpus_entries(t.test_dir.path()).map_err(|e| e.to_string())?;
    entries
        .into_iter()
        .filter(|(_, row)| row.label == Class::Spoof)
        .map(|(path, row)| {
            let x = pipeline::load_input(&t.model, &path).map_err(|e| format!("{e:#}"))?;
            let attr = deep_shap(
                &t.model.network,
                &x,
                &bg,
                Class::Spoof.index(),
                DeepShapOptions::default(),
            )
            .map_err(|e| e.to_string())?;
            Ok((
                AttributionMap::from_attribution(&attr).map_err(|e| e.to_string())?,
                row,
            ))
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let spec = CorpusSpec::default();
    let SpoofVariant::BandArtefact { center_hz, .. } = spec.spoof_variant else {
        return Err("default corpus is not a band artefact".into());
    };
    let t = train_on(&spec, &TrainOptions::default())?;
    within(t.elapsed, 600)?;
    let acc = held_out_accuracy(&t)?;
    ensure(acc >= 0.95, || format!("held-out accuracy {acc:.3}"))?;
    let maps = spoof_maps(&t)?;
    ensure(maps.len() == 20, || {
        format!("{} spoofed utterances", maps.len())
    })?;
    let band = (center_hz / 100.0).floor() * 100.0;
    let mut fractions = Vec::new();
    for (map, _) in &maps {
        let total: f64 = (0..40)
            .map(|b| band_mass(map, b as f64 * 100.0, b as f64 * 100.0 + 100.0))
            .sum::<Result<f64, _>>()
            .map_err(|e| e.to_string())?;
        let near = band_mass(map, band - 100.0, band + 200.0).map_err(|e| e.to_string())?;
        fractions.push(if total > 0.0 { near / total } else { 0.0 });
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    ensure(mean >= 0.6, || {
        format!("mean band fraction {mean:.3} (held-out accuracy {acc:.3})")
    })?;
    Ok(format!(
        "held-out accuracy {acc:.3}, mean |phi| fraction in {}-{} Hz {mean:.3}, training {:.1} s",
        band - 100.0,
        band + 200.0,
        t.elapsed.as_secs_f64()
    ))
}

fn criterion_9() -> Outcome {
    let spec = CorpusSpec {
        spoof_variant: SpoofVariant::SilenceCue { extra_lead_s: 0.6 },
        ..CorpusSpec::default()
    };
    let t = train_on(&spec, &TrainOptions::default())?;
    let acc = held_out_accuracy(&t)?;
    let maps = spoof_maps(&t)?;
    let mut wins = 0;
    for (map, row) in &maps {
        let (v0, v1) = row.voiced_s(spec.duration_s);
        let silence = frame_mass(map, 0.0, v0).map_err(|e| e.to_string())?
            + frame_mass(map, v1, spec.duration_s + 1.0).map_err(|e| e.to_string())?;
        let width = v0 + (spec.duration_s - v1);
        let mid = 0.5 * (v0 + v1);
        let voiced =
            frame_mass(map, mid - width / 2.0, mid + width / 2.0).map_err(|e| e.to_string())?;
        wins += usize::from(silence > voiced);
    }
    ensure(wins >= 15, || {
        format!("non-speech mass won on {wins} of {} utterances", maps.len())
    })?;
    Ok(format!(
        "non-speech mass exceeds voiced mass on {wins}/{} utterances (held-out accuracy {acc:.3})",
        maps.len()
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let argv = std::iter::once("specshap").chain(args.iter().copied());
    specshap_cli::run(argv).map_err(|e| {
        format!(
            "specshap {}: {}",
            args.join(" "),
            specshap_cli::one_line(&e)
        )
    })
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    cli(&[
        "gen-corpus",
        "--out",
        &p("corpus"),
        "--n",
        "20",
        "--seed",
        "4",
    ])?;
    cli(&[
        "train",
        "--corpus",
        &p("corpus"),
        "--model",
        &p("a.json"),
        "--seed",
        "1",
        "--arch",
        "compact",
    ])?;
    cli(&[
        "train",
        "--corpus",
        &p("corpus"),
        "--model",
        &p("b.json"),
        "--seed",
        "2",
        "--arch",
        "residual",
    ])?;
    let input = p("corpus/spoof_0003.wav");
    for m in ["a", "b"] {
        cli(&[
            "explain",
            "--model",
            &p(&format!("{m}.json")),
            "--input",
            &input,
            "--class",
            "spoof",
            "--background",
            &p("corpus"),
            "--seed",
            "0",
            "--out",
            &p(&format!("attr_{m}.json")),
        ])?;
    }
    cli(&[
        "compare",
        "--attr-a",
        &p("attr_a.json"),
        "--attr-b",
        &p("attr_b.json"),
        "--out",
        &p("r1.json"),
    ])?;
    cli(&[
        "compare",
        "--attr-a",
        &p("attr_a.json"),
        "--attr-b",
        &p("attr_b.json"),
        "--out",
        &p("r2.json"),
    ])?;
    let text = std::fs::read_to_string(p("r1.json")).map_err(|e| e.to_string())?;
    ensure(
        text == std::fs::read_to_string(p("r2.json")).map_err(|e| e.to_string())?,
        || "repeated compare differs".into(),
    )?;
    let report = CompareReport::from_json(&text).map_err(|e| e.to_string())?;
    ensure(
        report.noisiness_a.is_finite()
            && report.noisiness_b.is_finite()
            && report.profile_correlation.is_finite(),
        || format!("non-finite report {report:?}"),
    )?;

    // Recompute each field from the exported documents.
    let load = |name: &str| -> Result<Vec<f64>, String> {
        let attr = Attribution::load(p(name)).map_err(|e| e.to_string())?;
        let map = AttributionMap::from_attribution(&attr).map_err(|e| e.to_string())?;
        Ok(profile(&map, Axis::Time, Sign::Both).values)
    };
    let (pa, pb) = (load("attr_a.json")?, load("attr_b.json")?);
    ensure(noisiness(&pa) == report.noisiness_a, || {
        "noisiness_a not recomputable".into()
    })?;
    ensure(noisiness(&pb) == report.noisiness_b, || {
        "noisiness_b not recomputable".into()
    })?;
    let r = pearson(&pa, &pb).map_err(|e| e.to_string())?;
    ensure(r == report.profile_correlation, || {
        "profile_correlation not recomputable".into()
    })?;
    Ok(format!(
        "noisiness {:.4} / {:.4}, profile correlation {:.4}; deterministic and recomputed exactly",
        report.noisiness_a, report.noisiness_b, report.profile_correlation
    ))
}

fn criterion_11() -> Outcome {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let golden = std::fs::read(data.join("golden.ppm")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let attr = data.join("golden_attr.json").to_string_lossy().into_owned();
    for run in 0..2 {
        let out = dir.path().join(format!("h{run}.ppm"));
        cli(&["render", "--attr", &attr, "--out", &out.to_string_lossy()])?;
        let bytes = std::fs::read(&out).map_err(|e| e.to_string())?;
        ensure(bytes == golden, || {
            format!("run {run}: rendered bytes differ from the golden file")
        })?;
    }
    Ok(format!(
        "{} bytes match the golden PPM on two runs",
        golden.len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("Shapley axioms", criterion_1),
        ("kernel = exact at full budget", criterion_2),
        ("permutation sampling convergence", criterion_3),
        ("DeepSHAP local accuracy", criterion_4),
        ("linear-model identity", criterion_5),
        ("gradient correctness", criterion_6),
        ("STFT contract", criterion_7),
        ("sub-band artefact localization", criterion_8),
        ("silence-cue localization", criterion_9),
        ("comparison pipeline", criterion_10),
        ("golden rendering", criterion_11),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|n| n != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!(
                "criterion {:>2} PASS  {name}: {detail} [{secs:.1} s]",
                i + 1
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "criterion {:>2} FAIL  {name}: {detail} [{secs:.1} s]",
                    i + 1
                );
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
