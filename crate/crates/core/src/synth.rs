//! Synthetic bona fide / spoofed utterances with controllable artefacts.
//!
//! The "speech" is a harmonic complex with a slowly drifting f0 and a
//! spectral tilt, padded with leading and trailing silence (digital silence
//! plus the noise floor). Spoofed utterances carry one configured cue: a
//! narrowband noise burst during voicing, or a longer leading silence.
//!
//! Every utterance is a pure function of `(spec, label, index, seed)`. The
//! seed picks the ChaCha8 key and the index picks the stream, so the two
//! classes at one index share voice, silence draws and noise, and differ
//! only by the spoof cue.

use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::signal::{save_wav, Waveform, SAMPLE_RATE};
use crate::Class;

/// Fade applied at voicing onset and offset.
const FADE_S: f64 = 0.01;
/// Peak level of the harmonic complex before the noise floor is added.
const VOICE_LEVEL: f64 = 0.5;
/// Sinusoids summed to form a band artefact.
const ARTEFACT_COMPONENTS: usize = 12;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const CORPUS_SPEC_FILE: &str = "corpus.json";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SilenceRange {
    pub lead_s: [f64; 2],
    pub trail_s: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpoofVariant {
    /// Narrowband noise around `center_hz` while voiced. `gain_db` is
    /// relative to the tilt-law harmonic amplitude at `center_hz` for the
    /// geometric-mean f0 of the spec; `null` in JSON (negative infinity in
    /// code) disables the artefact.
    BandArtefact {
        center_hz: f64,
        width_hz: f64,
        #[serde(serialize_with = "db_out", deserialize_with = "db_in")]
        gain_db: f64,
    },
    /// Extra leading silence on top of the spoof class's lead range.
    SilenceCue { extra_lead_s: f64 },
}

fn db_out<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn db_in<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

impl fmt::Display for SpoofVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpoofVariant::BandArtefact {
                center_hz,
                width_hz,
                gain_db,
            } => write!(
                f,
                "band_artefact(center_hz={center_hz};width_hz={width_hz};gain_db={gain_db})"
            ),
            SpoofVariant::SilenceCue { extra_lead_s } => {
                write!(f, "silence_cue(extra_lead_s={extra_lead_s})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub duration_s: f64,
    pub f0_hz: [f64; 2],
    /// Peak relative f0 excursion of the drift (0.05 = ±5%).
    #[serde(default = "default_drift")]
    pub f0_drift: f64,
    pub harmonics: usize,
    pub tilt_db_per_octave: f64,
    /// Standard deviation of the Gaussian floor added everywhere.
    pub noise_floor: f64,
    pub bonafide: SilenceRange,
    pub spoof: SilenceRange,
    pub spoof_variant: SpoofVariant,
    #[serde(default)]
    pub seed: u64,
}

fn default_drift() -> f64 {
    0.05
}

impl Default for CorpusSpec {
    fn default() -> Self {
        let silence = SilenceRange {
            lead_s: [0.2, 0.4],
            trail_s: [0.2, 0.4],
        };
        Self {
            duration_s: 4.0,
            f0_hz: [100.0, 180.0],
            f0_drift: default_drift(),
            harmonics: 30,
            tilt_db_per_octave: -6.0,
            noise_floor: 1e-3,
            bonafide: silence,
            spoof: silence,
            spoof_variant: SpoofVariant::BandArtefact {
                center_hz: 600.0,
                width_hz: 50.0,
                gain_db: 6.0,
            },
            seed: 0,
        }
    }
}

fn check_range(r: [f64; 2], name: &str) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite()) || r[0] < 0.0 || r[0] > r[1] {
        return Err(Error::invalid(format!(
            "{name} range [{}, {}] is invalid",
            r[0], r[1]
        )));
    }
    Ok(())
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let nyquist = f64::from(SAMPLE_RATE) / 2.0;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            )));
        }
        if !(self.f0_hz[0] > 0.0)
            || self.f0_hz[0] > self.f0_hz[1]
            || self.f0_hz[1] * (1.0 + self.f0_drift) >= nyquist
        {
            return Err(Error::invalid(format!(
                "f0 range [{}, {}] must be positive, ordered and below Nyquist",
                self.f0_hz[0], self.f0_hz[1]
            )));
        }
        if !(0.0..1.0).contains(&self.f0_drift) {
            return Err(Error::invalid(format!(
                "f0_drift must be in [0, 1), got {}",
                self.f0_drift
            )));
        }
        if self.harmonics == 0 {
            return Err(Error::invalid("harmonics must be at least 1"));
        }
        if !self.tilt_db_per_octave.is_finite() {
            return Err(Error::invalid("tilt_db_per_octave must be finite"));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::invalid(format!(
                "noise_floor must be non-negative, got {}",
                self.noise_floor
            )));
        }
        for (class, range) in [("bonafide", &self.bonafide), ("spoof", &self.spoof)] {
            check_range(range.lead_s, &format!("{class} lead_s"))?;
            check_range(range.trail_s, &format!("{class} trail_s"))?;
            let extra = if class == "spoof" {
                self.extra_lead_s()
            } else {
                0.0
            };
            if range.lead_s[1] + extra + range.trail_s[1] >= self.duration_s {
                return Err(Error::invalid(format!(
                    "{class} silences can reach {} s, leaving no voiced span in {} s",
                    range.lead_s[1] + extra + range.trail_s[1],
                    self.duration_s
                )));
            }
        }
        match self.spoof_variant {
            SpoofVariant::BandArtefact {
                center_hz,
                width_hz,
                gain_db,
            } => {
                let (lo, hi) = (center_hz - width_hz / 2.0, center_hz + width_hz / 2.0);
                if !(width_hz > 0.0) || !(lo > 0.0) || !(hi < nyquist) {
                    return Err(Error::invalid(format!(
                        "artefact band [{lo}, {hi}] Hz must lie inside (0, {nyquist})"
                    )));
                }
                if gain_db.is_nan() || gain_db == f64::INFINITY {
                    return Err(Error::invalid(
                        "gain_db must be finite or negative infinity",
                    ));
                }
            }
            SpoofVariant::SilenceCue { extra_lead_s } => {
                if !(extra_lead_s >= 0.0) {
                    return Err(Error::invalid(format!(
                        "extra_lead_s must be non-negative, got {extra_lead_s}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn extra_lead_s(&self) -> f64 {
        match self.spoof_variant {
            SpoofVariant::SilenceCue { extra_lead_s } => extra_lead_s,
            SpoofVariant::BandArtefact { .. } => 0.0,
        }
    }

    pub fn silence(&self, label: Class) -> SilenceRange {
        match label {
            Class::Bonafide => self.bonafide,
            Class::Spoof => self.spoof,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: CorpusSpec =
            serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Document(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub waveform: Waveform,
    pub label: Class,
    /// Exact silence bounds (sample-quantized).
    pub silence_lead_s: f64,
    pub silence_trail_s: f64,
}

impl Utterance {
    /// Voiced interval `[start, end)` in seconds.
    pub fn voiced_s(&self) -> (f64, f64) {
        (
            self.silence_lead_s,
            self.waveform.duration_s() - self.silence_trail_s,
        )
    }
}

/// Maps a unit draw onto `[lo, hi]`, so equal ranges give equal values.
fn scaled(u: f64, r: [f64; 2]) -> f64 {
    r[0] + u * (r[1] - r[0])
}

/// Index-keyed stream shared by both classes: the voice, silences and
/// noise of `bonafide_i` and `spoof_i` come from the same draws.
fn voice_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn artefact_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 32) | index as u64);
    rng
}

/// Linear amplitude of harmonic-like content at `freq_hz` under the tilt law.
fn tilt_gain(freq_hz: f64, f0_hz: f64, tilt_db_per_octave: f64) -> f64 {
    10f64.powf(tilt_db_per_octave * (freq_hz / f0_hz).log2() / 20.0)
}

pub fn synth_utterance(
    spec: &CorpusSpec,
    label: Class,
    index: usize,
    seed: u64,
) -> Result<Utterance> {
    spec.validate()?;
    let sr = f64::from(SAMPLE_RATE);
    let len = (spec.duration_s * sr).round() as usize;
    let mut rng = voice_rng(seed, index);

    let range = spec.silence(label);
    let mut lead = scaled(rng.random(), range.lead_s);
    let trail = scaled(rng.random(), range.trail_s);
    if label == Class::Spoof {
        lead += spec.extra_lead_s();
    }
    let start = ((lead * sr).round() as usize).min(len);
    let end = len.saturating_sub((trail * sr).round() as usize).max(start);

    let f0 = scaled(rng.random(), spec.f0_hz);
    let drift_rate = rng.random_range(0.3..1.5);
    let drift_phase = rng.random_range(0.0..TAU);
    let phases: Vec<f64> = (0..spec.harmonics)
        .map(|_| rng.random_range(0.0..TAU))
        .collect();
    let amps: Vec<f64> = (1..=spec.harmonics)
        .map(|k| tilt_gain(k as f64 * f0, f0, spec.tilt_db_per_octave))
        .collect();
    let norm = VOICE_LEVEL / amps.iter().sum::<f64>();
    let nyquist = sr / 2.0;
    let f0_max = f0 * (1.0 + spec.f0_drift);

    let mut samples = vec![0.0; len];
    let fade = (FADE_S * sr).round().max(1.0);
    let envelope = |i: usize| -> f64 {
        let from_start = (i - start) as f64;
        let to_end = (end - 1 - i) as f64;
        let edge = from_start.min(to_end) / fade;
        if edge >= 1.0 {
            1.0
        } else {
            0.5 - 0.5 * (std::f64::consts::PI * edge).cos()
        }
    };
    let mut phase = 0.0;
    for (i, sample) in samples.iter_mut().enumerate().take(end).skip(start) {
        let t = i as f64 / sr;
        let inst_f0 = f0 * (1.0 + spec.f0_drift * (TAU * drift_rate * t + drift_phase).sin());
        let mut v = 0.0;
        for (k, (a, p)) in amps.iter().zip(&phases).enumerate() {
            if (k + 1) as f64 * f0_max >= nyquist {
                break;
            }
            v += a * ((k + 1) as f64 * phase + p).sin();
        }
        *sample = norm * v * envelope(i);
        phase += TAU * inst_f0 / sr;
    }

    if label == Class::Spoof {
        if let SpoofVariant::BandArtefact {
            center_hz,
            width_hz,
            gain_db,
        } = spec.spoof_variant
        {
            if gain_db.is_finite() {
                // Reference the envelope at the geometric-mean f0 of the spec
                // so the artefact level does not track each utterance's pitch.
                let f0_ref = (spec.f0_hz[0] * spec.f0_hz[1]).sqrt();
                let level = norm
                    * tilt_gain(center_hz, f0_ref, spec.tilt_db_per_octave)
                    * 10f64.powf(gain_db / 20.0);
                let amp = level / (ARTEFACT_COMPONENTS as f64).sqrt();
                let mut rng = artefact_rng(seed, index);
                let components: Vec<(f64, f64)> = (0..ARTEFACT_COMPONENTS)
                    .map(|_| {
                        let f = rng
                            .random_range(center_hz - width_hz / 2.0..center_hz + width_hz / 2.0);
                        (f, rng.random_range(0.0..TAU))
                    })
                    .collect();
                for (i, s) in samples.iter_mut().enumerate().take(end).skip(start) {
                    let t = i as f64 / sr;
                    let burst: f64 = components
                        .iter()
                        .map(|(f, p)| (TAU * f * t + p).sin())
                        .sum();
                    *s += amp * burst * envelope(i);
                }
            }
        }
    }

    if spec.noise_floor > 0.0 {
        let normal =
            Normal::new(0.0, spec.noise_floor).map_err(|e| Error::invalid(e.to_string()))?;
        for s in &mut samples {
            *s += normal.sample(&mut rng);
        }
    }

    Ok(Utterance {
        waveform: Waveform::new(samples, SAMPLE_RATE)?,
        label,
        silence_lead_s: start as f64 / sr,
        silence_trail_s: (len - end) as f64 / sr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub file: String,
    pub label: Class,
    pub silence_lead_s: f64,
    pub silence_trail_s: f64,
    pub variant: String,
}

impl ManifestRow {
    pub fn voiced_s(&self, duration_s: f64) -> (f64, f64) {
        (self.silence_lead_s, duration_s - self.silence_trail_s)
    }
}

pub fn utterance_file_name(label: Class, index: usize) -> String {
    format!("{}_{index:04}.wav", label.name())
}

/// Writes `2 * n_per_class` WAV files, `manifest.csv` and `corpus.json`
/// (the spec with the effective seed) into `out_dir`.
pub fn generate_corpus(
    spec: &CorpusSpec,
    n_per_class: usize,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<Vec<ManifestRow>> {
    spec.validate()?;
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::with_capacity(2 * n_per_class);
    for label in Class::BOTH {
        for index in 0..n_per_class {
            let utt = synth_utterance(spec, label, index, seed)?;
            let file = utterance_file_name(label, index);
            save_wav(&utt.waveform, out_dir.join(&file))?;
            rows.push(ManifestRow {
                file,
                label,
                silence_lead_s: utt.silence_lead_s,
                silence_trail_s: utt.silence_trail_s,
                variant: match label {
                    Class::Bonafide => "none".into(),
                    Class::Spoof => spec.spoof_variant.to_string(),
                },
            });
        }
    }
    write_manifest(&rows, out_dir.join(MANIFEST_FILE))?;
    let mut stored = spec.clone();
    stored.seed = seed;
    let path = out_dir.join(CORPUS_SPEC_FILE);
    std::fs::write(&path, stored.to_json()? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

pub fn write_manifest(rows: &[ManifestRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Manifest(format!("{}: cannot open", path.display())),
        _ => Error::Csv(e),
    })?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Manifest(format!("{}: row {}: {e}", path.display(), i + 2)))
        })
        .collect()
}

/// Manifest rows of a corpus directory with their resolved WAV paths.
pub fn corpus_entries(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, ManifestRow)>> {
    let dir = dir.as_ref();
    let rows = read_manifest(dir.join(MANIFEST_FILE))?;
    Ok(rows.into_iter().map(|r| (dir.join(&r.file), r)).collect())
}
