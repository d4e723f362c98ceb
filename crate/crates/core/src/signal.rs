//! Waveform I/O and the short-time Fourier transform front end.
//!
//! Spectrograms are stored frequency-major: row `m` is the frequency bin,
//! column `n` the frame, so `values[m * frames + n]` holds `X(m, n)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate every bundled pipeline runs at.
pub const SAMPLE_RATE: u32 = 16_000;

/// Floor added to `|X|^2` before taking the logarithm.
pub const LOG_POWER_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform is empty"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Reads a mono, 16-bit PCM, 16 kHz RIFF/WAVE file. Samples are scaled by
/// 1/32768 so that the most negative code maps to exactly -1.0.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let wav_err = |message: String| Error::Wav {
        path: path.to_path_buf(),
        message,
    };
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(format!(
            "channels={}, expected mono",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(wav_err(format!(
            "bits_per_sample={} ({:?}), expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(wav_err(format!(
            "sample_rate={}, expected {SAMPLE_RATE}",
            spec.sample_rate
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_err(e.to_string()))?;
    Waveform::new(samples, spec.sample_rate).map_err(|e| wav_err(e.to_string()))
}

/// Writes a waveform as mono PCM16, clipping to the representable range.
pub fn save_wav(waveform: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: waveform.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |e: hound::Error| Error::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &waveform.samples {
        let code = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(code).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

/// Repeats short inputs end-to-end and truncates long ones (keeping the
/// start) so the result holds exactly `round(target_s * sample_rate)` samples.
pub fn fix_duration(waveform: &Waveform, target_s: f64) -> Result<Waveform> {
    if !(target_s > 0.0) || !target_s.is_finite() {
        return Err(Error::invalid(format!(
            "target duration must be positive, got {target_s}"
        )));
    }
    let target = (target_s * f64::from(waveform.sample_rate)).round() as usize;
    if target == 0 {
        return Err(Error::invalid("target duration rounds to zero samples"));
    }
    let samples = waveform
        .samples
        .iter()
        .copied()
        .cycle()
        .take(target)
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: waveform.sample_rate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hamming,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// `ln(|X|^2 + 1e-10)`
    LogPower,
    /// `|X|`
    Magnitude,
}

/// STFT parameters, stored as sample counts rather than durations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
    pub scale: Scale,
}

impl Default for StftConfig {
    /// 64 ms Hamming window, 8 ms shift, 1024-point FFT at 16 kHz.
    fn default() -> Self {
        Self {
            window_len: 1024,
            hop: 128,
            fft_size: 1024,
            window: WindowKind::Hamming,
            scale: Scale::LogPower,
        }
    }
}

impl StftConfig {
    pub fn with_scale(self, scale: Scale) -> Self {
        Self { scale, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len || self.window_len > self.fft_size {
            return Err(Error::invalid(format!(
                "STFT config requires 0 < hop <= window_len <= fft_size, got hop={} window_len={} fft_size={}",
                self.hop, self.window_len, self.fft_size
            )));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "fft_size must be a power of two, got {}",
                self.fft_size
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of complete frames in a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    pub fn axes(&self, sample_rate: u32) -> Axes {
        let sr = f64::from(sample_rate);
        Axes {
            bin_hz: sr / self.fft_size as f64,
            frame_s: self.hop as f64 / sr,
            frame_offset_s: self.window_len as f64 / 2.0 / sr,
        }
    }

    fn window_weights(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hamming => hamming(self.window_len),
        }
    }
}

/// Symmetric Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos())
        .collect()
}

/// Physical axis metadata for a spectro-temporal grid.
///
/// Bin `m` is centered at `m * bin_hz`; frame `n` at
/// `n * frame_s + frame_offset_s` seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    pub bin_hz: f64,
    pub frame_s: f64,
    pub frame_offset_s: f64,
}

impl Default for Axes {
    fn default() -> Self {
        StftConfig::default().axes(SAMPLE_RATE)
    }
}

impl Axes {
    pub fn bin_center_hz(&self, m: usize) -> f64 {
        m as f64 * self.bin_hz
    }

    pub fn frame_center_s(&self, n: usize) -> f64 {
        n as f64 * self.frame_s + self.frame_offset_s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    values: Vec<f64>,
    bins: usize,
    frames: usize,
    axes: Axes,
    scale: Scale,
}

impl Spectrogram {
    pub fn new(
        bins: usize,
        frames: usize,
        values: Vec<f64>,
        axes: Axes,
        scale: Scale,
    ) -> Result<Self> {
        if bins == 0 || frames == 0 {
            return Err(Error::invalid(
                "spectrogram must have at least one bin and frame",
            ));
        }
        if values.len() != bins * frames {
            return Err(Error::ShapeMismatch {
                expected: format!("{bins}x{frames} = {} values", bins * frames),
                found: format!("{} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "spectrogram value at bin {} frame {} is not finite",
                i / frames,
                i % frames
            )));
        }
        Ok(Self {
            values,
            bins,
            frames,
            axes,
            scale,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frames)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.frames + frame]
    }

    pub fn axes(&self) -> Axes {
        self.axes
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// Writes the matrix as CSV: one row per frequency bin (row 0 = DC),
    /// one column per frame, no header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for row in self.values.chunks(self.frames) {
            let line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>, axes: Axes, scale: Scale) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut values = Vec::new();
        let mut frames = None;
        let mut bins = 0;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Document(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            match frames {
                None => frames = Some(row.len()),
                Some(n) if n != row.len() => {
                    return Err(Error::Document(format!(
                        "{}:{}: expected {n} columns, found {}",
                        path.display(),
                        lineno + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            values.extend(row);
            bins += 1;
        }
        Spectrogram::new(bins, frames.unwrap_or(0), values, axes, scale)
    }
}

/// Per-bin standardization `(x(m, n) - mean[m]) / std[m]`.
///
/// The statistics are pooled over every frame of a training set. Applying
/// the same affine map to inputs and references leaves DeepSHAP and
/// baseline-substitution attributions unchanged, so it is a feature-scaling
/// step rather than part of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinNormalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Smallest per-bin standard deviation `fit` will store.
pub const MIN_BIN_STD: f64 = 1e-6;

impl BinNormalization {
    pub fn fit(spectrograms: &[Spectrogram]) -> Result<Self> {
        let first = spectrograms
            .first()
            .ok_or_else(|| Error::invalid("cannot fit normalization to an empty set"))?;
        let (bins, frames) = first.shape();
        if let Some(s) = spectrograms.iter().find(|s| s.shape() != (bins, frames)) {
            return Err(Error::ShapeMismatch {
                expected: format!("{bins}x{frames}"),
                found: format!("{}x{}", s.bins(), s.frames()),
            });
        }
        let count = (spectrograms.len() * frames) as f64;
        let mut mean = vec![0.0; bins];
        let mut var = vec![0.0; bins];
        for s in spectrograms {
            for (m, row) in s.values().chunks(frames).enumerate() {
                mean[m] += row.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= count);
        for s in spectrograms {
            for (m, row) in s.values().chunks(frames).enumerate() {
                var[m] += row.iter().map(|v| (v - mean[m]).powi(2)).sum::<f64>();
            }
        }
        let std = var
            .iter()
            .map(|v| (v / count).sqrt().max(MIN_BIN_STD))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn bins(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::invalid(format!(
                "normalization has {} means but {} deviations",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("normalization means must be finite"));
        }
        if self.std.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(
                "normalization deviations must be positive and finite",
            ));
        }
        Ok(())
    }

    pub fn apply(&self, spec: &Spectrogram) -> Result<Spectrogram> {
        if spec.bins() != self.bins() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} bins", self.bins()),
                found: format!("{} bins", spec.bins()),
            });
        }
        let values = spec
            .values()
            .chunks(spec.frames())
            .zip(self.mean.iter().zip(&self.std))
            .flat_map(|(row, (mu, sd))| row.iter().map(move |v| (v - mu) / sd))
            .collect();
        Spectrogram::new(
            spec.bins(),
            spec.frames(),
            values,
            spec.axes(),
            spec.scale(),
        )
    }
}

/// Computes the STFT spectrogram. Trailing samples that do not fill a whole
/// window are dropped; frames shorter than `fft_size` are zero-padded.
pub fn stft(waveform: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if waveform.len() < cfg.window_len {
        return Err(Error::invalid(format!(
            "input of {} samples is shorter than one {}-sample window",
            waveform.len(),
            cfg.window_len
        )));
    }
    let frames = cfg.num_frames(waveform.len());
    let bins = cfg.num_bins();
    let window = cfg.window_weights();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);

    let mut values = vec![0.0; bins * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for n in 0..frames {
        let start = n * cfg.hop;
        let frame = &waveform.samples[start..start + cfg.window_len];
        for (slot, (s, w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *slot = Complex::new(s * w, 0.0);
        }
        for slot in &mut buf[cfg.window_len..] {
            *slot = Complex::new(0.0, 0.0);
        }
        fft.process(&mut buf);
        for (m, c) in buf[..bins].iter().enumerate() {
            let power = c.norm_sqr();
            values[m * frames + n] = match cfg.scale {
                Scale::Magnitude => power.sqrt(),
                Scale::LogPower => (power + LOG_POWER_FLOOR).ln(),
            };
        }
    }
    Spectrogram::new(
        bins,
        frames,
        values,
        cfg.axes(waveform.sample_rate),
        cfg.scale,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, len: usize) -> Waveform {
        let sr = f64::from(SAMPLE_RATE);
        let samples = (0..len)
            .map(|t| 0.5 * (2.0 * std::f64::consts::PI * freq * t as f64 / sr).sin())
            .collect();
        Waveform::new(samples, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn default_config_frame_counts() {
        let cfg = StftConfig::default();
        let four = stft(
            &Waveform::new(vec![0.0; 64_000], SAMPLE_RATE).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(four.shape(), (513, 493));
        let six = stft(
            &Waveform::new(vec![0.0; 96_000], SAMPLE_RATE).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(six.shape(), (513, 743));
        assert_eq!(four.axes().bin_hz, 15.625);
    }

    #[test]
    fn frame_count_formula_exhaustive() {
        let cfg = StftConfig {
            window_len: 16,
            hop: 4,
            fft_size: 32,
            ..StftConfig::default()
        };
        for len in cfg.window_len..=cfg.window_len + 4 * cfg.hop {
            let w = Waveform::new(vec![0.1; len], SAMPLE_RATE).unwrap();
            let spec = stft(&w, &cfg).unwrap();
            assert_eq!(
                spec.frames(),
                (len - cfg.window_len) / cfg.hop + 1,
                "len {len}"
            );
            assert_eq!(spec.bins(), 17);
        }
    }

    #[test]
    fn thousand_hertz_peaks_at_bin_64() {
        let spec = stft(
            &sine(1000.0, 16_000),
            &StftConfig::default().with_scale(Scale::Magnitude),
        )
        .unwrap();
        for n in 0..spec.frames() {
            let argmax = (0..spec.bins())
                .max_by(|&a, &b| spec.get(a, n).total_cmp(&spec.get(b, n)))
                .unwrap();
            assert_eq!(argmax, 64, "frame {n}");
        }
    }

    #[test]
    fn bin_centered_sinusoids_localize() {
        let cfg = StftConfig::default();
        for k in [1, 2, 17, 100, 256, 511] {
            let spec = stft(&sine(k as f64 * 15.625, 4096), &cfg).unwrap();
            for n in 0..spec.frames() {
                let argmax = (0..spec.bins())
                    .max_by(|&a, &b| spec.get(a, n).total_cmp(&spec.get(b, n)))
                    .unwrap();
                assert_eq!(argmax, k);
            }
        }
    }

    #[test]
    fn zero_input_energy() {
        let w = Waveform::new(vec![0.0; 4096], SAMPLE_RATE).unwrap();
        let mag = stft(&w, &StftConfig::default().with_scale(Scale::Magnitude)).unwrap();
        assert!(mag.values().iter().all(|&v| v == 0.0));
        let log = stft(&w, &StftConfig::default()).unwrap();
        assert!(log.values().iter().all(|&v| v == LOG_POWER_FLOOR.ln()));
    }

    #[test]
    fn short_input_is_rejected() {
        let w = Waveform::new(vec![0.0; 1023], SAMPLE_RATE).unwrap();
        assert!(stft(&w, &StftConfig::default()).is_err());
    }

    #[test]
    fn invalid_configs() {
        let base = StftConfig::default();
        assert!(StftConfig { hop: 0, ..base }.validate().is_err());
        assert!(StftConfig { hop: 2048, ..base }.validate().is_err());
        assert!(StftConfig {
            fft_size: 1000,
            window_len: 512,
            ..base
        }
        .validate()
        .is_err());
        assert!(StftConfig {
            window_len: 2048,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn hamming_is_symmetric() {
        let w = hamming(1024);
        assert!((w[0] - 0.08).abs() < 1e-12);
        assert!((w[1023] - 0.08).abs() < 1e-12);
        for n in 0..512 {
            assert!((w[n] - w[1023 - n]).abs() < 1e-12);
        }
    }

    #[test]
    fn fix_duration_repeats_and_truncates() {
        let one_s: Vec<f64> = (0..16_000).map(|i| (i % 100) as f64 / 100.0).collect();
        let w = Waveform::new(one_s.clone(), SAMPLE_RATE).unwrap();
        let four = fix_duration(&w, 4.0).unwrap();
        assert_eq!(four.len(), 64_000);
        for rep in 0..4 {
            assert_eq!(
                &four.samples()[rep * 16_000..(rep + 1) * 16_000],
                &one_s[..]
            );
        }
        assert_eq!(fix_duration(&w, 6.0).unwrap().len(), 96_000);
        let half = fix_duration(&w, 0.5).unwrap();
        assert_eq!(half.samples(), &one_s[..8000]);
        assert_eq!(fix_duration(&w, 1.0).unwrap(), w);
        assert!(fix_duration(&w, 0.0).is_err());
    }

    #[test]
    fn wav_round_trip_and_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zeros.wav");
        save_wav(
            &Waveform::new(vec![0.0; 64_000], SAMPLE_RATE).unwrap(),
            &path,
        )
        .unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.len(), 64_000);
        assert!(back.samples().iter().all(|&s| s == 0.0));

        let path = dir.path().join("min.wav");
        save_wav(&Waveform::new(vec![-1.0, 0.5], SAMPLE_RATE).unwrap(), &path).unwrap();
        assert_eq!(load_wav(&path).unwrap().samples(), &[-1.0, 0.5]);

        let stereo = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        let err = load_wav(&stereo).unwrap_err().to_string();
        assert!(err.contains("channels=2, expected mono"), "{err}");

        let rate = dir.path().join("rate.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44_100,
            ..spec
        };
        let mut w = hound::WavWriter::create(&rate, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(load_wav(&rate)
            .unwrap_err()
            .to_string()
            .contains("sample_rate=44100"));

        assert!(load_wav(dir.path().join("missing.wav")).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = stft(&sine(440.0, 2048), &StftConfig::default()).unwrap();
        let path = dir.path().join("s.csv");
        spec.write_csv(&path).unwrap();
        let back = Spectrogram::read_csv(&path, spec.axes(), spec.scale()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn bin_normalization_standardizes_each_bin() {
        let axes = Axes::default();
        let a = Spectrogram::new(
            2,
            3,
            vec![1.0, 2.0, 3.0, 5.0, 5.0, 5.0],
            axes,
            Scale::LogPower,
        )
        .unwrap();
        let b = Spectrogram::new(
            2,
            3,
            vec![4.0, 5.0, 6.0, 5.0, 5.0, 5.0],
            axes,
            Scale::LogPower,
        )
        .unwrap();
        let norm = BinNormalization::fit(&[a.clone(), b]).unwrap();
        assert!((norm.mean[0] - 3.5).abs() < 1e-12);
        let sd0 = (17.5f64 / 6.0).sqrt();
        assert!((norm.std[0] - sd0).abs() < 1e-12);
        assert_eq!(norm.std[1], MIN_BIN_STD);
        let z = norm.apply(&a).unwrap();
        assert!((z.get(0, 0) - (1.0 - 3.5) / sd0).abs() < 1e-12);
        assert_eq!(z.get(1, 2), 0.0);
        norm.validate().unwrap();
        assert!(BinNormalization {
            mean: vec![0.0],
            std: vec![0.0]
        }
        .validate()
        .is_err());
        assert!(norm
            .apply(&Spectrogram::new(3, 1, vec![0.0; 3], axes, Scale::LogPower).unwrap())
            .is_err());
        assert!(BinNormalization::fit(&[]).is_err());
    }
}
