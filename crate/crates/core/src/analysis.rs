//! Reshaping and summarising attributions: per-bin maps, time and
//! frequency profiles, band and frame mass, and profile noisiness.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapley::{Attribution, FeatureGrouping, Method};
use crate::signal::Axes;

/// Per-bin attribution values for one class on the spectrogram grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMap {
    values: Vec<f64>,
    bins: usize,
    frames: usize,
    axes: Axes,
    class: usize,
    method: Method,
}

impl AttributionMap {
    pub fn new(
        bins: usize,
        frames: usize,
        values: Vec<f64>,
        axes: Axes,
        class: usize,
        method: Method,
    ) -> Result<Self> {
        if bins == 0 || frames == 0 {
            return Err(Error::invalid(
                "attribution map must have at least one bin and frame",
            ));
        }
        if values.len() != bins * frames {
            return Err(Error::ShapeMismatch {
                expected: format!("{bins}x{frames} = {} values", bins * frames),
                found: format!("{} values", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("attribution map contains non-finite values"));
        }
        Ok(Self {
            values,
            bins,
            frames,
            axes,
            class,
            method,
        })
    }

    /// Uses the grouping recorded in the document.
    pub fn from_attribution(attr: &Attribution) -> Result<Self> {
        let info = attr.grouping.ok_or_else(|| {
            Error::Document("attribution has no grouping; cannot place it on a grid".into())
        })?;
        to_map(attr, &FeatureGrouping::new(info)?)
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.frames + frame]
    }

    pub fn axes(&self) -> Axes {
        self.axes
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Spreads each group's value evenly over its bins.
pub fn to_map(attr: &Attribution, grouping: &FeatureGrouping) -> Result<AttributionMap> {
    if attr.values.len() != grouping.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("D = {} from grouping", grouping.len()),
            found: format!("{} attribution values", attr.values.len()),
        });
    }
    let info = grouping.info();
    let mut values = vec![0.0; info.bins * info.frames];
    for (g, &phi) in attr.values.iter().enumerate() {
        let members = grouping.members(g);
        let share = phi / members.len() as f64;
        for j in members {
            values[j] = share;
        }
    }
    AttributionMap::new(
        info.bins,
        info.frames,
        values,
        attr.axes.unwrap_or_default(),
        attr.class,
        attr.method,
    )
}

/// Sums a per-bin (1x1) attribution into the tiles of `grouping`. Base,
/// output and the remaining metadata carry over.
pub fn pool_to_groups(attr: &Attribution, grouping: &FeatureGrouping) -> Result<Attribution> {
    let info = grouping.info();
    match attr.grouping {
        Some(g)
            if g.tile_rows == 1
                && g.tile_cols == 1
                && (g.bins, g.frames) == (info.bins, info.frames) => {}
        _ => {
            return Err(Error::invalid(format!(
                "only a per-bin {}x{} attribution can be pooled into tiles",
                info.bins, info.frames
            )))
        }
    }
    let mut values = vec![0.0; grouping.len()];
    for (j, phi) in attr.values.iter().enumerate() {
        values[grouping.group_of(j / info.frames, j % info.frames)] += phi;
    }
    Ok(Attribution {
        num_features: values.len(),
        values,
        grouping: Some(info),
        ..attr.clone()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// One value per frame, averaged over frequency.
    Time,
    /// One value per bin, averaged over time.
    Frequency,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Time => "time",
            Axis::Frequency => "freq",
        }
    }

    fn unit(self) -> &'static str {
        match self {
            Axis::Time => "s",
            Axis::Frequency => "hz",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Axis::Time),
            "freq" | "frequency" => Ok(Axis::Frequency),
            _ => Err(Error::invalid(format!(
                "unknown axis '{s}' (expected time or freq)"
            ))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
    Both,
}

impl Sign {
    pub fn name(self) -> &'static str {
        match self {
            Sign::Positive => "pos",
            Sign::Negative => "neg",
            Sign::Both => "both",
        }
    }

    fn keep(self, v: f64) -> f64 {
        match self {
            Sign::Positive => v.max(0.0),
            Sign::Negative => v.min(0.0),
            Sign::Both => v,
        }
    }
}

impl FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos" | "positive" => Ok(Sign::Positive),
            "neg" | "negative" => Ok(Sign::Negative),
            "both" => Ok(Sign::Both),
            _ => Err(Error::invalid(format!(
                "unknown sign '{s}' (expected pos, neg or both)"
            ))),
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A 1-D profile with its axis coordinates (Hz or s).
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub axis: Axis,
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([self.axis.unit(), "value"])?;
        for (c, v) in self.coords.iter().zip(&self.values) {
            w.write_record([c.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let axis = match r.headers()?.get(0) {
            Some("s") => Axis::Time,
            Some("hz") => Axis::Frequency,
            other => {
                return Err(Error::Document(format!(
                    "{}: first column must be 's' or 'hz', found {other:?}",
                    path.display()
                )))
            }
        };
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record?;
            let parse = |k: usize| -> Result<f64> {
                record
                    .get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::Document(format!("{}: row {}: bad number", path.display(), i + 2))
                    })
            };
            coords.push(parse(0)?);
            values.push(parse(1)?);
        }
        Ok(Self {
            axis,
            coords,
            values,
        })
    }
}

pub fn profile(map: &AttributionMap, axis: Axis, sign: Sign) -> Profile {
    let (bins, frames) = (map.bins, map.frames);
    match axis {
        Axis::Time => {
            let mut values = vec![0.0; frames];
            for m in 0..bins {
                for (n, acc) in values.iter_mut().enumerate() {
                    *acc += sign.keep(map.values[m * frames + n]);
                }
            }
            values.iter_mut().for_each(|v| *v /= bins as f64);
            Profile {
                axis,
                coords: (0..frames).map(|n| map.axes.frame_center_s(n)).collect(),
                values,
            }
        }
        Axis::Frequency => Profile {
            axis,
            coords: (0..bins).map(|m| map.axes.bin_center_hz(m)).collect(),
            values: map
                .values
                .chunks(frames)
                .map(|row| row.iter().map(|&v| sign.keep(v)).sum::<f64>() / frames as f64)
                .collect(),
        },
    }
}

fn mass_fraction(map: &AttributionMap, selected: impl Fn(usize, usize) -> bool) -> f64 {
    let mut inside = 0.0;
    let mut total = 0.0;
    for m in 0..map.bins {
        for n in 0..map.frames {
            let a = map.values[m * map.frames + n].abs();
            total += a;
            if selected(m, n) {
                inside += a;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        inside / total
    }
}

fn check_range(lo: f64, hi: f64, what: &str) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo >= hi {
        return Err(Error::invalid(format!(
            "{what} range [{lo}, {hi}) is empty or inverted"
        )));
    }
    Ok(())
}

/// Share of `Σ|φ|` in bins whose center frequency lies in `[lo_hz, hi_hz)`.
pub fn band_mass(map: &AttributionMap, lo_hz: f64, hi_hz: f64) -> Result<f64> {
    check_range(lo_hz, hi_hz, "band")?;
    Ok(mass_fraction(map, |m, _| {
        let f = map.axes.bin_center_hz(m);
        f >= lo_hz && f < hi_hz
    }))
}

/// Share of `Σ|φ|` in frames whose center time lies in `[lo_s, hi_s)`.
pub fn frame_mass(map: &AttributionMap, lo_s: f64, hi_s: f64) -> Result<f64> {
    check_range(lo_s, hi_s, "time")?;
    Ok(mass_fraction(map, |_, n| {
        let t = map.axes.frame_center_s(n);
        t >= lo_s && t < hi_s
    }))
}

/// Mean absolute first difference over mean absolute value.
pub fn noisiness(profile: &[f64]) -> f64 {
    if profile.len() < 2 {
        return 0.0;
    }
    let diff =
        profile.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (profile.len() - 1) as f64;
    let level = profile.iter().map(|v| v.abs()).sum::<f64>() / profile.len() as f64;
    diff / (level + 1e-12)
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", a.len()),
            found: format!("{} values", b.len()),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

/// Cross-classifier comparison of two attributions of the same utterance,
/// computed on their time profiles (sign = both).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareReport {
    pub noisiness_a: f64,
    pub noisiness_b: f64,
    pub profile_correlation: f64,
}

impl CompareReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))
    }
}

pub fn compare(a: &AttributionMap, b: &AttributionMap) -> Result<CompareReport> {
    let pa = profile(a, Axis::Time, Sign::Both);
    let pb = profile(b, Axis::Time, Sign::Both);
    if pa.len() != pb.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} frames", pa.len()),
            found: format!("{} frames", pb.len()),
        });
    }
    Ok(CompareReport {
        noisiness_a: noisiness(&pa.values),
        noisiness_b: noisiness(&pb.values),
        profile_correlation: pearson(&pa.values, &pb.values)?,
    })
}
