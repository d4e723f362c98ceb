//! Model-agnostic Shapley attribution over groups of spectrogram bins.
//!
//! A coalition `S` of feature groups is evaluated by keeping the input's
//! bins for groups in `S` and substituting background expectations for
//! every other bin, then reading the target logit. Three estimators share
//! that value function: exact enumeration, permutation sampling, and the
//! kernel-weighted least-squares fit of an additive explanation model.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_class, Network};
use crate::signal::Axes;

/// Largest number of groups `exact_shapley` will enumerate (2^20 coalitions).
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Simplified input: `true` marks a present feature group.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureMask(Vec<bool>);

impl FeatureMask {
    pub fn empty(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn full(len: usize) -> Self {
        Self(vec![true; len])
    }

    /// Bit `i` of `bits` sets feature `i`.
    pub fn from_bits(bits: u64, len: usize) -> Self {
        Self((0..len).map(|i| bits >> i & 1 == 1).collect())
    }

    pub fn from_members(len: usize, members: &[usize]) -> Self {
        let mut mask = Self::empty(len);
        for &i in members {
            mask.0[i] = true;
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn insert(&mut self, i: usize) {
        self.0[i] = true;
    }

    pub fn remove(&mut self, i: usize) {
        self.0[i] = false;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

/// Grid description stored with attributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridInfo {
    pub tile_rows: usize,
    pub tile_cols: usize,
    #[serde(rename = "M")]
    pub bins: usize,
    #[serde(rename = "N")]
    pub frames: usize,
}

/// Partition of an `M x N` grid into rectangular tiles, numbered row-major
/// over the tile grid (frequency tiles outer, time tiles inner).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureGrouping {
    info: GridInfo,
    tiles_down: usize,
    tiles_across: usize,
}

pub fn make_grouping(
    bins: usize,
    frames: usize,
    tile_rows: usize,
    tile_cols: usize,
) -> Result<FeatureGrouping> {
    FeatureGrouping::new(GridInfo {
        tile_rows,
        tile_cols,
        bins,
        frames,
    })
}

impl FeatureGrouping {
    pub fn new(info: GridInfo) -> Result<Self> {
        if info.tile_rows == 0 || info.tile_cols == 0 {
            return Err(Error::invalid("tile dimensions must be at least 1"));
        }
        if info.bins == 0 || info.frames == 0 {
            return Err(Error::invalid("grid must be non-empty"));
        }
        Ok(Self {
            info,
            tiles_down: info.bins.div_ceil(info.tile_rows),
            tiles_across: info.frames.div_ceil(info.tile_cols),
        })
    }

    pub fn info(&self) -> GridInfo {
        self.info
    }

    /// Number of groups `D`.
    pub fn len(&self) -> usize {
        self.tiles_down * self.tiles_across
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group_of(&self, bin: usize, frame: usize) -> usize {
        (bin / self.info.tile_rows) * self.tiles_across + frame / self.info.tile_cols
    }

    /// Flat frequency-major indices of the bins owned by `group`.
    pub fn members(&self, group: usize) -> Vec<usize> {
        let (tr, tc) = (group / self.tiles_across, group % self.tiles_across);
        let rows = tr * self.info.tile_rows..((tr + 1) * self.info.tile_rows).min(self.info.bins);
        let cols = tc * self.info.tile_cols..((tc + 1) * self.info.tile_cols).min(self.info.frames);
        rows.flat_map(|m| cols.clone().map(move |n| m * self.info.frames + n))
            .collect()
    }

    pub fn group_size(&self, group: usize) -> usize {
        self.members(group).len()
    }
}

/// A cooperative game over `num_players` features.
pub trait CoalitionGame {
    fn num_players(&self) -> usize;

    /// `v(S)`; `mask.len()` equals `num_players()`.
    fn value(&self, mask: &FeatureMask) -> f64;
}

/// A game given by its full table of coalition values, indexed by bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct TableGame {
    players: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(players: usize, values: Vec<f64>) -> Result<Self> {
        if players > DEFAULT_ENUMERATION_CAP || values.len() != 1 << players {
            return Err(Error::invalid(format!(
                "a table game over {players} players needs {} values, got {}",
                1u64 << players.min(63),
                values.len()
            )));
        }
        Ok(Self { players, values })
    }

    /// Tabulates any game (at most `DEFAULT_ENUMERATION_CAP` players).
    pub fn tabulate(game: &impl CoalitionGame) -> Result<Self> {
        let d = game.num_players();
        check_cap(d, DEFAULT_ENUMERATION_CAP)?;
        Self::new(
            d,
            (0..1u64 << d)
                .map(|b| game.value(&FeatureMask::from_bits(b, d)))
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl CoalitionGame for TableGame {
    fn num_players(&self) -> usize {
        self.players
    }

    fn value(&self, mask: &FeatureMask) -> f64 {
        let bits = mask
            .bits()
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &b)| acc | (usize::from(b) << i));
        self.values[bits]
    }
}

/// Baseline-substitution value function for one target logit.
#[derive(Clone, Debug)]
pub struct ValueFunction<'a> {
    network: &'a Network,
    class: usize,
    grouping: FeatureGrouping,
    replacement: Vec<f64>,
    input: Vec<f64>,
    members: Vec<Vec<usize>>,
}

impl<'a> ValueFunction<'a> {
    /// `replacement` holds the per-bin expected values used for absent
    /// groups; both it and `input` are flat frequency-major grids.
    pub fn new(
        network: &'a Network,
        class: usize,
        grouping: FeatureGrouping,
        replacement: Vec<f64>,
        input: Vec<f64>,
    ) -> Result<Self> {
        check_class(class)?;
        network.check_input(replacement.len())?;
        network.check_input(input.len())?;
        let (bins, frames) = network.input_shape();
        let info = grouping.info();
        if (info.bins, info.frames) != (bins, frames) {
            return Err(Error::ShapeMismatch {
                expected: format!("{bins}x{frames} grouping"),
                found: format!("{}x{}", info.bins, info.frames),
            });
        }
        let members = (0..grouping.len()).map(|g| grouping.members(g)).collect();
        Ok(Self {
            network,
            class,
            grouping,
            replacement,
            input,
            members,
        })
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn grouping(&self) -> &FeatureGrouping {
        &self.grouping
    }

    /// The composed input `h_x(S)`.
    pub fn compose(&self, mask: &FeatureMask) -> Vec<f64> {
        let mut x = self.replacement.clone();
        for (group, bins) in self.members.iter().enumerate() {
            if mask.contains(group) {
                for &j in bins {
                    x[j] = self.input[j];
                }
            }
        }
        x
    }

    pub fn coalition_value(&self, mask: &FeatureMask) -> Result<f64> {
        check_mask(mask, self.members.len())?;
        Ok(self.value(mask))
    }
}

impl CoalitionGame for ValueFunction<'_> {
    fn num_players(&self) -> usize {
        self.members.len()
    }

    fn value(&self, mask: &FeatureMask) -> f64 {
        self.network.logits(&self.compose(mask))[self.class]
    }
}

fn check_mask(mask: &FeatureMask, players: usize) -> Result<()> {
    if mask.len() != players {
        return Err(Error::ShapeMismatch {
            expected: format!("mask of length {players}"),
            found: format!("length {}", mask.len()),
        });
    }
    Ok(())
}

fn check_cap(players: usize, cap: usize) -> Result<()> {
    if players > cap {
        return Err(Error::EnumerationCap { players, cap });
    }
    Ok(())
}

/// `v(S ∪ {i}) - v(S)` for `i ∉ S`.
pub fn marginal_contribution(
    game: &impl CoalitionGame,
    coalition: &FeatureMask,
    feature: usize,
) -> Result<f64> {
    check_mask(coalition, game.num_players())?;
    if feature >= coalition.len() {
        return Err(Error::invalid(format!("feature {feature} out of range")));
    }
    if coalition.contains(feature) {
        return Err(Error::invalid(format!(
            "coalition already contains feature {feature}"
        )));
    }
    let mut with = coalition.clone();
    with.insert(feature);
    Ok(game.value(&with) - game.value(coalition))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Perm,
    Kernel,
    Deepshap,
    /// DeepSHAP against the single mean-of-background reference.
    DeepshapMeanRef,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Perm => "perm",
            Method::Kernel => "kernel",
            Method::Deepshap => "deepshap",
            Method::DeepshapMeanRef => "deepshap_mean_ref",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Method::Exact,
            Method::Perm,
            Method::Kernel,
            Method::Deepshap,
            Method::DeepshapMeanRef,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| {
            Error::invalid(format!(
                "unknown method '{s}' (expected exact, perm, kernel or deepshap)"
            ))
        })
    }
}

/// Base value `φ_0` plus one value per feature group, for one output class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attribution {
    pub method: Method,
    pub class: usize,
    #[serde(rename = "D")]
    pub num_features: usize,
    pub base: f64,
    pub values: Vec<f64>,
    #[serde(default)]
    pub grouping: Option<GridInfo>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Permutations, coalitions or background references used.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Model output on the explained input, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Axes>,
}

impl Attribution {
    pub fn new(method: Method, class: usize, base: f64, values: Vec<f64>) -> Self {
        Self {
            method,
            class,
            num_features: values.len(),
            base,
            values,
            grouping: None,
            seed: None,
            samples: None,
            output: None,
            axes: None,
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.num_features {
            return Err(Error::Document(format!(
                "D = {} but {} values present",
                self.num_features,
                self.values.len()
            )));
        }
        if !self.base.is_finite() || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Document(
                "attribution contains non-finite values".into(),
            ));
        }
        if let Some(info) = self.grouping {
            let d = FeatureGrouping::new(info)?.len();
            if d != self.num_features {
                return Err(Error::Document(format!(
                    "grouping {}x{} tiles over {}x{} implies D = {d}, document has {}",
                    info.tile_rows, info.tile_cols, info.bins, info.frames, self.num_features
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let attr: Attribution =
            serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        attr.validate()?;
        Ok(attr)
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
        Self::from_json(&text).map_err(|e| Error::Document(format!("{}: {e}", path.display())))
    }
}

/// `|S|! (D - |S| - 1)! / D!` for `|S| = 0..D-1`.
pub fn shapley_weights(players: usize) -> Vec<f64> {
    (0..players)
        .map(|s| 1.0 / (players as f64 * binomial(players - 1, s)))
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k)
        .fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        .round()
}

/// Exact Shapley values by enumerating all `2^D` coalitions.
pub fn exact_shapley(game: &impl CoalitionGame, cap: usize) -> Result<Attribution> {
    let d = game.num_players();
    check_cap(d, cap)?;
    let table: Vec<f64> = (0..1u64 << d)
        .map(|bits| game.value(&FeatureMask::from_bits(bits, d)))
        .collect();
    let weights = shapley_weights(d);
    let mut phi = vec![0.0; d];
    for (bits, &v) in table.iter().enumerate() {
        let size = bits.count_ones() as usize;
        if size == d {
            continue;
        }
        let w = weights[size];
        for (i, p) in phi.iter_mut().enumerate() {
            if bits >> i & 1 == 0 {
                *p += w * (table[bits | 1 << i] - v);
            }
        }
    }
    let mut attr = Attribution::new(Method::Exact, 0, table[0], phi);
    attr.samples = Some(table.len());
    attr.output = table.last().copied();
    Ok(attr)
}

/// Monte-Carlo Shapley estimate over `n_permutations` uniformly random
/// orderings, each contributing one marginal contribution per feature.
pub fn permutation_shapley(
    game: &impl CoalitionGame,
    n_permutations: usize,
    seed: u64,
) -> Result<Attribution> {
    if n_permutations == 0 {
        return Err(Error::invalid("n_permutations must be at least 1"));
    }
    let d = game.num_players();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let empty = game.value(&FeatureMask::empty(d));
    let mut order: Vec<usize> = (0..d).collect();
    let mut phi = vec![0.0; d];
    let mut full = empty;
    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        let mut mask = FeatureMask::empty(d);
        let mut prev = empty;
        for &i in &order {
            mask.insert(i);
            let cur = game.value(&mask);
            phi[i] += cur - prev;
            prev = cur;
        }
        full = prev;
    }
    for p in &mut phi {
        *p /= n_permutations as f64;
    }
    let mut attr = Attribution::new(Method::Perm, 0, empty, phi);
    attr.seed = Some(seed);
    attr.samples = Some(n_permutations);
    attr.output = Some(full);
    Ok(attr)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoalitionBudget {
    /// Every proper, non-empty coalition with its kernel weight.
    Full,
    /// This many coalitions drawn from the kernel distribution.
    Sampled(usize),
}

/// Shapley kernel weight of a coalition of `size` out of `players`.
pub fn kernel_weight(players: usize, size: usize) -> f64 {
    (players - 1) as f64 / (binomial(players, size) * size as f64 * (players - size) as f64)
}

/// Fits `g(x') = φ_0 + Σ φ_i x'_i` to coalition values by kernel-weighted
/// least squares, with `φ_0 = v(∅)` and `Σ φ_i = v(F) - v(∅)` enforced by
/// eliminating the last coefficient.
pub fn kernel_shapley(
    game: &impl CoalitionGame,
    budget: CoalitionBudget,
    seed: u64,
) -> Result<Attribution> {
    let d = game.num_players();
    if d < 2 {
        return Err(Error::invalid(
            "kernel regression needs at least 2 features",
        ));
    }
    let empty = game.value(&FeatureMask::empty(d));
    let full = game.value(&FeatureMask::full(d));
    let delta = full - empty;
    let k = d - 1;
    let mut normal = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    let mut z = vec![0.0; k];
    let mut accumulate = |mask: &FeatureMask, weight: f64| {
        let last = f64::from(u8::from(mask.contains(k)));
        let y = game.value(mask) - empty - last * delta;
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = f64::from(u8::from(mask.contains(i))) - last;
        }
        for i in 0..k {
            if z[i] == 0.0 {
                continue;
            }
            rhs[i] += weight * z[i] * y;
            for j in 0..k {
                normal[(i, j)] += weight * z[i] * z[j];
            }
        }
    };

    let samples = match budget {
        CoalitionBudget::Full => {
            check_cap(d, DEFAULT_ENUMERATION_CAP)?;
            let weights: Vec<f64> = (0..=d)
                .map(|s| {
                    if s == 0 || s == d {
                        0.0
                    } else {
                        kernel_weight(d, s)
                    }
                })
                .collect();
            for bits in 1..(1u64 << d) - 1 {
                let mask = FeatureMask::from_bits(bits, d);
                accumulate(&mask, weights[bits.count_ones() as usize]);
            }
            (1usize << d) - 2
        }
        CoalitionBudget::Sampled(count) => {
            if count < d + 2 {
                return Err(Error::invalid(format!(
                    "coalition budget {count} below the minimum of D + 2 = {}",
                    d + 2
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Size distribution proportional to the total kernel weight per size.
            let size_mass: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
            let total: f64 = size_mass.iter().sum();
            for _ in 0..count {
                let mut u = rng.random::<f64>() * total;
                let mut size = d - 1;
                for (s, m) in size_mass.iter().enumerate() {
                    if u < *m {
                        size = s + 1;
                        break;
                    }
                    u -= m;
                }
                let members: Vec<usize> = rand::seq::index::sample(&mut rng, d, size).into_vec();
                accumulate(&FeatureMask::from_members(d, &members), 1.0);
            }
            count
        }
    };

    let solution = normal
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| {
            Error::Singular(format!(
                "{samples} coalitions do not determine {d} coefficients; increase the coalition budget"
            ))
        })?;
    let mut phi: Vec<f64> = solution.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    let mut attr = Attribution::new(Method::Kernel, 0, empty, phi);
    attr.samples = Some(samples);
    attr.seed = matches!(budget, CoalitionBudget::Sampled(_)).then_some(seed);
    attr.output = Some(full);
    Ok(attr)
}

/// Runs an estimator on a value function and fills in the grid metadata.
pub fn explain_with(
    vf: &ValueFunction<'_>,
    estimate: impl FnOnce(&ValueFunction<'_>) -> Result<Attribution>,
) -> Result<Attribution> {
    let mut attr = estimate(vf)?;
    attr.class = vf.class();
    attr.grouping = Some(vf.grouping().info());
    Ok(attr)
}
