//! DeepSHAP: DeepLIFT multipliers propagated from a target logit back to
//! the input against each background reference, then averaged.
//!
//! Linear-family layers (dense, conv, average pooling, residual add,
//! flatten) pass multipliers through their weights. Relu uses the rescale
//! rule `Δout / Δin`, with the gradient at the actual input when
//! `|Δin| < 1e-7`. Max pooling routes to the argmax of the actual window,
//! which does not preserve summation-to-delta; [`summation_check`] exposes
//! the residual instead of hiding it.

use crate::error::{Error, Result};
use crate::model::{check_class, one_hot, Network};
use crate::shapley::{Attribution, GridInfo, Method};
use crate::signal::Spectrogram;
use crate::Class;

/// Size of the background set used throughout the bundled pipelines.
pub const DEFAULT_BACKGROUND_SIZE: usize = 20;

/// Reference inputs defining "absent" features.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundSet {
    shape: (usize, usize),
    references: Vec<Vec<f64>>,
    label: Option<Class>,
}

impl BackgroundSet {
    pub fn new(references: Vec<Spectrogram>, label: Option<Class>) -> Result<Self> {
        let first = references
            .first()
            .ok_or_else(|| Error::invalid("background set is empty"))?;
        let shape = first.shape();
        if let Some((i, r)) = references
            .iter()
            .enumerate()
            .find(|(_, r)| r.shape() != shape)
        {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} background reference", shape.0, shape.1),
                found: format!("reference {i} is {}x{}", r.bins(), r.frames()),
            });
        }
        Ok(Self {
            shape,
            references: references
                .into_iter()
                .map(Spectrogram::into_values)
                .collect(),
            label,
        })
    }

    pub fn from_values(
        shape: (usize, usize),
        references: Vec<Vec<f64>>,
        label: Option<Class>,
    ) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::invalid("background set is empty"));
        }
        for (i, r) in references.iter().enumerate() {
            if r.len() != shape.0 * shape.1 {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} values", shape.0 * shape.1),
                    found: format!("reference {i} has {}", r.len()),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("reference {i} is not finite")));
            }
        }
        Ok(Self {
            shape,
            references,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.references.len()
    }

    pub fn is_empty(&self) -> bool {
        self.references.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn label(&self) -> Option<Class> {
        self.label
    }

    pub fn references(&self) -> &[Vec<f64>] {
        &self.references
    }

    /// Per-bin mean, accumulated in reference order.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.shape.0 * self.shape.1];
        for r in &self.references {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = self.references.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Activations of the explained input and the reference at every layer
/// boundary, with the target multiplier for each.
#[derive(Clone, Debug)]
pub struct MultiplierState {
    pub actual: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
    pub multipliers: Vec<Vec<f64>>,
}

impl MultiplierState {
    /// Difference of the target logit between input and reference.
    pub fn output_delta(&self, class: usize) -> f64 {
        self.actual.last().expect("output")[class] - self.reference.last().expect("output")[class]
    }

    /// `Σ m · (a - ā)` at layer boundary `depth` (0 = network input).
    pub fn contribution_sum(&self, depth: usize) -> f64 {
        self.multipliers[depth]
            .iter()
            .zip(self.actual[depth].iter().zip(&self.reference[depth]))
            .map(|(m, (a, r))| m * (a - r))
            .sum()
    }
}

pub fn propagate_traced(
    net: &Network,
    x: &[f64],
    reference: &[f64],
    class: usize,
) -> Result<MultiplierState> {
    net.check_input(x.len())?;
    net.check_input(reference.len())?;
    check_class(class)?;
    let actual = net.trace(x);
    let reference = net.trace(reference);
    let multipliers = net.backprop(&actual, Some(&reference), one_hot(class), None);
    Ok(MultiplierState {
        actual,
        reference,
        multipliers,
    })
}

/// Multipliers of the target logit with respect to every input bin.
pub fn propagate_multipliers(
    net: &Network,
    x: &Spectrogram,
    reference: &Spectrogram,
    class: usize,
) -> Result<Vec<f64>> {
    let mut state = propagate_traced(net, x.values(), reference.values(), class)?;
    Ok(std::mem::take(&mut state.multipliers[0]))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DeepShapOptions {
    /// Explain against the single per-bin mean of the background instead
    /// of averaging over every reference.
    pub mean_reference: bool,
}

/// Per-bin DeepSHAP attribution (`D = M x N`, 1x1 grouping).
pub fn deep_shap(
    net: &Network,
    x: &Spectrogram,
    background: &BackgroundSet,
    class: usize,
    options: DeepShapOptions,
) -> Result<Attribution> {
    if background.shape() != net.input_shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} background", net.input_shape().0, net.input_shape().1),
            found: format!("{}x{}", background.shape().0, background.shape().1),
        });
    }
    let mut attr = deep_shap_values(net, x.values(), background, class, options)?;
    attr.axes = Some(x.axes());
    Ok(attr)
}

/// As [`deep_shap`] on a flat frequency-major input.
pub fn deep_shap_values(
    net: &Network,
    x: &[f64],
    background: &BackgroundSet,
    class: usize,
    options: DeepShapOptions,
) -> Result<Attribution> {
    net.check_input(x.len())?;
    check_class(class)?;
    let mean;
    let references: Vec<&[f64]> = if options.mean_reference {
        mean = background.mean();
        vec![&mean]
    } else {
        background.references().iter().map(Vec::as_slice).collect()
    };
    let mut phi = vec![0.0; x.len()];
    let mut base = 0.0;
    for r in &references {
        let state = propagate_traced(net, x, r, class)?;
        for ((p, m), (xi, ri)) in phi
            .iter_mut()
            .zip(&state.multipliers[0])
            .zip(x.iter().zip(r.iter()))
        {
            *p += m * (xi - ri);
        }
        base += state.reference.last().expect("output")[class];
    }
    let n = references.len() as f64;
    phi.iter_mut().for_each(|p| *p /= n);
    let (bins, frames) = net.input_shape();
    let method = if options.mean_reference {
        Method::DeepshapMeanRef
    } else {
        Method::Deepshap
    };
    let mut attr = Attribution::new(method, class, base / n, phi);
    attr.grouping = Some(GridInfo {
        tile_rows: 1,
        tile_cols: 1,
        bins,
        frames,
    });
    attr.samples = Some(references.len());
    attr.output = Some(net.logits(x)[class]);
    Ok(attr)
}

/// `|base + Σφ - f(x)|`.
pub fn summation_check(attr: &Attribution, f_x: f64, base: f64) -> f64 {
    (base + attr.total() - f_x).abs()
}
