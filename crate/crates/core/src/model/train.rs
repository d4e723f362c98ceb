use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Network, ParamGrads, NUM_CLASSES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
}

/// Minibatch SGD settings. Shuffling is the only randomness and is drawn
/// from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
    #[serde(default)]
    pub momentum: f64,
    /// L2 penalty coefficient applied to weights (not biases).
    #[serde(default)]
    pub weight_decay: f64,
    /// L1 penalty on the output layer's weights, applied as a soft
    /// threshold after each step. It ramps linearly from zero over the
    /// first half of training so the earlier layers can pick up a signal
    /// before unhelpful output weights are pruned.
    #[serde(default)]
    pub output_l1: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.01,
            batch_size: 8,
            seed: 0,
            loss: Loss::CrossEntropy,
            momentum: 0.9,
            weight_decay: 0.0,
            output_l1: 0.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        if !(self.output_l1 >= 0.0) {
            return Err(Error::invalid("output L1 penalty must be non-negative"));
        }
        Ok(())
    }
}

/// A flat frequency-major input with its class index.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub input: Vec<f64>,
    pub label: usize,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Argmax of the logits; ties go to class 0.
pub fn predict(net: &Network, input: &[f64]) -> usize {
    let [a, b] = net.logits(input);
    usize::from(b > a)
}

pub fn accuracy(net: &Network, examples: &[LabeledExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let correct = examples
        .iter()
        .filter(|e| predict(net, &e.input) == e.label)
        .count();
    correct as f64 / examples.len() as f64
}

/// Fraction of the L1 strength in force during `epoch`.
fn l1_ramp(epoch: usize, epochs: usize) -> f64 {
    (2.0 * epoch as f64 / epochs as f64).min(1.0)
}

/// Trains a copy of `net`, returning it with the mean loss of each epoch.
pub fn train_sgd(
    net: &Network,
    corpus: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    for (i, ex) in corpus.iter().enumerate() {
        net.check_input(ex.input.len())
            .map_err(|e| Error::invalid(format!("example {i}: {e}")))?;
        if ex.label >= NUM_CLASSES {
            return Err(Error::invalid(format!(
                "example {i}: label {} out of range",
                ex.label
            )));
        }
    }
    if (0..NUM_CLASSES).any(|c| corpus.iter().all(|e| e.label != c)) {
        return Err(Error::invalid("training corpus must contain both classes"));
    }

    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grads = ParamGrads::zeros(&net);
    let mut velocity = ParamGrads::zeros(&net);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    let output_layer = net.layers().iter().rposition(|l| l.params().is_some());
    for epoch in 0..cfg.epochs {
        let shrink = cfg.learning_rate * cfg.output_l1 * l1_ramp(epoch, cfg.epochs);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &idx in batch {
                let ex = &corpus[idx];
                let acts = net.trace(&ex.input);
                let probs = softmax(acts.last().expect("logits"));
                epoch_loss -= probs[ex.label].max(f64::MIN_POSITIVE).ln();
                let mut seed = probs;
                seed[ex.label] -= 1.0;
                net.backprop(&acts, None, seed, Some(&mut grads));
            }
            let scale = 1.0 / batch.len() as f64;
            for (layer_idx, layer) in net.layers_mut().iter_mut().enumerate() {
                let sparse = shrink > 0.0 && Some(layer_idx) == output_layer;
                let Some((weights, bias)) = layer.params_mut() else {
                    continue;
                };
                let vw = &mut velocity.weights[layer_idx];
                for ((w, g), v) in weights
                    .iter_mut()
                    .zip(&grads.weights[layer_idx])
                    .zip(vw.iter_mut())
                {
                    *v = cfg.momentum * *v + g * scale + cfg.weight_decay * *w;
                    *w -= cfg.learning_rate * *v;
                    if sparse {
                        *w = w.signum() * (w.abs() - shrink).max(0.0);
                    }
                }
                let vb = &mut velocity.bias[layer_idx];
                for ((b, g), v) in bias
                    .iter_mut()
                    .zip(&grads.bias[layer_idx])
                    .zip(vb.iter_mut())
                {
                    *v = cfg.momentum * *v + g * scale;
                    *b -= cfg.learning_rate * *v;
                }
            }
        }
        trace.push(epoch_loss / corpus.len() as f64);
    }
    Ok((net, trace))
}
