//! Shapley-value attribution for spectrogram-based binary classifiers.
//!
//! The crate is organized as a pipeline: [`signal`] turns audio into
//! spectrograms, [`model`] runs the classifier, [`shapley`] and
//! [`deepshap`] attribute its logits to spectro-temporal bins, and
//! [`analysis`] / [`render`] summarise the attributions. [`synth`]
//! generates labelled corpora with known artefacts.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod deepshap;
pub mod error;
pub mod model;
pub mod render;
pub mod shapley;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Output classes of a countermeasure. The index is the logit position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Bonafide,
    Spoof,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::Bonafide, Class::Spoof];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Class> {
        Class::BOTH.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Bonafide => "bonafide",
            Class::Spoof => "spoof",
        }
    }
}

impl std::fmt::Display for Class {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Class {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonafide" | "bona_fide" | "0" => Ok(Class::Bonafide),
            "spoof" | "1" => Ok(Class::Spoof),
            other => Err(Error::InvalidArgument(format!(
                "unknown class '{other}' (expected bonafide or spoof)"
            ))),
        }
    }
}
