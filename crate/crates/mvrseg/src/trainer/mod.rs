//! Fine-tuning with baseline, subword-regularization, and multi-view
//! objectives on a small linear model with analytic gradients.
//!
//! The multi-view objective combines a cross-entropy on the
//! deterministic view, a cross-entropy on a freshly sampled view, and a
//! weighted KL consistency term between the two predictive
//! distributions, with an optional temperature that flattens the
//! deterministic-view distribution before the KL. Inference always uses
//! the deterministic view.

mod data;
mod loss;
mod model;
mod train;

pub use data::{Dataset, RawExample, Task};
pub use loss::{
    baseline_loss, flatten, kl_divergence, mvr_loss, softmax, sr_loss, ExampleViews, LossParts,
};
pub use model::{Gradients, ToyModel};
pub use train::{accuracy, predict, train, EpochMetrics, TrainOutcome};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::segment::SegmenterConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Sr,
    Mvr,
}

/// Which view(s) get the flattening temperature before the KL term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlattenTarget {
    /// Flatten the deterministic-view distribution only (the default,
    /// asymmetric form).
    DetOnly,
    Both,
}

/// Loss components that can be ablated out of the multi-view objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblateTerm {
    DetCe,
    ProbCe,
    Consistency,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Consistency weight lambda (>= 0).
    pub lambda: f64,
    /// Flattening temperature tau (> 0).
    pub tau: f64,
    pub flatten_target: FlattenTarget,
    pub ablate: BTreeSet<AblateTerm>,
    /// Treat the flattened distribution as a constant KL target instead
    /// of a differentiable term.
    pub detach_flattened: bool,
    pub segmenter: SegmenterConfig,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Truncation length, applied per view independently.
    pub max_pieces: usize,
    /// Embedding dimension of the toy model.
    pub dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Baseline,
            lambda: 0.2,
            tau: 1.0,
            flatten_target: FlattenTarget::DetOnly,
            ablate: BTreeSet::new(),
            detach_flattened: false,
            segmenter: SegmenterConfig::default(),
            learning_rate: 0.1,
            momentum: 0.0,
            epochs: 20,
            batch_size: 8,
            seed: 0,
            max_pieces: 64,
            dim: 8,
        }
    }
}

impl TrainConfig {
    /// SR defaults: merge dropout p = 0.1, sampling temperature
    /// alpha = 0.6.
    pub fn sr_defaults() -> Self {
        TrainConfig {
            mode: Mode::Sr,
            segmenter: SegmenterConfig {
                dropout_p: 0.1,
                alpha: 0.6,
                rng_seed: 0,
            },
            ..Default::default()
        }
    }

    /// Multi-view defaults for the BPE family: lambda = 0.2, p = 0.2.
    pub fn mvr_bpe_defaults() -> Self {
        TrainConfig {
            mode: Mode::Mvr,
            lambda: 0.2,
            segmenter: SegmenterConfig {
                dropout_p: 0.2,
                alpha: 0.6,
                rng_seed: 0,
            },
            ..Default::default()
        }
    }

    /// Multi-view defaults for the unigram family: lambda = 0.6,
    /// alpha = 0.2.
    pub fn mvr_ulm_defaults() -> Self {
        TrainConfig {
            mode: Mode::Mvr,
            lambda: 0.6,
            segmenter: SegmenterConfig {
                dropout_p: 0.2,
                alpha: 0.2,
                rng_seed: 0,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !self.ablate.is_empty() && self.mode != Mode::Mvr {
            return Err(Error::InvalidConfig(
                "ablation flags are only valid in MVR mode".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.segmenter.dropout_p) {
            return Err(Error::InvalidConfig(format!(
                "dropout_p must be in [0, 1], got {}",
                self.segmenter.dropout_p
            )));
        }
        if !(0.0..=1.0).contains(&self.segmenter.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in [0, 1], got {}",
                self.segmenter.alpha
            )));
        }
        if self.max_pieces == 0 || self.batch_size == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig(
                "max_pieces, batch_size, and dim must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Weights of the two cross-entropy terms after ablation, rescaled
    /// so the remaining CE weights sum to one.
    pub(crate) fn ce_weights(&self) -> (f64, f64) {
        let det = !self.ablate.contains(&AblateTerm::DetCe);
        let prob = !self.ablate.contains(&AblateTerm::ProbCe);
        match (det, prob) {
            (true, true) => (0.5, 0.5),
            (true, false) => (1.0, 0.0),
            (false, true) => (0.0, 1.0),
            (false, false) => (0.0, 0.0),
        }
    }

    pub(crate) fn effective_lambda(&self) -> f64 {
        if self.ablate.contains(&AblateTerm::Consistency) {
            0.0
        } else {
            self.lambda
        }
    }
}
