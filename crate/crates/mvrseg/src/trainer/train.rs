//! Minibatch SGD over the three objectives, with cached deterministic
//! views and a fresh sampled view every step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::segment::{example_rng, Segmenter, TokenSeq};
use crate::trainer::data::{Dataset, Task};
use crate::trainer::loss::{baseline_loss, mvr_loss, sr_loss, ExampleViews, LossParts};
use crate::trainer::model::{Gradients, ToyModel};
use crate::trainer::{Mode, TrainConfig};
use crate::{Error, Result};

/// One JSON metrics record per epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub ce_det: f64,
    pub ce_prob: f64,
    pub kl: f64,
    pub train_acc: f64,
    pub dev_acc: Option<f64>,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub metrics: Vec<EpochMetrics>,
}

/// Fine-tune a fresh toy model on `dataset`. Deterministic given
/// `config.seed`: the sampled view of example `i` is drawn from an RNG
/// stream keyed on (seed, i), advanced once per optimization step.
pub fn train(
    dataset: &Dataset,
    dev: Option<&Dataset>,
    segmenter: &Segmenter,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let num_classes = dataset.label_names.len();
    for ex in &dataset.examples {
        for &label in &ex.labels {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    num_classes,
                });
            }
        }
    }

    let inventory = segmenter.piece_inventory();
    let mut model = ToyModel::new(&inventory, config.dim, num_classes)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    model.randomize(&mut init_rng, 0.1);

    let det_views: Vec<TokenSeq> = dataset
        .examples
        .iter()
        .map(|ex| segmenter.encode_det(&ex.text))
        .collect();
    let mut streams: Vec<ChaCha8Rng> = (0..dataset.examples.len())
        .map(|i| example_rng(config.seed, i as u64))
        .collect();

    let mut velocity = Gradients::zeros_like(&model);
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..dataset.examples.len()).collect();

    for epoch in 0..config.epochs {
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9));
        indices.shuffle(&mut shuffle_rng);

        let mut sums = LossParts::default();
        let mut contributed = 0usize;
        let mut skipped = 0usize;

        for batch in indices.chunks(config.batch_size) {
            let mut batch_grads = Gradients::zeros_like(&model);
            let mut batch_count = 0usize;
            for &i in batch {
                let ex = &dataset.examples[i];
                let prob = match config.mode {
                    Mode::Baseline => det_views[i].clone(),
                    _ => segmenter.encode_sampled(&ex.text, &config.segmenter, &mut streams[i]),
                };
                let views = ExampleViews {
                    task: dataset.task,
                    det: det_views[i].clone(),
                    prob,
                    labels: ex.labels.clone(),
                };
                let result = match config.mode {
                    Mode::Baseline => baseline_loss(&model, &views, config),
                    Mode::Sr => sr_loss(&model, &views, config),
                    Mode::Mvr => mvr_loss(&model, &views, config),
                };
                let (parts, grads) = match result {
                    Ok(r) => r,
                    Err(Error::NoSharedWords) | Err(Error::EmptyAfterTruncation) => {
                        skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                sums.loss += parts.loss;
                sums.ce_det += parts.ce_det;
                sums.ce_prob += parts.ce_prob;
                sums.kl += parts.kl;
                contributed += 1;
                batch_count += 1;
                batch_grads.add_scaled(&grads, 1.0);
            }
            if batch_count == 0 {
                continue;
            }
            batch_grads.scale(1.0 / batch_count as f64);
            velocity.scale(config.momentum);
            velocity.add_scaled(&batch_grads, 1.0);
            model.apply_update(&velocity, config.learning_rate);
        }

        let denom = contributed.max(1) as f64;
        let train_acc = accuracy(&model, dataset, segmenter, config.max_pieces)?;
        let dev_acc = match dev {
            Some(d) => Some(accuracy(&model, d, segmenter, config.max_pieces)?),
            None => None,
        };
        metrics.push(EpochMetrics {
            epoch,
            loss: sums.loss / denom,
            ce_det: sums.ce_det / denom,
            ce_prob: sums.ce_prob / denom,
            kl: sums.kl / denom,
            train_acc,
            dev_acc,
            skipped,
        });
    }
    Ok(TrainOutcome { model, metrics })
}

/// Accuracy under the deterministic view (the inference path). Tagging
/// counts words that survive truncation.
pub fn accuracy(
    model: &ToyModel,
    dataset: &Dataset,
    segmenter: &Segmenter,
    max_pieces: usize,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for ex in &dataset.examples {
        let (labels, _) = match predict(model, &ex.text, segmenter, max_pieces, dataset.task) {
            Ok(p) => p,
            Err(Error::EmptyAfterTruncation) => continue,
            Err(e) => return Err(e),
        };
        for (w, pred) in labels.iter().enumerate() {
            if w >= ex.labels.len() {
                break;
            }
            total += 1;
            if *pred == ex.labels[w] {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(correct as f64 / total as f64)
}

/// Inference on the deterministic view only; sampling never runs here.
/// Returns argmax label(s) and the probability vector(s).
pub fn predict(
    model: &ToyModel,
    sentence: &str,
    segmenter: &Segmenter,
    max_pieces: usize,
    task: Task,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let tokens = segmenter.encode_det(sentence);
    let probs: Vec<Vec<f64>> = match task {
        Task::Classification => vec![model.forward_classification(&tokens, max_pieces)?],
        Task::Tagging => model.forward_tagging(&tokens, max_pieces)?,
    };
    let labels = probs.iter().map(|p| argmax(p)).collect();
    Ok((labels, probs))
}

fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}
