//! The three training objectives and their analytic gradients.
//!
//! The multi-view loss on one example is
//! `w_det * CE(det) + w_prob * CE(prob) + lambda * KL(flat(det) || prob)`
//! with `w_det = w_prob = 1/2` unless a term is ablated, and
//! `flat` the temperature-flattened softmax. For tagging, all three
//! terms are computed only on words whose piece spans survive
//! truncation in both views, averaged over those shared words.

use crate::segment::TokenSeq;
use crate::trainer::data::Task;
use crate::trainer::model::{ForwardCache, Gradients, ToyModel};
use crate::trainer::{FlattenTarget, TrainConfig};
use crate::{Error, Result};

const KL_EPS: f64 = 1e-12;

/// One input under both segmentations, with its label(s).
///
/// Classification examples carry exactly one label; tagging examples
/// carry one tag id per pre-tokenized word.
#[derive(Debug, Clone)]
pub struct ExampleViews {
    pub task: Task,
    pub det: TokenSeq,
    pub prob: TokenSeq,
    pub labels: Vec<usize>,
}

/// Per-example loss decomposition.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub loss: f64,
    pub ce_det: f64,
    pub ce_prob: f64,
    pub kl: f64,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Temperature-flattened softmax: `softmax(z / tau)`. `tau = 1` is the
/// plain softmax; large `tau` tends to uniform.
pub fn flatten(logits: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
    softmax(&scaled)
}

/// `KL(p || q) = sum p ln(p / q)`, with `q` clamped below at 1e-12.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi <= 0.0 {
                0.0
            } else {
                pi * (pi.ln() - qi.max(KL_EPS).ln())
            }
        })
        .sum()
}

/// Cross-entropy on the deterministic view only.
pub fn baseline_loss(
    model: &ToyModel,
    views: &ExampleViews,
    config: &TrainConfig,
) -> Result<(LossParts, Gradients)> {
    single_view_ce(model, views.task, &views.det, &views.labels, config, true)
}

/// Cross-entropy on the sampled view only (subword regularization).
pub fn sr_loss(
    model: &ToyModel,
    views: &ExampleViews,
    config: &TrainConfig,
) -> Result<(LossParts, Gradients)> {
    single_view_ce(model, views.task, &views.prob, &views.labels, config, false)
}

fn single_view_ce(
    model: &ToyModel,
    task: Task,
    tokens: &TokenSeq,
    labels: &[usize],
    config: &TrainConfig,
    is_det: bool,
) -> Result<(LossParts, Gradients)> {
    let units = view_units(model, task, tokens, labels, config.max_pieces)?;
    let mut grads = Gradients::zeros_like(model);
    let inv = 1.0 / units.len() as f64;
    let mut ce = 0.0;
    for (cache, label) in &units {
        check_label(*label, model.num_classes())?;
        ce += -cache.probs[*label].max(KL_EPS).ln();
        let mut dz = cache.probs.clone();
        dz[*label] -= 1.0;
        for d in dz.iter_mut() {
            *d *= inv;
        }
        grads.accumulate_from_logits(model, cache, &dz);
    }
    ce *= inv;
    let parts = LossParts {
        loss: ce,
        ce_det: if is_det { ce } else { 0.0 },
        ce_prob: if is_det { 0.0 } else { ce },
        kl: 0.0,
    };
    Ok((parts, grads))
}

/// Forward units of one view: classification yields one pooled unit,
/// tagging one unit per surviving word.
fn view_units(
    model: &ToyModel,
    task: Task,
    tokens: &TokenSeq,
    labels: &[usize],
    max_pieces: usize,
) -> Result<Vec<(ForwardCache, usize)>> {
    if task == Task::Classification {
        // Whole sentence pooled into one unit.
        let ids = model.ids_truncated(tokens, max_pieces);
        let cache = model.forward_ids(&ids)?;
        return Ok(vec![(cache, labels[0])]);
    }
    let mut units = Vec::new();
    for (w, span) in tokens.word_spans.iter().enumerate() {
        if span.end > max_pieces || w >= labels.len() {
            break;
        }
        let ids: Vec<usize> = tokens.pieces[span.clone()]
            .iter()
            .map(|p| model.piece_id(p))
            .collect();
        units.push((model.forward_ids(&ids)?, labels[w]));
    }
    if units.is_empty() {
        return Err(Error::EmptyAfterTruncation);
    }
    Ok(units)
}

fn check_label(label: usize, num_classes: usize) -> Result<()> {
    if label >= num_classes {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes,
        });
    }
    Ok(())
}

/// The multi-view objective with analytic gradients through both KL
/// arguments (unless `detach_flattened` is set).
///
/// Tagging inputs are scored on the words shared by both views after
/// truncation; an example with no shared words is an error the training
/// loop converts into a skip.
pub fn mvr_loss(
    model: &ToyModel,
    views: &ExampleViews,
    config: &TrainConfig,
) -> Result<(LossParts, Gradients)> {
    let (w_det, w_prob) = config.ce_weights();
    let lambda = config.effective_lambda();
    let mut grads = Gradients::zeros_like(model);

    let pairs: Vec<(ForwardCache, ForwardCache, usize)> = if views.task == Task::Classification {
        let det_ids = model.ids_truncated(&views.det, config.max_pieces);
        let prob_ids = model.ids_truncated(&views.prob, config.max_pieces);
        vec![(
            model.forward_ids(&det_ids)?,
            model.forward_ids(&prob_ids)?,
            views.labels[0],
        )]
    } else {
        shared_word_pairs(model, views, config.max_pieces)?
    };

    let inv = 1.0 / pairs.len() as f64;
    let mut parts = LossParts::default();
    for (det, prob, label) in &pairs {
        check_label(*label, model.num_classes())?;
        let ce_det = -det.probs[*label].max(KL_EPS).ln();
        let ce_prob = -prob.probs[*label].max(KL_EPS).ln();
        let p_flat = flatten(&det.logits, config.tau);
        let q = match config.flatten_target {
            FlattenTarget::DetOnly => prob.probs.clone(),
            FlattenTarget::Both => flatten(&prob.logits, config.tau),
        };
        let kl = kl_divergence(&p_flat, &q);
        parts.ce_det += inv * ce_det;
        parts.ce_prob += inv * ce_prob;
        parts.kl += inv * kl;

        let c = model.num_classes();
        let mut dz_det = vec![0.0; c];
        let mut dz_prob = vec![0.0; c];
        for j in 0..c {
            dz_det[j] += w_det * (det.probs[j] - onehot(j, *label));
            dz_prob[j] += w_prob * (prob.probs[j] - onehot(j, *label));
        }
        if lambda > 0.0 {
            if !config.detach_flattened {
                // d/dz_det of KL(softmax(z_det/tau) || q).
                for j in 0..c {
                    let log_ratio = p_flat[j].max(KL_EPS).ln() - q[j].max(KL_EPS).ln();
                    dz_det[j] += lambda / config.tau * p_flat[j] * (log_ratio - kl);
                }
            }
            match config.flatten_target {
                FlattenTarget::DetOnly => {
                    for j in 0..c {
                        dz_prob[j] += lambda * (q[j] - p_flat[j]);
                    }
                }
                FlattenTarget::Both => {
                    for j in 0..c {
                        dz_prob[j] += lambda / config.tau * (q[j] - p_flat[j]);
                    }
                }
            }
        }
        for d in dz_det.iter_mut().chain(dz_prob.iter_mut()) {
            *d *= inv;
        }
        grads.accumulate_from_logits(model, det, &dz_det);
        grads.accumulate_from_logits(model, prob, &dz_prob);
    }
    parts.loss = w_det * parts.ce_det + w_prob * parts.ce_prob + lambda * parts.kl;
    Ok((parts, grads))
}

/// Forward caches for the words present in both views after truncation.
fn shared_word_pairs(
    model: &ToyModel,
    views: &ExampleViews,
    max_pieces: usize,
) -> Result<Vec<(ForwardCache, ForwardCache, usize)>> {
    let num_words = views
        .det
        .word_spans
        .len()
        .min(views.prob.word_spans.len())
        .min(views.labels.len());
    let mut out = Vec::new();
    for w in 0..num_words {
        let det_span = &views.det.word_spans[w];
        let prob_span = &views.prob.word_spans[w];
        if det_span.end > max_pieces || prob_span.end > max_pieces {
            continue;
        }
        let det_ids: Vec<usize> = views.det.pieces[det_span.clone()]
            .iter()
            .map(|p| model.piece_id(p))
            .collect();
        let prob_ids: Vec<usize> = views.prob.pieces[prob_span.clone()]
            .iter()
            .map(|p| model.piece_id(p))
            .collect();
        out.push((
            model.forward_ids(&det_ids)?,
            model.forward_ids(&prob_ids)?,
            views.labels[w],
        ));
    }
    if out.is_empty() {
        return Err(Error::NoSharedWords);
    }
    Ok(out)
}

fn onehot(j: usize, label: usize) -> f64 {
    if j == label {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::UNK_PIECE;
    use crate::trainer::data::Task;
    use crate::trainer::{AblateTerm, Mode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(pieces: &[&str]) -> TokenSeq {
        TokenSeq {
            pieces: pieces.iter().map(|p| p.to_string()).collect(),
            word_spans: vec![0..pieces.len()],
        }
    }

    fn small_model(dim: usize, classes: usize, seed: u64) -> ToyModel {
        let inventory: Vec<String> = [UNK_PIECE, "a", "b", "c", "ab", "bc"]
            .iter()
            .map(|p| p.to_string())
            .collect();
        let mut m = ToyModel::new(&inventory, dim, classes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.randomize(&mut rng, 0.5);
        m
    }

    #[test]
    fn flatten_tau_one_is_softmax() {
        let logits = vec![2f64.ln(), 0.0];
        let p = flatten(&logits, 1.0);
        assert_eq!(p, softmax(&logits));
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn flatten_large_tau_tends_uniform() {
        let p = flatten(&[5.0, -3.0, 1.0], 1e9);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn flatten_tau_two_hand_case() {
        // tau=2 on logits (ln 4, 0) is softmax(ln 2, 0) = (2/3, 1/3).
        let p = flatten(&[4f64.ln(), 0.0], 2.0);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kl_hand_values() {
        let p = vec![0.75, 0.25];
        let q = vec![0.5, 0.5];
        let expect = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((kl_divergence(&p, &q) - expect).abs() < 1e-12);
        assert!((expect - 0.1308).abs() < 1e-4);

        assert_eq!(kl_divergence(&q, &q), 0.0);
        let onehot = vec![1.0, 0.0];
        assert!((kl_divergence(&onehot, &q) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_non_negative() {
        let p = softmax(&[0.3, -1.2, 2.0]);
        let q = softmax(&[-0.5, 0.1, 0.4]);
        assert!(kl_divergence(&p, &q) >= 0.0);
    }

    #[test]
    fn identical_views_reduce_to_single_ce() {
        let m = small_model(4, 3, 1);
        let views = ExampleViews {
            task: Task::Classification,
            det: seq(&["a", "b"]),
            prob: seq(&["a", "b"]),
            labels: vec![1],
        };
        let cfg = TrainConfig {
            mode: Mode::Mvr,
            lambda: 0.7,
            ..Default::default()
        };
        let (parts, _) = mvr_loss(&m, &views, &cfg).unwrap();
        assert!(parts.kl.abs() < 1e-15);
        assert!((parts.loss - parts.ce_det).abs() < 1e-12);
        assert_eq!(parts.ce_det, parts.ce_prob);
    }

    #[test]
    fn lambda_zero_is_mean_of_ces() {
        let m = small_model(4, 3, 2);
        let views = ExampleViews {
            task: Task::Classification,
            det: seq(&["ab"]),
            prob: seq(&["a", "b"]),
            labels: vec![0],
        };
        let cfg = TrainConfig {
            mode: Mode::Mvr,
            lambda: 0.0,
            ..Default::default()
        };
        let (parts, _) = mvr_loss(&m, &views, &cfg).unwrap();
        assert!((parts.loss - 0.5 * (parts.ce_det + parts.ce_prob)).abs() < 1e-12);
    }

    #[test]
    fn ablate_consistency_matches_two_ce_average() {
        let m = small_model(4, 3, 3);
        let views = ExampleViews {
            task: Task::Classification,
            det: seq(&["ab", "c"]),
            prob: seq(&["a", "bc"]),
            labels: vec![2],
        };
        let mut cfg = TrainConfig {
            mode: Mode::Mvr,
            lambda: 0.6,
            ..Default::default()
        };
        cfg.ablate.insert(AblateTerm::Consistency);
        let (parts, _) = mvr_loss(&m, &views, &cfg).unwrap();
        assert!((parts.loss - 0.5 * (parts.ce_det + parts.ce_prob)).abs() < 1e-12);

        // Loss-equivalent to averaging the SR and det-only CE objectives.
        let (sr, _) = sr_loss(&m, &views, &cfg).unwrap();
        let (det, _) = baseline_loss(&m, &views, &cfg).unwrap();
        assert!((parts.loss - 0.5 * (sr.loss + det.loss)).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_flatten_gives_nonzero_kl_on_identical_logits() {
        // With det-only flattening and tau != 1, identical logits still
        // produce nonzero KL because only one side is flattened.
        let m = small_model(4, 3, 4);
        let views = ExampleViews {
            task: Task::Classification,
            det: seq(&["a", "b"]),
            prob: seq(&["a", "b"]),
            labels: vec![0],
        };
        let cfg = TrainConfig {
            mode: Mode::Mvr,
            lambda: 0.5,
            tau: 2.0,
            ..Default::default()
        };
        let (parts, _) = mvr_loss(&m, &views, &cfg).unwrap();
        assert!(parts.kl > 0.0);
    }

    #[test]
    fn decomposition_is_exact() {
        let m = small_model(5, 4, 5);
        let views = ExampleViews {
            task: Task::Classification,
            det: seq(&["ab", "c"]),
            prob: seq(&["a", "b", "c"]),
            labels: vec![3],
        };
        let cfg = TrainConfig {
            mode: Mode::Mvr,
            lambda: 0.6,
            tau: 2.0,
            ..Default::default()
        };
        let (parts, _) = mvr_loss(&m, &views, &cfg).unwrap();
        let reassembled = 0.5 * parts.ce_det + 0.5 * parts.ce_prob + 0.6 * parts.kl;
        assert!((parts.loss - reassembled).abs() < 1e-12);
    }

    #[test]
    fn tagging_no_shared_words_errors() {
        let m = small_model(4, 2, 6);
        // Prob view over-segments the only word past the truncation cap.
        let views = ExampleViews {
            task: Task::Tagging,
            det: seq(&["ab"]),
            prob: TokenSeq {
                pieces: vec!["a".into(), "b".into(), "c".into()],
                word_spans: vec![0..3],
            },
            labels: vec![0, 1],
        };
        let cfg = TrainConfig {
            mode: Mode::Mvr,
            max_pieces: 2,
            ..Default::default()
        };
        assert!(matches!(
            mvr_loss(&m, &views, &cfg),
            Err(Error::NoSharedWords)
        ));
    }
}
