//! Diagnostic statistics over corpora and prediction files:
//! segmentation granularity, entropy bucketing, ensemble-KL comparison,
//! and grouped score deltas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::segment::TokenSeq;
use crate::trainer::kl_divergence;
use crate::{Error, Result};

/// Pieces-per-word histogram buckets: 1..=9 and a terminal 9+ bucket.
pub const GRANULARITY_BUCKETS: usize = 10;

/// One model prediction on one example (JSON-lines record).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub group: String,
    pub gold: usize,
    pub probs: Vec<f64>,
}

/// Per-group pieces-per-word distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupGranularity {
    pub group: String,
    /// Fractions over buckets 1..=9 pieces and 9+; sums to 1.
    pub histogram: Vec<f64>,
    pub mean_pieces_per_word: f64,
    pub num_words: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GranularityReport {
    pub groups: Vec<GroupGranularity>,
}

impl GranularityReport {
    pub fn group(&self, name: &str) -> Option<&GroupGranularity> {
        self.groups.iter().find(|g| g.group == name)
    }
}

/// Pieces-per-word statistics per group label, from already-encoded
/// sentences. Sentences must arrive as (group, token sequence) pairs.
pub fn granularity<'a, I>(encoded: I) -> Result<GranularityReport>
where
    I: IntoIterator<Item = (&'a str, TokenSeq)>,
{
    // counts[group] = (per-bucket word counts, total pieces, total words)
    let mut counts: BTreeMap<String, (Vec<u64>, u64, u64)> = BTreeMap::new();
    for (group, tokens) in encoded {
        let entry = counts
            .entry(group.to_string())
            .or_insert_with(|| (vec![0; GRANULARITY_BUCKETS], 0, 0));
        for span in &tokens.word_spans {
            let pieces = span.len();
            let bucket = pieces.clamp(1, GRANULARITY_BUCKETS) - 1;
            entry.0[bucket] += 1;
            entry.1 += pieces as u64;
            entry.2 += 1;
        }
    }
    if counts.is_empty() || counts.values().all(|(_, _, w)| *w == 0) {
        return Err(Error::EmptyCorpus);
    }
    let groups = counts
        .into_iter()
        .filter(|(_, (_, _, words))| *words > 0)
        .map(|(group, (hist, pieces, words))| GroupGranularity {
            group,
            histogram: hist.iter().map(|&c| c as f64 / words as f64).collect(),
            mean_pieces_per_word: pieces as f64 / words as f64,
            num_words: words as usize,
        })
        .collect();
    Ok(GranularityReport { groups })
}

/// Shannon entropy in nats; lies in [0, ln C] for a C-class distribution.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub acc_a: f64,
    pub acc_b: f64,
    /// Accuracy delta (B - A) for examples bucketed by run A's entropy.
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyBucketReport {
    pub buckets: Vec<EntropyBucket>,
}

/// Bucket examples by the entropy of run A's prediction (equal-width
/// bins over [0, ln C]) and report the per-bucket accuracy delta of run
/// B over run A.
pub fn entropy_buckets(
    run_a: &[Prediction],
    run_b: &[Prediction],
    num_buckets: usize,
) -> Result<EntropyBucketReport> {
    check_aligned(run_a, run_b)?;
    if num_buckets == 0 || run_a.is_empty() {
        return Err(Error::InvalidConfig(
            "need at least one bucket and one example".to_string(),
        ));
    }
    let num_classes = run_a[0].probs.len();
    let max_h = (num_classes as f64).ln();
    let width = max_h / num_buckets as f64;
    let mut tallies: Vec<(usize, usize, usize)> = vec![(0, 0, 0); num_buckets];
    for (a, b) in run_a.iter().zip(run_b) {
        let h = entropy(&a.probs);
        let bucket = ((h / width) as usize).min(num_buckets - 1);
        let t = &mut tallies[bucket];
        t.0 += 1;
        if argmax(&a.probs) == a.gold {
            t.1 += 1;
        }
        if argmax(&b.probs) == b.gold {
            t.2 += 1;
        }
    }
    let buckets = tallies
        .into_iter()
        .enumerate()
        .map(|(i, (count, hits_a, hits_b))| {
            let denom = count.max(1) as f64;
            let acc_a = hits_a as f64 / denom;
            let acc_b = hits_b as f64 / denom;
            EntropyBucket {
                lo: i as f64 * width,
                hi: (i + 1) as f64 * width,
                count,
                acc_a,
                acc_b,
                delta: acc_b - acc_a,
            }
        })
        .collect();
    Ok(EntropyBucketReport { buckets })
}

/// Mean KL from the (base, SR) ensemble to a test run, per group.
///
/// The ensemble distribution is the arithmetic mean of the base and SR
/// predictive distributions on each example.
pub fn ensemble_kl(
    pred_base: &[Prediction],
    pred_sr: &[Prediction],
    pred_test: &[Prediction],
) -> Result<BTreeMap<String, f64>> {
    check_aligned(pred_base, pred_sr)?;
    check_aligned(pred_base, pred_test)?;
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for ((base, sr), test) in pred_base.iter().zip(pred_sr).zip(pred_test) {
        let ensemble: Vec<f64> = base
            .probs
            .iter()
            .zip(&sr.probs)
            .map(|(&x, &y)| 0.5 * (x + y))
            .collect();
        let kl = kl_divergence(&ensemble, &test.probs);
        let entry = sums.entry(base.group.clone()).or_insert((0.0, 0));
        entry.0 += kl;
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(g, (total, n))| (g, total / n as f64))
        .collect())
}

/// Per-group accuracy difference (run B minus run A).
pub fn grouped_delta(
    run_a: &[Prediction],
    run_b: &[Prediction],
) -> Result<BTreeMap<String, f64>> {
    check_aligned(run_a, run_b)?;
    let mut tallies: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (a, b) in run_a.iter().zip(run_b) {
        let t = tallies.entry(a.group.clone()).or_insert((0, 0, 0));
        t.0 += 1;
        if argmax(&a.probs) == a.gold {
            t.1 += 1;
        }
        if argmax(&b.probs) == b.gold {
            t.2 += 1;
        }
    }
    Ok(tallies
        .into_iter()
        .map(|(g, (n, hits_a, hits_b))| (g, (hits_b as f64 - hits_a as f64) / n as f64))
        .collect())
}

fn check_aligned(a: &[Prediction], b: &[Prediction]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::MisalignedPredictions {
            index: a.len().min(b.len()),
            left: format!("{} records", a.len()),
            right: format!("{} records", b.len()),
        });
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x.id != y.id {
            return Err(Error::MisalignedPredictions {
                index: i,
                left: x.id.clone(),
                right: y.id.clone(),
            });
        }
    }
    Ok(())
}

fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Parse a JSON-lines prediction file.
pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
