//! Vocabulary model training and serialization.
//!
//! Two model families are supported: [`BpeModel`], an ordered merge table
//! learned by greedy pair counting, and [`UnigramModel`], a piece
//! log-probability table learned by EM with likelihood-based pruning.
//! Both are trained from [`CorpusStats`] produced by [`count_corpus`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::lattice::{self, SegmentationLattice};
use crate::{Error, Result};

/// File header for the BPE merges format.
pub const BPE_HEADER: &str = "#mvrseg-bpe-v1";
/// File header for the unigram vocab format.
pub const ULM_HEADER: &str = "#mvrseg-ulm-v1";

/// Reserved piece emitted for characters outside the vocabulary.
pub const UNK_PIECE: &str = "<unk>";

/// Default continuation marker for non-word-initial BPE pieces.
pub const BPE_CONTINUATION_MARKER: &str = "##";
/// Default word-initial marker for unigram pieces.
pub const ULM_WORD_MARKER: &str = "\u{2581}";

/// Word counts and character inventory from whitespace pre-tokenization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStats {
    word_counts: BTreeMap<String, u64>,
    chars: BTreeSet<char>,
}

impl CorpusStats {
    /// Build stats directly from word counts (mainly for tests and tools).
    pub fn from_counts(word_counts: BTreeMap<String, u64>) -> Self {
        let chars = word_counts.keys().flat_map(|w| w.chars()).collect();
        CorpusStats { word_counts, chars }
    }

    pub fn word_counts(&self) -> &BTreeMap<String, u64> {
        &self.word_counts
    }

    pub fn chars(&self) -> &BTreeSet<char> {
        &self.chars
    }

    pub fn char_inventory_size(&self) -> usize {
        self.chars.len()
    }

    pub fn total_words(&self) -> u64 {
        self.word_counts.values().sum()
    }
}

/// Count words (whitespace-split) and characters over a corpus of sentences.
pub fn count_corpus<I, S>(corpus: I) -> Result<CorpusStats>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    for sentence in corpus {
        for word in sentence.as_ref().split_whitespace() {
            *word_counts.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(CorpusStats::from_counts(word_counts))
}

/// Ordered merge table plus vocabulary for greedy merge segmentation.
#[derive(Debug, Clone)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    vocab: BTreeSet<String>,
    continuation_marker: String,
    ranks: HashMap<(String, String), usize>,
}

impl PartialEq for BpeModel {
    fn eq(&self, other: &Self) -> bool {
        self.merges == other.merges
            && self.vocab == other.vocab
            && self.continuation_marker == other.continuation_marker
    }
}

impl BpeModel {
    pub fn new(merges: Vec<(String, String)>, vocab: BTreeSet<String>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        BpeModel {
            merges,
            vocab,
            continuation_marker: BPE_CONTINUATION_MARKER.to_string(),
            ranks,
        }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    pub fn continuation_marker(&self) -> &str {
        &self.continuation_marker
    }

    /// Merge priority of a (left, right) pair, 0 = highest.
    pub fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks
            .get(&(left.to_string(), right.to_string()))
            .copied()
    }

    pub fn knows_char(&self, c: char) -> bool {
        self.vocab.contains(c.to_string().as_str())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file_str(&std::fs::read_to_string(path)?)
    }

    /// Render in the merges file format.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(BPE_HEADER);
        out.push('\n');
        // Single-character vocabulary entries are not derivable from the
        // merge list alone; a comment line carries them so that
        // load(save(m)) == m.
        let singles: String = self
            .vocab
            .iter()
            .filter(|p| p.chars().count() == 1)
            .cloned()
            .collect();
        if !singles.is_empty() {
            let _ = writeln!(out, "#chars {singles}");
        }
        for (l, r) in &self.merges {
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn from_file_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, line)) if line == BPE_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header {BPE_HEADER:?}"),
                })
            }
        }
        let mut vocab: BTreeSet<String> = BTreeSet::new();
        let mut merges = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if let Some(chars) = line.strip_prefix("#chars ") {
                vocab.extend(chars.chars().map(|c| c.to_string()));
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let (left, right) = match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => (l, r),
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected \"left right\", got {line:?}"),
                    })
                }
            };
            vocab.extend(left.chars().map(|c| c.to_string()));
            vocab.extend(right.chars().map(|c| c.to_string()));
            vocab.insert(format!("{left}{right}"));
            merges.push((left.to_string(), right.to_string()));
        }
        Ok(BpeModel::new(merges, vocab))
    }
}

/// Learn `num_merges` BPE merges by greedy pair-frequency counting.
///
/// Pair counts are weighted by word frequency; count ties break
/// lexicographically on (left, right). Training stops early when no pair
/// occurs at least twice.
pub fn train_bpe(stats: &CorpusStats, num_merges: usize) -> BpeModel {
    let mut words: Vec<(Vec<String>, u64)> = stats
        .word_counts
        .iter()
        .map(|(w, &c)| (w.chars().map(|ch| ch.to_string()).collect(), c))
        .collect();
    let mut vocab: BTreeSet<String> = stats.chars.iter().map(|c| c.to_string()).collect();
    let mut merges = Vec::with_capacity(num_merges);

    for _ in 0..num_merges {
        let mut pair_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (pieces, count) in &words {
            for pair in pieces.windows(2) {
                *pair_counts
                    .entry((pair[0].clone(), pair[1].clone()))
                    .or_insert(0) += count;
            }
        }
        // BTreeMap iterates in ascending pair order, so a strict `>` keeps
        // the lexicographically smallest pair among equal counts.
        let best = pair_counts
            .into_iter()
            .fold(None::<((String, String), u64)>, |acc, (pair, count)| {
                match &acc {
                    Some((_, best_count)) if count <= *best_count => acc,
                    _ => Some((pair, count)),
                }
            });
        let (pair, count) = match best {
            Some(b) => b,
            None => break,
        };
        if count < 2 {
            break;
        }
        let merged = format!("{}{}", pair.0, pair.1);
        vocab.insert(merged.clone());
        for (pieces, _) in &mut words {
            apply_merge(pieces, &pair.0, &pair.1, &merged);
        }
        merges.push(pair);
    }
    BpeModel::new(merges, vocab)
}

/// Replace non-overlapping (left, right) occurrences left to right.
fn apply_merge(pieces: &mut Vec<String>, left: &str, right: &str, merged: &str) {
    let mut out = Vec::with_capacity(pieces.len());
    let mut i = 0;
    while i < pieces.len() {
        if i + 1 < pieces.len() && pieces[i] == left && pieces[i + 1] == right {
            out.push(merged.to_string());
            i += 2;
        } else {
            out.push(std::mem::take(&mut pieces[i]));
            i += 1;
        }
    }
    *pieces = out;
}

/// Piece → log-probability table for lattice segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramModel {
    pieces: BTreeMap<String, f64>,
    unk_log_prob: f64,
    word_marker: String,
}

impl UnigramModel {
    /// Build a model from piece log-probabilities (natural log).
    /// `unk_log_prob` defaults to the minimum piece score minus 10.
    pub fn new(pieces: BTreeMap<String, f64>) -> Self {
        let min = pieces
            .values()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let unk_log_prob = if min.is_finite() { min - 10.0 } else { -30.0 };
        UnigramModel {
            pieces,
            unk_log_prob,
            word_marker: ULM_WORD_MARKER.to_string(),
        }
    }

    /// Build a model from raw (unnormalized) probabilities.
    pub fn from_probs(probs: BTreeMap<String, f64>) -> Self {
        let total: f64 = probs.values().sum();
        let pieces = probs
            .into_iter()
            .map(|(p, v)| (p, (v / total).ln()))
            .collect();
        UnigramModel::new(pieces)
    }

    pub fn pieces(&self) -> &BTreeMap<String, f64> {
        &self.pieces
    }

    pub fn log_prob(&self, piece: &str) -> Option<f64> {
        self.pieces.get(piece).copied()
    }

    pub fn unk_log_prob(&self) -> f64 {
        self.unk_log_prob
    }

    pub fn word_marker(&self) -> &str {
        &self.word_marker
    }

    pub fn max_piece_chars(&self) -> usize {
        self.pieces
            .keys()
            .map(|p| p.chars().count())
            .max()
            .unwrap_or(1)
    }

    /// Total probability mass; 1.0 for a normalized model.
    pub fn mass(&self) -> f64 {
        self.pieces.values().map(|lp| lp.exp()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file_str(&std::fs::read_to_string(path)?)
    }

    /// Render in the vocab TSV format.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str(ULM_HEADER);
        out.push('\n');
        let _ = writeln!(out, "#unk\t{}", self.unk_log_prob);
        for (piece, lp) in &self.pieces {
            let _ = writeln!(out, "{piece}\t{lp}");
        }
        out
    }

    pub fn from_file_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, line)) if line == ULM_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header {ULM_HEADER:?}"),
                })
            }
        }
        let mut pieces = BTreeMap::new();
        let mut unk_override = None;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let (piece, value) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected \"piece\\tlog_prob\", got {line:?}"),
            })?;
            let lp: f64 = value.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad log-probability {value:?}"),
            })?;
            if piece == "#unk" {
                unk_override = Some(lp);
                continue;
            }
            if pieces.insert(piece.to_string(), lp).is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("duplicate piece {piece:?}"),
                });
            }
        }
        if pieces.is_empty() {
            return Err(Error::Parse {
                line: 1,
                msg: "no pieces".to_string(),
            });
        }
        let mut model = UnigramModel::new(pieces);
        if let Some(unk) = unk_override {
            model.unk_log_prob = unk;
        }
        Ok(model)
    }
}

/// Corpus log-likelihood trace of unigram training, one inner vector per
/// EM phase (phases are separated by pruning rounds).
#[derive(Debug, Clone, Default)]
pub struct UnigramTrainTrace {
    pub phases: Vec<Vec<f64>>,
}

/// Train a unigram model by EM over word lattices with likelihood-loss
/// pruning down to `target_vocab_size`.
pub fn train_unigram(
    stats: &CorpusStats,
    target_vocab_size: usize,
    seed_max_len: usize,
    prune_fraction: f64,
    em_iters: usize,
) -> Result<UnigramModel> {
    train_unigram_traced(stats, target_vocab_size, seed_max_len, prune_fraction, em_iters)
        .map(|(m, _)| m)
}

/// As [`train_unigram`] but also returns the per-phase likelihood trace.
pub fn train_unigram_traced(
    stats: &CorpusStats,
    target_vocab_size: usize,
    seed_max_len: usize,
    prune_fraction: f64,
    em_iters: usize,
) -> Result<(UnigramModel, UnigramTrainTrace)> {
    if !(0.0..1.0).contains(&prune_fraction) || prune_fraction == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "prune_fraction must be in (0, 1), got {prune_fraction}"
        )));
    }
    let marked: Vec<(String, u64)> = stats
        .word_counts
        .iter()
        .map(|(w, &c)| (format!("{ULM_WORD_MARKER}{w}"), c))
        .collect();
    let inventory: BTreeSet<char> = marked.iter().flat_map(|(w, _)| w.chars()).collect();
    if target_vocab_size < inventory.len() {
        return Err(Error::VocabTooSmall {
            target: target_vocab_size,
            inventory: inventory.len(),
        });
    }

    // Seed vocabulary: every substring up to seed_max_len seen at least
    // twice, plus all single characters unconditionally.
    let mut substr_counts: BTreeMap<String, u64> = BTreeMap::new();
    for (word, count) in &marked {
        let chars: Vec<char> = word.chars().collect();
        for start in 0..chars.len() {
            for len in 1..=seed_max_len.min(chars.len() - start) {
                let piece: String = chars[start..start + len].iter().collect();
                *substr_counts.entry(piece).or_insert(0) += count;
            }
        }
    }
    let probs: BTreeMap<String, f64> = substr_counts
        .into_iter()
        .filter(|(p, c)| p.chars().count() == 1 || *c >= 2)
        .map(|(p, c)| (p, c as f64))
        .collect();
    let mut model = UnigramModel::from_probs(probs);

    let mut trace = UnigramTrainTrace::default();
    loop {
        trace.phases.push(run_em(&mut model, &marked, em_iters));
        if model.pieces.len() <= target_vocab_size {
            break;
        }
        prune(&mut model, &marked, target_vocab_size, prune_fraction);
        if model.pieces.len() <= target_vocab_size {
            trace.phases.push(run_em(&mut model, &marked, em_iters));
            break;
        }
    }
    // Rebuild so the unk score tracks the final minimum piece score.
    let model = UnigramModel::new(model.pieces);
    Ok((model, trace))
}

/// Run `iters` EM iterations in place; returns the corpus log-likelihood
/// evaluated after each E-step.
fn run_em(model: &mut UnigramModel, words: &[(String, u64)], iters: usize) -> Vec<f64> {
    let mut lls = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut expected: BTreeMap<String, f64> = BTreeMap::new();
        let mut ll = 0.0;
        for (word, count) in words {
            let lat = lattice::build_lattice(word, model).expect("non-empty marked word");
            let fwd = lattice::forward_log_sums(&lat, 1.0);
            let bwd = lattice::backward_log_sums(&lat, 1.0);
            let log_z = fwd[lat.num_chars()];
            ll += *count as f64 * log_z;
            for edge in lat.edges() {
                let post = fwd[edge.start] + edge.log_prob + bwd[edge.end] - log_z;
                *expected.entry(edge.piece.clone()).or_insert(0.0) += *count as f64 * post.exp();
            }
        }
        let total: f64 = expected.values().sum();
        for (piece, lp) in model.pieces.iter_mut() {
            let c = expected.get(piece).copied().unwrap_or(0.0);
            // Floor keeps never-used pieces finite until pruning removes them.
            *lp = ((c / total).max(1e-300)).ln();
        }
        lls.push(ll);
    }
    lls
}

/// Drop the lowest-likelihood-loss multi-character pieces; single
/// characters are never pruned. Remaining mass is renormalized.
fn prune(model: &mut UnigramModel, words: &[(String, u64)], target: usize, fraction: f64) {
    let prunable: Vec<String> = model
        .pieces
        .keys()
        .filter(|p| p.chars().count() > 1)
        .cloned()
        .collect();
    if prunable.is_empty() {
        return;
    }
    let full_ll: Vec<f64> = words
        .iter()
        .map(|(w, _)| {
            let lat = lattice::build_lattice(w, model).expect("non-empty word");
            lattice::forward_log_sums(&lat, 1.0)[lat.num_chars()]
        })
        .collect();

    let mut losses: Vec<(f64, String)> = prunable
        .iter()
        .map(|piece| {
            let mut loss = 0.0;
            for (i, (word, count)) in words.iter().enumerate() {
                if !word.contains(piece.as_str()) {
                    continue;
                }
                let lat = lattice::build_lattice(word, model).expect("non-empty word");
                let without = forward_without_piece(&lat, piece);
                loss += *count as f64 * (full_ll[i] - without);
            }
            (loss, piece.clone())
        })
        .collect();
    losses.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let excess = model.pieces.len() - target;
    let k = ((fraction * prunable.len() as f64).floor() as usize)
        .max(1)
        .min(excess)
        .min(prunable.len());
    for (_, piece) in losses.into_iter().take(k) {
        model.pieces.remove(&piece);
    }
    // Renormalize the surviving mass.
    let log_total = model.mass().ln();
    for lp in model.pieces.values_mut() {
        *lp -= log_total;
    }
}

/// Forward log-sum at alpha=1 over the lattice with every edge for `piece`
/// removed. Single-character edges guarantee a path survives.
fn forward_without_piece(lat: &SegmentationLattice, piece: &str) -> f64 {
    let n = lat.num_chars();
    let mut f = vec![f64::NEG_INFINITY; n + 1];
    f[0] = 0.0;
    for t in 1..=n {
        let mut terms = Vec::new();
        for edge in lat.edges_ending_at(t) {
            if edge.piece == piece {
                continue;
            }
            terms.push(f[edge.start] + edge.log_prob);
        }
        f[t] = lattice::log_sum_exp(&terms);
    }
    f[n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, viterbi};
    use tempfile::tempdir;

    fn stats(words: &[(&str, u64)]) -> CorpusStats {
        CorpusStats::from_counts(
            words
                .iter()
                .map(|(w, c)| (w.to_string(), *c))
                .collect(),
        )
    }

    #[test]
    fn count_corpus_direct() {
        let s = count_corpus(["ab ab ac"]).unwrap();
        assert_eq!(s.word_counts().get("ab"), Some(&2));
        assert_eq!(s.word_counts().get("ac"), Some(&1));
        let chars: Vec<char> = s.chars().iter().copied().collect();
        assert_eq!(chars, vec!['a', 'b', 'c']);
    }

    #[test]
    fn count_corpus_across_sentences() {
        let s = count_corpus(["a a", "a"]).unwrap();
        assert_eq!(s.word_counts().get("a"), Some(&3));
        assert_eq!(s.total_words(), 3);
    }

    #[test]
    fn count_corpus_empty_errors() {
        assert!(matches!(
            count_corpus(Vec::<String>::new()),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(count_corpus([" ", ""]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn train_bpe_most_frequent_pair_first() {
        let m = train_bpe(&stats(&[("ab", 2), ("ac", 1)]), 1);
        assert_eq!(m.merges(), &[("a".to_string(), "b".to_string())]);
        assert!(m.vocab().contains("ab"));
    }

    #[test]
    fn train_bpe_zero_merges() {
        let m = train_bpe(&stats(&[("ab", 2), ("ac", 1)]), 0);
        assert!(m.merges().is_empty());
        // Vocabulary still carries every character.
        assert!(m.vocab().contains("a") && m.vocab().contains("b") && m.vocab().contains("c"));
    }

    #[test]
    fn train_bpe_stops_below_count_two() {
        // After merging (a,b) the word is (ab, ab); that pair occurs once,
        // which is below the count-2 threshold, so training stops.
        let m = train_bpe(&stats(&[("abab", 1)]), 2);
        assert_eq!(m.merges(), &[("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn train_bpe_tie_breaks_lexicographically() {
        let m = train_bpe(&stats(&[("ab", 2), ("cd", 2)]), 1);
        assert_eq!(m.merges(), &[("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn train_bpe_merge_order_matches_greedy_recount() {
        // Re-counting pair frequencies after applying merges 0..k-1 must
        // show merge k was a maximal-count pair under the tie rule.
        let s = stats(&[("abab", 3), ("abc", 2), ("bc", 2), ("cab", 1)]);
        let model = train_bpe(&s, 5);
        let mut words: Vec<(Vec<String>, u64)> = s
            .word_counts()
            .iter()
            .map(|(w, &c)| (w.chars().map(|ch| ch.to_string()).collect(), c))
            .collect();
        for (left, right) in model.merges() {
            let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
            for (pieces, c) in &words {
                for pair in pieces.windows(2) {
                    *counts.entry((pair[0].clone(), pair[1].clone())).or_insert(0) += c;
                }
            }
            let max = counts.values().max().copied().unwrap();
            let chosen = counts[&(left.clone(), right.clone())];
            assert_eq!(chosen, max, "merge ({left},{right}) not maximal");
            let smallest_at_max = counts
                .iter()
                .filter(|(_, &c)| c == max)
                .map(|(p, _)| p.clone())
                .min()
                .unwrap();
            assert_eq!(smallest_at_max, (left.clone(), right.clone()));
            let merged = format!("{left}{right}");
            for (pieces, _) in &mut words {
                apply_merge(pieces, left, right, &merged);
            }
        }
    }

    #[test]
    fn bpe_roundtrip() {
        let m = train_bpe(&stats(&[("abab", 3), ("xy", 2)]), 3);
        let dir = tempdir().unwrap();
        let path = dir.path().join("bpe.txt");
        m.save(&path).unwrap();
        let loaded = BpeModel::load(&path).unwrap();
        assert_eq!(m, loaded);
    }

    #[test]
    fn bpe_load_malformed() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, format!("{BPE_HEADER}\na b c\n")).unwrap();
        match BpeModel::load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unigram_roundtrip_and_duplicate() {
        let s = stats(&[("ab", 100), ("ba", 30)]);
        let m = train_unigram(&s, 6, 4, 0.25, 2).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ulm.tsv");
        m.save(&path).unwrap();
        let loaded = UnigramModel::load(&path).unwrap();
        assert_eq!(m, loaded);

        let mut text = std::fs::read_to_string(&path).unwrap();
        let dup = m.pieces().keys().next().unwrap();
        let lp = m.pieces()[dup];
        text.push_str(&format!("{dup}\t{lp}\n"));
        std::fs::write(&path, text).unwrap();
        assert!(matches!(UnigramModel::load(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn unigram_target_below_inventory_errors() {
        let s = stats(&[("abc", 1)]);
        // Marked inventory is {▁, a, b, c} = 4.
        assert!(matches!(
            train_unigram(&s, 1, 4, 0.25, 2),
            Err(Error::VocabTooSmall { .. })
        ));
    }

    #[test]
    fn unigram_single_char_words_give_char_frequencies() {
        let s = stats(&[("a", 3), ("b", 1)]);
        let m = train_unigram(&s, 4, 4, 0.25, 2).unwrap();
        // Every piece is a character or a ▁-char bigram; for pure
        // single-char words the seed contains ▁a/▁b (count >= 2 only for a).
        assert!((m.mass() - 1.0).abs() < 1e-9);
        assert!(m.pieces().contains_key("a"));
        assert!(m.pieces().contains_key("b"));
    }

    #[test]
    fn unigram_dominant_word_kept_whole() {
        // One-word corpus: EM concentrates mass on the whole-word piece,
        // and pruning removes the low-loss fragments first.
        let s = stats(&[("ab", 100)]);
        let m = train_unigram(&s, 4, 8, 0.25, 3).unwrap();
        let word = format!("{ULM_WORD_MARKER}ab");
        assert!(m.pieces().contains_key(word.as_str()), "pieces: {:?}", m.pieces());
        let lat = build_lattice(&word, &m).unwrap();
        let seg = viterbi(&lat);
        assert_eq!(seg.pieces, vec![word]);
    }

    #[test]
    fn unigram_ll_non_decreasing_and_normalized() {
        let s = stats(&[("abab", 10), ("abc", 5), ("cab", 3), ("bc", 7)]);
        let (m, trace) = train_unigram_traced(&s, 8, 6, 0.25, 3).unwrap();
        for phase in &trace.phases {
            for pair in phase.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "LL decreased: {pair:?}");
            }
        }
        assert!((m.mass() - 1.0).abs() < 1e-6);
        for lp in m.pieces().values() {
            assert!(lp.is_finite());
            if m.pieces().len() > 1 {
                assert!(*lp < 0.0);
            }
        }
    }
}
