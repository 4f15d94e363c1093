//! Segmentation lattices over character boundaries.
//!
//! A lattice for a word of `n` characters has nodes `0..=n`; every edge
//! spans a substring that is a vocabulary piece (or a one-character unk
//! edge for characters outside the model). Source-to-sink paths are
//! exactly the possible segmentations of the word, which supports exact
//! Viterbi decoding, forward log-sums at a sampling temperature, exact
//! path sampling, and brute-force enumeration as a test oracle.

use rand::Rng;

use crate::models::{UnigramModel, UNK_PIECE};
use crate::{Error, Result};

/// Default cap on the number of paths [`enumerate_all`] will visit.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// One lattice edge spanning `word[start..end]` (character indices).
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub start: usize,
    pub end: usize,
    /// The spanned substring. For unk edges this is still the spanned
    /// character; `is_unk` marks it.
    pub piece: String,
    pub log_prob: f64,
    pub is_unk: bool,
}

impl Edge {
    /// Piece string as rendered in a segmentation (`<unk>` for unk edges).
    pub fn rendered(&self) -> String {
        if self.is_unk {
            UNK_PIECE.to_string()
        } else {
            self.piece.clone()
        }
    }
}

/// The segmentation space of one word under a unigram model.
#[derive(Debug, Clone)]
pub struct SegmentationLattice {
    word: String,
    num_chars: usize,
    edges: Vec<Edge>,
    /// Edge indices grouped by end node.
    by_end: Vec<Vec<usize>>,
}

impl SegmentationLattice {
    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn num_chars(&self) -> usize {
        self.num_chars
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edges_ending_at(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.by_end[node].iter().map(|&i| &self.edges[i])
    }
}

/// One path through a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub pieces: Vec<String>,
    /// Sum of edge log-probabilities (temperature not applied).
    pub log_prob: f64,
}

/// Build the lattice of all in-vocabulary substrings of `word`, with
/// one-character unk edges for characters absent from the model.
pub fn build_lattice(word: &str, model: &UnigramModel) -> Result<SegmentationLattice> {
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    let max_len = model.max_piece_chars();
    let mut edges = Vec::new();
    let mut by_end = vec![Vec::new(); n + 1];
    for start in 0..n {
        let known_single = model.log_prob(chars[start].to_string().as_str()).is_some();
        if !known_single {
            by_end[start + 1].push(edges.len());
            edges.push(Edge {
                start,
                end: start + 1,
                piece: chars[start].to_string(),
                log_prob: model.unk_log_prob(),
                is_unk: true,
            });
        }
        for end in (start + 1)..=(start + max_len).min(n) {
            let piece: String = chars[start..end].iter().collect();
            if let Some(lp) = model.log_prob(&piece) {
                by_end[end].push(edges.len());
                edges.push(Edge {
                    start,
                    end,
                    piece,
                    log_prob: lp,
                    is_unk: false,
                });
            }
        }
    }
    Ok(SegmentationLattice {
        word: word.to_string(),
        num_chars: n,
        edges,
        by_end,
    })
}

/// Tie rule shared by Viterbi and the enumeration oracle: higher score,
/// then fewer pieces, then the longer earliest piece.
fn path_beats(
    score_a: f64,
    lens_a: &[usize],
    score_b: f64,
    lens_b: &[usize],
) -> bool {
    // Sums over the same piece multiset drift by a few ulps across
    // association orders, so near-equal scores count as ties and fall
    // through to the deterministic tie rule.
    let eps = 1e-9 * score_a.abs().max(score_b.abs()).max(1.0);
    if (score_a - score_b).abs() > eps {
        return score_a > score_b;
    }
    if lens_a.len() != lens_b.len() {
        return lens_a.len() < lens_b.len();
    }
    for (la, lb) in lens_a.iter().zip(lens_b) {
        if la != lb {
            return la > lb;
        }
    }
    false
}

/// Most probable segmentation (argmax over all paths), deterministic.
pub fn viterbi(lattice: &SegmentationLattice) -> Segmentation {
    let n = lattice.num_chars();
    // Per node: (score, edge lengths along best path, edge indices).
    let mut best: Vec<Option<(f64, Vec<usize>, Vec<usize>)>> = vec![None; n + 1];
    best[0] = Some((0.0, Vec::new(), Vec::new()));
    for t in 1..=n {
        let mut cur: Option<(f64, Vec<usize>, Vec<usize>)> = None;
        for (idx, edge) in lattice.by_end[t]
            .iter()
            .map(|&i| (i, &lattice.edges[i]))
        {
            let Some((ps, plens, pedges)) = &best[edge.start] else {
                continue;
            };
            let score = ps + edge.log_prob;
            let mut lens = plens.clone();
            lens.push(edge.end - edge.start);
            let replace = match &cur {
                None => true,
                Some((cs, clens, _)) => path_beats(score, &lens, *cs, clens),
            };
            if replace {
                let mut edges = pedges.clone();
                edges.push(idx);
                cur = Some((score, lens, edges));
            }
        }
        best[t] = cur;
    }
    let (score, _, edge_idxs) = best[n]
        .take()
        .expect("single-character and unk edges guarantee a path");
    Segmentation {
        pieces: edge_idxs
            .iter()
            .map(|&i| lattice.edges[i].rendered())
            .collect(),
        log_prob: score,
    }
}

/// All source-to-sink paths, sorted by descending log-probability under
/// the Viterbi tie rule. Errors if more than `cap` paths exist.
pub fn enumerate_all(lattice: &SegmentationLattice, cap: usize) -> Result<Vec<Segmentation>> {
    let n = lattice.num_chars();
    // Edges grouped by start node for forward DFS.
    let mut by_start: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (i, e) in lattice.edges.iter().enumerate() {
        by_start[e.start].push(i);
    }
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    dfs(lattice, &by_start, 0, &mut stack, &mut out, cap)?;
    out.sort_by(|a, b| {
        let lens_a: Vec<usize> = a.pieces.iter().map(|p| p.chars().count()).collect();
        let lens_b: Vec<usize> = b.pieces.iter().map(|p| p.chars().count()).collect();
        if path_beats(a.log_prob, &lens_a, b.log_prob, &lens_b) {
            std::cmp::Ordering::Less
        } else if path_beats(b.log_prob, &lens_b, a.log_prob, &lens_a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    Ok(out)
}

fn dfs(
    lattice: &SegmentationLattice,
    by_start: &[Vec<usize>],
    node: usize,
    stack: &mut Vec<usize>,
    out: &mut Vec<Segmentation>,
    cap: usize,
) -> Result<()> {
    if node == lattice.num_chars() {
        if out.len() >= cap {
            return Err(Error::LatticeTooLarge { cap });
        }
        let mut log_prob = 0.0;
        let mut pieces = Vec::with_capacity(stack.len());
        for &i in stack.iter() {
            log_prob += lattice.edges[i].log_prob;
            pieces.push(lattice.edges[i].rendered());
        }
        out.push(Segmentation { pieces, log_prob });
        return Ok(());
    }
    for &i in &by_start[node] {
        stack.push(i);
        dfs(lattice, by_start, lattice.edges[i].end, stack, out, cap)?;
        stack.pop();
    }
    Ok(())
}

/// Per-node forward scores at temperature `alpha`: node `t` holds
/// `log Σ_{paths 0→t} exp(alpha · path_log_prob)`. The final node is
/// `log Z(alpha)`.
pub fn forward_log_sums(lattice: &SegmentationLattice, alpha: f64) -> Vec<f64> {
    let n = lattice.num_chars();
    let mut f = vec![f64::NEG_INFINITY; n + 1];
    f[0] = 0.0;
    for t in 1..=n {
        let terms: Vec<f64> = lattice
            .edges_ending_at(t)
            .map(|e| f[e.start] + alpha * e.log_prob)
            .collect();
        f[t] = log_sum_exp(&terms);
    }
    f
}

/// Mirror of [`forward_log_sums`] from the sink: node `t` holds the
/// log-sum over paths `t → n`.
pub fn backward_log_sums(lattice: &SegmentationLattice, alpha: f64) -> Vec<f64> {
    let n = lattice.num_chars();
    let mut by_start: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (i, e) in lattice.edges.iter().enumerate() {
        by_start[e.start].push(i);
    }
    let mut b = vec![f64::NEG_INFINITY; n + 1];
    b[n] = 0.0;
    for t in (0..n).rev() {
        let terms: Vec<f64> = by_start[t]
            .iter()
            .map(|&i| {
                let e = &lattice.edges[i];
                alpha * e.log_prob + b[e.end]
            })
            .collect();
        b[t] = log_sum_exp(&terms);
    }
    b
}

/// Draw one path with probability `P(x)^alpha / Z(alpha)` by backward
/// edge sampling from the forward scores.
pub fn sample_path<R: Rng + ?Sized>(
    lattice: &SegmentationLattice,
    alpha: f64,
    rng: &mut R,
) -> Segmentation {
    let f = forward_log_sums(lattice, alpha);
    let mut node = lattice.num_chars();
    let mut rev_edges: Vec<usize> = Vec::new();
    while node > 0 {
        let candidates: Vec<usize> = lattice.by_end[node].clone();
        let u: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut chosen = *candidates.last().expect("path always exists");
        for &i in &candidates {
            let e = &lattice.edges[i];
            let w = (f[e.start] + alpha * e.log_prob - f[node]).exp();
            acc += w;
            if u < acc {
                chosen = i;
                break;
            }
        }
        rev_edges.push(chosen);
        node = lattice.edges[chosen].start;
    }
    rev_edges.reverse();
    let log_prob = rev_edges.iter().map(|&i| lattice.edges[i].log_prob).sum();
    Segmentation {
        pieces: rev_edges
            .iter()
            .map(|&i| lattice.edges[i].rendered())
            .collect(),
        log_prob,
    }
}

/// Numerically stable `log Σ exp(x_i)`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn model(entries: &[(&str, f64)]) -> UnigramModel {
        UnigramModel::new(
            entries
                .iter()
                .map(|(p, v)| (p.to_string(), v.ln()))
                .collect::<BTreeMap<_, _>>(),
        )
    }

    fn ab_model() -> UnigramModel {
        model(&[("a", 0.4), ("b", 0.3), ("ab", 0.3)])
    }

    #[test]
    fn build_lattice_enumerates_substrings() {
        let m = model(&[("\u{2581}a", 0.2), ("b", 0.2), ("\u{2581}ab", 0.2), ("\u{2581}", 0.2), ("a", 0.2)]);
        let lat = build_lattice("\u{2581}ab", &m).unwrap();
        assert_eq!(lat.edges().len(), 5);
        let spans: Vec<(usize, usize, &str)> = lat
            .edges()
            .iter()
            .map(|e| (e.start, e.end, e.piece.as_str()))
            .collect();
        assert!(spans.contains(&(0, 2, "\u{2581}a")));
        assert!(spans.contains(&(0, 3, "\u{2581}ab")));
        assert!(spans.contains(&(0, 1, "\u{2581}")));
        assert!(spans.contains(&(1, 2, "a")));
        assert!(spans.contains(&(2, 3, "b")));
    }

    #[test]
    fn build_lattice_unknown_char_gets_unk_edge() {
        let m = model(&[("\u{2581}", 1.0)]);
        let lat = build_lattice("\u{2581}z", &m).unwrap();
        assert_eq!(lat.edges().len(), 2);
        let unk = lat.edges().iter().find(|e| e.is_unk).unwrap();
        assert_eq!((unk.start, unk.end), (1, 2));
        assert_eq!(unk.log_prob, m.unk_log_prob());
    }

    #[test]
    fn build_lattice_empty_word_errors() {
        assert!(matches!(
            build_lattice("", &ab_model()),
            Err(Error::EmptyWord)
        ));
    }

    #[test]
    fn viterbi_picks_higher_probability_path() {
        let lat = build_lattice("ab", &ab_model()).unwrap();
        let seg = viterbi(&lat);
        assert_eq!(seg.pieces, vec!["ab"]);
        assert!((seg.log_prob - 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn viterbi_single_char() {
        let lat = build_lattice("a", &ab_model()).unwrap();
        assert_eq!(viterbi(&lat).pieces, vec!["a"]);
    }

    #[test]
    fn viterbi_tie_prefers_fewer_pieces() {
        // Log-probs chosen so both paths sum to exactly -2.0.
        let mut pieces = BTreeMap::new();
        pieces.insert("a".to_string(), -1.0);
        pieces.insert("b".to_string(), -1.0);
        pieces.insert("ab".to_string(), -2.0);
        let m = UnigramModel::new(pieces);
        let lat = build_lattice("ab", &m).unwrap();
        assert_eq!(viterbi(&lat).pieces, vec!["ab"]);
        let all = enumerate_all(&lat, 10).unwrap();
        assert_eq!(all[0].pieces, vec!["ab"]);
    }

    #[test]
    fn enumerate_all_two_paths() {
        let lat = build_lattice("ab", &ab_model()).unwrap();
        let all = enumerate_all(&lat, 100).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].pieces, vec!["ab"]);
        assert_eq!(all[1].pieces, vec!["a", "b"]);
    }

    #[test]
    fn enumerate_all_single_path() {
        let lat = build_lattice("a", &ab_model()).unwrap();
        assert_eq!(enumerate_all(&lat, 100).unwrap().len(), 1);
    }

    #[test]
    fn enumerate_all_cap_errors() {
        // 30 chars over a single-char vocab with all bigrams: path count
        // grows as Fibonacci, far over a cap of 1000.
        let mut probs = BTreeMap::new();
        probs.insert("a".to_string(), 0.5);
        probs.insert("aa".to_string(), 0.5);
        let m = UnigramModel::from_probs(probs);
        let word: String = std::iter::repeat('a').take(30).collect();
        let lat = build_lattice(&word, &m).unwrap();
        assert!(matches!(
            enumerate_all(&lat, 1000),
            Err(Error::LatticeTooLarge { cap: 1000 })
        ));
    }

    #[test]
    fn forward_final_node_is_log_partition() {
        let lat = build_lattice("ab", &ab_model()).unwrap();
        let f = forward_log_sums(&lat, 1.0);
        assert!((f[2] - 0.42f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_alpha_zero_counts_paths() {
        let lat = build_lattice("ab", &ab_model()).unwrap();
        let f = forward_log_sums(&lat, 0.0);
        assert!((f[2] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_single_path_is_scaled_log_prob() {
        let m = model(&[("a", 0.25)]);
        let lat = build_lattice("a", &m).unwrap();
        for alpha in [0.0, 0.3, 1.0] {
            let f = forward_log_sums(&lat, alpha);
            assert!((f[1] - alpha * 0.25f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_enumeration_sum() {
        let m = model(&[("a", 0.2), ("b", 0.1), ("ab", 0.3), ("ba", 0.15), ("aba", 0.25)]);
        let lat = build_lattice("abab", &m).unwrap();
        let f = forward_log_sums(&lat, 1.0);
        let z: f64 = enumerate_all(&lat, 1000)
            .unwrap()
            .iter()
            .map(|s| s.log_prob.exp())
            .sum();
        assert!((f[lat.num_chars()].exp() - z).abs() / z < 1e-9);
    }

    #[test]
    fn backward_source_equals_forward_sink() {
        let m = model(&[("a", 0.2), ("b", 0.1), ("ab", 0.3), ("ba", 0.15), ("aba", 0.25)]);
        let lat = build_lattice("ababa", &m).unwrap();
        for alpha in [0.0, 0.4, 1.0] {
            let f = forward_log_sums(&lat, alpha);
            let b = backward_log_sums(&lat, alpha);
            assert!((f[lat.num_chars()] - b[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn segmentation_reconstructs_word() {
        let m = model(&[("a", 0.2), ("b", 0.1), ("ab", 0.3), ("ba", 0.15), ("aba", 0.25)]);
        let lat = build_lattice("abab", &m).unwrap();
        for seg in enumerate_all(&lat, 1000).unwrap() {
            assert_eq!(seg.pieces.concat(), "abab");
            let sum: f64 = seg
                .pieces
                .iter()
                .map(|p| m.log_prob(p).unwrap())
                .sum();
            assert!((sum - seg.log_prob).abs() < 1e-9);
        }
    }
}
