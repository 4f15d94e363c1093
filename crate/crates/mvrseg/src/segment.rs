//! The four segmenters: deterministic BPE and unigram Viterbi, plus
//! BPE-dropout and temperature-scaled lattice sampling.
//!
//! All segmenters whitespace pre-tokenize, segment each word
//! independently, and record per-word piece spans so downstream losses
//! can align words across the two views of the same sentence.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;

use crate::lattice::{build_lattice, sample_path, viterbi};
use crate::models::{BpeModel, UnigramModel, UNK_PIECE};

/// Sampling knobs for the probabilistic segmenters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SegmenterConfig {
    /// BPE-dropout merge-drop probability, in [0, 1].
    pub dropout_p: f64,
    /// Sampling temperature for the unigram sampler, in [0, 1].
    pub alpha: f64,
    pub rng_seed: u64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            dropout_p: 0.1,
            alpha: 0.6,
            rng_seed: 0,
        }
    }
}

/// A segmented sentence: pieces plus the contiguous piece range of each
/// pre-tokenized word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub pieces: Vec<String>,
    pub word_spans: Vec<Range<usize>>,
}

impl TokenSeq {
    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Pieces of word `w`.
    pub fn word_pieces(&self, w: usize) -> &[String] {
        &self.pieces[self.word_spans[w].clone()]
    }

    /// Strip markers and rejoin words with single spaces.
    pub fn detokenize(&self) -> String {
        self.word_spans
            .iter()
            .map(|span| {
                self.pieces[span.clone()]
                    .iter()
                    .map(|p| strip_markers(p))
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn strip_markers(piece: &str) -> &str {
    piece
        .strip_prefix("##")
        .or_else(|| piece.strip_prefix('\u{2581}'))
        .unwrap_or(piece)
}

/// RNG stream for example `index` under a run seed, so parallel encoding
/// is order-independent.
pub fn example_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index))
}

/// Deterministic greedy-merge BPE encoding.
///
/// Each word is split into characters (non-initial ones carrying the
/// continuation marker), then the present pair with the lowest rank is
/// applied repeatedly, leftmost first on rank ties. Unknown characters
/// become the reserved `<unk>` piece.
pub fn bpe_encode(sentence: &str, model: &BpeModel) -> TokenSeq {
    encode_bpe_inner(sentence, model, None, &mut rand::rngs::mock::StepRng::new(0, 0))
}

/// BPE-dropout: the same merge loop, but every candidate occurrence is
/// independently dropped with probability `p` before the best survivor
/// is applied. Dropped occurrences become eligible again on the next
/// iteration; the loop ends on an iteration where nothing survives.
pub fn bpe_dropout_encode<R: Rng + ?Sized>(
    sentence: &str,
    model: &BpeModel,
    config: &SegmenterConfig,
    rng: &mut R,
) -> TokenSeq {
    encode_bpe_inner(sentence, model, Some(config.dropout_p), rng)
}

fn encode_bpe_inner<R: Rng + ?Sized>(
    sentence: &str,
    model: &BpeModel,
    dropout_p: Option<f64>,
    rng: &mut R,
) -> TokenSeq {
    let marker = model.continuation_marker();
    let mut pieces = Vec::new();
    let mut word_spans = Vec::new();
    for word in sentence.split_whitespace() {
        let start = pieces.len();
        let mut symbols: Vec<String> = word
            .chars()
            .enumerate()
            .map(|(i, c)| {
                if !model.knows_char(c) {
                    UNK_PIECE.to_string()
                } else if i == 0 {
                    c.to_string()
                } else {
                    format!("{marker}{c}")
                }
            })
            .collect();
        loop {
            // Candidate merge occurrences, keyed by (rank, position).
            let mut candidates: Vec<(usize, usize)> = Vec::new();
            for i in 0..symbols.len().saturating_sub(1) {
                if symbols[i] == UNK_PIECE || symbols[i + 1] == UNK_PIECE {
                    continue;
                }
                let left = strip_continuation(&symbols[i], marker);
                let right = strip_continuation(&symbols[i + 1], marker);
                if let Some(rank) = model.rank(left, right) {
                    candidates.push((rank, i));
                }
            }
            if candidates.is_empty() {
                break;
            }
            let survivors: Vec<(usize, usize)> = match dropout_p {
                Some(p) => candidates
                    .into_iter()
                    .filter(|_| !rng.gen_bool(p))
                    .collect(),
                None => candidates,
            };
            let Some(&(_, pos)) = survivors.iter().min() else {
                break;
            };
            let right = strip_continuation(&symbols[pos + 1], marker).to_string();
            symbols[pos].push_str(&right);
            symbols.remove(pos + 1);
        }
        pieces.extend(symbols);
        word_spans.push(start..pieces.len());
    }
    TokenSeq { pieces, word_spans }
}

fn strip_continuation<'a>(symbol: &'a str, marker: &str) -> &'a str {
    symbol.strip_prefix(marker).unwrap_or(symbol)
}

/// Deterministic unigram encoding: per word, lattice Viterbi.
pub fn ulm_encode(sentence: &str, model: &UnigramModel) -> TokenSeq {
    let mut pieces = Vec::new();
    let mut word_spans = Vec::new();
    for word in sentence.split_whitespace() {
        let start = pieces.len();
        let marked = format!("{}{}", model.word_marker(), word);
        let lat = build_lattice(&marked, model).expect("marked word is non-empty");
        pieces.extend(viterbi(&lat).pieces);
        word_spans.push(start..pieces.len());
    }
    TokenSeq { pieces, word_spans }
}

/// Sample one segmentation per word with probability `P(x)^alpha / Z(alpha)`.
pub fn ulm_sample<R: Rng + ?Sized>(
    sentence: &str,
    model: &UnigramModel,
    config: &SegmenterConfig,
    rng: &mut R,
) -> TokenSeq {
    let mut pieces = Vec::new();
    let mut word_spans = Vec::new();
    for word in sentence.split_whitespace() {
        let start = pieces.len();
        let marked = format!("{}{}", model.word_marker(), word);
        let lat = build_lattice(&marked, model).expect("marked word is non-empty");
        pieces.extend(sample_path(&lat, config.alpha, rng).pieces);
        word_spans.push(start..pieces.len());
    }
    TokenSeq { pieces, word_spans }
}

/// A vocabulary model of either family, with deterministic and sampled
/// encoding behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Segmenter {
    Bpe(BpeModel),
    Ulm(UnigramModel),
}

impl Segmenter {
    pub fn encode_det(&self, sentence: &str) -> TokenSeq {
        match self {
            Segmenter::Bpe(m) => bpe_encode(sentence, m),
            Segmenter::Ulm(m) => ulm_encode(sentence, m),
        }
    }

    pub fn encode_sampled<R: Rng + ?Sized>(
        &self,
        sentence: &str,
        config: &SegmenterConfig,
        rng: &mut R,
    ) -> TokenSeq {
        match self {
            Segmenter::Bpe(m) => bpe_dropout_encode(sentence, m, config, rng),
            Segmenter::Ulm(m) => ulm_sample(sentence, m, config, rng),
        }
    }

    /// Every piece string this segmenter can emit, in a stable order.
    /// BPE pieces appear both bare and continuation-marked.
    pub fn piece_inventory(&self) -> Vec<String> {
        let mut out = vec![UNK_PIECE.to_string()];
        match self {
            Segmenter::Bpe(m) => {
                for p in m.vocab() {
                    out.push(p.clone());
                    out.push(format!("{}{}", m.continuation_marker(), p));
                }
            }
            Segmenter::Ulm(m) => out.extend(m.pieces().keys().cloned()),
        }
        out
    }
}
