//! The toy classifier/tagger: embedding table, mean pooling, and a
//! linear softmax head with hand-written gradients.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::segment::TokenSeq;
use crate::trainer::loss::softmax;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    piece_to_id: BTreeMap<String, usize>,
    unk_id: usize,
    /// |V| x d embedding table.
    pub embed: Vec<Vec<f64>>,
    /// d x C output weights.
    pub out_w: Vec<Vec<f64>>,
    /// C output biases.
    pub out_b: Vec<f64>,
    dim: usize,
    num_classes: usize,
}

impl ToyModel {
    /// Zero-initialized model over the given piece inventory. The
    /// inventory must contain the reserved `<unk>` piece.
    pub fn new(pieces: &[String], dim: usize, num_classes: usize) -> Result<Self> {
        if dim < 1 || num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need dim >= 1 and at least 2 classes, got dim={dim}, classes={num_classes}"
            )));
        }
        let mut piece_to_id = BTreeMap::new();
        for p in pieces {
            let next = piece_to_id.len();
            piece_to_id.entry(p.clone()).or_insert(next);
        }
        let unk_id = *piece_to_id
            .get(crate::models::UNK_PIECE)
            .ok_or_else(|| Error::InvalidConfig("piece inventory lacks <unk>".to_string()))?;
        let vocab = piece_to_id.len();
        Ok(ToyModel {
            piece_to_id,
            unk_id,
            embed: vec![vec![0.0; dim]; vocab],
            out_w: vec![vec![0.0; num_classes]; dim],
            out_b: vec![0.0; num_classes],
            dim,
            num_classes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.len()
    }

    pub fn piece_id(&self, piece: &str) -> usize {
        self.piece_to_id.get(piece).copied().unwrap_or(self.unk_id)
    }

    /// Uniform small-range random init, deterministic under the caller's RNG.
    pub fn randomize<R: Rng + ?Sized>(&mut self, rng: &mut R, scale: f64) {
        for row in self.embed.iter_mut().chain(self.out_w.iter_mut()) {
            for v in row.iter_mut() {
                *v = (rng.gen::<f64>() - 0.5) * 2.0 * scale;
            }
        }
        for v in self.out_b.iter_mut() {
            *v = (rng.gen::<f64>() - 0.5) * 2.0 * scale;
        }
    }

    /// Piece ids of a token sequence, truncated to `max_pieces`.
    pub fn ids_truncated(&self, tokens: &TokenSeq, max_pieces: usize) -> Vec<usize> {
        tokens
            .pieces
            .iter()
            .take(max_pieces)
            .map(|p| self.piece_id(p))
            .collect()
    }

    /// Mean-pool the ids, apply the linear head, softmax.
    pub fn forward_ids(&self, ids: &[usize]) -> Result<ForwardCache> {
        if ids.is_empty() {
            return Err(Error::EmptyAfterTruncation);
        }
        let mut pooled = vec![0.0; self.dim];
        for &id in ids {
            for (k, v) in self.embed[id].iter().enumerate() {
                pooled[k] += v;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        for v in pooled.iter_mut() {
            *v *= inv;
        }
        let mut logits = self.out_b.clone();
        for (k, h) in pooled.iter().enumerate() {
            for (c, w) in self.out_w[k].iter().enumerate() {
                logits[c] += h * w;
            }
        }
        let probs = softmax(&logits);
        Ok(ForwardCache {
            ids: ids.to_vec(),
            pooled,
            logits,
            probs,
        })
    }

    /// Classification forward: probabilities over classes.
    pub fn forward_classification(&self, tokens: &TokenSeq, max_pieces: usize) -> Result<Vec<f64>> {
        let ids = self.ids_truncated(tokens, max_pieces);
        Ok(self.forward_ids(&ids)?.probs)
    }

    /// Tagging forward: one probability vector per word whose span
    /// survives truncation.
    pub fn forward_tagging(&self, tokens: &TokenSeq, max_pieces: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        for span in &tokens.word_spans {
            if span.end > max_pieces {
                break;
            }
            let ids: Vec<usize> = tokens.pieces[span.clone()]
                .iter()
                .map(|p| self.piece_id(p))
                .collect();
            out.push(self.forward_ids(&ids)?.probs);
        }
        if out.is_empty() {
            return Err(Error::EmptyAfterTruncation);
        }
        Ok(out)
    }

    pub fn apply_update(&mut self, delta: &Gradients, lr: f64) {
        for (row, drow) in self.embed.iter_mut().zip(&delta.embed) {
            for (v, d) in row.iter_mut().zip(drow) {
                *v -= lr * d;
            }
        }
        for (row, drow) in self.out_w.iter_mut().zip(&delta.out_w) {
            for (v, d) in row.iter_mut().zip(drow) {
                *v -= lr * d;
            }
        }
        for (v, d) in self.out_b.iter_mut().zip(&delta.out_b) {
            *v -= lr * d;
        }
    }
}

/// Intermediate values of one pooled forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub ids: Vec<usize>,
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub embed: Vec<Vec<f64>>,
    pub out_w: Vec<Vec<f64>>,
    pub out_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &ToyModel) -> Self {
        Gradients {
            embed: vec![vec![0.0; model.dim()]; model.vocab_size()],
            out_w: vec![vec![0.0; model.num_classes()]; model.dim()],
            out_b: vec![0.0; model.num_classes()],
        }
    }

    /// Backpropagate a logit gradient through the linear head and the
    /// mean-pooled embeddings of `cache`, accumulating in place.
    pub fn accumulate_from_logits(&mut self, model: &ToyModel, cache: &ForwardCache, dz: &[f64]) {
        for (c, d) in dz.iter().enumerate() {
            self.out_b[c] += d;
        }
        for (k, h) in cache.pooled.iter().enumerate() {
            for (c, d) in dz.iter().enumerate() {
                self.out_w[k][c] += h * d;
            }
        }
        let inv = 1.0 / cache.ids.len() as f64;
        for k in 0..model.dim() {
            let mut dh = 0.0;
            for (c, d) in dz.iter().enumerate() {
                dh += model.out_w[k][c] * d;
            }
            let per_piece = dh * inv;
            for &id in &cache.ids {
                self.embed[id][k] += per_piece;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (row, orow) in self.embed.iter_mut().zip(&other.embed) {
            for (v, o) in row.iter_mut().zip(orow) {
                *v += scale * o;
            }
        }
        for (row, orow) in self.out_w.iter_mut().zip(&other.out_w) {
            for (v, o) in row.iter_mut().zip(orow) {
                *v += scale * o;
            }
        }
        for (v, o) in self.out_b.iter_mut().zip(&other.out_b) {
            *v += scale * o;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for row in self.embed.iter_mut().chain(self.out_w.iter_mut()) {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
        for v in self.out_b.iter_mut() {
            *v *= factor;
        }
    }
}
