//! Subword segmentation toolkit with multi-view consistency training.
//!
//! The crate bundles four segmenters over a shared vocabulary model pair —
//! deterministic BPE and unigram-LM Viterbi, plus their probabilistic
//! variants BPE-dropout and temperature-scaled lattice sampling — together
//! with a small analytically-differentiable classifier/tagger that can be
//! fine-tuned under a two-view consistency objective, a corpus analysis
//! suite, and a CLI (`mvrseg`).
//!
//! ```
//! use mvrseg::models::{count_corpus, train_bpe};
//! use mvrseg::segment::bpe_encode;
//!
//! let stats = count_corpus(["low lower lowest", "low low"]).unwrap();
//! let model = train_bpe(&stats, 4);
//! let toks = bpe_encode("low", &model);
//! assert_eq!(toks.detokenize(), "low");
//! ```
//!
//! A narrative guide lives in `book/`; its code blocks run as doc-tests
//! (see the `book` module below).

pub mod analysis;
pub mod lattice;
pub mod models;
pub mod segment;
pub mod trainer;

mod error;

pub use error::{Error, Result};

// Chapters of the mdbook guide double as doc-tests so the book can never
// drift from the library API. `mdbook build book` renders the same files.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/vocabulary-models.md")]
    mod vocabulary_models {}
    #[doc = include_str!("../../../book/src/lattices.md")]
    mod lattices {}
    #[doc = include_str!("../../../book/src/probabilistic-segmentation.md")]
    mod probabilistic_segmentation {}
    #[doc = include_str!("../../../book/src/multi-view-training.md")]
    mod multi_view_training {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis_chapter {}
}
