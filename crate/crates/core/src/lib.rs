//! Core of an unsupervised image captioner built around a visually
//! structured sentence embedding space.
//!
//! Everything in this crate works on in-memory data and only needs `alloc`:
//!
//! * [`lexicon`] maps word tokens to visual concepts and expands detector
//!   labels through hyponym relations.
//! * [`text`] tokenizes the sentence corpus, builds the vocabulary and the
//!   positive/negative sentence pair index used by the triplet loss.
//! * [`nn`] is a small differentiable substrate (linear, embedding, GRU,
//!   softmax cross-entropy, Adam) with hand-written backward passes.
//! * [`lm`] is the sentence autoencoder trained with reconstruction and
//!   concept triplet losses.
//! * [`align`] builds the weak image/sentence graph and trains the image
//!   feature translator with the robust and adversarial objectives.
//! * [`decode`] turns embeddings into captions with greedy or beam search.
//! * [`eval`] holds BLEU, ROUGE-L, the oracle baseline and embedding
//!   diagnostics.
//!
//! File formats, the command line and the synthetic data generator live in
//! the companion `unicap` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod align;
pub mod decode;
pub mod eval;
pub mod lexicon;
pub mod lm;
pub mod nn;
pub mod text;

pub use lexicon::{Concept, ConceptLexicon, ConceptSet};
pub use nn::{ParameterStore, Real};
