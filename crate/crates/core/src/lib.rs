//! Zero-resource cross-lingual named entity recognition.
//!
//! The crate trains a character + word BiLSTM-CRF tagger on a labeled source
//! language, aligns source and target word embeddings without supervision
//! (adversarial mapping followed by Procrustes refinement with CSLS
//! retrieval), and transfers the tagger to an unlabeled target language
//! through length-thresholded pseudo-labeling and joint fine-tuning.
//!
//! Module map:
//!
//! * [`numeric`]: dense matrices, SVD, clipped SGD and the seeded generator.
//! * [`corpus`]: CoNLL I/O, tag schemes, vocabularies and entity-level F1.
//! * [`embeddings`]: `.vec` loading, OOV lookup, normalization and mapping.
//! * [`align`]: discriminator, adversarial training, CSLS and refinement.
//! * [`tagger`]: encoders, common head, linear-chain CRF and exact gradients.
//! * [`trainer`]: pretraining, pseudo-labels, augmented fine-tuning.
//! * [`checkpoint`]: the binary container used for every persisted artifact.
//! * [`synthetic`]: generated fixtures with a known ground truth.

pub mod align;
pub mod checkpoint;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod numeric;
pub mod synthetic;
pub mod tagger;
pub mod trainer;

pub use error::{Error, Result};
