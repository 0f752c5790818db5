//! Retrieval-based data augmentation for text classification.
//!
//! A large bank of unlabeled sentences is embedded once; task-specific
//! query embeddings retrieve in-domain candidates, a teacher classifier
//! labels them, and a student is trained on the filtered synthetic set.

pub mod augment;
pub mod bank;
pub mod classifier;
pub mod data;
pub mod embed;
pub mod error;
pub mod index;
pub mod pipeline;
pub mod queries;
pub mod vecmath;

pub use error::{Error, Result};
