//! Sessions, vocabulary, tokenization, splitting and synthetic corpora.

pub mod embedding;
pub mod generate;
pub mod prepare;
pub mod session;
pub mod split;
pub mod vocab;

pub use embedding::{embedding_table, PretrainedVectors};
pub use generate::{generate_corpus, CorpusSpec, GeneratedCorpus};
pub use prepare::{Limits, PreparedSession};
pub use session::{fingerprint, interval_matrix, time_intervals, Comment, Session};
pub use split::{split, SplitIndices};
pub use vocab::{tokenize, TokenId, UserIndex, Vocabulary, PAD, UNK};
