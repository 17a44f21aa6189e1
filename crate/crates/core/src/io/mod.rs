//! File formats: MatrixMarket matrices, plain-text corpora, JSON model files
//! and CSV traces.

pub mod corpus;
pub mod matrix_market;
pub mod model_file;
pub mod trace;

pub use corpus::{ingest_corpus, load_vocabulary, save_vocabulary, Vocabulary};
pub use matrix_market::{load_matrix_market, parse_matrix_market, save_matrix_market, write_matrix_market};
pub use model_file::{load_model, save_model, ModelFile};
pub use trace::{save_trace, write_trace};
