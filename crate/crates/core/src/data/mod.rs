//! Corpus ingestion (CoNLL-2000 chunking format, chunking features) and synthetic data.

mod conll;
mod features;
mod synthetic;

pub use conll::{
    chunk_label_index, label_histogram, parse_conll, parse_conll_str, subsample, write_conll, Token,
    TokenSequence, CHUNK_LABELS,
};
pub use features::{
    is_stopword, read_sparse, write_sparse, Category, FeatureSpec, FeaturizedDataset, ACTIVE_PER_POSITION,
    BOS, EOS,
};
pub use synthetic::{make_synthetic, read_dataset, write_dataset, Dataset, Samples};
