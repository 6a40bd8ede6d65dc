use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 23 chunk tags: `O` plus `B-`/`I-` for each of the 11 chunk types.
pub const CHUNK_LABELS: [&str; 23] = [
    "O", "B-ADJP", "I-ADJP", "B-ADVP", "I-ADVP", "B-CONJP", "I-CONJP", "B-INTJ", "I-INTJ", "B-LST", "I-LST",
    "B-NP", "I-NP", "B-PP", "I-PP", "B-PRT", "I-PRT", "B-SBAR", "I-SBAR", "B-UCP", "I-UCP", "B-VP", "I-VP",
];

pub fn chunk_label_index(label: &str) -> Option<usize> {
    CHUNK_LABELS.iter().position(|l| *l == label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub word: String,
    pub pos: String,
    pub chunk: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Chunk label indices into [`CHUNK_LABELS`].
    pub fn label_ids(&self) -> Vec<usize> {
        self.tokens
            .iter()
            .map(|t| chunk_label_index(&t.chunk).expect("labels are validated when parsing"))
            .collect()
    }
}

/// Parses `word POS chunk` lines; blank lines separate sentences. Line numbers in errors
/// are 1-based.
pub fn parse_conll_str(text: &str) -> Result<Vec<TokenSequence>> {
    let mut out = Vec::new();
    let mut cur = TokenSequence::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 columns (word POS chunk), found {}", fields.len()),
            });
        }
        if chunk_label_index(fields[2]).is_none() {
            return Err(Error::UnknownLabel {
                line: line_no,
                label: fields[2].to_string(),
            });
        }
        cur.tokens.push(Token {
            word: fields[0].to_string(),
            pos: fields[1].to_string(),
            chunk: fields[2].to_string(),
        });
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

pub fn parse_conll(path: &Path) -> Result<Vec<TokenSequence>> {
    parse_conll_str(&std::fs::read_to_string(path)?)
}

/// Inverse of [`parse_conll_str`]: one line per token, a blank line after every sentence.
pub fn write_conll(sequences: &[TokenSequence]) -> String {
    let mut s = String::new();
    for seq in sequences {
        for t in &seq.tokens {
            s.push_str(&t.word);
            s.push(' ');
            s.push_str(&t.pos);
            s.push(' ');
            s.push_str(&t.chunk);
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

pub fn label_histogram(sequences: &[TokenSequence]) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for t in sequences.iter().flat_map(|s| &s.tokens) {
        *h.entry(t.chunk.clone()).or_insert(0) += 1;
    }
    h
}

/// `k` sentences drawn without replacement, kept in corpus order.
pub fn subsample(sequences: &[TokenSequence], k: usize, seed: u64) -> Result<Vec<TokenSequence>> {
    if k > sequences.len() {
        return Err(Error::Config(format!(
            "train_sentences: asked for {k} sentences, the corpus has {}",
            sequences.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, sequences.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| sequences[i].clone()).collect())
}
