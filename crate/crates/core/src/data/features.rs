use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conll::{TokenSequence, CHUNK_LABELS};
use crate::error::{Error, Result};
use crate::mrf::Sequence;

/// Sentinel preceding the first token in backward bigrams.
pub const BOS: &str = "<s>";
/// Sentinel following the last token in forward bigrams.
pub const EOS: &str = "</s>";
pub const ACTIVE_PER_POSITION: usize = 7;

const STOPWORDS_RAW: &str = include_str!("../../data/smart_stopwords.txt");

fn stopwords() -> &'static BTreeSet<&'static str> {
    static SET: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_RAW.lines().map(str::trim).filter(|l| !l.is_empty()).collect())
}

/// Membership in the shipped SMART stopword list, compared on the ASCII-lowercased word.
pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word.to_ascii_lowercase().as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    WordUnigram,
    PosUnigram,
    /// `(w_t, w_{t+1})`, with [`EOS`] past the end.
    WordBigramForward,
    /// `(w_{t-1}, w_t)`, with [`BOS`] before the start.
    WordBigramBackward,
    PosBigramForward,
    PosBigramBackward,
    /// Two slots: stopword, non-stopword.
    Stopword,
}

impl Category {
    pub const ALL: [Category; ACTIVE_PER_POSITION] = [
        Category::WordUnigram,
        Category::PosUnigram,
        Category::WordBigramForward,
        Category::WordBigramBackward,
        Category::PosBigramForward,
        Category::PosBigramBackward,
        Category::Stopword,
    ];
}

/// Feature index built from a training corpus.
///
/// Every vocabulary category reserves local slot 0 for unseen keys and numbers the
/// observed keys from 1 in sorted order. Bigram keys are the two strings joined by a
/// space (corpus fields never contain whitespace).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    vocab: Vec<BTreeMap<String, u32>>,
    offsets: Vec<u32>,
    num_features: usize,
}

fn keys(seq: &TokenSequence, t: usize) -> [String; 6] {
    let w = |i: usize| seq.tokens[i].word.as_str();
    let p = |i: usize| seq.tokens[i].pos.as_str();
    let last = seq.len() - 1;
    let (wn, pn) = if t == last { (EOS, EOS) } else { (w(t + 1), p(t + 1)) };
    let (wp, pp) = if t == 0 { (BOS, BOS) } else { (w(t - 1), p(t - 1)) };
    [
        w(t).to_string(),
        p(t).to_string(),
        format!("{} {}", w(t), wn),
        format!("{} {}", wp, w(t)),
        format!("{} {}", p(t), pn),
        format!("{} {}", pp, p(t)),
    ]
}

impl FeatureSpec {
    pub fn from_training(train: &[TokenSequence]) -> Self {
        let mut sets: Vec<BTreeSet<String>> = vec![BTreeSet::new(); 6];
        for seq in train {
            for t in 0..seq.len() {
                for (set, k) in sets.iter_mut().zip(keys(seq, t)) {
                    set.insert(k);
                }
            }
        }
        let vocab: Vec<BTreeMap<String, u32>> = sets
            .into_iter()
            .map(|s| s.into_iter().zip(1u32..).collect())
            .collect();
        let mut offsets = Vec::with_capacity(ACTIVE_PER_POSITION);
        let mut next = 0u32;
        for v in &vocab {
            offsets.push(next);
            next += v.len() as u32 + 1;
        }
        offsets.push(next);
        FeatureSpec {
            vocab,
            offsets,
            num_features: next as usize + 2,
        }
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Number of slots of a category, including the unseen slot.
    pub fn category_size(&self, c: Category) -> usize {
        match c {
            Category::Stopword => 2,
            _ => self.vocab[c as usize].len() + 1,
        }
    }

    pub fn category_offset(&self, c: Category) -> usize {
        self.offsets[c as usize] as usize
    }

    /// Local index of `word` in the word-unigram category (0 when unseen).
    pub fn word_id(&self, word: &str) -> u32 {
        self.vocab[0].get(word).copied().unwrap_or(0)
    }

    /// The seven active feature indices of every position, in category order.
    pub fn featurize(&self, seq: &TokenSequence) -> Vec<Vec<u32>> {
        (0..seq.len())
            .map(|t| {
                let mut f: Vec<u32> = keys(seq, t)
                    .iter()
                    .enumerate()
                    .map(|(c, k)| self.offsets[c] + self.vocab[c].get(k).copied().unwrap_or(0))
                    .collect();
                let stop = !is_stopword(&seq.tokens[t].word) as u32;
                f.push(self.offsets[6] + stop);
                f
            })
            .collect()
    }

    /// Featurizes a corpus for a CRF over [`CHUNK_LABELS`].
    pub fn extract(&self, sequences: &[TokenSequence]) -> FeaturizedDataset {
        let sequences: Vec<Sequence> = sequences
            .par_iter()
            .map(|s| Sequence {
                labels: s.label_ids(),
                obs: self.featurize(s),
            })
            .collect();
        FeaturizedDataset {
            num_features: self.num_features,
            num_labels: CHUNK_LABELS.len(),
            sequences,
        }
    }

    /// Word-token sequences for a Boltzmann chain with [`Self::category_size`] of
    /// `WordUnigram` observation symbols.
    pub fn token_sequences(&self, sequences: &[TokenSequence]) -> Vec<Sequence> {
        sequences
            .iter()
            .map(|s| Sequence {
                labels: s.label_ids(),
                obs: s.tokens.iter().map(|t| vec![self.word_id(&t.word)]).collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizedDataset {
    pub num_features: usize,
    pub num_labels: usize,
    pub sequences: Vec<Sequence>,
}

impl FeaturizedDataset {
    /// Sorted (feature, label) pairs that occur at least once.
    pub fn supported_pairs(&self) -> Vec<(usize, usize)> {
        let set: BTreeSet<(usize, usize)> = self
            .sequences
            .iter()
            .flat_map(|s| {
                s.obs
                    .iter()
                    .zip(&s.labels)
                    .flat_map(|(fs, &y)| fs.iter().map(move |&f| (f as usize, y)))
            })
            .collect();
        set.into_iter().collect()
    }

    pub fn num_positions(&self) -> usize {
        self.sequences.iter().map(Sequence::len).sum()
    }
}

/// Sparse binary-feature text file: a `num_features num_labels` header, then one
/// `label f1 f2 …` line per position with a blank line after every sequence.
pub fn write_sparse(ds: &FeaturizedDataset) -> String {
    let mut s = format!("{} {}\n", ds.num_features, ds.num_labels);
    for seq in &ds.sequences {
        for (y, fs) in seq.labels.iter().zip(&seq.obs) {
            s.push_str(&y.to_string());
            for f in fs {
                s.push(' ');
                s.push_str(&f.to_string());
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

pub fn read_sparse(text: &str) -> Result<FeaturizedDataset> {
    let mut lines = text.lines().enumerate();
    let parse = |line: usize, v: &str| {
        v.parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("not a non-negative integer: {v:?}"),
        })
    };
    let (num_features, num_labels) = match lines.next() {
        Some((_, h)) => {
            let f: Vec<&str> = h.split_whitespace().collect();
            if f.len() != 2 {
                return Err(Error::Parse {
                    line: 1,
                    message: "header must be `num_features num_labels`".into(),
                });
            }
            (parse(1, f[0])?, parse(1, f[1])?)
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let mut sequences = Vec::new();
    let mut cur = Sequence {
        labels: Vec::new(),
        obs: Vec::new(),
    };
    for (i, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            if !cur.is_empty() {
                sequences.push(std::mem::replace(
                    &mut cur,
                    Sequence {
                        labels: Vec::new(),
                        obs: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let y = parse(i + 1, fields[0])?;
        if y >= num_labels {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("label {y} out of range"),
            });
        }
        let mut fs = Vec::with_capacity(fields.len() - 1);
        for v in &fields[1..] {
            let f = parse(i + 1, v)?;
            if f >= num_features {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("feature {f} out of range"),
                });
            }
            fs.push(f as u32);
        }
        cur.labels.push(y);
        cur.obs.push(fs);
    }
    if !cur.is_empty() {
        sequences.push(cur);
    }
    Ok(FeaturizedDataset {
        num_features,
        num_labels,
        sequences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_conll_str;

    #[test]
    fn stopword_list_is_shipped() {
        assert_eq!(stopwords().len(), 570);
        assert!(is_stopword("the") && is_stopword("The"));
        assert!(!is_stopword("pound"));
    }

    #[test]
    fn single_token_sentence_uses_both_sentinels() {
        let seqs = parse_conll_str("Wow UH B-INTJ\n").unwrap();
        let spec = FeatureSpec::from_training(&seqs);
        assert_eq!(keys(&seqs[0], 0)[2], format!("Wow {EOS}"));
        assert_eq!(keys(&seqs[0], 0)[3], format!("{BOS} Wow"));
        // six categories with one key each plus unseen slots, plus two stopword slots
        assert_eq!(spec.num_features(), 6 * 2 + 2);
        let f = spec.featurize(&seqs[0]);
        assert_eq!(f, vec![vec![1, 3, 5, 7, 9, 11, 13]]);
    }

    #[test]
    fn unseen_keys_fall_back_to_slot_zero() {
        let train = parse_conll_str("the DT B-NP\ncat NN I-NP\n").unwrap();
        let test = parse_conll_str("a DT B-NP\ndog NN I-NP\n").unwrap();
        let spec = FeatureSpec::from_training(&train);
        let f = spec.featurize(&test[0]);
        // words and word bigrams unseen, POS unigrams and POS bigrams seen
        assert_eq!(f[0][0], spec.category_offset(Category::WordUnigram) as u32);
        assert_ne!(f[0][1], spec.category_offset(Category::PosUnigram) as u32);
        assert_eq!(spec.word_id("dog"), 0);
    }

    #[test]
    fn sparse_file_round_trips() {
        let seqs = parse_conll_str("the DT B-NP\ncat NN I-NP\n\nran VBD B-VP\n").unwrap();
        let spec = FeatureSpec::from_training(&seqs);
        let ds = spec.extract(&seqs);
        let back = read_sparse(&write_sparse(&ds)).unwrap();
        assert_eq!(back, ds);
        assert!(read_sparse("3 2\n5 0\n").is_err());
        assert!(read_sparse("3\n").is_err());
    }
}
