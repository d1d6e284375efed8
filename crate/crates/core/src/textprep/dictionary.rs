use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use super::BagOfWords;

#[derive(Debug, Error, PartialEq)]
pub enum DictionaryError {
    #[error("cannot build a dictionary from an empty corpus")]
    EmptyCorpus,
    #[error("min_df and max_vocab must both be >= 1")]
    InvalidLimits,
    #[error("dictionary line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Term to dense index, plus the document frequency of each term.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    index: HashMap<String, usize>,
}

/// Keeps terms with document frequency `>= min_df`, then the `max_vocab`
/// most frequent of those. Indices run in descending document frequency,
/// ties broken lexicographically.
pub fn build_dictionary(docs: &[BagOfWords], min_df: u32, max_vocab: usize) -> Result<Dictionary, DictionaryError> {
    if min_df < 1 || max_vocab < 1 {
        return Err(DictionaryError::InvalidLimits);
    }
    if docs.is_empty() {
        return Err(DictionaryError::EmptyCorpus);
    }
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    for doc in docs {
        for (term, _) in doc.iter() {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, u32)> = df.into_iter().filter(|&(_, d)| d >= min_df).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(max_vocab);
    Ok(Dictionary::from_entries(kept.into_iter().map(|(t, d)| (t.to_string(), d))))
}

impl Dictionary {
    fn from_entries<I: IntoIterator<Item = (String, u32)>>(entries: I) -> Self {
        let (terms, doc_freq): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { terms, doc_freq, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn doc_freq(&self, index: usize) -> u32 {
        self.doc_freq[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// One `index<TAB>term<TAB>document_frequency` line per term.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, (t, d)) in self.terms.iter().zip(&self.doc_freq).enumerate() {
            writeln!(s, "{i}\t{t}\t{d}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, DictionaryError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let err = |message: &str| DictionaryError::Parse { line: n + 1, message: message.to_string() };
            let mut parts = line.split('\t');
            let (Some(i), Some(t), Some(d), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected three tab-separated fields"));
            };
            let i: usize = i.parse().map_err(|_| err("bad index"))?;
            if i != entries.len() {
                return Err(err("indices must be contiguous from 0"));
            }
            let d: u32 = d.parse().map_err(|_| err("bad document frequency"))?;
            if d == 0 {
                return Err(err("document frequency must be >= 1"));
            }
            entries.push((t.to_string(), d));
        }
        Ok(Self::from_entries(entries))
    }
}
