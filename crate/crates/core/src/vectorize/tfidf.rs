use std::fmt::Write as _;

use super::{SparseVector, VectorizeError};
use crate::textprep::{BagOfWords, Dictionary};

/// Smoothed TF-IDF: `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, raw term
/// counts as tf, and L2-normalized output vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfModel {
    dictionary: Dictionary,
    idf: Vec<f64>,
}

pub fn fit_tfidf(docs: &[BagOfWords], dictionary: Dictionary) -> Result<TfIdfModel, VectorizeError> {
    if docs.is_empty() {
        return Err(VectorizeError::EmptyCorpus);
    }
    let mut df = vec![0u32; dictionary.len()];
    for doc in docs {
        for (term, _) in doc.iter() {
            if let Some(i) = dictionary.index_of(term) {
                df[i] += 1;
            }
        }
    }
    let n = docs.len() as f64;
    let idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
    Ok(TfIdfModel { dictionary, idf })
}

impl TfIdfModel {
    pub fn from_parts(dictionary: Dictionary, idf: Vec<f64>) -> Result<Self, VectorizeError> {
        if idf.len() != dictionary.len() {
            return Err(VectorizeError::Format(format!(
                "idf has {} entries for a vocabulary of {}",
                idf.len(),
                dictionary.len()
            )));
        }
        if idf.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(VectorizeError::Format("idf values must be finite and >= 0".into()));
        }
        Ok(Self { dictionary, idf })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn vocab_size(&self) -> usize {
        self.idf.len()
    }

    /// Un-normalized `tf * idf` weights; out-of-vocabulary terms are dropped.
    pub fn weights(&self, doc: &BagOfWords) -> SparseVector {
        SparseVector::from_pairs(
            doc.iter()
                .filter_map(|(t, c)| self.dictionary.index_of(t).map(|i| (i, c as f64 * self.idf[i]))),
        )
    }

    pub fn transform(&self, doc: &BagOfWords) -> SparseVector {
        self.weights(doc).normalized()
    }

    /// `index<TAB>idf` lines, one per vocabulary entry.
    pub fn idf_to_text(&self) -> String {
        let mut s = String::new();
        for (i, v) in self.idf.iter().enumerate() {
            writeln!(s, "{i}\t{v:?}").unwrap();
        }
        s
    }

    pub fn idf_from_text(text: &str) -> Result<Vec<f64>, VectorizeError> {
        text.lines()
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(n, l)| {
                let (i, v) = l
                    .split_once('\t')
                    .ok_or_else(|| VectorizeError::Format(format!("idf line {}: missing tab", n + 1)))?;
                if i.parse::<usize>().ok() != Some(n) {
                    return Err(VectorizeError::Format(format!("idf line {}: bad index", n + 1)));
                }
                v.parse::<f64>().map_err(|_| VectorizeError::Format(format!("idf line {}: bad value", n + 1)))
            })
            .collect()
    }
}

/// Shorthand transform.
pub fn transform_tfidf(model: &TfIdfModel, doc: &BagOfWords) -> SparseVector {
    model.transform(doc)
}
