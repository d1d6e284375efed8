use serde::{Deserialize, Serialize};

use super::TextModels;
use crate::textprep::BagOfWords;
use crate::vectorize::{cosine_dense, cosine_sparse, LsaVector, SparseVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub tfidf: SparseVector,
    pub lsa: LsaVector,
}

impl Prototype {
    fn from_bag(bag: &BagOfWords, text: &TextModels) -> Self {
        let (v, z) = text.vectors(bag);
        Self { tfidf: v.normalized(), lsa: z.normalized() }
    }

    fn zero(k: usize) -> Self {
        Self { tfidf: SparseVector::new(), lsa: LsaVector(vec![0.0; k]) }
    }
}

/// Per-class prototype vectors, indexed by dense class position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub classes: Vec<Prototype>,
    /// Prototypes built from the template text itself (reply templates only).
    pub templates: Option<Vec<Prototype>>,
    /// Classes that had no history and carry zero prototypes.
    pub empty: Vec<usize>,
}

impl PrototypeSet {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Pools the bags of each class's tickets into one bag and projects it.
/// `history` pairs a dense class index with a ticket bag.
pub fn build_prototypes<'a>(
    history: impl IntoIterator<Item = (usize, &'a BagOfWords)>,
    n_classes: usize,
    text: &TextModels,
) -> PrototypeSet {
    let mut pooled = vec![BagOfWords::new(); n_classes];
    let mut seen = vec![false; n_classes];
    for (c, bag) in history {
        pooled[c].merge(bag);
        seen[c] = true;
    }
    let k = text.lsa.k();
    let mut empty = Vec::new();
    let classes = pooled
        .iter()
        .enumerate()
        .map(|(c, bag)| {
            if seen[c] {
                Prototype::from_bag(bag, text)
            } else {
                empty.push(c);
                Prototype::zero(k)
            }
        })
        .collect();
    if !empty.is_empty() {
        log::warn!("{} classes have no training history; their prototypes are zero", empty.len());
    }
    PrototypeSet { classes, templates: None, empty }
}

/// Adds template-text prototypes, one bag per dense class.
pub fn with_template_text(mut set: PrototypeSet, texts: &[BagOfWords], text: &TextModels) -> PrototypeSet {
    set.templates = Some(texts.iter().map(|b| Prototype::from_bag(b, text)).collect());
    set
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFeatures {
    pub cos_tfidf: f64,
    pub cos_lsa: f64,
    pub cos_tfidf_template: Option<f64>,
    pub cos_lsa_template: Option<f64>,
}

impl SimilarityFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.cos_tfidf, self.cos_lsa];
        v.extend(self.cos_tfidf_template);
        v.extend(self.cos_lsa_template);
        v
    }
}

pub fn similarity_features(tfidf: &SparseVector, lsa: &LsaVector, class: usize, prototypes: &PrototypeSet) -> SimilarityFeatures {
    let p = &prototypes.classes[class];
    let t = prototypes.templates.as_ref().map(|ts| &ts[class]);
    SimilarityFeatures {
        cos_tfidf: cosine_sparse(tfidf, &p.tfidf),
        cos_lsa: cosine_dense(lsa.as_slice(), p.lsa.as_slice()),
        cos_tfidf_template: t.map(|t| cosine_sparse(tfidf, &t.tfidf)),
        cos_lsa_template: t.map(|t| cosine_dense(lsa.as_slice(), t.lsa.as_slice())),
    }
}
