//! Message preprocessing: markup removal, tokenization, stop-word removal,
//! suffix-stripping normalization and bag-of-words/dictionary building.

mod dictionary;
mod html;
mod stopwords;

use std::collections::BTreeMap;
use std::sync::LazyLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

pub use dictionary::{build_dictionary, Dictionary, DictionaryError};
pub use html::strip_html;
pub use stopwords::{is_stop_word, STOP_WORDS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub base: String,
}

/// Maps a lowercase token to its normal form.
pub trait TokenNormalizer: Send + Sync {
    fn normalize(&self, token: &str) -> String;
}

/// English Snowball (Porter2) stemmer iterated to a fixed point, which
/// makes the mapping idempotent.
#[derive(Debug, Clone, Copy, Default)]
pub struct SuffixStemmer;

static ENGLISH: LazyLock<Stemmer> = LazyLock::new(|| Stemmer::create(Algorithm::English));

impl TokenNormalizer for SuffixStemmer {
    fn normalize(&self, token: &str) -> String {
        let mut cur = token.to_string();
        loop {
            let next = ENGLISH.stem(&cur);
            if next.is_empty() || next == cur {
                return cur;
            }
            cur = next.into_owned();
        }
    }
}

/// Leaves tokens untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl TokenNormalizer for Identity {
    fn normalize(&self, token: &str) -> String {
        token.to_string()
    }
}

pub fn normalize(token: &str) -> String {
    SuffixStemmer.normalize(token)
}

/// Lowercased alphanumeric runs of `text`, with no filtering.
pub fn raw_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase)
}

/// Splits on non-alphanumeric boundaries, lowercases, drops stop words and
/// normalizes with the default stemmer.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_with(text, &SuffixStemmer)
}

pub fn tokenize_with(text: &str, normalizer: &dyn TokenNormalizer) -> Vec<Token> {
    raw_words(text)
        .filter(|w| !is_stop_word(w))
        .map(|w| Token { base: normalizer.normalize(&w), surface: w })
        .collect()
}

/// Word sequence used by the deep text encoders: markup removed and
/// lowercased, but with stop words and inflections kept.
pub fn encoder_words(text: &str) -> Vec<String> {
    raw_words(&strip_html(text)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagOfWords {
    counts: BTreeMap<String, u32>,
}

impl BagOfWords {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<'a, I: IntoIterator<Item = &'a Token>>(tokens: I) -> Self {
        let mut bag = Self::new();
        for t in tokens {
            bag.add(&t.base, 1);
        }
        bag
    }

    pub fn add(&mut self, term: &str, count: u32) {
        if count > 0 {
            *self.counts.entry(term.to_string()).or_insert(0) += count;
        }
    }

    /// Adds every count of `other` into `self`.
    pub fn merge(&mut self, other: &BagOfWords) {
        for (t, &c) in &other.counts {
            self.add(t, c);
        }
    }

    pub fn get(&self, term: &str) -> u32 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// The full message-to-bag chain.
pub struct TextPipeline {
    normalizer: Box<dyn TokenNormalizer>,
}

impl Default for TextPipeline {
    fn default() -> Self {
        Self { normalizer: Box::new(SuffixStemmer) }
    }
}

impl TextPipeline {
    pub fn with_normalizer(normalizer: Box<dyn TokenNormalizer>) -> Self {
        Self { normalizer }
    }

    pub fn bag(&self, message: &str) -> BagOfWords {
        let cleaned = strip_html(message);
        BagOfWords::from_tokens(&tokenize_with(&cleaned, self.normalizer.as_ref()))
    }
}
