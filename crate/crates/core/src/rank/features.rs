use serde::{Deserialize, Serialize};

use super::RankError;
use crate::corpus::Ticket;
use crate::textprep::{build_dictionary, BagOfWords};
use crate::vectorize::{fit_lsa, fit_tfidf, LsaModel, LsaOptions, LsaVector, SparseVector, TfIdfModel};

/// Categorical ticket fields, in encoding order.
pub const CATEGORICAL_FIELDS: [&str; 5] = ["product_type", "user_type", "country", "city", "trip_status"];

pub fn categorical_value(t: &Ticket, field: usize) -> &str {
    match field {
        0 => &t.product_type,
        1 => &t.user_type,
        2 => &t.country,
        3 => &t.city,
        4 => &t.trip_status,
        _ => panic!("categorical field {field} out of range"),
    }
}

/// Integer codes for categorical fields plus the numeric and binary
/// fields. Codes follow sorted training values; unseen values map to an
/// out-of-vocabulary code equal to the vocabulary size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TicketEncoder {
    vocabs: Vec<Vec<String>>,
    one_hot: bool,
}

impl TicketEncoder {
    pub fn fit<'a>(tickets: impl IntoIterator<Item = &'a Ticket>, one_hot: bool) -> Self {
        let mut sets = vec![std::collections::BTreeSet::new(); CATEGORICAL_FIELDS.len()];
        for t in tickets {
            for (f, set) in sets.iter_mut().enumerate() {
                set.insert(categorical_value(t, f).to_string());
            }
        }
        Self { vocabs: sets.into_iter().map(|s| s.into_iter().collect()).collect(), one_hot }
    }

    /// Number of codes for `field`, including the out-of-vocabulary code.
    pub fn cardinality(&self, field: usize) -> usize {
        self.vocabs[field].len() + 1
    }

    pub fn code(&self, field: usize, value: &str) -> usize {
        let v = &self.vocabs[field];
        v.binary_search_by(|x| x.as_str().cmp(value)).unwrap_or(v.len())
    }

    pub fn codes(&self, t: &Ticket) -> Vec<usize> {
        (0..CATEGORICAL_FIELDS.len()).map(|f| self.code(f, categorical_value(t, f))).collect()
    }

    /// Categorical codes (or one-hot blocks), then `eta_minutes` (-1 when
    /// missing), an eta-missing flag and `has_trip`.
    pub fn encode(&self, t: &Ticket) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for (f, code) in self.codes(t).into_iter().enumerate() {
            if self.one_hot {
                let start = out.len();
                out.resize(start + self.cardinality(f), 0.0);
                out[start + code] = 1.0;
            } else {
                out.push(code as f64);
            }
        }
        out.push(t.eta_minutes.unwrap_or(-1.0));
        out.push(t.eta_minutes.is_none() as u8 as f64);
        out.push(t.has_trip as u8 as f64);
        out
    }

    pub fn width(&self) -> usize {
        let cat = if self.one_hot {
            (0..self.vocabs.len()).map(|f| self.cardinality(f)).sum()
        } else {
            self.vocabs.len()
        };
        cat + 3
    }
}

/// Fitted TF-IDF weighting and LSA projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TextModels {
    pub tfidf: TfIdfModel,
    pub lsa: LsaModel,
}

impl TextModels {
    pub fn fit(bags: &[BagOfWords], min_df: u32, max_vocab: usize, lsa: LsaOptions) -> Result<Self, RankError> {
        let dictionary = build_dictionary(bags, min_df, max_vocab)?;
        let tfidf = fit_tfidf(bags, dictionary)?;
        let docs: Vec<SparseVector> = bags.iter().map(|b| tfidf.transform(b)).collect();
        let lsa = fit_lsa(&docs, tfidf.vocab_size(), lsa)?;
        Ok(Self { tfidf, lsa })
    }

    pub fn vectors(&self, bag: &BagOfWords) -> (SparseVector, LsaVector) {
        let v = self.tfidf.transform(bag);
        let z = self.lsa.project(&v);
        (v, z)
    }
}

/// Everything the v1 models read from one ticket.
#[derive(Debug, Clone, PartialEq)]
pub struct TicketVectors {
    pub tfidf: SparseVector,
    pub lsa: LsaVector,
    pub codes: Vec<usize>,
    pub encoded: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    pub(crate) fn ticket(product: &str, eta: Option<f64>) -> Ticket {
        Ticket {
            id: "T1".into(),
            message: "hello".into(),
            created_at: chrono::Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap(),
            product_type: product.into(),
            user_type: "rider".into(),
            country: "US".into(),
            city: "Boston".into(),
            eta_minutes: eta,
            trip_status: if eta.is_some() { "completed".into() } else { "none".into() },
            has_trip: eta.is_some(),
        }
    }

    #[test]
    fn codes_and_oov() {
        let ts = [ticket("pool", Some(3.0)), ticket("black", None)];
        let enc = TicketEncoder::fit(ts.iter(), false);
        assert_eq!(enc.code(0, "black"), 0);
        assert_eq!(enc.code(0, "pool"), 1);
        assert_eq!(enc.code(0, "x"), 2);
        assert_eq!(enc.encode(&ts[0]), vec![1.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 1.0]);
        assert_eq!(enc.encode(&ts[1])[5..], [-1.0, 1.0, 0.0]);
        assert_eq!(enc.width(), 8);

        let hot = TicketEncoder::fit(ts.iter(), true);
        let v = hot.encode(&ticket("x", None));
        assert_eq!(v.len(), hot.width());
        assert_eq!(&v[..3], &[0.0, 0.0, 1.0]);
    }
}
