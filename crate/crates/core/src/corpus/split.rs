use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, LabeledTicket};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledTicket>,
    pub validation: Vec<LabeledTicket>,
    pub test: Vec<LabeledTicket>,
    pub seed: u64,
}

/// Random three-way split. Sizes are `round(n * f)` for train and
/// validation with the remainder going to test; each split receives at
/// least one record.
pub fn split_dataset(
    data: &[LabeledTicket],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    let (ft, fv, fe) = fractions;
    if [ft, fv, fe].iter().any(|f| !f.is_finite() || *f <= 0.0) {
        return Err(CorpusError::InvalidSplit("fractions must be positive".into()));
    }
    if ((ft + fv + fe) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidSplit(format!(
            "fractions must sum to 1, got {}",
            ft + fv + fe
        )));
    }
    let n = data.len();
    if n < 3 {
        return Err(CorpusError::InvalidSplit(format!("need at least 3 records, got {n}")));
    }
    let mut seen = HashSet::with_capacity(n);
    for lt in data {
        if !seen.insert(lt.ticket.id.as_str()) {
            return Err(CorpusError::InvalidSplit(format!("duplicate ticket id {:?}", lt.ticket.id)));
        }
    }

    let mut n_train = ((n as f64) * ft).round() as usize;
    let mut n_val = ((n as f64) * fv).round() as usize;
    n_train = n_train.clamp(1, n - 2);
    n_val = n_val.clamp(1, n - n_train - 1);

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |r: &[usize]| r.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: take(&idx[..n_train]),
        validation: take(&idx[n_train..n_train + n_val]),
        test: take(&idx[n_train + n_val..]),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorSpec};

    fn data(n: usize) -> Vec<LabeledTicket> {
        generate_corpus(&GeneratorSpec { ticket_count: n, ..Default::default() }, 1).unwrap().tickets
    }

    #[test]
    fn sizes_follow_fractions() {
        let d = data(100);
        let s = split_dataset(&d, (0.8, 0.1, 0.1), 4).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (80, 10, 10));
    }

    #[test]
    fn disjoint_exhaustive_deterministic() {
        let d = data(57);
        let a = split_dataset(&d, (0.6, 0.2, 0.2), 9).unwrap();
        let b = split_dataset(&d, (0.6, 0.2, 0.2), 9).unwrap();
        assert_eq!(a, b);
        let mut ids: Vec<&str> = a
            .train
            .iter()
            .chain(&a.validation)
            .chain(&a.test)
            .map(|t| t.ticket.id.as_str())
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 57);
    }

    #[test]
    fn bad_fractions_and_tiny_data() {
        let d = data(10);
        assert!(split_dataset(&d, (0.5, 0.5, 0.5), 1).is_err());
        assert!(split_dataset(&d, (1.0, 0.0, 0.0), 1).is_err());
        assert!(split_dataset(&d[..2], (0.8, 0.1, 0.1), 1).is_err());
        let s = split_dataset(&d[..3], (0.98, 0.01, 0.01), 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (1, 1, 1));
    }
}
