use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::{combined_outcomes, task_records, top1_correct};
use super::{EvalError, EvalReport, PredictionRecord};

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Observed accuracy of `b` minus accuracy of `a`.
    pub delta: f64,
    /// Two-sided p-value for a zero delta.
    pub p_value: f64,
}

/// Bootstrap test on per-ticket correctness. Paired resampling draws the
/// same tickets for both runs; unpaired resampling draws each run apart.
pub fn bootstrap_delta(a: &[bool], b: &[bool], paired: bool, resamples: usize, seed: u64) -> Result<BootstrapResult, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Empty);
    }
    if paired && a.len() != b.len() {
        return Err(EvalError::Misaligned(format!("paired runs of {} and {} tickets", a.len(), b.len())));
    }
    let mean = |x: &[bool]| x.iter().filter(|&&v| v).count() as f64 / x.len() as f64;
    let delta = mean(b) - mean(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut le, mut ge) = (0usize, 0usize);
    for _ in 0..resamples {
        let d = if paired {
            let n = a.len();
            let mut s = 0i64;
            for _ in 0..n {
                let i = rng.random_range(0..n);
                s += b[i] as i64 - a[i] as i64;
            }
            s as f64 / n as f64
        } else {
            let draw = |x: &[bool], rng: &mut ChaCha8Rng| {
                (0..x.len()).filter(|_| x[rng.random_range(0..x.len())]).count() as f64 / x.len() as f64
            };
            let ma = draw(a, &mut rng);
            draw(b, &mut rng) - ma
        };
        // Centre the resampled deltas on zero to approximate the null.
        let centred = d - delta;
        if centred <= -delta.abs() {
            le += 1;
        }
        if centred >= delta.abs() {
            ge += 1;
        }
    }
    let p_value = ((le + ge + 1) as f64 / (resamples + 1) as f64).min(1.0);
    Ok(BootstrapResult { delta, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    /// Per-metric differences (`b - a`), keyed `output.metric`.
    pub deltas: BTreeMap<String, f64>,
    /// Significance of the accuracy deltas, keyed by output (plus `combined`).
    pub significance: BTreeMap<String, BootstrapResult>,
}

/// Compares two evaluated runs over the same tickets.
pub fn compare_runs(
    a: (&EvalReport, &[PredictionRecord]),
    b: (&EvalReport, &[PredictionRecord]),
    paired: bool,
    seed: u64,
) -> Result<RunComparison, EvalError> {
    let (ra, da) = a;
    let (rb, db) = b;
    if ra.ticket_count != rb.ticket_count || ra.outputs.keys().ne(rb.outputs.keys()) {
        return Err(EvalError::Misaligned("runs cover different evaluation sets".into()));
    }
    let mut deltas = BTreeMap::new();
    let mut significance = BTreeMap::new();
    for (name, oa) in &ra.outputs {
        let ob = &rb.outputs[name];
        deltas.insert(format!("{name}.accuracy"), ob.accuracy - oa.accuracy);
        deltas.insert(format!("{name}.hits_at_k"), ob.hits_at_k - oa.hits_at_k);
        if let (Some(x), Some(y)) = (oa.accuracy_plus_parent, ob.accuracy_plus_parent) {
            deltas.insert(format!("{name}.accuracy_plus_parent"), y - x);
        }
        let ta = task_records(da, name)?;
        let tb = task_records(db, name)?;
        if ta.len() != tb.len() || ta.iter().zip(&tb).any(|(x, y)| x.ticket_id != y.ticket_id || x.truth != y.truth) {
            return Err(EvalError::Misaligned(format!("{name} records differ between runs")));
        }
        let ca: Vec<bool> = ta.iter().map(|r| top1_correct(r)).collect();
        let cb: Vec<bool> = tb.iter().map(|r| top1_correct(r)).collect();
        significance.insert(name.clone(), bootstrap_delta(&ca, &cb, paired, BOOTSTRAP_RESAMPLES, seed)?);
    }
    if let (Some(x), Some(y)) = (ra.combined_accuracy, rb.combined_accuracy) {
        deltas.insert("combined_accuracy".into(), y - x);
        let ca = combined_outcomes(da)?;
        let cb = combined_outcomes(db)?;
        significance.insert("combined".into(), bootstrap_delta(&ca, &cb, paired, BOOTSTRAP_RESAMPLES, seed)?);
    }
    Ok(RunComparison { deltas, significance })
}
