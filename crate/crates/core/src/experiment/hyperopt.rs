use std::collections::BTreeMap;
use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Task;
use crate::eval::accuracy;

use super::commands::{fit, prepare_data, PreparedData};
use super::{record_command, ExperimentConfig, ExperimentError, LabeledModel, ModelSection, ParamRange};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: BTreeMap<String, toml::Value>,
    /// Contact-type top-1 accuracy on the validation split.
    pub validation_accuracy: Option<f64>,
    pub minutes: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn sample(range: &ParamRange, rng: &mut ChaCha8Rng) -> toml::Value {
    match range {
        ParamRange::Choice(v) => v[rng.random_range(0..v.len())].clone(),
        ParamRange::Uniform([lo, hi]) => toml::Value::Float(rng.random_range(*lo..=*hi)),
        ParamRange::LogUniform([lo, hi]) => toml::Value::Float(rng.random_range(lo.ln()..=hi.ln()).exp()),
        ParamRange::IntUniform([lo, hi]) => toml::Value::Integer(rng.random_range(*lo..=*hi)),
    }
}

fn check_range(path: &str, range: &ParamRange) -> Result<(), ExperimentError> {
    let ok = match range {
        ParamRange::Choice(v) => !v.is_empty(),
        ParamRange::Uniform([lo, hi]) => lo.is_finite() && hi.is_finite() && lo <= hi,
        ParamRange::LogUniform([lo, hi]) => *lo > 0.0 && hi.is_finite() && lo <= hi,
        ParamRange::IntUniform([lo, hi]) => lo <= hi,
    };
    if ok {
        Ok(())
    } else {
        Err(ExperimentError::Config { path: format!("hyperopt.space.{path}"), message: "empty or invalid range".into() })
    }
}

/// Sets the value at a dotted path; numeric segments index arrays.
fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), String> {
    let segments: Vec<&str> = path.split('.').collect();
    let mut cur = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.get_mut(*seg).ok_or_else(|| format!("no field {seg:?}"))?
            }
            toml::Value::Array(a) => {
                let idx: usize = seg.parse().map_err(|_| format!("{seg:?} is not an array index"))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| format!("index {idx} out of range (length {len})"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("{seg:?} is inside a scalar")),
        };
    }
    Ok(())
}

fn apply(model: &ModelSection, params: &BTreeMap<String, toml::Value>) -> Result<ModelSection, ExperimentError> {
    let mut v = toml::Value::try_from(model).expect("model section serializes");
    for (path, value) in params {
        set_path(&mut v, path, value.clone())
            .map_err(|message| ExperimentError::Config { path: format!("hyperopt.space.{path}"), message })?;
    }
    let section: ModelSection = v.try_into().map_err(|e: toml::de::Error| ExperimentError::Config {
        path: "hyperopt.space".into(),
        message: e.to_string(),
    })?;
    if let ModelSection::V2Ecd { ecd } = &section {
        crate::ecd::validate_config(ecd)
            .map_err(|e| ExperimentError::Config { path: "hyperopt.space".into(), message: e.to_string() })?;
    }
    Ok(section)
}

fn run_trial(cfg: &ExperimentConfig, data: &PreparedData, index: usize, section: &ModelSection) -> Result<f64, ExperimentError> {
    let (model, history) = fit(section, cfg.seed, data)?;
    let dir = cfg.output_dir.join("trials").join(format!("{index:03}"));
    model.save(&dir.join("model"), section.family())?;
    if let Some(h) = history {
        fs::write(dir.join("history.json"), serde_json::to_string_pretty(&h)?)?;
    }
    let labeled = LabeledModel { model, tree: data.tree.clone(), bank: data.bank.clone(), version: String::new() };
    let records = labeled.records(&data.split.validation, 1)?;
    let ct: Vec<_> = records.iter().filter(|r| r.task == Task::ContactType.name()).collect();
    let preds: Vec<Vec<String>> = ct.iter().map(|r| r.labels()).collect();
    let truths: Vec<String> = ct.iter().map(|r| r.truth.clone().unwrap_or_default()).collect();
    Ok(accuracy(&preds, &truths)?)
}

/// Random search over `[hyperopt.space]`; trials are ranked by validation accuracy.
pub fn cmd_hyperopt(cfg: &ExperimentConfig) -> Result<Vec<Trial>, ExperimentError> {
    let h = cfg.hyperopt.as_ref().ok_or_else(|| ExperimentError::Config { path: "hyperopt".into(), message: "section missing".into() })?;
    for (path, range) in &h.space {
        check_range(path, range)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut plans = Vec::with_capacity(h.budget);
    for _ in 0..h.budget {
        let params: BTreeMap<String, toml::Value> = h.space.iter().map(|(p, r)| (p.clone(), sample(r, &mut rng))).collect();
        let section = apply(&cfg.model, &params)?;
        plans.push((params, section));
    }
    let data = prepare_data(cfg)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Trial>>> = Mutex::new(vec![None; plans.len()]);
    std::thread::scope(|s| {
        for _ in 0..h.workers.min(plans.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((params, section)) = plans.get(i) else { break };
                let start = Instant::now();
                let outcome = run_trial(cfg, &data, i, section);
                let minutes = start.elapsed().as_secs_f64() / 60.0;
                let (validation_accuracy, error) = match outcome {
                    Ok(a) => (Some(a), None),
                    Err(e) => {
                        log::warn!("trial {i} failed: {e}");
                        (None, Some(e.to_string()))
                    }
                };
                results.lock().expect("results")[i] = Some(Trial { index: i, params: params.clone(), validation_accuracy, minutes, error });
            });
        }
    });
    let mut trials: Vec<Trial> = results.into_inner().expect("results").into_iter().map(|t| t.expect("every trial ran")).collect();
    if trials.iter().all(|t| t.validation_accuracy.is_none()) {
        return Err(ExperimentError::Training(format!("all {} trials failed", trials.len())));
    }
    trials.sort_by(|a, b| {
        let key = |t: &Trial| t.validation_accuracy.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then(a.index.cmp(&b.index))
    });

    let out = &cfg.output_dir;
    let mut tsv = String::from("rank\ttrial\tvalidation_accuracy\tminutes\tparams\n");
    for (r, t) in trials.iter().enumerate() {
        let acc = t.validation_accuracy.map_or("failed".to_string(), |a| a.to_string());
        let params = serde_json::to_string(&t.params)?;
        tsv.push_str(&format!("{}\t{}\t{acc}\t{:.3}\t{params}\n", r + 1, t.index, t.minutes));
    }
    fs::write(out.join("hyperopt.tsv"), &tsv)?;
    fs::write(out.join("hyperopt.json"), serde_json::to_string_pretty(&trials)?)?;
    let mut best = cfg.clone();
    best.model = plans[trials[0].index].1.clone();
    best.hyperopt = None;
    fs::write(out.join("best.toml"), best.to_toml())?;
    let summary = tsv.lines().map(String::from).collect();
    record_command(cfg, "hyperopt", vec!["hyperopt.tsv".into(), "hyperopt.json".into(), "best.toml".into(), "trials/".into()], summary)?;
    Ok(trials)
}
