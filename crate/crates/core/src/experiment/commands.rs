use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    generate_corpus, load_corpus_dir, save_corpus_dir, split_dataset, ContactTypeTree, DataFormat, DatasetSplit,
    LabeledTicket, ReplyTemplateBank, Ticket,
};
use crate::ecd::{train, History, Precision};
use crate::eval::{class_table_tsv, evaluate, write_dump, write_dump_delimited, EvalReport, PredictionRecord};
use crate::rank::train_v1;

use super::{record_command, DatasetConfig, ExperimentConfig, ExperimentError, LabeledModel, ModelSection, TrainedModel};

pub const DATA_DIR: &str = "data";
pub const MODEL_DIR: &str = "model";
pub const SPLIT_FILE: &str = "split.json";

/// A corpus with its train/validation/test split.
pub struct PreparedData {
    pub tree: ContactTypeTree,
    pub bank: ReplyTemplateBank,
    pub split: DatasetSplit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitIds {
    seed: u64,
    train: Vec<String>,
    validation: Vec<String>,
    test: Vec<String>,
}

fn corpus(cfg: &ExperimentConfig) -> Result<(ContactTypeTree, ReplyTemplateBank, Vec<LabeledTicket>), ExperimentError> {
    match &cfg.dataset {
        DatasetConfig::Generate { generator, .. } => {
            let c = generate_corpus(generator, cfg.seed)?;
            Ok((c.tree, c.bank, c.tickets))
        }
        DatasetConfig::Load { path, format, .. } => {
            if !path.exists() {
                return Err(ExperimentError::Data(format!("dataset directory {} does not exist", path.display())));
            }
            let (tree, bank, loaded) = load_corpus_dir(path, *format)?;
            if loaded.warnings > 0 {
                log::warn!("ignored {} values in unknown columns {:?}", loaded.warnings, loaded.unknown_columns);
            }
            Ok((tree, bank, loaded.records))
        }
    }
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData, ExperimentError> {
    let (tree, bank, records) = corpus(cfg)?;
    let [a, b, c] = cfg.dataset.split();
    let split = split_dataset(&records, (a, b, c), cfg.seed)?;
    Ok(PreparedData { tree, bank, split })
}

fn dump_path(out: &Path, stem: &str, format: DataFormat) -> PathBuf {
    out.join(match format {
        DataFormat::JsonLines => format!("{stem}.jsonl"),
        DataFormat::Delimited => format!("{stem}.tsv"),
    })
}

fn write_records(path: &Path, format: DataFormat, records: &[PredictionRecord]) -> Result<(), ExperimentError> {
    let w = BufWriter::new(File::create(path)?);
    match format {
        DataFormat::JsonLines => write_dump(w, records)?,
        DataFormat::Delimited => write_dump_delimited(w, records)?,
    }
    Ok(())
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

/// Writes the corpus to `<out>/data`.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<Vec<String>, ExperimentError> {
    let (tree, bank, records) = corpus(cfg)?;
    let out = &cfg.output_dir;
    save_corpus_dir(&out.join(DATA_DIR), cfg.format, &tree, &bank, &records)?;
    let summary = vec![format!("wrote {} tickets, {} contact types, {} templates", records.len(), tree.len(), bank.len())];
    let data = format!("{DATA_DIR}/tickets.{}", cfg.format.extension());
    record_command(cfg, "generate", vec![data], summary.clone())?;
    Ok(summary)
}

/// Fits the configured family on a training split.
pub fn fit(section: &ModelSection, seed: u64, data: &PreparedData) -> Result<(TrainedModel, Option<History>), ExperimentError> {
    let s = &data.split;
    if let Some(v1) = section.v1(seed) {
        return Ok((TrainedModel::V1(train_v1(&s.train, &data.bank, &v1)?), None));
    }
    let ecd = section.ecd(seed).expect("ecd family");
    Ok(match ecd.trainer.precision {
        Precision::F32 => {
            let (m, h) = train::<f32>(ecd, &s.train, &s.validation, &data.tree, &data.bank)?;
            (TrainedModel::EcdF32(m), Some(h))
        }
        Precision::F64 => {
            let (m, h) = train::<f64>(ecd, &s.train, &s.validation, &data.tree, &data.bank)?;
            (TrainedModel::EcdF64(m), Some(h))
        }
    })
}

/// Prepares data, trains and saves the model with its split.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<String>, ExperimentError> {
    let out = &cfg.output_dir;
    let data = prepare_data(cfg)?;
    let s = &data.split;
    let all: Vec<LabeledTicket> = s.train.iter().chain(&s.validation).chain(&s.test).cloned().collect();
    save_corpus_dir(&out.join(DATA_DIR), cfg.format, &data.tree, &data.bank, &all)?;
    let ids = |v: &[LabeledTicket]| v.iter().map(|t| t.ticket.id.clone()).collect();
    let split = SplitIds { seed: s.seed, train: ids(&s.train), validation: ids(&s.validation), test: ids(&s.test) };
    fs::write(out.join(SPLIT_FILE), serde_json::to_string_pretty(&split)?)?;

    let (model, history) = fit(&cfg.model, cfg.seed, &data)?;
    let model_dir = out.join(MODEL_DIR);
    model.save(&model_dir, cfg.model.family())?;
    let mut artifacts = vec![format!("{DATA_DIR}/"), SPLIT_FILE.to_string(), format!("{MODEL_DIR}/")];
    let mut summary = vec![format!(
        "trained {} on {} tickets ({} validation, {} test)",
        cfg.model.family(),
        s.train.len(),
        s.validation.len(),
        s.test.len()
    )];
    if let Some(h) = history {
        fs::write(out.join("history.json"), serde_json::to_string_pretty(&h)?)?;
        artifacts.push("history.json".into());
        summary.push(format!("best epoch {} of {}, validation accuracy {:.4}", h.best_epoch, h.epochs.len(), h.best_accuracy));
    }
    record_command(cfg, "train", artifacts, summary.clone())?;
    Ok(summary)
}

/// Reloads the saved corpus and split written by `cmd_train`.
pub fn load_prepared(out: &Path, format: DataFormat) -> Result<PreparedData, ExperimentError> {
    let (tree, bank, loaded) = load_corpus_dir(&out.join(DATA_DIR), format)?;
    let text = fs::read_to_string(out.join(SPLIT_FILE))
        .map_err(|e| ExperimentError::Data(format!("no split in {} (run train first): {e}", out.display())))?;
    let ids: SplitIds = serde_json::from_str(&text)?;
    let by_id: HashMap<&str, &LabeledTicket> = loaded.records.iter().map(|t| (t.ticket.id.as_str(), t)).collect();
    let pick = |v: &[String]| {
        v.iter()
            .map(|id| by_id.get(id.as_str()).map(|t| (*t).clone()).ok_or_else(|| ExperimentError::Data(format!("split names unknown ticket {id}"))))
            .collect::<Result<Vec<_>, _>>()
    };
    let split = DatasetSplit { train: pick(&ids.train)?, validation: pick(&ids.validation)?, test: pick(&ids.test)?, seed: ids.seed };
    Ok(PreparedData { tree, bank, split })
}

pub fn load_model(out: &Path, format: DataFormat) -> Result<(LabeledModel, PreparedData), ExperimentError> {
    let data = load_prepared(out, format)?;
    let model = LabeledModel::load(&out.join(MODEL_DIR), data.tree.clone(), data.bank.clone())?;
    Ok((model, data))
}

/// Scores the test split: prediction dump, report and per-class tables.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvalReport, ExperimentError> {
    let out = &cfg.output_dir;
    let (model, data) = load_model(out, cfg.format)?;
    let records = model.records(&data.split.test, cfg.top_k)?;
    let dump = dump_path(out, "predictions", cfg.format);
    write_records(&dump, cfg.format, &records)?;
    let report = evaluate(&records, cfg.top_k, Some(&data.tree))?;
    fs::write(out.join("report.json"), report.to_json())?;
    fs::write(out.join("report.txt"), report.to_text())?;
    let mut artifacts = vec![rel(out, &dump), "report.json".into(), "report.txt".into()];
    for (name, o) in &report.outputs {
        let file = format!("classes_{name}.tsv");
        fs::write(out.join(&file), class_table_tsv(&o.classes))?;
        artifacts.push(file);
    }
    record_command(cfg, "evaluate", artifacts, report.to_text().lines().map(String::from).collect())?;
    Ok(report)
}

/// Reads tickets (one JSON object per line) and writes ranked suggestions.
pub fn read_tickets(path: &Path) -> Result<Vec<Ticket>, ExperimentError> {
    let f = File::open(path).map_err(|e| ExperimentError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Ticket = serde_json::from_str(&line).map_err(|e| ExperimentError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

pub fn cmd_predict(cfg: &ExperimentConfig, input: &Path) -> Result<Vec<PredictionRecord>, ExperimentError> {
    let out = &cfg.output_dir;
    let tickets = read_tickets(input)?;
    let (model, _) = load_model(out, cfg.format)?;
    let refs: Vec<&Ticket> = tickets.iter().collect();
    let suggestions = model.suggest(&refs, cfg.top_k)?;
    let records: Vec<PredictionRecord> = tickets
        .iter()
        .zip(suggestions)
        .flat_map(|(t, s)| {
            s.into_iter().map(move |(task, ranking)| PredictionRecord { ticket_id: t.id.clone(), task, ranking, truth: None })
        })
        .collect();
    let path = dump_path(out, "suggestions", cfg.format);
    write_records(&path, cfg.format, &records)?;
    let summary = vec![format!("wrote suggestions for {} tickets", tickets.len())];
    record_command(cfg, "predict", vec![rel(out, &path)], summary)?;
    Ok(records)
}
