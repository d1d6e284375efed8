use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_prototypes, make_pairs, pair_features, sort_scores, train_ranker, with_template_text, PairExample,
    PrototypeSet, RankError, TextModels, TicketEncoder, TicketVectors,
};
use crate::corpus::{LabeledTicket, ReplyTemplateBank, Task, Ticket, TemplateId};
use crate::forest::{fit_forest, ForestConfig, ForestModel};
use crate::textprep::{BagOfWords, Dictionary, TextPipeline};
use crate::vectorize::{LsaModel, LsaOptions, TfIdfModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Classification,
    Ranking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct V1Config {
    pub formulation: Formulation,
    pub forest: ForestConfig,
    pub negatives_per_positive: usize,
    /// Adds the dense TF-IDF vector to the multi-class input.
    pub include_tfidf: bool,
    pub one_hot_categoricals: bool,
    pub min_df: u32,
    pub max_vocab: usize,
    pub lsa: LsaOptions,
}

impl Default for V1Config {
    fn default() -> Self {
        Self {
            formulation: Formulation::Ranking,
            forest: ForestConfig::default(),
            negatives_per_positive: 5,
            include_tfidf: false,
            one_hot_categoricals: false,
            min_df: 2,
            max_vocab: 50_000,
            lsa: LsaOptions::default(),
        }
    }
}

/// Model for one task. `classes` maps dense positions to raw label ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel {
    pub task: Task,
    pub classes: Vec<usize>,
    pub prototypes: Option<PrototypeSet>,
    pub forest: ForestModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct V1Model {
    pub config: V1Config,
    pub text: TextModels,
    pub encoder: TicketEncoder,
    pub tasks: Vec<TaskModel>,
}

/// Per-task ranked raw label ids with scores.
pub type V1Prediction = Vec<(Task, Vec<(usize, f64)>)>;

pub fn ticket_vectors(ticket: &Ticket, text: &TextModels, encoder: &TicketEncoder) -> TicketVectors {
    let bag = TextPipeline::default().bag(&ticket.message);
    let (tfidf, lsa) = text.vectors(&bag);
    TicketVectors { tfidf, lsa, codes: encoder.codes(ticket), encoded: encoder.encode(ticket) }
}

/// Multi-class input row: LSA vector, optional dense TF-IDF, encoded fields.
pub fn multiclass_features(tv: &TicketVectors, vocab: Option<usize>) -> Vec<f64> {
    let mut f = tv.lsa.0.clone();
    if let Some(n) = vocab {
        f.extend(tv.tfidf.to_dense(n));
    }
    f.extend_from_slice(&tv.encoded);
    f
}

pub fn train_multiclass_baseline(
    vectors: &[TicketVectors],
    labels: &[usize],
    n_classes: usize,
    vocab: Option<usize>,
    config: &ForestConfig,
) -> Result<ForestModel, RankError> {
    let x: Vec<Vec<f64>> = vectors.iter().map(|tv| multiclass_features(tv, vocab)).collect();
    Ok(fit_forest(&x, labels, n_classes, config)?)
}

fn label_space(task: Task, data: &[LabeledTicket], bank: &ReplyTemplateBank) -> Vec<usize> {
    let mut classes: Vec<usize> = match task {
        Task::ContactType => data.iter().map(|t| t.contact_type.0).chain(bank.contact_types().map(|n| n.0)).collect(),
        Task::ReplyTemplate => (0..bank.len()).collect(),
    };
    classes.sort_unstable();
    classes.dedup();
    classes
}

/// Fits text models, the field encoder and one forest per task.
pub fn train_v1(data: &[LabeledTicket], bank: &ReplyTemplateBank, config: &V1Config) -> Result<V1Model, RankError> {
    if data.is_empty() {
        return Err(RankError::Invalid("no training tickets".into()));
    }
    config.forest.validate()?;
    let pipeline = TextPipeline::default();
    let bags: Vec<BagOfWords> = data.iter().map(|t| pipeline.bag(&t.ticket.message)).collect();
    let text = TextModels::fit(&bags, config.min_df, config.max_vocab, config.lsa)?;
    let encoder = TicketEncoder::fit(data.iter().map(|t| &t.ticket), config.one_hot_categoricals);
    let vectors: Vec<TicketVectors> = data
        .par_iter()
        .zip(&bags)
        .map(|(t, bag)| {
            let (tfidf, lsa) = text.vectors(bag);
            TicketVectors { tfidf, lsa, codes: encoder.codes(&t.ticket), encoded: encoder.encode(&t.ticket) }
        })
        .collect();

    let mut tasks = Vec::new();
    for (ti, task) in Task::ALL.into_iter().enumerate() {
        let classes = label_space(task, data, bank);
        let dense: Vec<usize> = data.iter().map(|t| classes.binary_search(&task.label(t)).expect("label in space")).collect();
        let (prototypes, forest) = match config.formulation {
            Formulation::Classification => {
                let vocab = config.include_tfidf.then(|| text.tfidf.vocab_size());
                (None, train_multiclass_baseline(&vectors, &dense, classes.len(), vocab, &config.forest)?)
            }
            Formulation::Ranking => {
                let mut protos = build_prototypes(dense.iter().copied().zip(&bags), classes.len(), &text);
                if task == Task::ReplyTemplate {
                    let texts: Vec<BagOfWords> = classes.iter().map(|&c| pipeline.bag(bank.text(TemplateId(c)))).collect();
                    protos = with_template_text(protos, &texts, &text);
                }
                let seed = config.forest.seed.wrapping_add(ti as u64);
                let pairs = make_pairs(&dense, classes.len(), config.negatives_per_positive, seed)?;
                let examples: Vec<PairExample> = pairs
                    .par_iter()
                    .map(|p| PairExample {
                        row: p.row,
                        class: p.class,
                        features: pair_features(&vectors[p.row], p.class, &protos),
                        label: p.label,
                    })
                    .collect();
                let forest = train_ranker(&examples, &config.forest)?;
                (Some(protos), forest)
            }
        };
        tasks.push(TaskModel { task, classes, prototypes, forest });
    }
    Ok(V1Model { config: config.clone(), text, encoder, tasks })
}

impl TaskModel {
    /// Ranked dense class scores over every class.
    pub fn scores(&self, tv: &TicketVectors, vocab: Option<usize>) -> Result<Vec<(usize, f64)>, RankError> {
        match &self.prototypes {
            None => {
                let p = self.forest.predict_proba(&multiclass_features(tv, vocab))?;
                Ok(p.into_iter().enumerate().collect())
            }
            Some(protos) => (0..self.classes.len())
                .map(|c| Ok((c, self.forest.predict_proba(&pair_features(tv, c, protos))?[1])))
                .collect(),
        }
    }
}

impl V1Model {
    pub fn vectors(&self, ticket: &Ticket) -> TicketVectors {
        ticket_vectors(ticket, &self.text, &self.encoder)
    }

    pub fn predict(&self, ticket: &Ticket, top_k: usize) -> Result<V1Prediction, RankError> {
        let tv = self.vectors(ticket);
        let vocab = self.config.include_tfidf.then(|| self.text.tfidf.vocab_size());
        self.tasks
            .iter()
            .map(|m| {
                let ranked = sort_scores(m.scores(&tv, vocab)?, top_k);
                Ok((m.task, ranked.into_iter().map(|(c, s)| (m.classes[c], s)).collect()))
            })
            .collect()
    }

    pub fn task(&self, task: Task) -> Option<&TaskModel> {
        self.tasks.iter().find(|m| m.task == task)
    }

    pub fn save(&self, dir: &Path) -> Result<(), RankError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("dictionary.tsv"), self.text.tfidf.dictionary().to_text())?;
        fs::write(dir.join("idf.txt"), self.text.tfidf.idf_to_text())?;
        self.text.lsa.write_binary(BufWriter::new(File::create(dir.join("lsa.bin"))?))?;
        for m in &self.tasks {
            m.forest.write_binary(BufWriter::new(File::create(dir.join(format!("forest_{}.bin", m.task.name())))?))?;
        }
        let meta = Meta {
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            tasks: self.tasks.iter().map(|m| TaskMeta { task: m.task, classes: m.classes.clone(), prototypes: m.prototypes.clone() }).collect(),
        };
        serde_json::to_writer(BufWriter::new(File::create(dir.join("v1.json"))?), &meta)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, RankError> {
        let dictionary = Dictionary::from_text(&fs::read_to_string(dir.join("dictionary.tsv"))?)?;
        let idf = TfIdfModel::idf_from_text(&fs::read_to_string(dir.join("idf.txt"))?)?;
        let tfidf = TfIdfModel::from_parts(dictionary, idf)?;
        let lsa = LsaModel::read_binary(BufReader::new(File::open(dir.join("lsa.bin"))?))?;
        let meta: Meta = serde_json::from_reader(BufReader::new(File::open(dir.join("v1.json"))?))?;
        let tasks = meta
            .tasks
            .into_iter()
            .map(|t| {
                let f = File::open(dir.join(format!("forest_{}.bin", t.task.name())))?;
                let forest = ForestModel::read_binary(BufReader::new(f))?;
                Ok(TaskModel { task: t.task, classes: t.classes, prototypes: t.prototypes, forest })
            })
            .collect::<Result<_, RankError>>()?;
        Ok(Self { config: meta.config, text: TextModels { tfidf, lsa }, encoder: meta.encoder, tasks })
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: V1Config,
    encoder: TicketEncoder,
    tasks: Vec<TaskMeta>,
}

#[derive(Serialize, Deserialize)]
struct TaskMeta {
    task: Task,
    classes: Vec<usize>,
    prototypes: Option<PrototypeSet>,
}
