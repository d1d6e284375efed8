use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EcdError;
use crate::autodiff::nn::CellType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Text,
    Categorical,
    Numeric,
    Binary,
    Sequence,
}

pub const TEXT_ENCODERS: [&str; 6] = ["char_cnn", "word_cnn", "char_rnn", "word_rnn", "char_crnn", "word_crnn"];

/// Ticket fields usable as inputs and their kinds.
pub const INPUT_FIELDS: [(&str, FeatureKind); 8] = [
    ("message", FeatureKind::Text),
    ("product_type", FeatureKind::Categorical),
    ("user_type", FeatureKind::Categorical),
    ("country", FeatureKind::Categorical),
    ("city", FeatureKind::Categorical),
    ("trip_status", FeatureKind::Categorical),
    ("eta_minutes", FeatureKind::Numeric),
    ("has_trip", FeatureKind::Binary),
];

/// Fields usable as outputs with their admissible decoder kinds.
pub const OUTPUT_FIELDS: [(&str, &[FeatureKind]); 4] = [
    ("contact_type", &[FeatureKind::Categorical, FeatureKind::Sequence]),
    ("reply_template", &[FeatureKind::Categorical]),
    ("eta_minutes", &[FeatureKind::Numeric]),
    ("has_trip", &[FeatureKind::Binary]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFeature {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: FeatureKind,
    /// Text encoder name; ignored for other kinds.
    #[serde(default = "default_encoder")]
    pub encoder: String,
    #[serde(default = "d256")]
    pub embedding_size: usize,
    #[serde(default = "default_filter_sizes")]
    pub filter_sizes: Vec<usize>,
    #[serde(default = "d512")]
    pub num_filters: usize,
    #[serde(default = "default_cell")]
    pub cell_type: CellType,
    #[serde(default = "d256")]
    pub hidden_size: usize,
    #[serde(default = "one")]
    pub num_layers: usize,
    #[serde(default)]
    pub bidirectional: bool,
    /// Token cap; 0 picks 1024 for characters and 256 for words.
    #[serde(default)]
    pub max_length: usize,
    /// Words seen fewer times in training map to the unknown token.
    #[serde(default = "one")]
    pub min_count: usize,
}

impl InputFeature {
    pub fn new(name: &str, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
            encoder: default_encoder(),
            embedding_size: 256,
            filter_sizes: default_filter_sizes(),
            num_filters: 512,
            cell_type: default_cell(),
            hidden_size: 256,
            num_layers: 1,
            bidirectional: false,
            max_length: 0,
            min_count: 1,
        }
    }

    pub fn char_level(&self) -> bool {
        self.encoder.starts_with("char_")
    }

    pub fn effective_max_length(&self) -> usize {
        match (self.max_length, self.char_level()) {
            (0, true) => 1024,
            (0, false) => 256,
            (n, _) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombinerConfig {
    pub fc_layers: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        Self { fc_layers: Vec::new(), activation: Activation::Relu, dropout: 0.35 }
    }
}

/// What a dependent decoder receives from its dependency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Injection {
    Hidden,
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFeature {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: FeatureKind,
    #[serde(default = "default_decoder_fc")]
    pub fc_layers: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "unit")]
    pub loss_weight: f64,
    #[serde(default)]
    pub dependencies: Vec<String>,
    #[serde(default = "default_injection")]
    pub inject: Injection,
    // Sequence decoder settings.
    #[serde(default = "default_cell")]
    pub cell_type: CellType,
    #[serde(default = "d256")]
    pub hidden_size: usize,
    #[serde(default = "d64")]
    pub token_embedding_size: usize,
    /// Step cap; 0 uses the tree depth plus the end step.
    #[serde(default)]
    pub max_steps: usize,
    #[serde(default = "yes")]
    pub constrained_to_tree: bool,
    #[serde(default = "one")]
    pub beam_width: usize,
    /// Divides each sequence's summed step losses by its length.
    #[serde(default)]
    pub normalize_loss: bool,
}

impl OutputFeature {
    pub fn new(name: &str, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
            fc_layers: default_decoder_fc(),
            activation: Activation::Relu,
            dropout: default_dropout(),
            loss_weight: 1.0,
            dependencies: Vec::new(),
            inject: Injection::Hidden,
            cell_type: default_cell(),
            hidden_size: 256,
            token_embedding_size: 64,
            max_steps: 0,
            constrained_to_tree: true,
            beam_width: 1,
            normalize_loss: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Output whose validation accuracy drives model selection; defaults
    /// to the first declared output.
    pub validation_field: Option<String>,
    /// Stops once the validation accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    pub precision: Precision,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 20,
            patience: 5,
            learning_rate: 0.00025,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
            seed: 0,
            validation_field: None,
            target_accuracy: None,
            precision: Precision::F32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_features: Vec<InputFeature>,
    #[serde(default)]
    pub combiner: CombinerConfig,
    pub output_features: Vec<OutputFeature>,
    #[serde(default)]
    pub trainer: TrainerConfig,
}

impl Default for ModelConfig {
    /// Word CNN over the message, embedded categorical fields, contact
    /// type and reply template heads with the template depending on the
    /// contact type.
    fn default() -> Self {
        let mut inputs = vec![InputFeature::new("message", FeatureKind::Text)];
        for f in ["product_type", "user_type", "country", "city", "trip_status"] {
            inputs.push(InputFeature::new(f, FeatureKind::Categorical));
        }
        inputs.push(InputFeature::new("eta_minutes", FeatureKind::Numeric));
        inputs.push(InputFeature::new("has_trip", FeatureKind::Binary));
        let ct = OutputFeature::new("contact_type", FeatureKind::Categorical);
        let mut rt = OutputFeature::new("reply_template", FeatureKind::Categorical);
        rt.dependencies = vec!["contact_type".into()];
        Self { input_features: inputs, combiner: CombinerConfig::default(), output_features: vec![ct, rt], trainer: TrainerConfig::default() }
    }
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self, EcdError> {
        toml::from_str(text).map_err(|e| EcdError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.output_features.iter().position(|o| o.name == name)
    }
}

/// Checks the config and returns the decoder evaluation order: a
/// topological order of the dependency graph, ties by declaration order.
pub fn validate_config(config: &ModelConfig) -> Result<Vec<usize>, EcdError> {
    if config.input_features.is_empty() {
        return Err(EcdError::Config("at least one input feature is required".into()));
    }
    if config.output_features.is_empty() {
        return Err(EcdError::Config("at least one output feature is required".into()));
    }
    let mut seen = BTreeMap::new();
    for (fi, f) in config.input_features.iter().enumerate() {
        let (_, kind) = INPUT_FIELDS
            .iter()
            .find(|(n, _)| *n == f.name)
            .ok_or_else(|| EcdError::Config(format!("unknown input field {:?}", f.name)))?;
        if *kind != f.kind {
            return Err(EcdError::Config(format!("input {:?} has type {:?}, expected {kind:?}", f.name, f.kind)));
        }
        if seen.insert(f.name.as_str(), ()).is_some() {
            return Err(EcdError::Config(format!("input {:?} declared twice", f.name)));
        }
        if f.kind == FeatureKind::Text {
            if !TEXT_ENCODERS.contains(&f.encoder.as_str()) {
                return Err(EcdError::UnknownComponent(format!(
                    "encoder {:?} at input_features[{fi}].encoder (expected one of {})",
                    f.encoder,
                    TEXT_ENCODERS.join(", ")
                )));
            }
            let conv = f.encoder.ends_with("cnn");
            if conv && (f.filter_sizes.is_empty() || f.filter_sizes.contains(&0) || f.num_filters == 0) {
                return Err(EcdError::Config(format!("{}: filter sizes and counts must be positive", f.name)));
            }
            if !conv && (f.hidden_size == 0 || f.num_layers == 0) {
                return Err(EcdError::Config(format!("{}: recurrent sizes must be positive", f.name)));
            }
        }
        if f.embedding_size == 0 {
            return Err(EcdError::Config(format!("{}: embedding size must be positive", f.name)));
        }
    }
    check_fc(&config.combiner.fc_layers, config.combiner.dropout, "combiner")?;

    let outputs = &config.output_features;
    for (i, o) in outputs.iter().enumerate() {
        let (_, kinds) = OUTPUT_FIELDS
            .iter()
            .find(|(n, _)| *n == o.name)
            .ok_or_else(|| EcdError::Config(format!("unknown output field {:?}", o.name)))?;
        if !kinds.contains(&o.kind) {
            return Err(EcdError::UnknownComponent(format!(
                "decoder type {:?} at output_features[{i}].type for {:?}",
                o.kind, o.name
            )));
        }
        if outputs[..i].iter().any(|p| p.name == o.name) {
            return Err(EcdError::Config(format!("output {:?} declared twice", o.name)));
        }
        if !(o.loss_weight >= 0.0 && o.loss_weight.is_finite()) {
            return Err(EcdError::Config(format!("{}: loss weight must be non-negative", o.name)));
        }
        if o.beam_width == 0 || (o.kind == FeatureKind::Sequence && (o.hidden_size == 0 || o.token_embedding_size == 0)) {
            return Err(EcdError::Config(format!("{}: beam width and sequence sizes must be positive", o.name)));
        }
        check_fc(&o.fc_layers, o.dropout, &o.name)?;
        for d in &o.dependencies {
            if config.output_index(d).is_none() {
                return Err(if config.input_features.iter().any(|f| &f.name == d) {
                    EcdError::Config(format!("{} depends on input feature {d:?}", o.name))
                } else {
                    EcdError::Config(format!("{} depends on undeclared output {d:?}", o.name))
                });
            }
        }
    }
    if outputs.iter().all(|o| o.loss_weight == 0.0) {
        log::warn!("all loss weights are zero; training will not change the model");
    }
    if let Some(v) = &config.trainer.validation_field {
        if config.output_index(v).is_none() {
            return Err(EcdError::Config(format!("validation field {v:?} is not an output")));
        }
    }
    if config.trainer.batch_size == 0 {
        return Err(EcdError::Config("batch size must be positive".into()));
    }
    topological_order(config)
}

fn check_fc(sizes: &[usize], dropout: f64, what: &str) -> Result<(), EcdError> {
    if sizes.contains(&0) {
        return Err(EcdError::Config(format!("{what}: layer sizes must be positive")));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(EcdError::Config(format!("{what}: dropout must lie in [0, 1)")));
    }
    Ok(())
}

fn topological_order(config: &ModelConfig) -> Result<Vec<usize>, EcdError> {
    let outputs = &config.output_features;
    let deps: Vec<Vec<usize>> =
        outputs.iter().map(|o| o.dependencies.iter().map(|d| config.output_index(d).expect("checked")).collect()).collect();
    let mut done = vec![false; outputs.len()];
    let mut order = Vec::with_capacity(outputs.len());
    while order.len() < outputs.len() {
        let next = (0..outputs.len()).find(|&i| !done[i] && deps[i].iter().all(|&d| done[d]));
        match next {
            Some(i) => {
                done[i] = true;
                order.push(i);
            }
            None => return Err(EcdError::Cycle(find_cycle(&deps, &done).into_iter().map(|i| outputs[i].name.clone()).collect())),
        }
    }
    Ok(order)
}

/// Walks unfinished dependencies from the first unfinished node until a
/// node repeats; every unfinished node has an unfinished dependency.
fn find_cycle(deps: &[Vec<usize>], done: &[bool]) -> Vec<usize> {
    let mut path = vec![done.iter().position(|d| !d).expect("some node unfinished")];
    loop {
        let cur = *path.last().unwrap();
        let next = *deps[cur].iter().find(|&&d| !done[d]).expect("blocked node");
        if let Some(p) = path.iter().position(|&v| v == next) {
            return path.split_off(p);
        }
        path.push(next);
    }
}

fn default_encoder() -> String {
    "word_cnn".into()
}
fn default_filter_sizes() -> Vec<usize> {
    vec![2, 3, 4, 5]
}
fn default_decoder_fc() -> Vec<usize> {
    vec![512, 256]
}
fn default_cell() -> CellType {
    CellType::Gru
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_injection() -> Injection {
    Injection::Hidden
}
fn default_dropout() -> f64 {
    0.35
}
fn d64() -> usize {
    64
}
fn d256() -> usize {
    256
}
fn d512() -> usize {
    512
}
fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
