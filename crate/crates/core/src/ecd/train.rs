use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{validate_config, FeatureKind, ModelConfig};
use super::data::{TargetValue, Vocabularies};
use super::model::{EcdModel, Example, Prediction};
use super::EcdError;
use crate::autodiff::{AdamConfig, AdamState, Graph, Scalar};
use crate::corpus::{ContactTypeTree, LabeledTicket, ReplyTemplateBank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    /// Top-1 validation accuracy per categorical, binary or sequence output.
    pub validation_accuracy: BTreeMap<String, f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub initial_validation_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_accuracy: f64,
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (batch as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Mean total loss over `examples` with dropout off.
pub fn evaluation_loss<T: Scalar>(model: &EcdModel<T>, examples: &[Example]) -> Result<f64, EcdError> {
    let mut total = 0.0;
    for chunk in examples.chunks(model.config.trainer.batch_size) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let rows: Vec<&[_]> = chunk.iter().map(|e| e.inputs.as_slice()).collect();
        let mut g = Graph::new(false, 0);
        let fwd = model.forward(&mut g, &rows)?;
        let losses = model.losses(&mut g, &fwd, &refs)?;
        let l = model.total_loss(&mut g, &losses)?;
        total += g.value(l).item().f64() * chunk.len() as f64;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Top-1 accuracy per output with a discrete target.
pub fn accuracy<T: Scalar>(model: &EcdModel<T>, examples: &[Example]) -> Result<BTreeMap<String, f64>, EcdError> {
    let inputs: Vec<_> = examples.iter().map(|e| e.inputs.clone()).collect();
    let preds = model.predict_inputs(&inputs, 1)?;
    let mut out = BTreeMap::new();
    for (i, o) in model.config.output_features.iter().enumerate() {
        if o.kind == FeatureKind::Numeric {
            continue;
        }
        let classes = model.vocab.outputs[i].classes();
        let correct = examples
            .iter()
            .zip(&preds)
            .filter(|(e, p)| {
                let top = match &p[i] {
                    Prediction::Ranked(r) => r.first().map(|x| x.0),
                    Prediction::Value(_) => None,
                };
                let truth = match &e.targets[i] {
                    TargetValue::Class(c) => classes.map(|cl| cl[*c]),
                    TargetValue::Path(p) => p.last().copied(),
                    TargetValue::Flag(b) => Some(*b as usize),
                    TargetValue::Number(_) => None,
                };
                top.is_some() && top == truth
            })
            .count();
        out.insert(o.name.clone(), correct as f64 / examples.len().max(1) as f64);
    }
    Ok(out)
}

/// Minibatch Adam on the weighted loss, keeping the parameters of the
/// epoch with the best validation accuracy.
pub fn train<T: Scalar>(
    config: ModelConfig,
    train: &[LabeledTicket],
    validation: &[LabeledTicket],
    tree: &ContactTypeTree,
    bank: &ReplyTemplateBank,
) -> Result<(EcdModel<T>, History), EcdError> {
    if train.is_empty() {
        return Err(EcdError::EmptyTraining);
    }
    validate_config(&config)?;
    let vocab = Vocabularies::fit(&config, train, tree, bank);
    let tc = config.trainer.clone();
    let mut model = EcdModel::<T>::new(config, vocab, tc.seed)?;
    let train_ex: Vec<Example> = train.iter().map(|t| model.example(t)).collect::<Result<_, _>>()?;
    let val_ex: Vec<Example> = validation.iter().map(|t| model.example(t)).collect::<Result<_, _>>()?;
    let field = tc.validation_field.clone().unwrap_or_else(|| model.config.output_features[0].name.clone());

    let mut adam = AdamState::new(AdamConfig {
        learning_rate: tc.learning_rate,
        beta1: tc.beta1,
        beta2: tc.beta2,
        epsilon: tc.epsilon,
        clip_norm: tc.clip_norm,
    });
    let mut history = History {
        initial_validation_loss: evaluation_loss(&model, if val_ex.is_empty() { &train_ex } else { &val_ex })?,
        epochs: Vec::new(),
        best_epoch: 0,
        best_accuracy: f64::NEG_INFINITY,
    };
    let mut best = model.store.clone();
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    for epoch in 1..=tc.epochs {
        let start = Instant::now();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(batch_seed(tc.seed, epoch, usize::MAX)));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train_ex[i]).collect();
            let rows: Vec<&[_]> = batch.iter().map(|e| e.inputs.as_slice()).collect();
            let mut g = Graph::<T>::new(true, batch_seed(tc.seed, epoch, b));
            let fwd = model.forward(&mut g, &rows)?;
            let losses = model.losses(&mut g, &fwd, &batch)?;
            let total = model.total_loss(&mut g, &losses)?;
            let value = g.value(total).item().f64();
            if !value.is_finite() {
                return Err(EcdError::Diverged { epoch, batch: b });
            }
            loss_sum += value * batch.len() as f64;
            g.backward(total)?;
            adam.step(&mut model.store, &g.param_grads());
            for (id, t) in g.take_buffer_updates() {
                model.store.set(id, t)?;
            }
        }
        let eval_set = if val_ex.is_empty() { &train_ex } else { &val_ex };
        let acc = accuracy(&model, eval_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_ex.len() as f64,
            validation_loss: evaluation_loss(&model, eval_set)?,
            validation_accuracy: acc.clone(),
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, validation loss {:.4}, {field} accuracy {:.4}",
            record.train_loss,
            record.validation_loss,
            acc.get(&field).copied().unwrap_or(f64::NAN)
        );
        history.epochs.push(record);
        // Numeric-only selection falls back to the validation loss.
        let score = acc.get(&field).copied().unwrap_or(-history.epochs.last().unwrap().validation_loss);
        if score > history.best_accuracy {
            history.best_accuracy = score;
            history.best_epoch = epoch;
            best = model.store.clone();
        }
        if tc.target_accuracy.is_some_and(|t| score >= t) {
            break;
        }
        if tc.patience > 0 && epoch - history.best_epoch >= tc.patience {
            break;
        }
    }
    model.store = best;
    Ok((model, history))
}
