use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{validate_config, Activation, FeatureKind, Injection, ModelConfig};
use super::data::{encode_inputs, encode_targets, InputValue, InputVocab, OutputSpace, TargetValue, Vocabularies};
use super::EcdError;
use crate::autodiff::nn::{CellState, CellType, Linear, RnnCell};
use crate::autodiff::{Graph, ParamId, ParamStore, Scalar, SeqLayout, Tensor, Var};
use crate::corpus::{LabeledTicket, Ticket};
use crate::rank::sort_scores;

const BN_MOMENTUM: f64 = 0.1;
const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
struct Conv {
    width: usize,
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
enum Encoder {
    Text { embed: ParamId, convs: Vec<Conv>, layers: Vec<(RnnCell, Option<RnnCell>)> },
    Categorical { embed: ParamId },
    Numeric { gamma: ParamId, beta: ParamId, mean: ParamId, var: ParamId, placeholder: ParamId },
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
enum Head {
    Classes(Linear),
    Scalar(Linear),
    Sequence { init: Linear, embed: ParamId, cell: RnnCell, out: Linear },
}

#[derive(Debug, Clone, PartialEq)]
struct Decoder {
    fc: Vec<Linear>,
    head: Head,
    deps: Vec<usize>,
    input_width: usize,
    hidden_width: usize,
}

/// Per-example model inputs and targets, already mapped to indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub inputs: Vec<InputValue>,
    pub targets: Vec<TargetValue>,
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub combined: Var,
    pub hidden: Vec<Var>,
    pub logits: Vec<Option<Var>>,
    /// Output indices in the order their decoders ran.
    pub trace: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prediction {
    /// Raw label ids with scores, best first.
    Ranked(Vec<(usize, f64)>),
    Value(f64),
}

impl Prediction {
    pub fn ranked(&self) -> &[(usize, f64)] {
        match self {
            Prediction::Ranked(r) => r,
            Prediction::Value(_) => &[],
        }
    }
}

/// A decoded tree path with its summed log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PathHypothesis {
    pub nodes: Vec<usize>,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcdModel<T: Scalar = f32> {
    pub config: ModelConfig,
    pub order: Vec<usize>,
    pub vocab: Vocabularies,
    pub store: ParamStore<T>,
    encoders: Vec<Encoder>,
    combiner: Vec<Linear>,
    decoders: Vec<Decoder>,
}

fn activate<T: Scalar>(g: &mut Graph<T>, a: Activation, x: Var) -> Result<Var, EcdError> {
    Ok(match a {
        Activation::Relu => g.relu(x)?,
        Activation::Tanh => g.tanh(x)?,
        Activation::Sigmoid => g.sigmoid(x)?,
    })
}

/// Log-softmax over the allowed entries; disallowed entries get `-inf`.
pub fn masked_log_softmax(row: &[f64], allowed: &[bool]) -> Vec<f64> {
    let max = row.iter().zip(allowed).filter(|(_, &a)| a).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = row.iter().zip(allowed).filter(|(_, &a)| a).map(|(v, _)| (v - max).exp()).sum();
    let lse = max + total.ln();
    row.iter().zip(allowed).map(|(v, &a)| if a { v - lse } else { f64::NEG_INFINITY }).collect()
}

impl<T: Scalar> EcdModel<T> {
    /// Builds freshly initialized parameters for `config` over `vocab`.
    pub fn new(config: ModelConfig, vocab: Vocabularies, seed: u64) -> Result<Self, EcdError> {
        let order = validate_config(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut encoders = Vec::new();
        let mut width = 0;
        for (f, v) in config.input_features.iter().zip(&vocab.inputs) {
            let n = &f.name;
            let (enc, w) = match (f.kind, v) {
                (FeatureKind::Text, InputVocab::Tokens(tv)) => {
                    let e = f.embedding_size;
                    let embed = store.add_uniform(&format!("{n}.embed"), &[tv.len(), e], (3.0 / e as f64).sqrt(), &mut rng);
                    let (mut convs, mut layers) = (Vec::new(), Vec::new());
                    let mut d = e;
                    if f.encoder.ends_with("cnn") {
                        for &k in &f.filter_sizes {
                            let w = store.add_glorot(&format!("{n}.conv{k}.w"), k * e, f.num_filters, &mut rng);
                            let b = store.add_zeros(&format!("{n}.conv{k}.b"), &[f.num_filters]);
                            convs.push(Conv { width: k, w, b });
                        }
                        d = f.num_filters * f.filter_sizes.len();
                    }
                    if f.encoder.ends_with("rnn") {
                        for l in 0..f.num_layers {
                            let fw = RnnCell::new(&mut store, &format!("{n}.rnn{l}.fw"), f.cell_type, d, f.hidden_size, &mut rng);
                            let bw = f
                                .bidirectional
                                .then(|| RnnCell::new(&mut store, &format!("{n}.rnn{l}.bw"), f.cell_type, d, f.hidden_size, &mut rng));
                            d = f.hidden_size * if f.bidirectional { 2 } else { 1 };
                            layers.push((fw, bw));
                        }
                    }
                    (Encoder::Text { embed, convs, layers }, d)
                }
                (FeatureKind::Categorical, InputVocab::Categories(c)) => {
                    let e = f.embedding_size;
                    let embed = store.add_uniform(&format!("{n}.embed"), &[c.len() + 1, e], (3.0 / e as f64).sqrt(), &mut rng);
                    (Encoder::Categorical { embed }, e)
                }
                (FeatureKind::Numeric, _) => {
                    let enc = Encoder::Numeric {
                        gamma: store.add(&format!("{n}.gamma"), Tensor::full(&[1], T::one())),
                        beta: store.add_zeros(&format!("{n}.beta"), &[1]),
                        mean: store.add_buffer(&format!("{n}.running_mean"), Tensor::zeros(&[1])),
                        var: store.add_buffer(&format!("{n}.running_var"), Tensor::full(&[1], T::one())),
                        placeholder: store.add_zeros(&format!("{n}.missing"), &[1, 1]),
                    };
                    (enc, 1)
                }
                (FeatureKind::Binary, _) => (Encoder::Binary, 1),
                _ => return Err(EcdError::Config(format!("vocabulary does not match input {n}"))),
            };
            encoders.push(enc);
            width += w;
        }
        let mut combiner = Vec::new();
        for (i, &s) in config.combiner.fc_layers.iter().enumerate() {
            combiner.push(Linear::new(&mut store, &format!("combiner.fc{i}"), width, s, &mut rng));
            width = s;
        }

        let mut decoders: Vec<Option<Decoder>> = vec![None; config.output_features.len()];
        for &i in &order {
            let o = &config.output_features[i];
            let n = &o.name;
            let deps: Vec<usize> = o.dependencies.iter().map(|d| config.output_index(d).expect("validated")).collect();
            let mut input_width = width;
            for &d in &deps {
                let dec = decoders[d].as_ref().expect("topological order");
                input_width += match (o.inject, &dec.head) {
                    (Injection::Logits, Head::Classes(l) | Head::Scalar(l)) => l.output,
                    _ => dec.hidden_width,
                };
            }
            let mut fc = Vec::new();
            let mut h = input_width;
            for (j, &s) in o.fc_layers.iter().enumerate() {
                fc.push(Linear::new(&mut store, &format!("{n}.fc{j}"), h, s, &mut rng));
                h = s;
            }
            let head = match (o.kind, &vocab.outputs[i]) {
                (FeatureKind::Categorical, OutputSpace::Classes(c)) => Head::Classes(Linear::new(&mut store, &format!("{n}.out"), h, c.len(), &mut rng)),
                (FeatureKind::Numeric | FeatureKind::Binary, _) => Head::Scalar(Linear::new(&mut store, &format!("{n}.out"), h, 1, &mut rng)),
                (FeatureKind::Sequence, OutputSpace::Paths { node_count }) => {
                    let init = Linear::new(&mut store, &format!("{n}.init"), h, o.hidden_size, &mut rng);
                    let e = o.token_embedding_size;
                    let embed = store.add_uniform(&format!("{n}.token_embed"), &[node_count + 2, e], (3.0 / e as f64).sqrt(), &mut rng);
                    let cell = RnnCell::new(&mut store, &format!("{n}.cell"), o.cell_type, e, o.hidden_size, &mut rng);
                    let out = Linear::new(&mut store, &format!("{n}.out"), o.hidden_size, node_count + 1, &mut rng);
                    Head::Sequence { init, embed, cell, out }
                }
                _ => return Err(EcdError::Config(format!("label space does not match output {n}"))),
            };
            decoders[i] = Some(Decoder { fc, head, deps, input_width, hidden_width: h });
        }
        let decoders = decoders.into_iter().map(|d| d.expect("every output built")).collect();
        Ok(Self { config, order, vocab, store, encoders, combiner, decoders })
    }

    /// Width of the combiner output.
    pub fn combiner_width(&self) -> usize {
        self.combiner.last().map(|l| l.output).unwrap_or_else(|| self.encoder_widths().iter().sum())
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        self.encoders
            .iter()
            .zip(&self.config.input_features)
            .map(|(e, f)| match e {
                Encoder::Text { layers, convs, .. } => match layers.last() {
                    Some((c, b)) => c.hidden * if b.is_some() { 2 } else { 1 },
                    None if !convs.is_empty() => f.num_filters * convs.len(),
                    None => f.embedding_size,
                },
                Encoder::Categorical { .. } => f.embedding_size,
                Encoder::Numeric { .. } | Encoder::Binary => 1,
            })
            .collect()
    }

    /// Input width of each output's decoder.
    pub fn decoder_input_widths(&self) -> Vec<usize> {
        self.decoders.iter().map(|d| d.input_width).collect()
    }

    /// Parameters that only this output's loss reaches. A decoder that
    /// feeds a dependent shares its FC stack, and also its head when the
    /// dependent reads logits.
    pub fn exclusive_params(&self, output: usize) -> Vec<ParamId> {
        let prefix = format!("{}.", self.config.output_features[output].name);
        let dependents: Vec<usize> = (0..self.decoders.len()).filter(|&j| self.decoders[j].deps.contains(&output)).collect();
        let logits_shared = dependents.iter().any(|&j| self.config.output_features[j].inject == Injection::Logits);
        let fc_prefix = format!("{prefix}fc");
        self.store
            .iter()
            .filter(|(_, p)| p.name.starts_with(&prefix))
            .filter(|(_, p)| dependents.is_empty() || !(logits_shared || p.name.starts_with(&fc_prefix)))
            .map(|(id, _)| id)
            .collect()
    }

    pub fn example(&self, t: &LabeledTicket) -> Result<Example, EcdError> {
        Ok(Example { inputs: encode_inputs(&self.config, &self.vocab, &t.ticket), targets: encode_targets(&self.config, &self.vocab, t)? })
    }

    pub fn inputs(&self, t: &Ticket) -> Vec<InputValue> {
        encode_inputs(&self.config, &self.vocab, t)
    }

    fn encode_batch(&self, g: &mut Graph<T>, rows: &[&[InputValue]]) -> Result<Vec<Var>, EcdError> {
        let n = rows.len();
        let mut out = Vec::with_capacity(self.encoders.len());
        for (k, enc) in self.encoders.iter().enumerate() {
            let v = match enc {
                Encoder::Text { embed, convs, layers } => {
                    let toks: Vec<&[usize]> = rows
                        .iter()
                        .map(|r| match &r[k] {
                            InputValue::Tokens(t) => t.as_slice(),
                            _ => unreachable!("text input"),
                        })
                        .collect();
                    let seq = SeqLayout::new(toks.iter().map(|t| t.len()).collect());
                    let mut ids = vec![None; seq.rows()];
                    for (b, t) in toks.iter().enumerate() {
                        for (j, &id) in t.iter().enumerate() {
                            ids[b * seq.max_len + j] = Some(id);
                        }
                    }
                    let table = g.param(&self.store, *embed);
                    let mut x = g.embedding(table, &ids)?;
                    let mut pooled = Vec::new();
                    let mut per_row = Vec::new();
                    for c in convs {
                        let (w, b) = (g.param(&self.store, c.w), g.param(&self.store, c.b));
                        let h = g.conv1d(x, w, b, &seq, c.width)?;
                        let h = g.relu(h)?;
                        if layers.is_empty() {
                            pooled.push(g.max_pool_over_time(h, &seq)?);
                        } else {
                            per_row.push(h);
                        }
                    }
                    if layers.is_empty() {
                        g.concat(&pooled, 1)?
                    } else {
                        if !per_row.is_empty() {
                            x = g.concat(&per_row, 1)?;
                        }
                        let mut last = x;
                        for (fw, bw) in layers {
                            let (hf, rf) = fw.run(g, &self.store, x, &seq, false)?;
                            (last, x) = match bw {
                                Some(bw) => {
                                    let (hb, rb) = bw.run(g, &self.store, x, &seq, true)?;
                                    (g.concat(&[hf, hb], 1)?, g.concat(&[rf, rb], 1)?)
                                }
                                None => (hf, rf),
                            };
                        }
                        last
                    }
                }
                Encoder::Categorical { embed } => {
                    let ids: Vec<Option<usize>> = rows
                        .iter()
                        .map(|r| match r[k] {
                            InputValue::Code(c) => Some(c),
                            _ => unreachable!("categorical input"),
                        })
                        .collect();
                    let table = g.param(&self.store, *embed);
                    g.embedding(table, &ids)?
                }
                Encoder::Numeric { gamma, beta, mean, var, placeholder } => {
                    let vals: Vec<Option<f64>> = rows
                        .iter()
                        .map(|r| match r[k] {
                            InputValue::Number(v) => v,
                            _ => unreachable!("numeric input"),
                        })
                        .collect();
                    // Missing rows are filled with the running mean before
                    // normalization, then replaced by the learned placeholder.
                    let fill = self.store.get(*mean).data()[0].f64();
                    let x: Vec<f64> = vals.iter().map(|v| v.unwrap_or(fill)).collect();
                    let x = g.input(Tensor::from_f64(&[n, 1], &x)?);
                    let (gm, bt) = (g.param(&self.store, *gamma), g.param(&self.store, *beta));
                    let normed = g.batch_norm(x, gm, bt, &self.store, (*mean, *var), BN_MOMENTUM, BN_EPS)?;
                    let ones = g.input(Tensor::full(&[n, 1], T::one()));
                    let ph = g.param(&self.store, *placeholder);
                    let ph = g.matmul(ones, ph)?;
                    let present: Vec<bool> = vals.iter().map(Option::is_some).collect();
                    g.where_rows(&present, normed, ph)?
                }
                Encoder::Binary => {
                    let x: Vec<f64> = rows
                        .iter()
                        .map(|r| match r[k] {
                            InputValue::Flag(b) => b as u8 as f64,
                            _ => unreachable!("binary input"),
                        })
                        .collect();
                    g.input(Tensor::from_f64(&[n, 1], &x)?)
                }
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Concatenates encodings in declaration order, then the FC stack.
    pub fn combine(&self, g: &mut Graph<T>, encodings: &[Var]) -> Result<Var, EcdError> {
        let mut h = if encodings.len() == 1 { encodings[0] } else { g.concat(encodings, 1)? };
        for l in &self.combiner {
            h = l.forward(g, &self.store, h)?;
            h = activate(g, self.config.combiner.activation, h)?;
            h = g.dropout(h, self.config.combiner.dropout)?;
        }
        Ok(h)
    }

    pub fn forward(&self, g: &mut Graph<T>, rows: &[&[InputValue]]) -> Result<Forward, EcdError> {
        let enc = self.encode_batch(g, rows)?;
        let combined = self.combine(g, &enc)?;
        let n_out = self.decoders.len();
        let mut hidden: Vec<Option<Var>> = vec![None; n_out];
        let mut logits: Vec<Option<Var>> = vec![None; n_out];
        let mut trace = Vec::with_capacity(n_out);
        for &i in &self.order {
            let d = &self.decoders[i];
            let o = &self.config.output_features[i];
            let mut parts = vec![combined];
            for &dep in &d.deps {
                let h = hidden[dep].expect("dependency decoded first");
                parts.push(match o.inject {
                    Injection::Logits => logits[dep].unwrap_or(h),
                    Injection::Hidden => h,
                });
            }
            let mut h = if parts.len() == 1 { combined } else { g.concat(&parts, 1)? };
            for l in &d.fc {
                h = l.forward(g, &self.store, h)?;
                h = activate(g, o.activation, h)?;
                h = g.dropout(h, o.dropout)?;
            }
            hidden[i] = Some(h);
            logits[i] = match &d.head {
                Head::Classes(l) | Head::Scalar(l) => Some(l.forward(g, &self.store, h)?),
                Head::Sequence { .. } => None,
            };
            trace.push(i);
        }
        Ok(Forward { combined, hidden: hidden.into_iter().map(|h| h.expect("decoded")).collect(), logits, trace })
    }

    fn node_count(&self, output: usize) -> usize {
        match self.vocab.outputs[output] {
            OutputSpace::Paths { node_count } => node_count,
            _ => panic!("output {output} is not a sequence"),
        }
    }

    /// Tokens allowed after `prev` (`None` is the start of the path).
    pub fn allowed_next(&self, output: usize, prev: Option<usize>) -> Vec<bool> {
        let n = self.node_count(output);
        let tree = &self.vocab.tree;
        if !self.config.output_features[output].constrained_to_tree {
            return vec![true; n + 1];
        }
        let mut allowed = vec![false; n + 1];
        match prev {
            None => allowed[tree.root().0] = true,
            Some(p) => {
                let kids = tree.children(crate::corpus::NodeId(p));
                kids.iter().for_each(|c| allowed[c.0] = true);
                // A path may not stop at the root unless the tree is a single node.
                allowed[n] = p != tree.root().0 || kids.is_empty();
            }
        }
        allowed
    }

    /// Longest root path plus the end step, or the configured cap.
    pub fn max_steps(&self, output: usize) -> usize {
        match self.config.output_features[output].max_steps {
            0 => self.vocab.tree.nodes().map(|v| self.vocab.tree.path_to(v).len()).max().unwrap_or(1) + 1,
            s => s,
        }
    }

    fn initial_state(&self, g: &mut Graph<T>, output: usize, hidden: Var) -> Result<CellState, EcdError> {
        let Head::Sequence { init, cell, .. } = &self.decoders[output].head else { panic!("not a sequence output") };
        let h = init.forward(g, &self.store, hidden)?;
        let h = g.tanh(h)?;
        let batch = g.value(h).rows();
        let c = (cell.kind == CellType::Lstm).then(|| g.input(Tensor::zeros(&[batch, cell.hidden])));
        Ok(CellState { h, c })
    }

    fn seq_step(&self, g: &mut Graph<T>, output: usize, prev: &[Option<usize>], state: CellState) -> Result<(CellState, Var), EcdError> {
        let Head::Sequence { embed, cell, out, .. } = &self.decoders[output].head else { panic!("not a sequence output") };
        let go = self.node_count(output) + 1;
        let ids: Vec<Option<usize>> = prev.iter().map(|p| Some(p.unwrap_or(go))).collect();
        let table = g.param(&self.store, *embed);
        let x = g.embedding(table, &ids)?;
        let next = cell.step(g, &self.store, x, state)?;
        let logits = out.forward(g, &self.store, next.h)?;
        Ok((next, logits))
    }

    /// Teacher-forced step logits for `paths`, with targets, row weights and
    /// allowed masks per step. Rows past their end step carry weight zero.
    #[allow(clippy::type_complexity)]
    pub fn teacher_forced(
        &self,
        g: &mut Graph<T>,
        output: usize,
        hidden: Var,
        paths: &[&[usize]],
    ) -> Result<Vec<(Var, Vec<usize>, Vec<f64>, Vec<bool>)>, EcdError> {
        let eos = self.node_count(output);
        let normalize = self.config.output_features[output].normalize_loss;
        let steps = paths.iter().map(|p| p.len()).max().unwrap_or(0) + 1;
        let mut state = self.initial_state(g, output, hidden)?;
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let prev: Vec<Option<usize>> = paths.iter().map(|p| if t == 0 { None } else { Some(*p.get(t - 1).unwrap_or(&eos)) }).collect();
            let (next, logits) = self.seq_step(g, output, &prev, state)?;
            state = next;
            let mut targets = Vec::with_capacity(paths.len());
            let mut weights = Vec::with_capacity(paths.len());
            let mut allowed = Vec::with_capacity(paths.len() * (eos + 1));
            for (p, pv) in paths.iter().zip(&prev) {
                if t <= p.len() {
                    targets.push(if t < p.len() { p[t] } else { eos });
                    weights.push(if normalize { 1.0 / (p.len() + 1) as f64 } else { 1.0 });
                    allowed.extend(self.allowed_next(output, *pv));
                } else {
                    targets.push(eos);
                    weights.push(0.0);
                    allowed.extend(std::iter::repeat_n(true, eos + 1));
                }
            }
            out.push((logits, targets, weights, allowed));
        }
        Ok(out)
    }

    /// Per-output losses in declaration order.
    pub fn losses(&self, g: &mut Graph<T>, fwd: &Forward, examples: &[&Example]) -> Result<Vec<Var>, EcdError> {
        let mut losses = Vec::with_capacity(self.decoders.len());
        for (i, o) in self.config.output_features.iter().enumerate() {
            let tv: Vec<&TargetValue> = examples.iter().map(|e| &e.targets[i]).collect();
            let loss = match o.kind {
                FeatureKind::Categorical => {
                    let y: Vec<usize> = tv.iter().map(|t| if let TargetValue::Class(c) = t { *c } else { unreachable!() }).collect();
                    g.cross_entropy(fwd.logits[i].expect("categorical logits"), &y, None, None)?
                }
                FeatureKind::Numeric => {
                    let y: Vec<f64> = tv.iter().map(|t| if let TargetValue::Number(v) = t { *v } else { unreachable!() }).collect();
                    g.mean_squared_error(fwd.logits[i].expect("numeric output"), &y)?
                }
                FeatureKind::Binary => {
                    let y: Vec<f64> = tv.iter().map(|t| if let TargetValue::Flag(b) = t { *b as u8 as f64 } else { unreachable!() }).collect();
                    g.binary_cross_entropy(fwd.logits[i].expect("binary logit"), &y, None)?
                }
                FeatureKind::Sequence => {
                    let paths: Vec<&[usize]> = tv.iter().map(|t| if let TargetValue::Path(p) = t { p.as_slice() } else { unreachable!() }).collect();
                    let steps = self.teacher_forced(g, i, fwd.hidden[i], &paths)?;
                    let mut terms = Vec::with_capacity(steps.len());
                    for (logits, y, w, allowed) in steps {
                        terms.push((g.cross_entropy(logits, &y, Some(&allowed), Some(&w))?, 1.0));
                    }
                    g.weighted_sum(&terms)?
                }
                FeatureKind::Text => unreachable!("text is input only"),
            };
            losses.push(loss);
        }
        Ok(losses)
    }

    /// Weighted sum of per-output losses.
    pub fn total_loss(&self, g: &mut Graph<T>, losses: &[Var]) -> Result<Var, EcdError> {
        let terms: Vec<(Var, f64)> = losses.iter().zip(&self.config.output_features).map(|(&l, o)| (l, o.loss_weight)).collect();
        Ok(g.weighted_sum(&terms)?)
    }

    /// Log-probability of a complete path (end step included) for one ticket.
    pub fn score_path(&self, inputs: &[InputValue], output: usize, path: &[usize]) -> Result<f64, EcdError> {
        let mut g = Graph::new(false, 0);
        let fwd = self.forward(&mut g, &[inputs])?;
        let steps = self.teacher_forced(&mut g, output, fwd.hidden[output], &[path])?;
        let mut total = 0.0;
        for (logits, y, _, allowed) in steps {
            let row = g.value(logits).to_f64();
            total += masked_log_softmax(&row, &allowed)[y[0]];
        }
        Ok(total)
    }

    /// Beam search from a decoder hidden row. Every candidate extension,
    /// including ending, competes for the `width` slots; returns complete
    /// paths best first (ties by node sequence).
    pub fn decode_tree_path(&self, output: usize, hidden_row: &[T], width: usize) -> Result<Vec<PathHypothesis>, EcdError> {
        let eos = self.node_count(output);
        let width = width.max(1);
        let mut g = Graph::new(false, 0);
        let h0 = g.input(Tensor::new(vec![1, hidden_row.len()], hidden_row.to_vec())?);
        let mut state = self.initial_state(&mut g, output, h0)?;
        let mut live: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
        let mut done: Vec<PathHypothesis> = Vec::new();
        for step in 0..self.max_steps(output) {
            let prev: Vec<Option<usize>> = live.iter().map(|(p, _)| p.last().copied()).collect();
            let (next, logits) = self.seq_step(&mut g, output, &prev, state)?;
            let lv = g.value(logits).clone();
            let mut cands: Vec<(f64, usize, usize)> = Vec::new();
            for (r, (_, lp)) in live.iter().enumerate() {
                let allowed = self.allowed_next(output, prev[r]);
                let row: Vec<f64> = lv.row(r).iter().map(|v| v.f64()).collect();
                for (k, l) in masked_log_softmax(&row, &allowed).into_iter().enumerate() {
                    if allowed[k] {
                        cands.push((lp + l, r, k));
                    }
                }
            }
            let key = |c: &(f64, usize, usize)| {
                let mut p = live[c.1].0.clone();
                p.push(c.2);
                p
            };
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| key(a).cmp(&key(b))));
            cands.truncate(width);
            let last = step + 1 == self.max_steps(output);
            let mut keep_rows = Vec::new();
            let mut new_live = Vec::new();
            for (s, r, k) in cands {
                let mut p = live[r].0.clone();
                if k == eos {
                    done.push(PathHypothesis { nodes: p, log_prob: s });
                } else {
                    p.push(k);
                    if last {
                        done.push(PathHypothesis { nodes: p, log_prob: s });
                    } else {
                        new_live.push((p, s));
                        keep_rows.push(r);
                    }
                }
            }
            if new_live.is_empty() {
                break;
            }
            // Finished paths only lose probability mass by extending, so stop
            // once no live prefix can beat the worst kept result.
            done.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then_with(|| a.nodes.cmp(&b.nodes)));
            if done.len() >= width && new_live.iter().all(|(_, s)| *s < done[width - 1].log_prob) {
                break;
            }
            state = CellState { h: gather_rows(&mut g, next.h, &keep_rows)?, c: next.c.map(|c| gather_rows(&mut g, c, &keep_rows)).transpose()? };
            live = new_live;
        }
        done.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then_with(|| a.nodes.cmp(&b.nodes)));
        done.truncate(width);
        Ok(done)
    }

    /// Top-k predictions per ticket, one entry per output in declaration order.
    pub fn predict_topk(&self, tickets: &[&Ticket], k: usize) -> Result<Vec<Vec<Prediction>>, EcdError> {
        let inputs: Vec<Vec<InputValue>> = tickets.iter().map(|t| self.inputs(t)).collect();
        self.predict_inputs(&inputs, k)
    }

    pub fn predict_inputs(&self, inputs: &[Vec<InputValue>], k: usize) -> Result<Vec<Vec<Prediction>>, EcdError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.config.trainer.batch_size.max(1)) {
            let rows: Vec<&[InputValue]> = chunk.iter().map(|v| v.as_slice()).collect();
            let mut g = Graph::new(false, 0);
            let fwd = self.forward(&mut g, &rows)?;
            let mut per: Vec<Vec<Prediction>> = vec![Vec::with_capacity(self.decoders.len()); rows.len()];
            for (i, o) in self.config.output_features.iter().enumerate() {
                match o.kind {
                    FeatureKind::Categorical => {
                        let probs = g.softmax(fwd.logits[i].expect("logits"))?;
                        let pv = g.value(probs);
                        let classes = self.vocab.outputs[i].classes().expect("class space");
                        for (r, p) in per.iter_mut().enumerate() {
                            let scores = pv.row(r).iter().enumerate().map(|(c, v)| (c, v.f64())).collect();
                            p.push(Prediction::Ranked(sort_scores(scores, k).into_iter().map(|(c, s)| (classes[c], s)).collect()));
                        }
                    }
                    FeatureKind::Binary => {
                        let z = g.value(fwd.logits[i].expect("logit"));
                        for (r, p) in per.iter_mut().enumerate() {
                            let s = 1.0 / (1.0 + (-z.row(r)[0].f64()).exp());
                            p.push(Prediction::Ranked(sort_scores(vec![(0, 1.0 - s), (1, s)], k)));
                        }
                    }
                    FeatureKind::Numeric => {
                        let z = g.value(fwd.logits[i].expect("value"));
                        per.iter_mut().enumerate().for_each(|(r, p)| p.push(Prediction::Value(z.row(r)[0].f64())));
                    }
                    FeatureKind::Sequence => {
                        let hv = g.value(fwd.hidden[i]).clone();
                        for (r, p) in per.iter_mut().enumerate() {
                            let beams = self.decode_tree_path(i, hv.row(r), o.beam_width.max(k))?;
                            p.push(Prediction::Ranked(final_nodes(&beams, self.vocab.tree.root().0, k)));
                        }
                    }
                    FeatureKind::Text => unreachable!(),
                }
            }
            out.extend(per);
        }
        Ok(out)
    }

    /// Beam paths for every ticket on a sequence output.
    pub fn decode_paths(&self, inputs: &[Vec<InputValue>], output: usize, width: usize) -> Result<Vec<Vec<PathHypothesis>>, EcdError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.config.trainer.batch_size.max(1)) {
            let rows: Vec<&[InputValue]> = chunk.iter().map(|v| v.as_slice()).collect();
            let mut g = Graph::new(false, 0);
            let fwd = self.forward(&mut g, &rows)?;
            let hv = g.value(fwd.hidden[output]).clone();
            for r in 0..rows.len() {
                out.push(self.decode_tree_path(output, hv.row(r), width)?);
            }
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<(), EcdError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("model.toml"), self.config.to_toml())?;
        serde_json::to_writer(BufWriter::new(File::create(dir.join("vocab.json"))?), &self.vocab)?;
        self.store.write_checkpoint(BufWriter::new(File::create(dir.join("params.ckpt"))?))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, EcdError> {
        let config = ModelConfig::from_toml(&fs::read_to_string(dir.join("model.toml"))?)?;
        let mut vocab: Vocabularies = serde_json::from_reader(BufReader::new(File::open(dir.join("vocab.json"))?))?;
        vocab.reindex();
        let mut model = Self::new(config, vocab, 0)?;
        let saved = ParamStore::read_checkpoint(BufReader::new(File::open(dir.join("params.ckpt"))?))?;
        model.store.load_from(&saved)?;
        Ok(model)
    }

    pub(crate) fn output_weight(&self, output: usize) -> ParamId {
        match &self.decoders[output].head {
            Head::Classes(l) | Head::Scalar(l) => l.w,
            Head::Sequence { out, .. } => out.w,
        }
    }

    pub(crate) fn input_table(&self, input: usize) -> Option<ParamId> {
        match &self.encoders[input] {
            Encoder::Text { embed, .. } | Encoder::Categorical { embed } => Some(*embed),
            _ => None,
        }
    }
}

/// Distinct final nodes of the best paths, scored by path probability.
fn final_nodes(beams: &[PathHypothesis], root: usize, k: usize) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(k);
    for b in beams {
        let node = b.nodes.last().copied().unwrap_or(root);
        if out.iter().all(|(n, _)| *n != node) {
            out.push((node, b.log_prob.exp()));
        }
        if out.len() == k {
            break;
        }
    }
    out
}

fn gather_rows<T: Scalar>(g: &mut Graph<T>, x: Var, rows: &[usize]) -> Result<Var, EcdError> {
    let v = g.value(x);
    let cols = v.cols();
    let data: Vec<T> = rows.iter().flat_map(|&r| v.row(r).to_vec()).collect();
    Ok(g.input(Tensor::new(vec![rows.len(), cols], data)?))
}
