use cota_core::corpus::{generate_corpus, split_dataset, Corpus, GeneratorSpec, LabeledTicket, Task};
use cota_core::forest::{argmax, ForestConfig};
use cota_core::rank::*;
use cota_core::textprep::{BagOfWords, TextPipeline};
use cota_core::vectorize::{LsaOptions, LsaVector, SparseVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(classes: usize, tickets: usize, seed: u64) -> Corpus {
    let spec = GeneratorSpec { tree_depth: 3, tree_fanout: 3, num_classes: Some(classes), ticket_count: tickets, ..Default::default() };
    generate_corpus(&spec, seed).unwrap()
}

fn small_forest() -> ForestConfig {
    ForestConfig { n_estimators: 30, min_samples_leaf: 3, seed: 4, ..Default::default() }
}

fn bags(data: &[LabeledTicket]) -> Vec<BagOfWords> {
    let p = TextPipeline::default();
    data.iter().map(|t| p.bag(&t.ticket.message)).collect()
}

#[test]
fn hand_cosine() {
    let proto = Prototype {
        tfidf: SparseVector::from_pairs([(0, 2.0 / 3.0), (1, 1.0 / 3.0), (2, 2.0 / 3.0)]),
        lsa: LsaVector(vec![2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]),
    };
    let set = PrototypeSet { classes: vec![proto.clone(), Prototype { tfidf: SparseVector::new(), lsa: LsaVector(vec![0.0; 3]) }], templates: None, empty: vec![1] };
    let t = SparseVector::from_pairs([(0, 1.0), (1, 2.0), (2, 2.0)]);
    let z = LsaVector(vec![1.0, 2.0, 2.0]);
    let s = similarity_features(&t, &z, 0, &set);
    assert!((s.cos_tfidf - 8.0 / 9.0).abs() < 1e-12);
    assert!((s.cos_lsa - 8.0 / 9.0).abs() < 1e-12);
    assert_eq!(s.cos_tfidf_template, None);
    let zero = similarity_features(&t, &z, 1, &set);
    assert_eq!((zero.cos_tfidf, zero.cos_lsa), (0.0, 0.0));
}

#[test]
fn prototypes_ignore_duplicate_counts() {
    let c = corpus(6, 300, 1);
    let b = bags(&c.tickets);
    let text = TextModels::fit(&b, 2, 50_000, LsaOptions::default()).unwrap();
    let once = build_prototypes([(0, &b[0])], 2, &text);
    let twice = build_prototypes([(0, &b[0]), (0, &b[0])], 2, &text);
    assert_eq!(once.empty, vec![1]);
    let (v, z) = text.vectors(&b[0]);
    for (p, q) in [(&once.classes[0], &twice.classes[0])] {
        for ((i, a), (j, bb)) in p.tfidf.iter().zip(q.tfidf.iter()) {
            assert_eq!(i, j);
            assert!((a - bb).abs() < 1e-12);
        }
        for (a, bb) in p.lsa.0.iter().zip(&q.lsa.0) {
            assert!((a - bb).abs() < 1e-12);
        }
    }
    // A single-ticket class prototype is that ticket's normalized vector.
    assert!((cota_core::vectorize::cosine_sparse(&v, &once.classes[0].tfidf) - 1.0).abs() < 1e-12);
    assert!((cota_core::vectorize::cosine_dense(&z.0, &once.classes[0].lsa.0) - 1.0).abs() < 1e-9);
    assert!((once.classes[0].lsa.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn separable_pairs_rank_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs: Vec<PairExample> = (0..400)
        .map(|i| {
            let label = i % 2 == 0;
            let noise: f64 = rng.random_range(-0.05..0.05);
            PairExample { row: i, class: 0, features: vec![if label { 1.0 } else { 0.0 } + noise, rng.random()], label }
        })
        .collect();
    let m = train_ranker(&pairs, &small_forest()).unwrap();
    // Every positive outranks every negative: training AUC of 1.
    let scores: Vec<(f64, bool)> = pairs.iter().map(|p| (m.predict_proba(&p.features).unwrap()[1], p.label)).collect();
    let min_pos = scores.iter().filter(|s| s.1).map(|s| s.0).fold(f64::MAX, f64::min);
    let max_neg = scores.iter().filter(|s| !s.1).map(|s| s.0).fold(f64::MIN, f64::max);
    assert!(min_pos > max_neg);
    assert_eq!(m, train_ranker(&pairs, &small_forest()).unwrap());

    let all_pos: Vec<PairExample> = pairs.into_iter().filter(|p| p.label).collect();
    assert!(matches!(train_ranker(&all_pos, &small_forest()), Err(RankError::SingleClass)));
}

#[test]
fn ranking_is_invariant_under_monotone_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let s: Vec<(usize, f64)> = (0..12).map(|c| (c, (rng.random_range(0..5) as f64) / 4.0)).collect();
        let mapped: Vec<(usize, f64)> = s.iter().map(|&(c, v)| (c, (3.0 * v).exp() - 7.0)).collect();
        let a: Vec<usize> = sort_scores(s, 5).into_iter().map(|x| x.0).collect();
        let b: Vec<usize> = sort_scores(mapped, 5).into_iter().map(|x| x.0).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn rank_classes_matches_brute_force() {
    let c = corpus(10, 800, 5);
    let config = V1Config { forest: small_forest(), ..Default::default() };
    let model = train_v1(&c.tickets[..600], &c.bank, &config).unwrap();
    let tm = model.task(Task::ContactType).unwrap();
    let protos = tm.prototypes.as_ref().unwrap();
    let candidates: Vec<usize> = (0..tm.classes.len()).collect();
    for t in &c.tickets[600..700] {
        let tv = model.vectors(&t.ticket);
        let got = rank_classes(&tm.forest, &tv, &candidates, protos, candidates.len()).unwrap();
        // Brute force: score every pair, then selection-sort by (score desc, id asc).
        let mut left: Vec<(usize, f64)> = candidates.iter().map(|&k| (k, tm.forest.predict_proba(&pair_features(&tv, k, protos)).unwrap()[1])).collect();
        let mut want = Vec::new();
        while !left.is_empty() {
            let mut best = 0;
            for i in 1..left.len() {
                if left[i].1 > left[best].1 || (left[i].1 == left[best].1 && left[i].0 < left[best].0) {
                    best = i;
                }
            }
            want.push(left.remove(best));
        }
        assert_eq!(got, want);
    }
}

#[test]
fn training_and_inference_features_agree() {
    let c = corpus(8, 400, 2);
    let data = &c.tickets;
    let config = V1Config { forest: small_forest(), ..Default::default() };
    let model = train_v1(data, &c.bank, &config).unwrap();
    let tm = model.task(Task::ReplyTemplate).unwrap();
    let protos = tm.prototypes.as_ref().unwrap();
    assert_eq!(protos.templates.as_ref().unwrap().len(), c.bank.len());
    let b = bags(data);
    for (t, bag) in data.iter().zip(&b).take(50) {
        let (tfidf, lsa) = model.text.vectors(bag);
        let train_tv = TicketVectors { tfidf, lsa, codes: model.encoder.codes(&t.ticket), encoded: model.encoder.encode(&t.ticket) };
        let k = tm.classes.binary_search(&Task::ReplyTemplate.label(t)).unwrap();
        let a: Vec<u64> = pair_features(&train_tv, k, protos).iter().map(|v| v.to_bits()).collect();
        let serve: Vec<u64> = pair_features(&model.vectors(&t.ticket), k, protos).iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, serve);
        assert_eq!(a.len(), 4 + model.encoder.width());
    }
}

#[test]
fn multiclass_baseline_separates_classes() {
    let c = corpus(10, 2000, 7);
    let split = split_dataset(&c.tickets, (0.7, 0.1, 0.2), 1).unwrap();
    let config = V1Config { formulation: Formulation::Classification, forest: small_forest(), ..Default::default() };
    let model = train_v1(&split.train, &c.bank, &config).unwrap();
    let tm = model.task(Task::ContactType).unwrap();
    let mut correct = 0;
    for t in &split.test {
        let tv = model.vectors(&t.ticket);
        let p = tm.forest.predict_proba(&multiclass_features(&tv, None)).unwrap();
        let pred = model.predict(&t.ticket, 3).unwrap();
        let top: Vec<usize> = pred[0].1.iter().map(|x| x.0).collect();
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        assert_eq!(top, order[..3].iter().map(|&k| tm.classes[k]).collect::<Vec<_>>());
        correct += (tm.classes[argmax(&p)] == t.contact_type.0) as usize;
    }
    let acc = correct as f64 / split.test.len() as f64;
    assert!(acc > 0.9, "{acc}");
}

#[test]
fn saved_model_predicts_identically() {
    let c = corpus(6, 300, 3);
    let config = V1Config { forest: small_forest(), ..Default::default() };
    let model = train_v1(&c.tickets, &c.bank, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let back = V1Model::load(dir.path()).unwrap();
    for t in c.tickets.iter().take(20) {
        assert_eq!(model.predict(&t.ticket, 3).unwrap(), back.predict(&t.ticket, 3).unwrap());
    }
    assert_eq!(model.predict(&c.tickets[0].ticket, 3).unwrap()[1].1.len(), 3);
}
