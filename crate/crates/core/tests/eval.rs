use cota_core::corpus::ContactTypeTree;
use cota_core::eval::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

/// Bounds containing 99% of Binomial(n, p) mass, as rates.
fn band(n: u64, p: f64) -> (f64, f64) {
    let b = Binomial::new(p, n).unwrap();
    (b.inverse_cdf(0.005) as f64 / n as f64, b.inverse_cdf(0.995) as f64 / n as f64)
}

fn record(id: usize, task: &str, ranking: &[&str], truth: &str) -> PredictionRecord {
    PredictionRecord {
        ticket_id: format!("t{id:05}"),
        task: task.into(),
        ranking: ranking.iter().enumerate().map(|(i, l)| ScoredLabel { label: l.to_string(), score: 1.0 / (i + 1) as f64 }).collect(),
        truth: Some(truth.into()),
    }
}

#[test]
fn accuracy_and_hits_basics() {
    let preds = vec![vec!["B", "A", "C"]];
    assert_eq!(hits_at_k(&preds, &["A"], 3).unwrap(), 1.0);
    assert_eq!(accuracy(&preds, &["A"]).unwrap(), 0.0);
    // Duplicates do not push the truth out of the top k.
    assert_eq!(hits_at_k(&[vec!["B", "B", "B", "A"]], &["A"], 2).unwrap(), 1.0);
    assert!(matches!(accuracy::<&str>(&[], &[]), Err(EvalError::Empty)));
    assert!(matches!(accuracy(&preds, &["A", "B"]), Err(EvalError::Misaligned(_))));
}

#[test]
fn random_rankings_hit_three_in_c() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = 20usize;
    let n = 1000;
    let truths: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let preds: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let mut p: Vec<usize> = (0..c).collect();
            rand::seq::SliceRandom::shuffle(&mut p[..], &mut rng);
            p
        })
        .collect();
    let h = hits_at_k(&preds, &truths, 3).unwrap();
    let (lo, hi) = band(n as u64, 3.0 / c as f64);
    assert!(lo <= h && h <= hi, "{h} outside [{lo}, {hi}]");
}

#[test]
fn combined_accuracy_cases() {
    let always = vec![vec![1]; 10];
    let t = vec![1; 10];
    assert_eq!(combined_accuracy(&always, &always, &t, &t).unwrap(), 1.0);
    // a right on even tickets, b right on odd tickets.
    let a: Vec<Vec<usize>> = (0..10).map(|i| vec![if i % 2 == 0 { 1 } else { 0 }]).collect();
    let b: Vec<Vec<usize>> = (0..10).map(|i| vec![if i % 2 == 1 { 1 } else { 0 }]).collect();
    assert_eq!(combined_accuracy(&a, &b, &t, &t).unwrap(), 0.0);
    assert!(combined_accuracy(&a, &b[..9], &t, &t[..9]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 4000;
    let a: Vec<Vec<u8>> = (0..n).map(|_| vec![rng.random_range(0..2)]).collect();
    let b: Vec<Vec<u8>> = (0..n).map(|_| vec![rng.random_range(0..2)]).collect();
    let t = vec![1u8; n];
    let c = combined_accuracy(&a, &b, &t, &t).unwrap();
    let (lo, hi) = band(n as u64, 0.25);
    assert!(lo <= c && c <= hi, "{c}");
}

#[test]
fn parent_counts_as_correct() {
    // root -> X -> Y, root -> X -> Z
    let tree = ContactTypeTree::from_nodes(vec![("R", None, ""), ("X", Some("R"), ""), ("Y", Some("X"), ""), ("Z", Some("X"), ""), ("W", Some("R"), "")]).unwrap();
    let n = |s| tree.lookup(s).unwrap();
    assert_eq!(accuracy_plus_parent(&[vec![n("X")]], &[n("Y")], &tree).unwrap(), 1.0);
    assert_eq!(accuracy_plus_parent(&[vec![n("Y")]], &[n("Y")], &tree).unwrap(), 1.0);
    assert_eq!(accuracy_plus_parent(&[vec![n("Z")]], &[n("Y")], &tree).unwrap(), 0.0);
    assert_eq!(accuracy_plus_parent(&[vec![n("W")]], &[n("R")], &tree).unwrap(), 0.0);
    assert_eq!(accuracy_plus_parent(&[vec![]], &[n("Y")], &tree).unwrap(), 0.0);
}

#[test]
fn per_class_arithmetic_by_hand() {
    // truth: a a a b b c ; predicted: a a b b c c
    let truths = ["a", "a", "a", "b", "b", "c"];
    let top1 = [Some("a"), Some("a"), Some("b"), Some("b"), Some("c"), Some("c")];
    let s = per_class_f1(&top1, &truths).unwrap();
    let names: Vec<_> = s.iter().map(|c| c.class).collect();
    assert_eq!(names, ["a", "b", "c"]);
    // a: precision 2/2, recall 2/3
    assert_eq!((s[0].precision, s[0].recall), (1.0, 2.0 / 3.0));
    assert!((s[0].f1 - 0.8).abs() < 1e-12);
    // b: precision 1/2, recall 1/2
    assert_eq!((s[1].precision, s[1].recall, s[1].f1), (0.5, 0.5, 0.5));
    // c: precision 1/2, recall 1/1
    assert!((s[2].f1 - 2.0 / 3.0).abs() < 1e-12);

    let perfect = per_class_f1(&truths.map(Some), &truths).unwrap();
    assert!(perfect.iter().all(|c| c.f1 == 1.0));

    let never = per_class_f1(&[Some("a"), Some("a")], &["a", "b"]).unwrap();
    let b = never.iter().find(|c| c.class == "b").unwrap();
    assert_eq!((b.recall, b.f1), (0.0, 0.0));

    let tsv = class_table_tsv(&s);
    assert_eq!(tsv.lines().nth(1).unwrap(), "a\t3\t0.5\t1\t0.6666666666666666\t0.8");
}

#[test]
fn micro_recall_is_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truths: Vec<u8> = (0..500).map(|_| rng.random_range(0..6)).collect();
    let preds: Vec<Vec<u8>> = truths.iter().map(|&t| vec![if rng.random_bool(0.6) { t } else { rng.random_range(0..6) }]).collect();
    let top1: Vec<Option<u8>> = preds.iter().map(|p| p.first().copied()).collect();
    let s = per_class_f1(&top1, &truths).unwrap();
    let micro = s.iter().map(|c| c.correct).sum::<usize>() as f64 / s.iter().map(|c| c.frequency).sum::<usize>() as f64;
    assert_eq!(micro, accuracy(&preds, &truths).unwrap());
}

#[test]
fn dump_round_trip_and_report() {
    let recs = vec![
        record(0, "contact_type", &["CT1", "CT2"], "CT1"),
        record(0, "reply_template", &["RT0", "RT1"], "RT1"),
        record(1, "contact_type", &["CT1", "CT2"], "CT4"),
        record(1, "reply_template", &["RT2"], "RT2"),
    ];
    let mut buf = Vec::new();
    write_dump(&mut buf, &recs).unwrap();
    assert_eq!(read_dump(&buf[..]).unwrap(), recs);
    assert!(matches!(read_dump(&b"{\"ticket_id\": 3}\n"[..]), Err(EvalError::Dump { line: 1, .. })));

    let tree = ContactTypeTree::complete(3, 2).unwrap();
    let r = evaluate(&recs, 3, Some(&tree)).unwrap();
    let ct = &r.outputs["contact_type"];
    assert_eq!(ct.accuracy, 0.5);
    // CT1 is the parent of CT4.
    assert_eq!(ct.accuracy_plus_parent, Some(1.0));
    assert_eq!(r.outputs["reply_template"].hits_at_k, 1.0);
    assert_eq!(r.combined_accuracy, Some(0.0));
    assert!(r.to_text().contains("combined accuracy: 0.0000"));
    let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);

    let mut tsv = Vec::new();
    write_dump_delimited(&mut tsv, &recs).unwrap();
    assert_eq!(String::from_utf8(tsv).unwrap().lines().count(), 1 + 7);
}

fn outcomes(n: usize, rate: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_bool(rate)).collect()
}

#[test]
fn bootstrap_significance() {
    let a = outcomes(10_000, 0.5, 3);
    let same = bootstrap_delta(&a, &a, true, BOOTSTRAP_RESAMPLES, 0).unwrap();
    assert_eq!(same.delta, 0.0);
    assert_eq!(same.p_value, 1.0);

    let b = outcomes(10_000, 0.6, 4);
    let gap = bootstrap_delta(&a, &b, true, BOOTSTRAP_RESAMPLES, 0).unwrap();
    assert!(gap.delta > 0.08 && gap.p_value < 0.01, "{gap:?}");
    assert_eq!(gap, bootstrap_delta(&a, &b, true, BOOTSTRAP_RESAMPLES, 0).unwrap());
    assert!(bootstrap_delta(&a, &b, false, 2000, 0).unwrap().p_value < 0.01);

    // Two draws of the same process are usually not significant.
    let c = outcomes(2000, 0.5, 5);
    let d = outcomes(2000, 0.5, 6);
    assert!(bootstrap_delta(&c, &d, true, 2000, 1).unwrap().p_value > 0.01);
}

#[test]
fn compare_identical_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut recs = Vec::new();
    for i in 0..300 {
        let t = rng.random_range(0..4);
        let p = rng.random_range(0..4);
        recs.push(record(i, "contact_type", &[&format!("CT{}", p + 1)], &format!("CT{}", t + 1)));
        recs.push(record(i, "reply_template", &[&format!("RT{p}")], &format!("RT{t}")));
    }
    let r = evaluate(&recs, 3, None).unwrap();
    let c = compare_runs((&r, &recs), (&r, &recs), true, 9).unwrap();
    assert!(c.deltas.values().all(|&d| d == 0.0));
    assert!(c.significance.values().all(|s| s.p_value == 1.0));
    assert!(compare_runs((&r, &recs), (&r, &recs[..100]), true, 9).is_err());
}
