use std::fs;
use std::path::Path;

use cota_core::eval::read_dump;
use cota_core::experiment::*;

fn demo(out: &Path) -> ExperimentConfig {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/demo.toml")).unwrap();
    let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

#[test]
fn bundled_configs_parse() {
    for name in ["demo.toml", "ecd_demo.toml", "hyperopt.toml"] {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}

#[test]
fn schema_errors_name_the_field() {
    let base = "[dataset]\nsource = \"generate\"\n[model]\nfamily = \"v2-ecd\"\n";
    let err = ExperimentConfig::from_toml(&format!("{base}[dataset.generator]\ntree_dept = 3\n")).unwrap_err();
    assert!(err.to_string().contains("dataset"), "{err}");
    assert!(err.to_string().contains("tree_dept"), "{err}");
    assert_eq!(err.exit_code(), 1);

    let err = ExperimentConfig::from_toml("[dataset]\nsource = \"generate\"\n[model]\nfamily = \"v3\"\n").unwrap_err();
    assert!(err.to_string().contains("model"), "{err}");

    let bad_encoder = format!(
        "{base}[[model.ecd.input_features]]\nname = \"message\"\ntype = \"text\"\nencoder = \"word_transformer\"\n\
         [[model.ecd.output_features]]\nname = \"contact_type\"\ntype = \"categorical\"\n"
    );
    let err = ExperimentConfig::from_toml(&bad_encoder).unwrap_err().to_string();
    assert!(err.contains("input_features[0].encoder") && err.contains("word_transformer"), "{err}");

    let err = ExperimentConfig::from_toml(&format!("top_k = 0\n{base}")).unwrap_err();
    assert!(err.to_string().contains("top_k"));
    let err = ExperimentConfig::load(Path::new("/nonexistent/config.toml")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn train_evaluate_predict_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo(dir.path());
    cmd_train(&cfg).unwrap();
    let report = cmd_evaluate(&cfg).unwrap();
    for name in ["contact_type", "reply_template"] {
        let o = &report.outputs[name];
        assert!(o.accuracy > 0.0 && o.hits_at_k >= o.accuracy && !o.classes.is_empty(), "{name}");
    }
    let ct = &report.outputs["contact_type"];
    assert!(ct.accuracy_plus_parent.unwrap() >= ct.accuracy);
    let combined = report.combined_accuracy.unwrap();
    assert!(combined <= ct.accuracy.min(report.outputs["reply_template"].accuracy));

    let dump = read_dump(std::io::BufReader::new(fs::File::open(dir.path().join("predictions.jsonl")).unwrap())).unwrap();
    assert_eq!(dump.len(), 2 * report.ticket_count);
    assert!(dump.iter().all(|r| r.ranking.len() == 3));
    for f in ["report.json", "report.txt", "classes_contact_type.tsv", "model/family.json", "split.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }

    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash());
    assert_eq!(manifest.seed, 7);
    assert!(manifest.commands.contains_key("train") && manifest.commands.contains_key("evaluate"));

    // Fresh tickets from the saved data.
    let tickets = dir.path().join("input.jsonl");
    let data = load_prepared(dir.path(), cfg.format).unwrap();
    let lines: Vec<String> = data.split.test[..5].iter().map(|t| serde_json::to_string(&t.ticket).unwrap()).collect();
    fs::write(&tickets, lines.join("\n")).unwrap();
    let recs = cmd_predict(&cfg, &tickets).unwrap();
    assert_eq!(recs.len(), 10);
    assert!(recs.iter().all(|r| r.truth.is_none()));
    let first_eval: Vec<_> = dump.iter().filter(|r| r.ticket_id == recs[0].ticket_id).map(|r| r.labels()).collect();
    let first_pred: Vec<_> = recs.iter().filter(|r| r.ticket_id == recs[0].ticket_id).map(|r| r.labels()).collect();
    assert_eq!(first_eval, first_pred);

    // The manifest reloads as a config.
    let again = ExperimentConfig::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(again.hash(), cfg.hash());
}

#[test]
fn evaluate_without_training_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_evaluate(&demo(dir.path())).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn generate_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo(dir.path());
    cfg.format = cota_core::corpus::DataFormat::Delimited;
    cmd_generate(&cfg).unwrap();
    let (tree, bank, loaded) = cota_core::corpus::load_corpus_dir(&dir.path().join(DATA_DIR), cfg.format).unwrap();
    assert_eq!(loaded.records.len(), 1500);
    assert_eq!(tree.len(), 13);
    assert!(!bank.is_empty());
}

#[test]
fn hyperopt_budget_one_trains_one_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo(dir.path());
    let text = "budget = 1\n[space]\n\"v1.forest.n_estimators\" = { choice = [10, 20] }\n\"v1.negatives_per_positive\" = { int_uniform = [2, 4] }\n";
    cfg.hyperopt = Some(toml::from_str(text).unwrap());
    let trials = cmd_hyperopt(&cfg).unwrap();
    assert_eq!(trials.len(), 1);
    assert!(trials[0].validation_accuracy.unwrap() > 0.0);
    assert!(trials[0].params.contains_key("v1.forest.n_estimators"));
    assert_eq!(fs::read_dir(dir.path().join("trials")).unwrap().count(), 1);
    assert_eq!(fs::read_to_string(dir.path().join("hyperopt.tsv")).unwrap().lines().count(), 2);

    cfg.hyperopt = Some(toml::from_str("budget = 1\n[space]\n\"v1.no_such_knob\" = { choice = [1] }\n").unwrap());
    assert!(cmd_hyperopt(&cfg).is_err());
    cfg.hyperopt = Some(toml::from_str("budget = 1\n[space]\n\"v1.forest.oops.deeper\" = { choice = [1] }\n").unwrap());
    let err = cmd_hyperopt(&cfg).unwrap_err();
    assert!(err.to_string().contains("oops"), "{err}");
}
