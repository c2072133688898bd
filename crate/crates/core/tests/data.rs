mod support;

use std::io::Write;

use proptest::prelude::*;
use support::synth;
use tabular_nn::data::{load_csv, make_folds, ColumnKind, FeatureSchema, LabelSpec, RawColumn, Registry};

#[test]
fn bundled_registry_has_every_benchmark_dataset() {
    let reg = Registry::bundled().unwrap();
    assert_eq!(reg.datasets.len(), 15);
    let qsar = reg.get("qsar_bio").unwrap();
    assert_eq!((qsar.batch_size, qsar.ghost_size), (2048, 8));
    assert_eq!(qsar.label.delimiter, ';');
    let spam = reg.get("spambase").unwrap();
    assert_eq!((spam.batch_size, spam.ghost_size), (1024, 8));
    for e in reg.datasets.values() {
        assert!(e.ghost_size <= e.batch_size);
    }
    assert!(reg.get("iris").unwrap_err().to_string().contains("iris"));
}

#[test]
fn spambase_matches_its_published_shape() {
    let reg = Registry::bundled().unwrap();
    let data = load_csv(reg.path_of("spambase").unwrap(), &reg.get("spambase").unwrap().label).unwrap();
    assert_eq!(data.names.len(), 57);
    assert!(data.n_rows() > 4500);
    // 39.4% positive
    assert!((data.positive_fraction() - 0.394).abs() < 0.001, "{}", data.positive_fraction());
    assert!(data.columns.iter().all(|c| matches!(c, RawColumn::Numeric(_))));
}

#[test]
fn rfc4180_quoting_and_headerless_semicolon_files() {
    let dir = tempfile::tempdir().unwrap();
    let quoted = dir.path().join("q.csv");
    std::fs::write(&quoted, "name,x,label\n\"a, b\",1.5,yes\n\"say \"\"hi\"\"\",?,no\nc,2.5,yes\n").unwrap();
    let d = load_csv(&quoted, &LabelSpec::new("label", "yes")).unwrap();
    assert_eq!(d.labels, vec![1, 0, 1]);
    match &d.columns[0] {
        RawColumn::Categorical(v) => assert_eq!(v[1].as_deref(), Some("say \"hi\"")),
        other => panic!("{other:?}"),
    }
    assert_eq!(d.columns[1], RawColumn::Numeric(vec![Some(1.5), None, Some(2.5)]));

    let headerless = dir.path().join("h.csv");
    let mut f = std::fs::File::create(&headerless).unwrap();
    writeln!(f, "1;0.5;RB\n2;0.7;NRB\n3;0.1;RB").unwrap();
    let mut spec = LabelSpec::new("c2", "RB");
    spec.delimiter = ';';
    spec.has_header = false;
    let d = load_csv(&headerless, &spec).unwrap();
    assert_eq!(d.names, vec!["c0", "c1"]);
    assert_eq!(d.labels, vec![1, 0, 1]);
}

#[test]
fn same_seed_gives_byte_identical_folds() {
    let a = serde_json::to_string(&make_folds(1055, 20210).unwrap()).unwrap();
    let b = serde_json::to_string(&make_folds(1055, 20210).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, serde_json::to_string(&make_folds(1055, 20211).unwrap()).unwrap());
}

#[test]
fn schema_statistics_come_only_from_train_rows() {
    let data = synth::dataset(300, 4);
    for fold in make_folds(data.n_rows(), 9).unwrap() {
        let fitted = FeatureSchema::fit(&data, &fold.train).unwrap();
        let only_train = data.select_rows(&fold.train);
        let all: Vec<usize> = (0..only_train.n_rows()).collect();
        assert_eq!(fitted, FeatureSchema::fit(&only_train, &all).unwrap());
    }
}

proptest! {
    #[test]
    fn encode_then_decode_is_identity_on_seen_categories(n in 20usize..120, seed in 0u64..1000) {
        let data = synth::dataset(n, seed);
        let rows: Vec<usize> = (0..n).collect();
        let schema = FeatureSchema::fit(&data, &rows).unwrap();
        let batch = schema.encode(&data).unwrap();
        let col = data.names.iter().position(|c| c == "c0").unwrap();
        let RawColumn::Categorical(values) = &data.columns[col] else { panic!("c0 is categorical") };
        let ColumnKind::Categorical { categories } = &schema.columns[col].kind else { panic!() };
        let fc = 1;
        for r in 0..n {
            let code = batch.cat[r * fc];
            prop_assert!(code < categories.len());
            prop_assert_eq!(schema.decode(col, code), values[r].as_deref());
        }
    }
}
