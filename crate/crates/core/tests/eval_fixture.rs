//! Evaluation metrics on hand-built fixtures with frozen expected values.

use std::collections::BTreeMap;

use mmpt::eval::{self, EvalError, KnownSet, SourceResult};
use mmpt::mmp::MmpRecord;
use mmpt::model::{Checkpoint, ModelConfig, TrainConfig, Transformer, Vocabulary};
use mmpt::search::{Candidate, SearchConfig};

fn record(source: &str, target: &str) -> MmpRecord {
    MmpRecord { source: source.into(), target: target.into(), rule: "x".into(), core: "y".into() }
}

fn cand(products: &[&str]) -> Candidate {
    Candidate {
        rule_text: products.join("+"),
        score: 0.0,
        products: products.iter().map(|s| s.to_string()).collect(),
        rule_error: None,
    }
}

fn known() -> KnownSet {
    KnownSet::from_records(&[
        record("A", "A1"),
        record("A", "A2"),
        record("B", "B1"),
        record("B", "B2"),
        record("C", "C1"),
    ])
}

fn untrained() -> Checkpoint {
    let vocab = Vocabulary::build(["C", "O"]).unwrap();
    let config = ModelConfig { d_model: 8, n_heads: 2, n_encoder_layers: 1, n_decoder_layers: 1, d_ffn: 8, ..ModelConfig::default() };
    Checkpoint {
        model: Transformer::new(config, vocab.len(), 0).unwrap(),
        vocab,
        train_config: TrainConfig::default(),
        epoch: 0,
        best_valid_loss: f64::INFINITY,
    }
}

#[test]
fn coverage_fixture_is_exact() {
    let k = known();
    let groups = BTreeMap::from([(
        2,
        vec![
            SourceResult { source: "A".into(), candidates: vec![cand(&["A1"]), cand(&["A2", "Z"])], failure: None },
            SourceResult { source: "B".into(), candidates: vec![cand(&["Q"]), cand(&[])], failure: None },
        ],
    )]);
    let rows = eval::coverage_rows(&groups, &k).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].coverage_rate, 0.5);
    assert_eq!(rows[0].avg_covered, 1.0);
    assert_eq!(rows[0].sources, 2);
}

#[test]
fn mislabeled_group_is_rejected() {
    let k = known();
    // C has one known target, not two
    let groups = BTreeMap::from([(2, vec!["A".to_string(), "C".to_string()])]);
    let err = eval::coverage_by_group(&untrained(), &groups, &k, &SearchConfig::default()).unwrap_err();
    match err {
        EvalError::GroupMismatch { molecule, group, actual } => {
            assert_eq!((molecule.as_str(), group, actual), ("C", 2, 1));
        }
        other => panic!("{other:?}"),
    }
    let results = BTreeMap::from([(1, vec![SourceResult { source: "A".into(), candidates: vec![], failure: None }])]);
    assert!(matches!(eval::coverage_rows(&results, &k), Err(EvalError::GroupMismatch { .. })));
}

#[test]
fn valid_exist_fixture_is_exact() {
    let k = known();
    let results = vec![
        // k=1: valid 1, exist 1/1; k=2: valid 1/2, exist 1/1 (A1 only)
        SourceResult { source: "A".into(), candidates: vec![cand(&["A1"]), cand(&[])], failure: None },
        // k=1: valid 1, exist 0; k=2: valid 1, exist 1/2 (N, B1)
        SourceResult { source: "B".into(), candidates: vec![cand(&["N"]), cand(&["B1", "N"])], failure: None },
        // failed decode: counts 0 for %Valid, skipped for %Exist
        SourceResult { source: "C".into(), candidates: vec![], failure: Some("overflow".into()) },
    ];
    let rows = eval::valid_exist_rows(&results, &k, &[1, 2]);
    assert_eq!(rows[0].percent_valid, 2.0 / 3.0);
    assert_eq!(rows[0].percent_exist, 0.5);
    assert_eq!(rows[1].percent_valid, 0.5);
    assert_eq!(rows[1].percent_exist, 0.75);
    eval::check_valid_exist(&rows).unwrap();

    let sweep = eval::sweep_rows(&results, &k, &[1, 2]);
    assert_eq!((sweep[0].n_existing, sweep[0].n_novel), (1, 1));
    assert_eq!((sweep[1].n_existing, sweep[1].n_novel), (2, 1));
    eval::check_sweep(&sweep).unwrap();
}

#[test]
fn external_predictions_score_molecules_and_rules() {
    let known = KnownSet::from_records(&[record("Oc1ccccc1", "Nc1ccccc1")]);
    let file = "source\trank\tprediction\n\
                Oc1ccccc1\t2\tnot a molecule\n\
                Oc1ccccc1\t1\t[*:1]O>>[*:1]N\n\
                Oc1ccccc1\t3\tFc1ccccc1\n";
    let rows = eval::score_external_predictions(file.as_bytes(), &known, &[1, 3]).unwrap();
    assert_eq!(rows[0].percent_valid, 1.0);
    assert_eq!(rows[0].percent_exist, 1.0);
    assert_eq!(rows[1].percent_valid, 2.0 / 3.0);
    assert_eq!(rows[1].percent_exist, 0.5);

    let bad = "Oc1ccccc1\tx\tC\n";
    assert!(matches!(
        eval::score_external_predictions(bad.as_bytes(), &known, &[1]),
        Err(EvalError::Format { line: 1, .. })
    ));
}
