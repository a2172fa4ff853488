use super::*;
use crate::corpus::SyntheticSpec;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn run(pred: &[usize], gold: &[usize]) -> EvalRun {
    EvalRun::new(pred.to_vec(), gold.to_vec()).unwrap()
}

/// A run of `n` instances with exactly `correct` hits.
fn run_with(correct: usize, n: usize, model: &str) -> EvalRun {
    let gold = vec![0; n];
    let pred = (0..n).map(|i| usize::from(i >= correct)).collect();
    EvalRun::new(pred, gold).unwrap().labeled("d", model, 2)
}

#[test]
fn accuracy_is_exact_fraction() {
    assert_eq!(run(&[0, 1, 2], &[0, 1, 2]).accuracy, 1.0);
    assert_eq!(run(&[1, 2, 0], &[0, 1, 2]).accuracy, 0.0);
    // hand-scored: positions 0, 1, 3 right
    assert_eq!(run(&[0, 1, 1, 2], &[0, 1, 2, 2]).accuracy, 0.75);
    assert!(matches!(
        EvalRun::new(vec![], vec![]),
        Err(Error::EmptyData)
    ));
    assert!(EvalRun::new(vec![0], vec![0, 1]).is_err());
}

#[test]
fn percentage_point_differences() {
    assert_eq!(format_pp(diff_pp(0.6944, 0.5764)), "+11.80");
    assert_eq!(format_pp(diff_pp(0.6134, 0.6134)), "0.00");
    assert_eq!(format_pp(diff_pp(0.5, 0.5011)), "-0.11");
    assert_eq!(format_pp(-0.001), "0.00");

    let base = run_with(5764, 10_000, "repeat_last");
    let model = run_with(6944, 10_000, "ac_cnn");
    let report = compare_to_baseline(&[model, base.clone()], &base).unwrap();
    assert_eq!(format_pp(report.rows[0].diff_pp), "+11.80");
    assert_eq!(report.rows[1].diff_pp, 0.0);
    assert_eq!(report.rows[1].p_value, 1.0);
}

#[test]
fn mcnemar_examples() {
    // oracle: two-sided tail of Binomial(10, 1/2) at 0
    let oracle = 2.0 * 0.5f64.powi(10);
    assert!((mcnemar_exact(10, 0).p_value - oracle).abs() < 1e-12);
    assert!(mcnemar_exact(10, 0).significant);
    assert_eq!(mcnemar_exact(1, 1).p_value, 1.0);
    assert_eq!(mcnemar_exact(0, 0).p_value, 1.0);
    // oracle by direct summation: 2 * (C(12,0) + C(12,1) + C(12,2)) / 2^12
    let direct = 2.0 * (1.0 + 12.0 + 66.0) / 4096.0;
    assert!((mcnemar_exact(10, 2).p_value - direct).abs() < 1e-12);

    let a = run(&[0, 1, 2, 0], &[0, 1, 2, 2]);
    assert_eq!(significance_test(&a, &a).unwrap().p_value, 1.0);
    let other_gold = run(&[0, 1, 2, 0], &[0, 1, 2, 1]);
    assert!(significance_test(&a, &other_gold).is_err());
}

#[test]
fn model_ids_parse() {
    for m in ModelId::ALL {
        assert_eq!(m.as_str().parse::<ModelId>().unwrap(), m);
    }
    assert_eq!("AC-CNN".parse::<ModelId>().unwrap(), ModelId::AcCnn);
    assert!(matches!(
        "gpt".parse::<ModelId>(),
        Err(Error::UnknownModel(_))
    ));
}

fn cycle_spec() -> SyntheticSpec {
    let mut spec = SyntheticSpec::uniform(&["A", "B", "C"], 30, 12, 5);
    spec.transition = BTreeMap::from([
        (vec![0], vec![0.0, 1.0, 0.0]),
        (vec![1], vec![0.0, 0.0, 1.0]),
        (vec![2], vec![1.0, 0.0, 0.0]),
    ]);
    spec
}

#[test]
fn cycle_experiment() {
    let cfg = ExperimentConfig::new(
        "cycle",
        DataSource::Synthetic(cycle_spec()),
        vec![ModelId::RepeatLast, ModelId::AMle],
    );
    let report = run_experiment(&cfg).unwrap();
    for w in [1, 2] {
        assert_eq!(report.row("a_mle", w).unwrap().accuracy, 1.0);
        assert_eq!(report.row("repeat_last", w).unwrap().accuracy, 0.0);
    }
    // identical instance sets at each W
    assert_eq!(
        report.row("a_mle", 1).unwrap().instances,
        report.row("repeat_last", 1).unwrap().instances
    );
    assert!(report.render_tables().contains("+100.00*"));
}

#[test]
fn experiment_is_reproducible() {
    let mut spec = SyntheticSpec::uniform(&["A", "B", "C"], 20, 10, 2);
    spec.topic_vocab = Some(vec![
        vec!["sun".into(), "sky".into()],
        vec!["tea".into(), "cup".into()],
        vec!["car".into(), "road".into()],
    ]);
    let mut cfg = ExperimentConfig::new(
        "repro",
        DataSource::Synthetic(spec),
        vec![
            ModelId::ASvm,
            ModelId::BaSvm,
            ModelId::AcMle,
            ModelId::AcSvm,
            ModelId::AcCnn,
            ModelId::AcLstm,
        ],
    );
    cfg.clusters = 3;
    cfg.embedding_dim = 8;
    cfg.seed = 4;
    let a = run_experiment(&cfg).unwrap().to_jsonl();
    let b = run_experiment(&cfg).unwrap().to_jsonl();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 12);
}

#[test]
fn config_validation() {
    let kv = crate::kv::KeyValues::parse("dataset = x.jsonl\nmodels = a_mle, gpt\n").unwrap();
    assert!(matches!(
        ExperimentConfig::from_key_values(&kv, std::path::Path::new(".")),
        Err(Error::UnknownModel(_))
    ));
    let kv =
        crate::kv::KeyValues::parse("dataset = x.jsonl\nmodels = a_mle\nwindows = 1, 7\n").unwrap();
    assert!(ExperimentConfig::from_key_values(&kv, std::path::Path::new(".")).is_err());
    let kv =
        crate::kv::KeyValues::parse("dataset = x.jsonl\nmodels = a_mle\ncolour = red\n").unwrap();
    assert!(ExperimentConfig::from_key_values(&kv, std::path::Path::new(".")).is_err());
    let kv = crate::kv::KeyValues::parse("models = a_mle\n").unwrap();
    assert!(ExperimentConfig::from_key_values(&kv, std::path::Path::new(".")).is_err());
    let kv = crate::kv::KeyValues::parse(
        "dataset = data/x.jsonl\nmodels = a_mle, ac_cnn\nwindows = 2\nseed = 3\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::from_key_values(&kv, std::path::Path::new("/tmp")).unwrap();
    assert_eq!(
        cfg.source,
        DataSource::Transcripts("/tmp/data/x.jsonl".into())
    );
    assert_eq!(cfg.windows, vec![2]);
    assert_eq!(cfg.name, "x");
}

proptest! {
    #[test]
    fn mcnemar_is_symmetric(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..300)) {
        let gold = vec![0; pairs.len()];
        let a = EvalRun::new(pairs.iter().map(|p| usize::from(!p.0)).collect(), gold.clone()).unwrap();
        let b = EvalRun::new(pairs.iter().map(|p| usize::from(!p.1)).collect(), gold).unwrap();
        let ab = significance_test(&a, &b).unwrap();
        let ba = significance_test(&b, &a).unwrap();
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }
}
