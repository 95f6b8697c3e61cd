use flowdrift::eval::{
    auroc, build_curve, confusion, forgetting_rate, snapshot, EvalSnapshot, ForgettingCurve,
};
use flowdrift::models::{LinearKind, LinearModel, OnlineClassifier};
use flowdrift::preprocess::Example;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pairwise definition: P(score_pos > score_neg) + ½·P(tie).
fn brute_auroc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    // Half the scores come from a tiny pool so ties are common.
    let score = prop_oneof![
        prop::sample::select(vec![-2.0, -0.5, 0.0, 0.25, 1.0, 3.0]),
        -5.0f64..5.0,
    ];
    prop::collection::vec((score, 0u8..2), 1..60)
        .prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn auroc_matches_pair_count((scores, labels) in scored_labels()) {
        let got = auroc(&scores, &labels).unwrap();
        match (got, brute_auroc(&scores, &labels)) {
            (None, None) => {}
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b),
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn auroc_ignores_monotone_transforms((scores, labels) in scored_labels()) {
        let base = auroc(&scores, &labels).unwrap();
        let moved: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() * 3.0 + 1.0).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s + s).collect();
        prop_assert_eq!(base, auroc(&moved, &labels).unwrap());
        prop_assert_eq!(base, auroc(&cubed, &labels).unwrap());
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        if let Some(a) = base {
            let n = auroc(&neg, &labels).unwrap().unwrap();
            prop_assert!((n - (1.0 - a)).abs() <= 1e-12);
        }
    }

    #[test]
    fn confusion_matches_tally(pairs in prop::collection::vec((0u8..2, 0u8..2), 0..100)) {
        let (preds, labels): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let c = confusion(&preds, &labels).unwrap();
        let tally = |p, l| pairs.iter().filter(|&&q| q == (p, l)).count() as u64;
        prop_assert_eq!(c.tp, tally(1, 1));
        prop_assert_eq!(c.tn, tally(0, 0));
        prop_assert_eq!(c.fp, tally(1, 0));
        prop_assert_eq!(c.fn_, tally(0, 1));
        prop_assert_eq!(c.total(), pairs.len() as u64);
    }

    #[test]
    fn forgetting_round_trips_bitwise(before in 0.01f64..1.0, after in 0.0f64..1.0) {
        let f = forgetting_rate(before, after).unwrap();
        prop_assert_eq!(f.to_bits(), ((before - after) / before).to_bits());
    }
}

#[test]
fn mismatched_lengths_and_bad_labels_are_errors() {
    assert!(confusion(&[1, 0], &[1]).is_err());
    assert!(confusion(&[2], &[1]).is_err());
    assert!(auroc(&[0.1], &[1, 0]).is_err());
    assert!(auroc(&[f64::NAN, 0.2], &[1, 0]).is_err());
    assert!(forgetting_rate(0.0, 0.5).is_err());
}

fn random_examples(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let y = u8::from(x[0] + 0.3 * rng.random::<f64>() > 0.2);
            Example::new(i as u64, x, y)
        })
        .collect()
}

#[test]
fn snapshot_agrees_with_independent_metrics() {
    let test = random_examples(100, 1);
    let mut m = LinearModel::new(LinearKind::Logistic, 3, 0.1, 0.0, 0).unwrap();
    m.weights = vec![1.3, -0.2, 0.4];
    m.bias = -0.1;
    let s = snapshot(&m, &test, "logistic", "t", 0).unwrap();

    let (mut tp, mut tn, mut fp, mut fn_) = (0.0, 0.0, 0.0, 0.0);
    for e in &test {
        let z: f64 = m.weights.iter().zip(&e.x).map(|(a, b)| a * b).sum::<f64>() + m.bias;
        let p = 1.0 / (1.0 + (-z).exp());
        match (p >= 0.5, e.y == 1) {
            (true, true) => tp += 1.0,
            (false, false) => tn += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
        }
    }
    let prec = tp / (tp + fp);
    let rec = tp / (tp + fn_);
    assert!((s.accuracy - (tp + tn) / 100.0).abs() < 1e-12);
    assert!((s.precision - prec).abs() < 1e-12);
    assert!((s.recall - rec).abs() < 1e-12);
    assert!((s.f1 - 2.0 * prec * rec / (prec + rec)).abs() < 1e-12);
    let scores: Vec<f64> = test.iter().map(|e| m.score(&e.x).unwrap()).collect();
    let labels: Vec<u8> = test.iter().map(|e| e.y).collect();
    assert!((s.auroc.unwrap() - brute_auroc(&scores, &labels).unwrap()).abs() < 1e-12);
}

#[test]
fn always_benign_model() {
    let test: Vec<Example> = (0..100).map(|i| Example::new(i, vec![1.0], u8::from(i < 10))).collect();
    let m = LinearModel::new(LinearKind::Perceptron, 1, 0.1, 0.0, 0).unwrap();
    let s = snapshot(&m, &test, "zero", "t", 0).unwrap();
    assert_eq!(s.accuracy, 0.9);
    assert_eq!((s.recall, s.precision, s.f1), (0.0, 0.0, 0.0));
    // All scores tie, so ranking is uninformative.
    assert_eq!(s.auroc, Some(0.5));
}

fn snap(set: &str, batch: i64, acc: f64, auroc: Option<f64>) -> EvalSnapshot {
    let c = confusion(&[1, 0], &[1, 0]).unwrap();
    EvalSnapshot {
        model_id: "m".into(),
        test_set_id: set.into(),
        counts: c,
        accuracy: acc,
        precision: 0.5,
        recall: 0.25,
        f1: 1.0 / 3.0,
        auroc,
        batch_index: batch,
        wall_secs: 0.0,
    }
}

#[test]
fn curve_csv_round_trip_and_rederivation() {
    let mut snaps = vec![snap("off", -1, 0.9962, Some(0.7)), snap("inc", -1, 0.7, None)];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for b in 0..12 {
        snaps.push(snap("off", b, rng.random::<f64>(), None));
        snaps.push(snap("inc", b, rng.random::<f64>(), (b % 3 != 0).then(|| rng.random())));
    }
    let curve = build_curve(&snaps, "off", "inc").unwrap();
    assert_eq!(curve.len(), 12);
    assert_eq!(curve.baseline.forgetting, 0.0);
    for p in &curve.points {
        let again = forgetting_rate(curve.baseline_accuracy(), p.offline_acc).unwrap();
        assert_eq!(again.to_bits(), p.forgetting.to_bits());
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    curve.write_csv(&path).unwrap();
    let back = ForgettingCurve::read_csv(&path, "m").unwrap();
    assert_eq!(back, curve);
    assert!(std::fs::read_to_string(&path).unwrap().contains("NA"));
}

#[test]
fn curve_requires_baseline() {
    let snaps = vec![snap("off", 0, 0.9, None), snap("inc", 0, 0.7, None)];
    assert!(build_curve(&snaps, "off", "inc").is_err());
}
