use flowdrift::models::{
    cross_entropy, fit_offline, lwf_loss, partial_fit, softmax, AnyModel, Checkpoint, LinearKind,
    LinearModel, LwfConfig, LwfLearner, MlpModel, OnlineClassifier, Provenance,
};
use flowdrift::preprocess::{ClassWeights, Example};
use flowdrift::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn random_examples(n: usize, dim: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x = (0..dim).map(|_| rng.random::<f64>()).collect();
            Example::new(i as u64, x, rng.random_range(0..2))
        })
        .collect()
}

/// Two Gaussian blobs at ±1.5 on every axis of a `dim`-space.
fn blobs(n: usize, dim: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let y = (i % 2) as u8;
            let c = if y == 1 { 1.5 } else { -1.5 };
            let x = (0..dim)
                .map(|_| c + { let z: f64 = StandardNormal.sample(&mut rng); z })
                .collect();
            Example::new(i as u64, x, y)
        })
        .collect()
}

fn accuracy<M: OnlineClassifier>(m: &M, data: &[Example]) -> f64 {
    let ok = data.iter().filter(|e| m.predict(&e.x).unwrap() == e.y).count();
    ok as f64 / data.len() as f64
}

fn jitter_biases(m: &mut MlpModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in &mut m.layers {
        for b in &mut l.bias {
            *b = rng.random::<f64>() * 0.2 + 0.05;
        }
    }
}

fn mean_ce(m: &MlpModel, data: &[Example]) -> f64 {
    data.iter().map(|e| m.loss_and_gradients(&e.x, e.y, 1.0).unwrap().0).sum::<f64>() / data.len() as f64
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let data = random_examples(10, 28, 3);
    let mut model = MlpModel::new(&[28, 4, 4, 2], 0.01, 11).unwrap();
    // Off the ReLU kinks: zero biases can put a preactivation exactly at 0.
    jitter_biases(&mut model, 12);
    let mut analytic = vec![0.0; model.param_count()];
    for e in &data {
        let (_, g) = model.loss_and_gradients(&e.x, e.y, 1.0).unwrap();
        for (a, v) in analytic.iter_mut().zip(g.flatten()) {
            *a += v / data.len() as f64;
        }
    }
    let theta = model.flat_params();
    let eps = 1e-5;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] += eps;
        probe.set_flat_params(&t).unwrap();
        let up = mean_ce(&probe, &data);
        t[i] -= 2.0 * eps;
        probe.set_flat_params(&t).unwrap();
        let down = mean_ce(&probe, &data);
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * eps)));
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn lwf_gradient_matches_finite_differences() {
    let data = random_examples(10, 28, 4);
    let teacher = MlpModel::new(&[28, 4, 4, 2], 0.01, 5).unwrap();
    let mut student = MlpModel::new(&[28, 4, 4, 2], 0.01, 6).unwrap();
    jitter_biases(&mut student, 7);
    let cfg = LwfConfig { lambda: 0.7, temperature: 3.0 };
    let objective = |m: &MlpModel| -> f64 {
        data.iter()
            .map(|e| {
                let zt = teacher.forward(&e.x).unwrap().logits;
                lwf_loss(m, &zt, &e.x, e.y, 1.3, &cfg).unwrap().0
            })
            .sum()
    };
    let mut analytic = vec![0.0; student.param_count()];
    for e in &data {
        let zt = teacher.forward(&e.x).unwrap().logits;
        let (_, g) = lwf_loss(&student, &zt, &e.x, e.y, 1.3, &cfg).unwrap();
        for (a, v) in analytic.iter_mut().zip(g.flatten()) {
            *a += v;
        }
    }
    let theta = student.flat_params();
    let mut probe = student.clone();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] += eps;
        probe.set_flat_params(&t).unwrap();
        let up = objective(&probe);
        t[i] -= 2.0 * eps;
        probe.set_flat_params(&t).unwrap();
        let down = objective(&probe);
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * eps)));
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = LinearModel::new(LinearKind::Logistic, 5, 0.1, 0.0, 0).unwrap();
    for w in m.weights.iter_mut() {
        *w = rng.random::<f64>() - 0.5;
    }
    m.bias = 0.2;
    let data = random_examples(10, 5, 10);
    for e in &data {
        let (gw, gb) = m.loss_gradient(&e.x, e.y).unwrap();
        let eps = 1e-6;
        for (i, g) in gw.iter().enumerate() {
            let mut p = m.clone();
            p.weights[i] += eps;
            let up = p.loss(&e.x, e.y).unwrap();
            p.weights[i] -= 2.0 * eps;
            let down = p.loss(&e.x, e.y).unwrap();
            assert!(rel_err(*g, (up - down) / (2.0 * eps)) < 1e-6);
        }
        let mut p = m.clone();
        p.bias += eps;
        let up = p.loss(&e.x, e.y).unwrap();
        p.bias -= 2.0 * eps;
        let down = p.loss(&e.x, e.y).unwrap();
        assert!(rel_err(gb, (up - down) / (2.0 * eps)) < 1e-6);
    }
}

#[test]
fn small_step_decreases_cross_entropy() {
    let data = random_examples(20, 28, 12);
    let mut m = MlpModel::new(&[28, 8, 2], 1e-3, 2).unwrap();
    for e in &data {
        let before = m.loss_and_gradients(&e.x, e.y, 1.0).unwrap().0;
        m.update(&e.x, e.y, 1.0).unwrap();
        let after = m.loss_and_gradients(&e.x, e.y, 1.0).unwrap().0;
        assert!(after < before, "{after} >= {before}");
    }
}

fn all_models(dim: usize) -> Vec<AnyModel> {
    let mlp = MlpModel::new(&[dim, 6, 2], 0.05, 8).unwrap();
    vec![
        AnyModel::Linear(LinearModel::new(LinearKind::Perceptron, dim, 0.1, 0.0, 1).unwrap()),
        AnyModel::Linear(LinearModel::new(LinearKind::Logistic, dim, 0.1, 0.0, 1).unwrap()),
        AnyModel::Linear(LinearModel::new(LinearKind::SvmHinge, dim, 0.1, 1e-3, 1).unwrap()),
        AnyModel::Mlp(mlp.clone()),
        AnyModel::Lwf(LwfLearner::new(mlp, LwfConfig::default()).unwrap()),
    ]
}

#[test]
fn partial_fit_is_additive_and_empty_is_noop() {
    let data = random_examples(40, 6, 13);
    let w = ClassWeights::explicit(0.7, 1.9).unwrap();
    for m in all_models(6) {
        let mut split = m.clone();
        partial_fit(&mut split, &data[..17], &w).unwrap();
        partial_fit(&mut split, &data[17..], &w).unwrap();
        let mut whole = m.clone();
        partial_fit(&mut whole, &data, &w).unwrap();
        assert_eq!(split, whole, "{}", m.kind_name());

        let mut empty = m.clone();
        let r = partial_fit(&mut empty, &[], &w).unwrap();
        assert!(r.noop && r.samples == 0);
        assert_eq!(empty, m);

        let mut one = m.clone();
        partial_fit(&mut one, &data[..1], &w).unwrap();
        let mut direct = m.clone();
        direct.update(&data[0].x, data[0].y, w.get(data[0].y)).unwrap();
        assert_eq!(one, direct);
    }
}

#[test]
fn perceptron_separates_separable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let truth = [0.8, -0.5, 0.3, 1.1];
    let data: Vec<Example> = (0..300)
        .filter_map(|i| {
            let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let m: f64 = x.iter().zip(truth).map(|(a, b)| a * b).sum::<f64>() + 0.1;
            (m.abs() > 0.1).then(|| Example::new(i, x, u8::from(m > 0.0)))
        })
        .collect();
    let mut m = LinearModel::new(LinearKind::Perceptron, 4, 0.1, 0.0, 3).unwrap();
    fit_offline(&mut m, &data, 200, &ClassWeights::uniform()).unwrap();
    assert_eq!(accuracy(&m, &data), 1.0);
}

#[test]
fn logistic_approaches_bayes_on_blobs() {
    let train = blobs(200, 2, 30);
    let test = blobs(2000, 2, 31);
    // Equal-covariance blobs: Bayes rule is the sign of x1 + x2.
    let bayes = test
        .iter()
        .filter(|e| u8::from(e.x[0] + e.x[1] > 0.0) == e.y)
        .count() as f64
        / test.len() as f64;
    let mut m = LinearModel::new(LinearKind::Logistic, 2, 0.1, 0.0, 4).unwrap();
    fit_offline(&mut m, &train, 20, &ClassWeights::uniform()).unwrap();
    let acc = accuracy(&m, &test);
    assert!(acc >= 0.95, "{acc}");
    assert!(acc >= bayes - 0.01, "{acc} vs bayes {bayes}");
}

#[test]
fn mlp_learns_blobs() {
    let train = blobs(400, 4, 40);
    let mut m = MlpModel::new(&[4, 16, 2], 0.05, 5).unwrap();
    fit_offline(&mut m, &train, 10, &ClassWeights::uniform()).unwrap();
    assert!(accuracy(&m, &blobs(1000, 4, 41)) >= 0.95);
}

#[test]
fn zero_epochs_and_empty_training_are_rejected() {
    let mut m = LinearModel::with_defaults(LinearKind::Logistic, 3, 0);
    let data = random_examples(5, 3, 0);
    assert!(matches!(
        fit_offline(&mut m, &data, 0, &ClassWeights::uniform()),
        Err(Error::InvalidArgument(_))
    ));
    assert!(fit_offline(&mut m, &[], 1, &ClassWeights::uniform()).is_err());
}

#[test]
fn training_is_deterministic() {
    let data = random_examples(60, 6, 50);
    for m in all_models(6) {
        let mut a = m.clone();
        let mut b = m.clone();
        let ra = fit_offline(&mut a, &data, 3, &ClassWeights::uniform()).unwrap();
        let rb = fit_offline(&mut b, &data, 3, &ClassWeights::uniform()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.final_loss.to_bits(), rb.final_loss.to_bits());
    }
    let a = MlpModel::new(&[6, 5, 2], 0.1, 77).unwrap();
    assert_eq!(a, MlpModel::new(&[6, 5, 2], 0.1, 77).unwrap());
    assert_ne!(a, MlpModel::new(&[6, 5, 2], 0.1, 78).unwrap());
}

#[test]
fn class_weight_equals_scaled_rate() {
    let data = random_examples(30, 4, 60);
    for kind in [LinearKind::Perceptron, LinearKind::Logistic, LinearKind::SvmHinge] {
        let mut weighted = LinearModel::new(kind, 4, 0.05, 1e-3, 0).unwrap();
        let mut scaled = LinearModel::new(kind, 4, 0.05 * 2.5, 1e-3, 0).unwrap();
        for e in &data {
            weighted.update(&e.x, e.y, 2.5).unwrap();
            scaled.update(&e.x, e.y, 1.0).unwrap();
        }
        for (a, b) in weighted.weights.iter().zip(&scaled.weights) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        assert!((weighted.bias - scaled.bias).abs() <= 1e-12);
    }
}

#[test]
fn svm_leaves_confident_samples_alone() {
    let mut m = LinearModel::new(LinearKind::SvmHinge, 2, 0.1, 0.0, 0).unwrap();
    m.weights = vec![2.0, 0.0];
    m.bias = 0.0;
    let before = m.clone();
    m.update(&[1.0, 5.0], 1, 1.0).unwrap();
    m.update(&[-0.5, 3.0], 0, 1.0).unwrap();
    assert_eq!(m, before);

    let mut reg = LinearModel::new(LinearKind::SvmHinge, 2, 0.1, 0.01, 0).unwrap();
    reg.weights = vec![2.0, -1.0];
    reg.update(&[2.0, 0.0], 1, 1.0).unwrap();
    assert_eq!(reg.weights, vec![2.0 * (1.0 - 0.001), -(1.0 - 0.001)]);
    assert_eq!(reg.bias, 0.0);
}

#[test]
fn checkpoints_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = random_examples(30, 6, 70);
    for (i, mut m) in all_models(6).into_iter().enumerate() {
        fit_offline(&mut m, &data, 2, &ClassWeights::uniform()).unwrap();
        let ck = Checkpoint::new(
            m.clone(),
            Provenance { phase: "offline".into(), samples_seen: 60, batch_index: -1 },
        );
        let path = dir.path().join(format!("{i}.json"));
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let a: Vec<u64> = m.flat_params().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.model.flat_params().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        for e in &data {
            assert_eq!(m.score(&e.x).unwrap().to_bits(), back.model.score(&e.x).unwrap().to_bits());
        }
        assert!(back.expect(m.kind_name(), 6).is_ok());
        assert!(back.expect(m.kind_name(), 7).is_err());
    }
}

#[test]
fn corrupt_checkpoints_fail_loudly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, "{\"version\": 1, \"kind\": ").unwrap();
    assert!(Checkpoint::load(&path).is_err());
    let ck = Checkpoint::new(
        all_models(3).remove(0),
        Provenance { phase: "offline".into(), samples_seen: 0, batch_index: -1 },
    );
    ck.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 99");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn lwf_with_zero_lambda_tracks_plain_training() {
    let data = random_examples(50, 6, 80);
    let base = MlpModel::new(&[6, 5, 2], 0.05, 9).unwrap();
    let mut plain = base.clone();
    let mut lwf = LwfLearner::new(base, LwfConfig { lambda: 0.0, temperature: 2.0 }).unwrap();
    let w = ClassWeights::explicit(1.0, 3.0).unwrap();
    for e in &data {
        plain.update(&e.x, e.y, w.get(e.y)).unwrap();
        lwf.update(&e.x, e.y, w.get(e.y)).unwrap();
        for (a, b) in plain.flat_params().iter().zip(lwf.student.flat_params()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn teacher_stays_frozen() {
    let base = MlpModel::new(&[6, 5, 2], 0.05, 9).unwrap();
    let mut lwf = LwfLearner::new(base.clone(), LwfConfig::default()).unwrap();
    partial_fit(&mut lwf, &random_examples(30, 6, 81), &ClassWeights::uniform()).unwrap();
    assert_eq!(lwf.teacher(), &base);
    assert_ne!(lwf.student, base);
}

#[test]
fn dimension_and_finiteness_guards() {
    for mut m in all_models(4) {
        assert!(matches!(m.score(&[0.0; 3]), Err(Error::Dimension { .. })));
        let before = m.clone();
        assert!(m.update(&[0.0, f64::NAN, 0.0, 0.0], 1, 1.0).is_err());
        assert_eq!(m, before);
    }
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-700.0f64..700.0, 2..6)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|v| *v >= 0.0 && v.is_finite()));
        prop_assert!(cross_entropy(&z, 0).is_finite());
    }
}
