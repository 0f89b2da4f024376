use std::collections::BTreeSet;

use convoscope::corpus::synth::{generate_synthetic_corpus, SynthSpec, TopicPlant};
use convoscope::topics::{
    evaluate, loss_and_gradient, targets_from_sets, train, BowVectorizer, SparseVector, TopicHierarchy, TopicModel,
    TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let dim = 10;
        let batch: Vec<(SparseVector, bool)> = (0..8)
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| if rng.gen_bool(0.6) { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect();
                (SparseVector::from_dense(&x), rng.gen_bool(0.5))
            })
            .collect();
        let refs: Vec<(&SparseVector, bool)> = batch.iter().map(|(x, y)| (x, *y)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let lambda = rng.gen_range(0.0..0.1);
        let (_, grad, grad_b) = loss_and_gradient(&w, b, &refs, lambda);
        for i in 0..dim {
            let mut up = w.clone();
            let mut down = w.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (loss_and_gradient(&up, b, &refs, lambda).0 - loss_and_gradient(&down, b, &refs, lambda).0) / (2.0 * h);
            worst = worst.max(rel_err(grad[i], fd));
        }
        let fd_b = (loss_and_gradient(&w, b + h, &refs, lambda).0 - loss_and_gradient(&w, b - h, &refs, lambda).0) / (2.0 * h);
        worst = worst.max(rel_err(grad_b, fd_b));
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

/// Three topics whose keyword appears in every message of a carrying
/// conversation. With a single mention among ~20 filler tokens the
/// lambda = 1e-2 optimum itself misses single-mention positives.
fn three_topic_spec(n: usize, seed: u64) -> SynthSpec {
    let mut spec = SynthSpec::new(n, seed);
    spec.keyword_recurrence = 1.0;
    spec.topics = vec![
        TopicPlant::new("medication", &["refill", "pharmacy", "dosage", "pills"], 0.35),
        TopicPlant::new("symptoms", &["cough", "fever", "dizzy", "swelling"], 0.35),
        TopicPlant::new("family", &["daughter", "husband", "caregiver", "grandson"], 0.35),
    ];
    spec
}

#[test]
fn planted_topics_are_recovered_on_held_out_data() {
    let (corpus, ledger) = generate_synthetic_corpus(&three_topic_spec(200, 5)).unwrap();
    let hierarchy = TopicHierarchy::builtin();
    let convs = corpus.conversations();
    let (train_convs, test_convs) = convs.split_at(140);
    let vec = BowVectorizer::fit_conversations(train_convs, 1).unwrap();
    let x_train: Vec<SparseVector> = train_convs.iter().map(|c| vec.transform_conversation(c)).collect();
    let sets: Vec<BTreeSet<String>> = ledger.entries.iter().map(|e| e.planted_topics.clone()).collect();
    let targets = targets_from_sets(&hierarchy, &sets[..140]);
    let (clf, report) = train(&x_train, &targets, &TrainConfig::default()).unwrap();
    assert_eq!(clf.topics.len(), 3);
    assert!(report.topics.iter().all(|t| t.halted.is_none()));

    let held_out: Vec<_> = test_convs.iter().zip(&sets[140..]).map(|(c, s)| (vec.transform_conversation(c), s.clone())).collect();
    let eval = evaluate(&clf, &hierarchy, &held_out).unwrap();
    let f1 = eval.micro.f1.unwrap();
    assert!(f1 >= 0.95, "micro F1 {f1}");
}

#[test]
fn accepted_epochs_never_raise_the_loss() {
    let (corpus, ledger) = generate_synthetic_corpus(&three_topic_spec(120, 9)).unwrap();
    let vec = BowVectorizer::fit_conversations(corpus.conversations(), 1).unwrap();
    let x: Vec<_> = corpus.conversations().iter().map(|c| vec.transform_conversation(c)).collect();
    let sets: Vec<_> = ledger.entries.iter().map(|e| e.planted_topics.clone()).collect();
    let targets = targets_from_sets(&TopicHierarchy::builtin(), &sets);
    let config = TrainConfig { learning_rate: 5.0, ..TrainConfig::default() };
    let (_, report) = train(&x, &targets, &config).unwrap();
    for log in &report.topics {
        assert!(log.losses.windows(2).all(|w| w[1] <= w[0]), "{}", log.topic_id);
    }
}

#[test]
fn separable_toy_set_is_fit_exactly() {
    let texts: Vec<String> =
        (0..20).map(|i| if i % 2 == 0 { format!("hello there refill item{i}") } else { format!("hello there item{i}") }).collect();
    let vec = BowVectorizer::fit(texts.iter().map(String::as_str), &convoscope::text::Tokenizer::features(), 1).unwrap();
    let x: Vec<_> = texts.iter().map(|t| vec.transform(t)).collect();
    let sets: Vec<BTreeSet<String>> =
        (0..20).map(|i| if i % 2 == 0 { BTreeSet::from(["medication".to_string()]) } else { BTreeSet::new() }).collect();
    let hierarchy = TopicHierarchy::builtin();
    let (clf, _) = train(&x, &targets_from_sets(&hierarchy, &sets), &TrainConfig::default()).unwrap();
    for (xi, s) in x.iter().zip(&sets) {
        assert_eq!(&clf.predict(&hierarchy, xi).unwrap().leaves, s);
    }
}

#[test]
fn model_file_round_trips() {
    let (corpus, ledger) = generate_synthetic_corpus(&three_topic_spec(60, 1)).unwrap();
    let vec = BowVectorizer::fit_conversations(corpus.conversations(), 1).unwrap();
    let x: Vec<_> = corpus.conversations().iter().map(|c| vec.transform_conversation(c)).collect();
    let sets: Vec<_> = ledger.entries.iter().map(|e| e.planted_topics.clone()).collect();
    let (clf, _) = train(&x, &targets_from_sets(&TopicHierarchy::builtin(), &sets), &TrainConfig::default()).unwrap();
    let model = TopicModel::new(vec, clf);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = TopicModel::load(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.to_json(), model.to_json());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Scaling weights and bias by c > 0 keeps every prediction at threshold 0.5.
    #[test]
    fn positive_scaling_keeps_half_threshold_decisions(
        w in prop::collection::vec(-3.0f64..3.0, 6),
        b in -2.0f64..2.0,
        x in prop::collection::vec(-2.0f64..2.0, 6),
        c in 0.1f64..10.0,
    ) {
        let xs = SparseVector::from_dense(&x);
        let z = xs.dot(&w) + b;
        prop_assume!(z.abs() > 1e-9);
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        let zc = xs.dot(&scaled) + b * c;
        prop_assert_eq!(z >= 0.0, zc >= 0.0);
    }
}
