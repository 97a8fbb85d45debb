use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use debate_causal::corpus::{load_annotations, load_posts, save_annotations, save_posts};
use debate_causal::estimators::{estimate, Estimator};
use debate_causal::harness::{generate_synthetic_tabular, inspect_topics, SyntheticWorld};
use debate_causal::inference::cv::f1_score;
use debate_causal::inference::{fit_linear, fit_propensity, NuisanceConfig, OutcomeOptions, PropensityOptions};
use debate_causal::topics::{build_dtm, build_vocabulary, fit_lda, LdaConfig};

fn normal_rows(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

#[test]
fn coin_flip_classifier_has_f1_near_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 20_000;
    let truth: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
    let guess: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
    let f1 = f1_score(&truth, &guess, 1);
    assert!((f1 - 0.5).abs() < 0.02, "{f1}");
    assert_eq!(f1_score(&truth, &truth, 1), 1.0);
}

#[test]
fn propensity_ignores_irrelevant_features() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows = normal_rows(5000, 3, &mut rng);
    let t: Vec<u8> = (0..5000).map(|_| u8::from(rng.random::<bool>())).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let model = fit_propensity(&refs, &t, &PropensityOptions::default()).unwrap();
    let (w, b) = model.raw_coefficients();
    assert!(w.iter().all(|w| w.abs() < 0.1), "{w:?}");
    assert!(b.abs() < 0.1);
}

#[test]
fn propensity_recovers_logistic_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = normal_rows(20_000, 2, &mut rng);
    let t: Vec<u8> = rows
        .iter()
        .map(|z| {
            let p = 1.0 / (1.0 + (-(0.3 + 1.0 * z[0] - 0.5 * z[1])).exp());
            u8::from(rng.random::<f64>() < p)
        })
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let (w, b) = fit_propensity(&refs, &t, &PropensityOptions::default())
        .unwrap()
        .raw_coefficients();
    assert!((w[0] - 1.0).abs() < 0.08 && (w[1] + 0.5).abs() < 0.08 && (b - 0.3).abs() < 0.08, "{w:?} {b}");
}

#[test]
fn outcome_model_recovers_noisy_linear_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows = normal_rows(5000, 3, &mut rng);
    let y: Vec<f64> = rows
        .iter()
        .map(|z| 1.0 + 2.0 * z[0] - z[1] + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let (w, b) = fit_linear(&refs, &y, 1, &OutcomeOptions::default())
        .unwrap()
        .raw_coefficients();
    for (got, want) in w.iter().zip([2.0, -1.0, 0.0]) {
        assert!((got - want).abs() < 0.05, "{w:?}");
    }
    assert!((b - 1.0).abs() < 0.05);
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len().is_multiple_of(2) {
        (xs[m - 1] + xs[m]) / 2.0
    } else {
        xs[m]
    }
}

#[test]
fn aipw_error_shrinks_with_sample_size() {
    let mut medians = Vec::new();
    for n in [500, 2000, 10_000] {
        let errors: Vec<f64> = (0..15)
            .map(|seed| {
                let world = SyntheticWorld {
                    treatment_coefs: vec![0.5; 3],
                    control_coefs: vec![0.5; 3],
                    treated_coefs: vec![0.5; 3],
                    ..SyntheticWorld::unconfounded(n, 3, 1.0, 100 + seed)
                };
                let mut data = generate_synthetic_tabular(&world).unwrap();
                data.input.refit(&NuisanceConfig::default()).unwrap();
                (estimate(Estimator::Aipw, &data.input).unwrap() - data.true_ate).abs()
            })
            .collect();
        medians.push(median(errors));
    }
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    assert!(medians[2] < 0.03, "{medians:?}");
}

#[test]
fn inspect_topics_on_planted_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let left: Vec<String> = (0..10).map(|i| format!("left{i}")).collect();
    let right: Vec<String> = (0..10).map(|i| format!("right{i}")).collect();
    let docs: Vec<(String, Vec<String>)> = (0..60)
        .map(|d| {
            let words = if d % 2 == 0 { &left } else { &right };
            let tokens = (0..30).map(|_| words[rng.random_range(0..10)].clone()).collect();
            (format!("doc{d}"), tokens)
        })
        .collect();
    let token_lists: Vec<Vec<String>> = docs.iter().map(|(_, t)| t.clone()).collect();
    let vocab = build_vocabulary(&token_lists, 0.0, 1.0).unwrap();
    let dtm = build_dtm(&docs, &vocab);
    let dir = tempfile::tempdir().unwrap();

    let two = fit_lda(&dtm, &vocab, &LdaConfig { k: 2, seed: 9, ..LdaConfig::default() }).unwrap();
    let path = dir.path().join("two.json");
    two.save(&path).unwrap();
    let lists = inspect_topics(&path, 10).unwrap();
    assert_eq!(lists.len(), 2);
    // Each planted cluster is recovered as one topic.
    let mut prefixes: Vec<bool> = lists
        .iter()
        .map(|words| {
            let left_words = words.iter().filter(|w| w.starts_with("left")).count();
            assert!(left_words == 0 || left_words == 10, "{words:?}");
            left_words == 10
        })
        .collect();
    prefixes.sort();
    assert_eq!(prefixes, [false, true]);

    let fifty = fit_lda(&dtm, &vocab, &LdaConfig { k: 50, seed: 9, max_iters: 20, ..LdaConfig::default() }).unwrap();
    let path = dir.path().join("fifty.json");
    fifty.save(&path).unwrap();
    let lists = inspect_topics(&path, 1).unwrap();
    assert_eq!(lists.len(), 50);
    assert!(lists.iter().all(|l| l.len() == 1));
    assert!(inspect_topics(&path, 0).unwrap_err().is_validation());
}

#[test]
fn corpus_files_round_trip() {
    let fixture = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture");
    let posts = load_posts(fixture.join("posts.jsonl")).unwrap();
    let anns = load_annotations(fixture.join("annotations.jsonl")).unwrap();
    assert!(posts.issues.is_empty() && anns.issues.is_empty());
    let dir = tempfile::tempdir().unwrap();
    save_posts(dir.path().join("p.jsonl"), posts.posts.posts()).unwrap();
    save_annotations(dir.path().join("a.jsonl"), &anns.annotations).unwrap();
    let posts2 = load_posts(dir.path().join("p.jsonl")).unwrap();
    let anns2 = load_annotations(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(posts.posts.posts(), posts2.posts.posts());
    assert_eq!(anns.annotations, anns2.annotations);
}

#[test]
fn malformed_records_are_reported_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    std::fs::write(
        &path,
        concat!(
            "{\"id\":\"a\",\"discussion_id\":\"d\",\"debate_topic\":\"t\",\"author\":\"x\",\"position\":0,\"text\":\"hi\"}\n",
            "{\"id\":\"b\",\"discussion_id\":\"d\",\"debate_topic\":\"t\",\"author\":\"y\",\"text\":\"no position\"}\n",
            "not json\n",
            "{\"id\":\"c\",\"discussion_id\":\"d\",\"debate_topic\":\"t\",\"author\":\"x\",\"position\":2,\"parent_id\":\"zzz\",\"text\":\"\"}\n",
        ),
    )
    .unwrap();
    let loaded = load_posts(&path).unwrap();
    assert_eq!(loaded.posts.len(), 2);
    let lines: Vec<usize> = loaded.issues.iter().map(|i| i.line).collect();
    assert_eq!(lines, [2, 3, 4]);
    assert!(loaded.issues[0].message.contains("position"));
    assert_eq!(loaded.posts.get("c").unwrap().parent_id, None);

    std::fs::write(
        &path,
        concat!(
            "{\"id\":\"a\",\"discussion_id\":\"d\",\"debate_topic\":\"t\",\"author\":\"x\",\"position\":0,\"text\":\"\"}\n",
            "{\"id\":\"a\",\"discussion_id\":\"d\",\"debate_topic\":\"t\",\"author\":\"x\",\"position\":1,\"text\":\"\"}\n",
        ),
    )
    .unwrap();
    assert!(load_posts(&path).unwrap_err().is_validation());
}
