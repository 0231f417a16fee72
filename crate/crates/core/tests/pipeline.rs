use std::sync::Arc;

use lidkit::data::{read_labeled, romanize_corpus};
use lidkit::ensemble::{invoked_stage2, Ensemble};
use lidkit::eval::evaluate;
use lidkit::features::FeaturizerConfig;
use lidkit::label::Stage;
use lidkit::linear::{train, TrainConfig};
use lidkit::script::{route, Route};
use lidkit::stage2::{LocalReference, RemoteClient, RemoteEndpointConfig, Stage2Classifier, StubMode, StubServer};
use lidkit::synth::{generate, ToyConfig};

fn small_features() -> FeaturizerConfig {
    FeaturizerConfig {
        bucket_count: 50_000,
        ..FeaturizerConfig::default()
    }
}

fn cfg(dim: usize) -> TrainConfig {
    TrainConfig {
        dim,
        initial_lr: 0.5,
        ..TrainConfig::default()
    }
}

#[test]
fn toy_pipeline_through_files_and_remote_stage2() {
    let toy = generate(&ToyConfig {
        scripts: 2,
        train_per_class: 300,
        test_per_class: 50,
        seed: 5,
        ..ToyConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("native_train.txt");
    toy.native_train.write_labeled(std::fs::File::create(&path).unwrap()).unwrap();
    let reread = read_labeled(&path, "toy", &FeaturizerConfig::default()).unwrap();
    let texts = |c: &lidkit::data::SourcedCorpus| c.records().iter().map(|r| (r.label, r.text.clone())).collect::<Vec<_>>();
    assert_eq!(texts(&reread), texts(&toy.native_train));

    let roman_train = romanize_corpus(&reread, &toy.romanizer).unwrap();
    let roman_test = romanize_corpus(&toy.native_test, &toy.romanizer).unwrap();
    assert!(roman_train.records().iter().all(|r| route(&r.text) == Route::RomanPath));

    let registry = Arc::new(toy.registry.clone());
    let (native, _) = train(reread.records(), &registry, small_features(), &cfg(8)).unwrap();
    let (roman, _) = train(roman_train.records(), &registry, small_features(), &cfg(8)).unwrap();
    let (reference, _) = LocalReference::train(roman_train.records(), &registry, Some(small_features()), Some(cfg(16))).unwrap();
    let reference: Arc<dyn Stage2Classifier> = Arc::new(reference);

    let server = StubServer::start(0, StubMode::Classifier(Arc::clone(&reference)), Arc::clone(&registry)).unwrap();
    let remote = RemoteClient::new(RemoteEndpointConfig::new(server.base_url()), Arc::clone(&registry)).unwrap();
    let (native, roman) = (Arc::new(native), Arc::new(roman));
    let local = Ensemble::new(&registry, Arc::clone(&native), Arc::clone(&roman), Arc::clone(&reference), 0.9).unwrap();
    let over_http = Ensemble::new(&registry, native, roman, Arc::new(remote), 0.9).unwrap();

    let native_report = evaluate(&local, toy.native_test.records(), &registry).unwrap();
    assert!(native_report.accuracy() > 0.9, "{native_report}");
    assert_eq!(native_report.stage2_fraction, 0.0);

    let a = evaluate(&local, roman_test.records(), &registry).unwrap();
    let b = evaluate(&over_http, roman_test.records(), &registry).unwrap();
    assert!(a.accuracy() > 0.85, "{a}");
    assert!(a.same_scores(&b));
    assert!(a.stage2_fraction > 0.0);
    assert!(!server.batch_sizes().is_empty());

    let sample: Vec<&str> = roman_test.records().iter().take(50).map(|r| r.text.as_str()).collect();
    for (l, r) in local.identify_batch(&sample).into_iter().zip(over_http.identify_batch(&sample)) {
        let (l, r) = (l.unwrap(), r.unwrap());
        assert_eq!(l.top(), r.top());
        assert_eq!(l.stage, r.stage);
        assert_ne!(l.stage, Stage::NativeLinear);
        assert_eq!(invoked_stage2(&l), l.stage == Stage::Stage2);
    }
}
