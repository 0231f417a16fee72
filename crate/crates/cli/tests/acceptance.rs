//! Acceptance suite: one line per criterion, `[PASS]` or `[FAIL]`.
//!
//! Runs without the libtest harness so criteria execute one after another
//! (the throughput checks need a quiet machine) and the report is never
//! captured. Exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lidkit::data::{
    flag_for_review, perturb, romanize_corpus, FlagReason, NoisyTransliterator, ReviewItem, SourcedCorpus,
};
use lidkit::ensemble::{Ensemble, DEFAULT_THRESHOLD};
use lidkit::eval::{
    dim_sweep, evaluate, length_bucket_accuracy, metrics, synthetic_gap, threshold_sweep, Averaging,
    ConfusionMatrix,
};
use lidkit::features::{Featurizer, FeaturizerConfig, WordVocab};
use lidkit::label::{parse_tag, ExampleId, LabeledExample, LanguageClass, Registry, Stage};
use lidkit::linear::{loss_and_gradients, train, LinearModel, ModelIoError, TrainConfig};
use lidkit::script::{route, Route};
use lidkit::stage2::{LocalReference, RemoteClient, RemoteEndpointConfig, Stage2Classifier, Stage2Error, StubMode, StubServer};
use lidkit::synth::{generate, ToyConfig, ToyCorpus};

// Tolerances and sizes, pinned.
const METRIC_TOL: f64 = 1e-12;
const METRIC_MATRICES: usize = 1000;
const METRIC_MAX_K: usize = 6;
const METRIC_BUDGET: Duration = Duration::from_secs(10);
const GRAD_H: f64 = 1e-4;
const GRAD_REL_TOL: f64 = 1e-4;
const NATIVE_MIN_ACC: f64 = 0.95;
const ROMAN_MIN_ACC: f64 = 0.90;
const DESK_BUDGET: Duration = Duration::from_secs(300);
const ROUTING_STRINGS: usize = 10_000;
const SWEEP_REPEATS: usize = 5;
const DIM_ACC_SLACK: f64 = 0.05;
const MIN_GAP: f64 = 0.02;
const NOISE_RATE: f64 = 0.1;
const ROUNDTRIP_INPUTS: usize = 1000;
const STAGE1_DIM: usize = 8;
const DESK_LR: f32 = 0.5;
const DESK_EPOCHS: usize = 5;
const SEED: u64 = 20240601;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Desk {
    toy: ToyCorpus,
    registry: Arc<Registry>,
    roman_train: SourcedCorpus,
    roman_test: SourcedCorpus,
    native: Arc<LinearModel>,
    roman: Arc<LinearModel>,
    stage2: Arc<LocalReference>,
    ensemble: Ensemble,
    build_time: Duration,
}

fn stage1_config() -> TrainConfig {
    TrainConfig {
        dim: STAGE1_DIM,
        epochs: DESK_EPOCHS,
        initial_lr: DESK_LR,
        seed: SEED,
        ..TrainConfig::default()
    }
}

fn build_desk() -> Desk {
    let start = Instant::now();
    let toy = generate(&ToyConfig {
        seed: SEED,
        ..ToyConfig::default()
    })
    .expect("toy corpus");
    let roman_train = romanize_corpus(&toy.native_train, &toy.romanizer).expect("romanize train");
    let roman_test = romanize_corpus(&toy.native_test, &toy.romanizer).expect("romanize test");
    let registry = Arc::new(toy.registry.clone());
    let fcfg = FeaturizerConfig::default();
    let (native, _) = train(toy.native_train.records(), &registry, fcfg, &stage1_config()).expect("native");
    let (roman, _) = train(roman_train.records(), &registry, fcfg, &stage1_config()).expect("roman");
    let wide = TrainConfig {
        epochs: DESK_EPOCHS,
        initial_lr: DESK_LR,
        seed: SEED,
        ..TrainConfig::wide()
    };
    let (stage2, _) = LocalReference::train(roman_train.records(), &registry, None, Some(wide)).expect("stage 2");
    let native = Arc::new(native);
    let roman = Arc::new(roman);
    let stage2 = Arc::new(stage2);
    let ensemble = Ensemble::new(
        &registry,
        Arc::clone(&native),
        Arc::clone(&roman),
        stage2.clone(),
        DEFAULT_THRESHOLD,
    )
    .expect("ensemble");
    Desk {
        toy,
        registry,
        roman_train,
        roman_test,
        native,
        roman,
        stage2,
        ensemble,
        build_time: start.elapsed(),
    }
}

fn class(tag: &str) -> LanguageClass {
    parse_tag(tag).unwrap()
}

// 1. Metric oracle equivalence.

/// Metrics from (gold, predicted) pairs, written independently of the library.
#[allow(clippy::type_complexity)]
fn oracle_metrics(k: usize, counts: &[u64]) -> (Vec<Option<(f64, f64, f64)>>, [f64; 3], f64) {
    let mut pairs = Vec::new();
    for g in 0..k {
        for p in 0..k {
            pairs.extend(std::iter::repeat_n((g, p), counts[g * k + p] as usize));
        }
    }
    let mut rows = Vec::new();
    let mut sums = [0.0; 3];
    let mut gold_classes = 0.0;
    for c in 0..k {
        let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count() as f64;
        let pred = pairs.iter().filter(|&&(_, p)| p == c).count() as f64;
        let gold = pairs.iter().filter(|&&(g, _)| g == c).count() as f64;
        if pred == 0.0 && gold == 0.0 {
            rows.push(None);
            continue;
        }
        let p = if pred > 0.0 { tp / pred } else { 0.0 };
        let r = if gold > 0.0 { tp / gold } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        rows.push(Some((p, r, f)));
        if gold > 0.0 {
            gold_classes += 1.0;
            sums[0] += p;
            sums[1] += r;
            sums[2] += f;
        }
    }
    let macro_avg = if gold_classes > 0.0 {
        sums.map(|s| s / gold_classes)
    } else {
        [0.0; 3]
    };
    let correct = pairs.iter().filter(|(g, p)| g == p).count() as f64;
    let acc = if pairs.is_empty() { 0.0 } else { correct / pairs.len() as f64 };
    (rows, macro_avg, acc)
}

fn criterion_metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let tags = ["aaa_Latn", "bbb_Latn", "ccc_Latn", "ddd_Latn", "eee_Latn", "fff_Latn"];
    let mut worst = 0f64;
    for _ in 0..METRIC_MATRICES {
        let k = rng.random_range(1..=METRIC_MAX_K);
        let counts: Vec<u64> = (0..k * k)
            .map(|_| if rng.random_bool(0.3) { 0 } else { rng.random_range(0..50) })
            .collect();
        let classes: Vec<LanguageClass> = tags[..k].iter().map(|t| class(t)).collect();
        let cm = ConfusionMatrix::from_counts(classes.clone(), counts.clone()).unwrap();
        let m = metrics(&cm, Averaging::Macro);
        let (rows, macro_avg, acc) = oracle_metrics(k, &counts);
        let expected: Vec<(LanguageClass, (f64, f64, f64))> = rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|r| (classes[i], r)))
            .collect();
        if expected.len() != m.per_class.len() {
            return Err(format!("per-class rows {} vs oracle {}", m.per_class.len(), expected.len()));
        }
        for (got, (c, (p, r, f))) in m.per_class.iter().zip(&expected) {
            if got.class != *c {
                return Err(format!("class order {} vs {}", got.class, c));
            }
            worst = worst
                .max((got.precision - p).abs())
                .max((got.recall - r).abs())
                .max((got.f1 - f).abs());
        }
        worst = worst
            .max((m.precision - macro_avg[0]).abs())
            .max((m.recall - macro_avg[1]).abs())
            .max((m.f1 - macro_avg[2]).abs())
            .max((m.accuracy - acc).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst <= METRIC_TOL && elapsed < METRIC_BUDGET,
        format!(
            "{METRIC_MATRICES} matrices (K<={METRIC_MAX_K}), max abs diff {worst:.2e} (tol {METRIC_TOL:.0e}), {:.2}s (budget {}s)",
            elapsed.as_secs_f64(),
            METRIC_BUDGET.as_secs()
        ),
    )
}

// 2. Gradient check.

fn criterion_gradient() -> Outcome {
    let (dim, classes) = (2usize, 2usize);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut emb: Vec<f64> = (0..3 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out: Vec<f64> = (0..dim * classes).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ids = [0u32, 2, 2];
    let label = 1;
    let (_, d_emb, d_out) = loss_and_gradients(&emb, &out, dim, classes, &ids, label);
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
    let mut worst = 0f64;
    for i in 0..emb.len() {
        let keep = emb[i];
        emb[i] = keep + GRAD_H;
        let up = loss_and_gradients(&emb, &out, dim, classes, &ids, label).0;
        emb[i] = keep - GRAD_H;
        let down = loss_and_gradients(&emb, &out, dim, classes, &ids, label).0;
        emb[i] = keep;
        let numeric = (up - down) / (2.0 * GRAD_H);
        if d_emb[i] != 0.0 || numeric.abs() > 1e-12 {
            worst = worst.max(rel(d_emb[i], numeric));
        }
    }
    for i in 0..out.len() {
        let keep = out[i];
        out[i] = keep + GRAD_H;
        let up = loss_and_gradients(&emb, &out, dim, classes, &ids, label).0;
        out[i] = keep - GRAD_H;
        let down = loss_and_gradients(&emb, &out, dim, classes, &ids, label).0;
        out[i] = keep;
        worst = worst.max(rel(d_out[i], (up - down) / (2.0 * GRAD_H)));
    }
    check(
        worst <= GRAD_REL_TOL,
        format!("dim 2, 2 classes, h={GRAD_H:.0e}: max relative error {worst:.2e} (tol {GRAD_REL_TOL:.0e})"),
    )
}

// 3. Desk-scale end to end.

fn criterion_desk(desk: &Desk) -> Outcome {
    let start = Instant::now();
    let native = evaluate(&desk.ensemble, desk.toy.native_test.records(), &desk.registry).map_err(|e| e.to_string())?;
    let roman = evaluate(&desk.ensemble, desk.roman_test.records(), &desk.registry).map_err(|e| e.to_string())?;
    let total = desk.build_time + start.elapsed();
    check(
        native.accuracy() >= NATIVE_MIN_ACC && roman.accuracy() >= ROMAN_MIN_ACC && total < DESK_BUDGET,
        format!(
            "8 toy languages / 4 scripts: native acc {:.4} (>= {NATIVE_MIN_ACC}), roman acc {:.4} (>= {ROMAN_MIN_ACC}), {:.1}s (budget {}s)",
            native.accuracy(),
            roman.accuracy(),
            total.as_secs_f64(),
            DESK_BUDGET.as_secs()
        ),
    )
}

// 4. Routing invariants.

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Latin,
    Native,
    /// A letter or mark that belongs to no specific script.
    Shared,
    Neutral,
}

const POOL: &[(char, Kind)] = &[
    ('a', Kind::Latin),
    ('k', Kind::Latin),
    ('Z', Kind::Latin),
    ('é', Kind::Latin),
    ('ñ', Kind::Latin),
    ('क', Kind::Native),
    ('म', Kind::Native),
    ('ि', Kind::Native),
    ('ক', Kind::Native),
    ('த', Kind::Native),
    ('ا', Kind::Native),
    ('\u{0301}', Kind::Shared),
    ('1', Kind::Neutral),
    ('!', Kind::Neutral),
    (' ', Kind::Neutral),
    ('-', Kind::Neutral),
    ('।', Kind::Neutral),
];

fn criterion_routing(desk: &Desk) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut strings = Vec::with_capacity(ROUTING_STRINGS);
    for _ in 0..ROUTING_STRINGS {
        let len = rng.random_range(0..24);
        let chars: Vec<(char, Kind)> = (0..len).map(|_| POOL[rng.random_range(0..POOL.len())]).collect();
        strings.push(chars);
    }
    let mut oracle_mismatch = 0;
    let mut permutation_mismatch = 0;
    for chars in &strings {
        let text: String = chars.iter().map(|(c, _)| c).collect();
        let latin = chars.iter().filter(|(_, k)| *k == Kind::Latin).count();
        let letters = chars.iter().filter(|(_, k)| *k != Kind::Neutral).count();
        let expected = if 2 * latin > letters { Route::RomanPath } else { Route::NativePath };
        let got = route(&text);
        oracle_mismatch += usize::from(got != expected);
        let mut shuffled = chars.clone();
        shuffled.shuffle(&mut rng);
        let text2: String = shuffled.iter().map(|(c, _)| c).collect();
        permutation_mismatch += usize::from(route(&text2) != got);
    }
    let boundary_ok = route("abक म") == Route::NativePath
        && route("abcक म") == Route::RomanPath
        && route("ab") == Route::RomanPath
        && route("") == Route::NativePath;

    let texts: Vec<String> = strings.iter().map(|c| c.iter().map(|(c, _)| c).collect()).collect();
    let preds = desk.ensemble.identify_batch(&texts);
    let mut native_routed = 0;
    let mut wrong_stage = 0;
    for (t, p) in texts.iter().zip(&preds) {
        if route(t) == Route::NativePath {
            native_routed += 1;
            match p {
                Ok(p) if p.stage == Stage::NativeLinear && !p.degraded => {}
                _ => wrong_stage += 1,
            }
        }
    }
    check(
        oracle_mismatch == 0 && permutation_mismatch == 0 && boundary_ok && wrong_stage == 0,
        format!(
            "{ROUTING_STRINGS} strings: ratio-oracle mismatches {oracle_mismatch}, permutation mismatches {permutation_mismatch}, \
             0.5 boundary strict: {boundary_ok}, native-path items {native_routed} with non-NativeLinear stage {wrong_stage}"
        ),
    )
}

// 5. Threshold trend.

/// Roman test split with per-item edit rates cycling through 0.0, 0.1, ..., 1.0.
fn sweep_set(desk: &Desk) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    desk.roman_test
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.clone();
            r.text = perturb(&r.text, (i % 11) as f64 / 10.0, &mut rng);
            r
        })
        .collect()
}

fn criterion_threshold(desk: &Desk) -> Outcome {
    let set = sweep_set(desk);
    let thresholds: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let rows = threshold_sweep(&desk.ensemble, &set, &desk.registry, &thresholds, SWEEP_REPEATS).map_err(|e| e.to_string())?;
    let fraction_ok = rows.windows(2).all(|w| w[1].stage2_fraction >= w[0].stage2_fraction);
    let throughput_ok = rows.windows(2).all(|w| w[1].throughput <= w[0].throughput);
    let ends = threshold_sweep(&desk.ensemble, &set, &desk.registry, &[0.0, 1.0], 1).map_err(|e| e.to_string())?;
    let ends_ok = ends[0].stage2_fraction == 0.0 && ends[1].stage2_fraction == 1.0;
    let trend: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.1}:{:.3}/{:.0}", r.threshold, r.stage2_fraction, r.throughput))
        .collect();
    check(
        fraction_ok && throughput_ok && ends_ok,
        format!(
            "{} roman items, best of {SWEEP_REPEATS}; fraction non-decreasing {fraction_ok}, throughput non-increasing {throughput_ok}, \
             fraction@0 = {}, fraction@1 = {}; threshold:fraction/sent-per-s {}",
            set.len(),
            ends[0].stage2_fraction,
            ends[1].stage2_fraction,
            trend.join(" ")
        ),
    )
}

// 6. Dimension trend.

fn criterion_dims(desk: &Desk) -> Outcome {
    let rows = dim_sweep(
        desk.roman_train.records(),
        desk.roman_test.records(),
        &desk.registry,
        &FeaturizerConfig::default(),
        &stage1_config(),
        &[4, 8, 16],
    )
    .map_err(|e| e.to_string())?;
    let sizes_ok = rows.windows(2).all(|w| w[1].model_size > w[0].model_size);
    let best = rows.iter().map(|r| r.accuracy).fold(f64::MIN, f64::max);
    let acc8 = rows.iter().find(|r| r.dim == 8).map(|r| r.accuracy).unwrap_or(0.0);
    let summary: Vec<String> = rows
        .iter()
        .map(|r| format!("dim {}: {} bytes acc {:.4}", r.dim, r.model_size, r.accuracy))
        .collect();
    check(
        sizes_ok && best - acc8 <= DIM_ACC_SLACK,
        format!(
            "{}; sizes strictly increasing {sizes_ok}, best - acc(8) = {:.4} (<= {DIM_ACC_SLACK})",
            summary.join(", "),
            best - acc8
        ),
    )
}

// 7. Synthetic vs original gap.

fn noisy_test(desk: &Desk) -> SourcedCorpus {
    let noisy = NoisyTransliterator::new(desk.toy.romanizer.clone(), NOISE_RATE, SEED);
    romanize_corpus(&desk.toy.native_test, &noisy).expect("noisy romanization")
}

fn criterion_gap(desk: &Desk) -> Outcome {
    let original = noisy_test(desk);
    let (synthetic, original) = synthetic_gap(
        &desk.ensemble,
        desk.toy.native_test.records(),
        &desk.toy.romanizer,
        original.records(),
        &desk.registry,
    )
    .map_err(|e| e.to_string())?;
    let gap = synthetic.accuracy() - original.accuracy();
    check(
        gap >= MIN_GAP,
        format!(
            "R-romanized acc {:.4}, R'-romanized ({:.0}% edits) acc {:.4}, gap {:.2} points (>= {:.0})",
            synthetic.accuracy(),
            NOISE_RATE * 100.0,
            original.accuracy(),
            gap * 100.0,
            MIN_GAP * 100.0
        ),
    )
}

// 8. Length trend.

fn criterion_length(desk: &Desk) -> Outcome {
    let noisy = noisy_test(desk);
    let buckets = length_bucket_accuracy(&desk.ensemble, noisy.records(), &[10]).map_err(|e| e.to_string())?;
    let (short, long) = (&buckets[0], &buckets[1]);
    match (short.accuracy, long.accuracy) {
        (Some(s), Some(l)) => check(
            s <= l,
            format!(
                "noisy roman test: <10 words acc {s:.4} (n={}), >=10 words acc {l:.4} (n={})",
                short.count, long.count
            ),
        ),
        _ => Err(format!("empty bucket: counts {} / {}", short.count, long.count)),
    }
}

// 9. Flagging procedure.

/// Native model whose gold-class confidence depends only on the word used:
/// `कम` gives 0.99, `मक` gives 0.6, for any repetition count.
fn flagging_model() -> LinearModel {
    let cfg = FeaturizerConfig {
        min_char_ngram: 50,
        max_char_ngram: 50,
        bucket_count: 1,
        ..FeaturizerConfig::default()
    };
    let vocab = WordVocab::from_entries(vec![("कम".to_string(), 1), ("मक".to_string(), 1)]);
    let f = Featurizer::new(cfg, vocab);
    let emb = vec![2.0 * 99f32.ln(), 2.0 * 1.5f32.ln(), 0.0];
    LinearModel::from_parts(f, vec![class("aaa_Deva"), class("bbb_Deva")], 1, emb, vec![1.0, 0.0]).unwrap()
}

fn criterion_flagging() -> Outcome {
    let model = flagging_model();
    // (count, short roman side, low confidence)
    let groups = [(3, true, true), (17, true, false), (12, false, true), (68, false, false)];
    let mut items = Vec::new();
    let mut expected = Vec::new();
    for (count, short, low) in groups {
        for _ in 0..count {
            let id = ExampleId(items.len() as u64);
            let word = if low { "मक" } else { "कम" };
            let roman_words = if short { 4 } else { 5 };
            items.push(ReviewItem {
                id,
                label: class("aaa_Deva"),
                native_text: [word; 6].join(" "),
                roman_text: vec!["kama"; roman_words].join(" "),
            });
            expected.push(match (short, low) {
                (true, true) => Some(FlagReason::Both),
                (true, false) => Some(FlagReason::TooShort),
                (false, true) => Some(FlagReason::LowConfidence),
                (false, false) => None,
            });
        }
    }
    let report = flag_for_review(&items, &model, 5, 0.8);
    let flagged = report.flagged().count();
    let reasons_ok = report.rows.iter().zip(&expected).all(|(r, e)| r.reason == *e);
    let count = |reason| report.rows.iter().filter(|r| r.reason == Some(reason)).count();
    check(
        flagged == 32 && reasons_ok && report.rows.len() == 100,
        format!(
            "100 items (20 short, 15 low-confidence, 3 both): flagged {flagged} (expected 32): TooShort {}, LowConfidence {}, Both {}; all reasons correct {reasons_ok}",
            count(FlagReason::TooShort),
            count(FlagReason::LowConfidence),
            count(FlagReason::Both)
        ),
    )
}

// 10. Serialization.

fn criterion_serialization(desk: &Desk) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("roman.bin");
    desk.roman.save(&path).map_err(|e| e.to_string())?;
    let loaded = LinearModel::load(&path).map_err(|e| e.to_string())?;
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz     'कमকத1!".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut differing = 0;
    for _ in 0..ROUNDTRIP_INPUTS {
        let len = rng.random_range(0..40);
        let text: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        let a = desk.roman.predict(&text, desk.roman.labels().len());
        let b = loaded.predict(&text, loaded.labels().len());
        let same = a.ranked.len() == b.ranked.len()
            && a.ranked.iter().zip(&b.ranked).all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits());
        differing += usize::from(!same);
    }
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    let mut bad_version = bytes.clone();
    bad_version[4] = 99;
    let truncated = &bytes[..bytes.len() - 3];
    let e1 = LinearModel::from_bytes(&bad_magic).err();
    let e2 = LinearModel::from_bytes(&bad_version).err();
    let e3 = LinearModel::from_bytes(truncated).err();
    let errors_ok = matches!(e1, Some(ModelIoError::BadMagic))
        && matches!(e2, Some(ModelIoError::UnsupportedVersion { found: 99 }))
        && matches!(e3, Some(ModelIoError::Truncated));
    check(
        differing == 0 && errors_ok,
        format!(
            "{ROUNDTRIP_INPUTS} random inputs, {differing} non-identical predictions; magic/version/truncation errors: {:?} / {:?} / {:?}",
            e1.map(|e| e.to_string()),
            e2.map(|e| e.to_string()),
            e3.map(|e| e.to_string())
        ),
    )
}

// 11. Remote protocol.

fn criterion_remote(desk: &Desk) -> Outcome {
    let local: Arc<dyn Stage2Classifier> = desk.stage2.clone();
    let server = StubServer::start(0, StubMode::Classifier(Arc::clone(&local)), Arc::clone(&desk.registry))
        .map_err(|e| e.to_string())?;
    let client = RemoteClient::new(RemoteEndpointConfig::new(server.base_url()), Arc::clone(&desk.registry))?;
    let texts: Vec<&str> = desk.roman_test.records().iter().map(|r| r.text.as_str()).collect();
    let mut batch_notes = Vec::new();
    let mut order_ok = true;
    for n in [1usize, 32, 33] {
        let before = server.batch_sizes().len();
        let batch = &texts[..n];
        let remote = client.classify(batch).map_err(|e| e.to_string())?;
        let direct = local.classify(batch).map_err(|e| e.to_string())?;
        let same = remote.len() == n
            && remote.iter().zip(&direct).all(|(r, d)| {
                r.top() == d.top() && (r.top_probability() - d.top_probability()).abs() < 1e-9
            });
        order_ok &= same;
        batch_notes.push(format!("{n} -> {:?}", &server.batch_sizes()[before..]));
    }
    let split_ok = server.batch_sizes().ends_with(&[32, 1]);
    drop(server);

    let mut protocol_errors = Vec::new();
    for mode in [
        StubMode::Malformed,
        StubMode::ExtraPrediction,
        StubMode::UnknownLabel("zzz_Latn".into()),
    ] {
        let stub = StubServer::start(0, mode, Arc::clone(&desk.registry)).map_err(|e| e.to_string())?;
        let c = RemoteClient::new(RemoteEndpointConfig::new(stub.base_url()), Arc::clone(&desk.registry))?;
        protocol_errors.push(matches!(c.classify(&texts[..3]), Err(Stage2Error::Protocol(_))));
    }

    let stall = StubServer::start(0, StubMode::Stall(Duration::from_secs(2)), Arc::clone(&desk.registry))
        .map_err(|e| e.to_string())?;
    let slow = RemoteClient::new(
        RemoteEndpointConfig {
            timeout: Duration::from_millis(200),
            retries: 0,
            ..RemoteEndpointConfig::new(stall.base_url())
        },
        Arc::clone(&desk.registry),
    )?;
    let ens = Ensemble::new(
        &desk.registry,
        Arc::clone(&desk.native),
        Arc::clone(&desk.roman),
        Arc::new(slow),
        1.0,
    )
    .map_err(|e| e.to_string())?;
    let fallback = ens.identify(texts[0]).map_err(|e| e.to_string())?;
    let expected = desk.roman.predict(texts[0], 1).top();
    let degraded_ok = fallback.degraded && fallback.stage == Stage::RomanLinear && fallback.top() == expected;

    check(
        order_ok && split_ok && protocol_errors.iter().all(|&b| b) && degraded_ok,
        format!(
            "batches {} (order/length preserved {order_ok}); malformed/extra/unknown-label -> protocol error {:?}; \
             timeout -> degraded stage-1 fallback {degraded_ok}",
            batch_notes.join(", "),
            protocol_errors
        ),
    )
}

// 12. Determinism of cmd_train.

fn criterion_determinism(desk: &Desk) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("roman_train.txt");
    desk.roman_train
        .write_labeled(std::fs::File::create(&corpus).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("model{run}.bin"));
        let status = Command::new(env!("CARGO_BIN_EXE_lidkit"))
            .args(["--threads", "1", "train", "--dim", "8", "--seed", "7", "--corpus"])
            .arg(&corpus)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("train failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        files.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    check(
        files[0] == files[1],
        format!(
            "two `lidkit --threads 1 train --seed 7` runs: {} and {} bytes, byte-identical {}",
            files[0].len(),
            files[1].len(),
            files[0] == files[1]
        ),
    )
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("[{tag}] {id:>2} {name}: {detail} [{secs:.1}s]");
    ok
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    println!("acceptance suite (seed {SEED})");
    let mut results = vec![
        run(1, "metric oracle equivalence", criterion_metric_oracle),
        run(2, "gradient check", criterion_gradient),
    ];
    let desk = build_desk();
    println!("desk corpus and models built in {:.1}s", desk.build_time.as_secs_f64());
    results.push(run(3, "desk-scale end to end", || criterion_desk(&desk)));
    results.push(run(4, "routing invariants", || criterion_routing(&desk)));
    results.push(run(5, "threshold trend", || criterion_threshold(&desk)));
    results.push(run(6, "dimension trend", || criterion_dims(&desk)));
    results.push(run(7, "synthetic vs original gap", || criterion_gap(&desk)));
    results.push(run(8, "length trend", || criterion_length(&desk)));
    results.push(run(9, "flagging procedure", criterion_flagging));
    results.push(run(10, "serialization", || criterion_serialization(&desk)));
    results.push(run(11, "remote protocol", || criterion_remote(&desk)));
    results.push(run(12, "training determinism", || criterion_determinism(&desk)));
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
