//! Classification metrics, confusion matrices, throughput and the sweep
//! drivers (threshold, dimension, input length, synthetic vs original).

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::data::{romanize_corpus, DataError, SourcedCorpus, Transliterator};
use crate::ensemble::{invoked_stage2, Ensemble, EnsembleError};
use crate::features::FeaturizerConfig;
use crate::label::{LabeledExample, LanguageClass, Prediction, Registry};
use crate::linear::{train, LinearModel, TrainConfig, TrainError};
use crate::script::{route, Route};
use crate::stage2::Stage2Classifier;

/// Items predicted before the timed loop.
pub const WARMUP_ITEMS: usize = 256;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestset,
    #[error("label {0} is not in the registry")]
    UnknownLabel(LanguageClass),
    #[error("classifier failed: {0}")]
    Classifier(#[from] EnsembleError),
    #[error("stage-2 classifier failed: {0}")]
    Stage2(#[from] crate::stage2::Stage2Error),
    #[error("{got} predictions for {expected} inputs")]
    LengthMismatch { expected: usize, got: usize },
    #[error("bucket edges must be strictly increasing and positive")]
    InvalidEdges,
    #[error("parallel test sets do not match: {0}")]
    Unpaired(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Anything that maps texts to predictions, in order.
pub trait Identifier: Sync {
    fn identifier_name(&self) -> String;

    fn identify_all(&self, texts: &[&str]) -> Result<Vec<Prediction>, EvalError>;
}

impl Identifier for LinearModel {
    fn identifier_name(&self) -> String {
        format!("linear(dim={})", self.dim())
    }

    fn identify_all(&self, texts: &[&str]) -> Result<Vec<Prediction>, EvalError> {
        Ok(texts.iter().map(|t| self.predict(t, 1)).collect())
    }
}

impl Identifier for Ensemble {
    fn identifier_name(&self) -> String {
        format!("ensemble(threshold={})", self.threshold())
    }

    fn identify_all(&self, texts: &[&str]) -> Result<Vec<Prediction>, EvalError> {
        self.identify_batch_serial(texts)
            .into_iter()
            .map(|r| r.map_err(EvalError::from))
            .collect()
    }
}

impl Identifier for dyn Stage2Classifier + '_ {
    fn identifier_name(&self) -> String {
        self.name().to_string()
    }

    fn identify_all(&self, texts: &[&str]) -> Result<Vec<Prediction>, EvalError> {
        Ok(self.classify(texts)?)
    }
}

/// Rows are gold classes, columns predicted classes, both in registry order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<LanguageClass>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<LanguageClass>) -> Self {
        let k = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![0; k * k],
        }
    }

    /// `counts` is row-major `K x K`.
    pub fn from_counts(classes: Vec<LanguageClass>, counts: Vec<u64>) -> Option<Self> {
        (counts.len() == classes.len() * classes.len()).then_some(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> &[LanguageClass] {
        &self.classes
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold * self.k() + predicted]
    }

    pub fn add(&mut self, gold: &LanguageClass, predicted: &LanguageClass) -> Result<(), EvalError> {
        let g = self.index(gold)?;
        let p = self.index(predicted)?;
        let k = self.k();
        self.counts[g * k + p] += 1;
        Ok(())
    }

    fn index(&self, class: &LanguageClass) -> Result<usize, EvalError> {
        self.classes
            .iter()
            .position(|c| c == class)
            .ok_or(EvalError::UnknownLabel(*class))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, gold: usize) -> u64 {
        (0..self.k()).map(|p| self.get(gold, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.k()).map(|g| self.get(g, predicted)).sum()
    }

    /// Header `gold,<tags...>`, then one row per gold class.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["gold".to_string()];
        header.extend(self.classes.iter().map(LanguageClass::tag));
        out.write_record(&header)?;
        for (g, class) in self.classes.iter().enumerate() {
            let mut row = vec![class.tag()];
            row.extend((0..self.k()).map(|p| self.get(g, p).to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl Serialize for ConfusionMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            classes: &'a [LanguageClass],
            counts: Vec<&'a [u64]>,
        }
        let k = self.k().max(1);
        Wire {
            classes: &self.classes,
            counts: self.counts.chunks(k).collect(),
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Averaging {
    #[default]
    Macro,
    /// Weighted by gold support.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: LanguageClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub averaging: Averaging,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class metrics for every class that occurs as gold or prediction;
/// averages run over classes present in the gold labels only.
pub fn metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Metrics {
    let mut per_class = Vec::new();
    for i in 0..cm.k() {
        let tp = cm.get(i, i);
        let support = cm.row_sum(i);
        let predicted = cm.col_sum(i);
        if support == 0 && predicted == 0 {
            continue;
        }
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        per_class.push(ClassMetrics {
            class: cm.classes[i],
            precision,
            recall,
            f1: harmonic(precision, recall),
            support,
        });
    }
    let gold: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let weights: Vec<f64> = match averaging {
        Averaging::Macro => vec![1.0; gold.len()],
        Averaging::Weighted => gold.iter().map(|m| m.support as f64).collect(),
    };
    let total_weight: f64 = weights.iter().sum();
    let avg = |f: fn(&ClassMetrics) -> f64| {
        if total_weight == 0.0 {
            0.0
        } else {
            gold.iter().zip(&weights).map(|(m, w)| f(m) * w).sum::<f64>() / total_weight
        }
    };
    Metrics {
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        accuracy: ratio(cm.trace(), cm.total()),
        averaging,
        per_class,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub classifier: String,
    pub examples: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub wall_time_secs: f64,
    /// Sentences per second over the timed prediction loop.
    pub throughput: f64,
    /// Share of roman-routed inputs that went to stage 2.
    pub stage2_fraction: f64,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.metrics.accuracy
    }

    /// Equal apart from timing fields.
    pub fn same_scores(&self, other: &EvalReport) -> bool {
        self.examples == other.examples
            && self.metrics == other.metrics
            && self.confusion == other.confusion
            && self.stage2_fraction == other.stage2_fraction
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} on {} examples", self.classifier, self.examples)?;
        writeln!(f, "{:<12} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support")?;
        for m in &self.metrics.per_class {
            writeln!(
                f,
                "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                m.class.tag(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            )?;
        }
        let avg = match self.metrics.averaging {
            Averaging::Macro => "macro",
            Averaging::Weighted => "weighted",
        };
        writeln!(
            f,
            "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            avg, self.metrics.precision, self.metrics.recall, self.metrics.f1, self.examples
        )?;
        writeln!(f, "accuracy     {:.4}", self.metrics.accuracy)?;
        writeln!(f, "throughput   {:.1} sentences/s", self.throughput)?;
        write!(f, "stage-2 use  {:.4}", self.stage2_fraction)
    }
}

fn texts(testset: &[LabeledExample]) -> Vec<&str> {
    testset.iter().map(|r| r.text.as_str()).collect()
}

fn timed_predictions(
    identifier: &(impl Identifier + ?Sized),
    texts: &[&str],
) -> Result<(Vec<Prediction>, Duration), EvalError> {
    identifier.identify_all(&texts[..texts.len().min(WARMUP_ITEMS)])?;
    let start = Instant::now();
    let preds = identifier.identify_all(texts)?;
    let elapsed = start.elapsed();
    if preds.len() != texts.len() {
        return Err(EvalError::LengthMismatch {
            expected: texts.len(),
            got: preds.len(),
        });
    }
    Ok((preds, elapsed))
}

fn report_from(
    name: String,
    testset: &[LabeledExample],
    preds: &[Prediction],
    elapsed: Duration,
    registry: &Registry,
    averaging: Averaging,
) -> Result<EvalReport, EvalError> {
    let mut cm = ConfusionMatrix::new(registry.classes().to_vec());
    let mut roman = 0usize;
    let mut escalated = 0usize;
    for (r, p) in testset.iter().zip(preds) {
        cm.add(&r.label, &p.top())?;
        if route(&r.text) == Route::RomanPath {
            roman += 1;
            escalated += usize::from(invoked_stage2(p));
        }
    }
    let secs = elapsed.as_secs_f64();
    Ok(EvalReport {
        classifier: name,
        examples: testset.len(),
        metrics: metrics(&cm, averaging),
        confusion: cm,
        wall_time_secs: secs,
        throughput: testset.len() as f64 / secs.max(1e-9),
        stage2_fraction: ratio(escalated as u64, roman as u64),
    })
}

fn check_testset(testset: &[LabeledExample], registry: &Registry) -> Result<(), EvalError> {
    if testset.is_empty() {
        return Err(EvalError::EmptyTestset);
    }
    match testset.iter().find(|r| !registry.contains(&r.label)) {
        Some(r) => Err(EvalError::UnknownLabel(r.label)),
        None => Ok(()),
    }
}

/// Scores `identifier` on `testset`. The timed loop runs on the calling
/// thread after a short warmup.
pub fn evaluate(
    identifier: &(impl Identifier + ?Sized),
    testset: &[LabeledExample],
    registry: &Registry,
) -> Result<EvalReport, EvalError> {
    evaluate_with(identifier, testset, registry, Averaging::Macro)
}

pub fn evaluate_with(
    identifier: &(impl Identifier + ?Sized),
    testset: &[LabeledExample],
    registry: &Registry,
    averaging: Averaging,
) -> Result<EvalReport, EvalError> {
    check_testset(testset, registry)?;
    let (preds, elapsed) = timed_predictions(identifier, &texts(testset))?;
    report_from(identifier.identifier_name(), testset, &preds, elapsed, registry, averaging)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthBucket {
    pub min_words: usize,
    /// Exclusive; `None` is unbounded.
    pub max_words: Option<usize>,
    pub count: usize,
    pub correct: usize,
    /// `None` for an empty bucket.
    pub accuracy: Option<f64>,
}

/// Accuracy by whitespace word count in buckets `[0,e1), [e1,e2), ..., [e_last, inf)`.
pub fn length_bucket_accuracy(
    identifier: &(impl Identifier + ?Sized),
    testset: &[LabeledExample],
    edges: &[usize],
) -> Result<Vec<LengthBucket>, EvalError> {
    if edges.first() == Some(&0) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidEdges);
    }
    let preds = identifier.identify_all(&texts(testset))?;
    let mut buckets: Vec<LengthBucket> = std::iter::once(0)
        .chain(edges.iter().copied())
        .zip(edges.iter().map(|&e| Some(e)).chain(std::iter::once(None)))
        .map(|(min_words, max_words)| LengthBucket {
            min_words,
            max_words,
            count: 0,
            correct: 0,
            accuracy: None,
        })
        .collect();
    for (r, p) in testset.iter().zip(&preds) {
        let words = r.text.split_whitespace().count();
        let b = edges.partition_point(|&e| e <= words);
        buckets[b].count += 1;
        buckets[b].correct += usize::from(p.top() == r.label);
    }
    for b in &mut buckets {
        b.accuracy = (b.count > 0).then(|| b.correct as f64 / b.count as f64);
    }
    Ok(buckets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub throughput: f64,
    pub stage2_fraction: f64,
}

/// Evaluates the ensemble at each threshold. With `repeats > 1` the whole
/// sweep is run that many times, interleaved, and the best throughput per
/// threshold is kept.
pub fn threshold_sweep(
    ensemble: &Ensemble,
    testset: &[LabeledExample],
    registry: &Registry,
    thresholds: &[f64],
    repeats: usize,
) -> Result<Vec<ThresholdRow>, EvalError> {
    check_testset(testset, registry)?;
    let variants: Vec<Ensemble> = thresholds
        .iter()
        .map(|&t| ensemble.with_threshold(t))
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<Option<ThresholdRow>> = vec![None; thresholds.len()];
    for _ in 0..repeats.max(1) {
        for (slot, variant) in rows.iter_mut().zip(&variants) {
            let report = evaluate(variant, testset, registry)?;
            let best = slot.as_ref().map_or(0.0, |r| r.throughput);
            *slot = Some(ThresholdRow {
                threshold: variant.threshold(),
                precision: report.metrics.precision,
                recall: report.metrics.recall,
                f1: report.metrics.f1,
                accuracy: report.metrics.accuracy,
                throughput: report.throughput.max(best),
                stage2_fraction: report.stage2_fraction,
            });
        }
    }
    Ok(rows.into_iter().map(|r| r.expect("every threshold evaluated")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimRow {
    pub dim: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub throughput: f64,
    pub model_size: u64,
}

/// Trains one stage-1 model per dimension with the same seed and scores it.
pub fn dim_sweep(
    corpus: &[LabeledExample],
    testset: &[LabeledExample],
    registry: &Registry,
    featurizer: &FeaturizerConfig,
    base: &TrainConfig,
    dims: &[usize],
) -> Result<Vec<DimRow>, EvalError> {
    check_testset(testset, registry)?;
    let mut rows = Vec::with_capacity(dims.len());
    for &dim in dims {
        let config = TrainConfig { dim, ..*base };
        let (model, _) = train(corpus, registry, *featurizer, &config)?;
        let report = evaluate(&model, testset, registry)?;
        rows.push(DimRow {
            dim,
            precision: report.metrics.precision,
            recall: report.metrics.recall,
            f1: report.metrics.f1,
            accuracy: report.metrics.accuracy,
            throughput: report.throughput,
            model_size: model.size_bytes(),
        });
    }
    Ok(rows)
}

/// Romanizes `native_test` with `transliterator` and scores the result and
/// `original_roman` side by side. Each original record must trace back
/// (through `parent`, or its own id) to exactly one native record.
pub fn synthetic_gap(
    identifier: &(impl Identifier + ?Sized),
    native_test: &[LabeledExample],
    transliterator: &dyn Transliterator,
    original_roman: &[LabeledExample],
    registry: &Registry,
) -> Result<(EvalReport, EvalReport), EvalError> {
    let native_ids: HashSet<_> = native_test.iter().map(|r| r.id).collect();
    if native_ids.len() != native_test.len() {
        return Err(EvalError::Unpaired("duplicate id in native set".into()));
    }
    let mut seen = HashSet::new();
    for r in original_roman {
        let origin = r.origin();
        if !native_ids.contains(&origin) {
            return Err(EvalError::Unpaired(format!("{origin} has no native counterpart")));
        }
        if !seen.insert(origin) {
            return Err(EvalError::Unpaired(format!("{origin} appears twice in the original set")));
        }
    }
    if seen.len() != native_ids.len() {
        return Err(EvalError::Unpaired(format!(
            "{} native records, {} original",
            native_ids.len(),
            seen.len()
        )));
    }
    let synthetic = romanize_corpus(&SourcedCorpus::from_records(native_test.to_vec()), transliterator)?;
    let synthetic_report = evaluate(identifier, synthetic.records(), registry)?;
    let original_report = evaluate(identifier, original_roman, registry)?;
    Ok((synthetic_report, original_report))
}

/// Any serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
