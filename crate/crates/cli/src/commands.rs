use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::json;

use lidkit::data::{
    balance_sample, dedup_against, flag_for_review, ingest, read_labeled, read_review_items, romanize_corpus,
    DeterministicRomanizer, IngestSpec, NoisyTransliterator, SourcedCorpus, Transliterator,
};
use lidkit::ensemble::Ensemble;
use lidkit::eval::{
    dim_sweep, evaluate, evaluate_with, length_bucket_accuracy, threshold_sweep, write_csv, Averaging, EvalReport,
};
use lidkit::features::FeaturizerConfig;
use lidkit::label::{parse_tag, LabeledExample, LanguageClass, Registry};
use lidkit::linear::{train, LinearModel, TrainConfig};
use lidkit::script::{route, Route};
use lidkit::stage2::{LocalReference, RemoteClient, Stage2Classifier, StubMode, StubServer};
use lidkit::synth::{generate, ToyConfig};

use crate::config::{FeaturizerOverrides, PipelineConfig, Stage2Spec};
use crate::error::CliError;
use crate::{
    BenchArgs, Command, Component, EvalArgs, FeaturizerArgs, FlagArgs, GenToyArgs, IdentifyArgs, PipelineArgs,
    Result, RomanizeArgs, SampleArgs, StubServerArgs, SweepDimArgs, SweepThresholdArgs, TrainArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::SweepThreshold(a) => cmd_sweep_threshold(a),
        Command::SweepDim(a) => cmd_sweep_dim(a),
        Command::Flag(a) => cmd_flag(a),
        Command::Romanize(a) => cmd_romanize(a),
        Command::Sample(a) => cmd_sample(a),
        Command::StubServer(a) => cmd_stub_server(a),
        Command::GenToy(a) => cmd_gen_toy(a),
    }
}

fn announce_seed(seed: u64) {
    eprintln!("seed: {seed}");
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn source_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_corpora(paths: &[PathBuf], config: &FeaturizerConfig) -> Result<SourcedCorpus> {
    let specs: Vec<IngestSpec> = paths
        .iter()
        .map(|p| IngestSpec {
            path: p.clone(),
            source: source_name(p),
            label: None,
        })
        .collect();
    let (corpus, stats) = ingest(&specs, config)?;
    if stats.invalid_utf8 > 0 {
        eprintln!("skipped {} lines that are not valid UTF-8", stats.invalid_utf8);
    }
    Ok(corpus)
}

fn read_test(path: &Path) -> Result<Vec<LabeledExample>> {
    Ok(read_labeled(path, &source_name(path), &FeaturizerConfig::default())?.into_records())
}

fn load_model(path: &Path) -> Result<LinearModel> {
    LinearModel::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn featurizer_overrides(args: &FeaturizerArgs) -> FeaturizerOverrides {
    FeaturizerOverrides {
        min_char_ngram: args.min_char_ngram,
        max_char_ngram: args.max_char_ngram,
        word_ngrams: args.word_ngrams,
        bucket_count: args.bucket_count,
        word_vocab_limit: args.word_vocab_limit,
        lowercase_roman: None,
    }
}

fn optional_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(CliError::Usage),
        None => Ok(PipelineConfig::default()),
    }
}

fn registry_for(path: Option<&PathBuf>, corpus: &SourcedCorpus) -> Result<Registry> {
    match path {
        Some(p) => Ok(Registry::load(p)?),
        None => {
            let classes: BTreeSet<LanguageClass> = corpus.records().iter().map(|r| r.label).collect();
            Ok(Registry::from_classes(classes)?)
        }
    }
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = optional_config(self.config.as_ref())?;
        if let Some(p) = &self.registry {
            cfg.registry = Some(p.clone());
        }
        if let Some(p) = &self.native_model {
            cfg.native_model = Some(p.clone());
        }
        if let Some(p) = &self.roman_model {
            cfg.roman_model = Some(p.clone());
        }
        if let Some(s) = &self.stage2 {
            cfg.stage2 = Some(Stage2Spec::parse(s, Path::new("")).map_err(CliError::Usage)?);
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate().map_err(CliError::Usage)?;
        announce_seed(cfg.seed);
        Ok(cfg)
    }
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("no {key}: set `{key}` in the config or pass --{}", key.replace('_', "-"))))
}

fn pipeline_registry(cfg: &PipelineConfig) -> Result<Arc<Registry>> {
    Ok(Arc::new(Registry::load(required(&cfg.registry, "registry")?)?))
}

fn pipeline_stage2(cfg: &PipelineConfig, registry: &Arc<Registry>) -> Result<Arc<dyn Stage2Classifier>> {
    match &cfg.stage2 {
        Some(Stage2Spec::Local(path)) => Ok(Arc::new(LocalReference::new(load_model(path)?))),
        Some(Stage2Spec::Remote(url)) => Ok(Arc::new(
            RemoteClient::new(cfg.remote_endpoint(url), Arc::clone(registry)).map_err(CliError::Usage)?,
        )),
        None => Err(CliError::Usage(
            "no stage2: set `stage2` in the config or pass --stage2".into(),
        )),
    }
}

fn pipeline_ensemble(cfg: &PipelineConfig, registry: &Arc<Registry>) -> Result<Ensemble> {
    let native = load_model(required(&cfg.native_model, "native_model")?)?;
    let roman = load_model(required(&cfg.roman_model, "roman_model")?)?;
    let stage2 = pipeline_stage2(cfg, registry)?;
    Ok(Ensemble::new(registry, Arc::new(native), Arc::new(roman), stage2, cfg.threshold)?)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let file_cfg = optional_config(a.config.as_ref())?;
    let seed = a.seed.unwrap_or(file_cfg.seed);
    announce_seed(seed);
    let (base_featurizer, base_train) = if a.wide {
        (FeaturizerConfig::wide(), TrainConfig::wide())
    } else {
        (FeaturizerConfig::default(), TrainConfig::default())
    };
    let featurizer = file_cfg
        .featurizer
        .merge(&featurizer_overrides(&a.featurizer))
        .apply(base_featurizer);
    featurizer.validate().map_err(CliError::Usage)?;
    let config = TrainConfig {
        dim: a.dim.unwrap_or(base_train.dim),
        epochs: a.epochs.unwrap_or(base_train.epochs),
        initial_lr: a.lr.unwrap_or(base_train.initial_lr),
        seed,
        min_word_count: a.min_count.unwrap_or(base_train.min_word_count),
    };
    config.validate().map_err(CliError::Usage)?;

    let corpus = read_corpora(&a.corpus, &featurizer)?;
    let registry = registry_for(a.registry.as_ref().or(file_cfg.registry.as_ref()), &corpus)?;
    let (model, log) = train(corpus.records(), &registry, featurizer, &config)?;
    for (epoch, loss) in log.epoch_loss.iter().enumerate() {
        eprintln!("epoch {} loss {loss:.6}", epoch + 1);
    }
    model.save(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    println!(
        "wrote {} ({} bytes, dim {}, {} classes, {} examples)",
        a.out.display(),
        model.size_bytes(),
        model.dim(),
        model.labels().len(),
        log.examples
    );
    if let Some(path) = &a.log {
        let doc = json!({
            "seed": seed,
            "dim": config.dim,
            "epochs": config.epochs,
            "initial_lr": config.initial_lr,
            "examples": log.examples,
            "skipped_empty": log.skipped_empty,
            "epoch_loss": log.epoch_loss,
            "labels": model.labels(),
        });
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Data(e.to_string()))?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_identify(a: IdentifyArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let registry = pipeline_registry(&cfg)?;
    let ensemble = pipeline_ensemble(&cfg, &registry)?;
    let reader: Box<dyn BufRead> = match &a.input {
        Some(p) => Box::new(BufReader::new(
            File::open(p).map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?,
        )),
        None => Box::new(BufReader::new(std::io::stdin())),
    };
    let lines: Vec<String> = reader
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| CliError::Data(format!("cannot read input: {e}")))?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for chunk in lines.chunks(4096) {
        for result in ensemble.identify_batch(chunk) {
            let p = result?;
            if a.json {
                let top: Vec<_> = p
                    .ranked
                    .iter()
                    .take(a.top_k.max(1))
                    .map(|(c, prob)| json!({"label": c, "prob": prob}))
                    .collect();
                let doc = json!({
                    "label": p.top(),
                    "prob": p.top_probability(),
                    "stage": p.stage.name(),
                    "degraded": p.degraded,
                    "top_k": top,
                });
                writeln!(out, "{doc}")?;
            } else {
                writeln!(out, "{}\t{:.6}\t{}", p.top(), p.top_probability(), p.stage)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn write_report_files(report: &EvalReport, json_path: Option<&PathBuf>, confusion: Option<&PathBuf>) -> Result<()> {
    if let Some(path) = json_path {
        let mut w = create(path)?;
        w.write_all(report.to_json().as_bytes())?;
        w.flush()?;
    }
    if let Some(path) = confusion {
        report.confusion.write_csv(create(path)?)?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let registry = pipeline_registry(&cfg)?;
    let test = read_test(&a.test)?;
    let averaging = if a.weighted { Averaging::Weighted } else { Averaging::Macro };
    let (report, lengths) = match a.component {
        Component::Ensemble => {
            let e = pipeline_ensemble(&cfg, &registry)?;
            let lengths = a.lengths.as_ref().map(|_| length_bucket_accuracy(&e, &test, &a.length_edges)).transpose()?;
            (evaluate_with(&e, &test, &registry, averaging)?, lengths)
        }
        Component::Native | Component::Roman => {
            let key = if a.component == Component::Native { &cfg.native_model } else { &cfg.roman_model };
            let name = if a.component == Component::Native { "native_model" } else { "roman_model" };
            let m = load_model(required(key, name)?)?;
            let lengths = a.lengths.as_ref().map(|_| length_bucket_accuracy(&m, &test, &a.length_edges)).transpose()?;
            (evaluate_with(&m, &test, &registry, averaging)?, lengths)
        }
        Component::Stage2 => {
            let s = pipeline_stage2(&cfg, &registry)?;
            let lengths = a
                .lengths
                .as_ref()
                .map(|_| length_bucket_accuracy(s.as_ref(), &test, &a.length_edges))
                .transpose()?;
            (evaluate_with(s.as_ref(), &test, &registry, averaging)?, lengths)
        }
    };
    println!("{report}");
    write_report_files(&report, a.report.as_ref(), a.confusion.as_ref())?;
    if let (Some(path), Some(rows)) = (&a.lengths, lengths) {
        write_csv(&rows, create(path)?)?;
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let cfg = a.pipeline.resolve()?;
    let registry = pipeline_registry(&cfg)?;
    let test = read_test(&a.test)?;
    let ensemble = pipeline_ensemble(&cfg, &registry)?;
    let (native_items, roman_items): (Vec<LabeledExample>, Vec<LabeledExample>) =
        test.iter().cloned().partition(|r| route(&r.text) == Route::NativePath);

    #[derive(serde::Serialize)]
    struct Row {
        component: String,
        examples: usize,
        accuracy: f64,
        macro_f1: f64,
        throughput: f64,
    }
    let row = |component: &str, r: EvalReport| Row {
        component: component.to_string(),
        examples: r.examples,
        accuracy: r.metrics.accuracy,
        macro_f1: r.metrics.f1,
        throughput: r.throughput,
    };
    let mut rows = Vec::new();
    if !native_items.is_empty() {
        rows.push(row("native", evaluate(ensemble.native_model(), &native_items, &registry)?));
    }
    if !roman_items.is_empty() {
        rows.push(row("roman", evaluate(ensemble.roman_model(), &roman_items, &registry)?));
        rows.push(row("stage2", evaluate(ensemble.stage2(), &roman_items, &registry)?));
    }
    rows.push(row("ensemble", evaluate(&ensemble, &test, &registry)?));
    println!("{:<10} {:>8} {:>9} {:>9} {:>14}", "component", "examples", "accuracy", "macro_f1", "sentences/s");
    for r in &rows {
        println!(
            "{:<10} {:>8} {:>9.4} {:>9.4} {:>14.1}",
            r.component, r.examples, r.accuracy, r.macro_f1, r.throughput
        );
    }
    if let Some(path) = &a.out {
        write_csv(&rows, create(path)?)?;
    }
    Ok(())
}

/// `from, from + step, ...` up to `to` inclusive, rounded to 1e-9.
fn threshold_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if step <= 0.0 || from > to || from < 0.0 || to > 1.0 {
        return Err(CliError::Usage(format!(
            "need 0 <= from <= to <= 1 and step > 0 (got {from}, {to}, {step})"
        )));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

fn cmd_sweep_threshold(a: SweepThresholdArgs) -> Result<()> {
    let thresholds = threshold_grid(a.from, a.to, a.step)?;
    let cfg = a.pipeline.resolve()?;
    let registry = pipeline_registry(&cfg)?;
    let ensemble = pipeline_ensemble(&cfg, &registry)?;
    let test = read_test(&a.test)?;
    let rows = threshold_sweep(&ensemble, &test, &registry, &thresholds, a.repeats)?;
    println!("{:>9} {:>8} {:>8} {:>14} {:>8}", "threshold", "accuracy", "f1", "sentences/s", "stage2");
    for r in &rows {
        println!(
            "{:>9.2} {:>8.4} {:>8.4} {:>14.1} {:>8.4}",
            r.threshold, r.accuracy, r.f1, r.throughput, r.stage2_fraction
        );
    }
    write_csv(&rows, create(&a.out)?)?;
    Ok(())
}

fn cmd_sweep_dim(a: SweepDimArgs) -> Result<()> {
    let file_cfg = optional_config(a.config.as_ref())?;
    let seed = a.seed.unwrap_or(file_cfg.seed);
    announce_seed(seed);
    if a.dims.contains(&0) {
        return Err(CliError::Usage("dims must be >= 1".into()));
    }
    let featurizer = file_cfg
        .featurizer
        .merge(&featurizer_overrides(&a.featurizer))
        .apply(FeaturizerConfig::default());
    let base = TrainConfig {
        epochs: a.epochs.unwrap_or(TrainConfig::default().epochs),
        initial_lr: a.lr.unwrap_or(TrainConfig::default().initial_lr),
        seed,
        ..TrainConfig::default()
    };
    let corpus = read_corpora(&a.corpus, &featurizer)?;
    let registry = registry_for(a.registry.as_ref().or(file_cfg.registry.as_ref()), &corpus)?;
    let test = read_test(&a.test)?;
    let rows = dim_sweep(corpus.records(), &test, &registry, &featurizer, &base, &a.dims)?;
    println!("{:>5} {:>8} {:>8} {:>14} {:>12}", "dim", "accuracy", "f1", "sentences/s", "bytes");
    for r in &rows {
        println!(
            "{:>5} {:>8.4} {:>8.4} {:>14.1} {:>12}",
            r.dim, r.accuracy, r.f1, r.throughput, r.model_size
        );
    }
    write_csv(&rows, create(&a.out)?)?;
    Ok(())
}

fn cmd_flag(a: FlagArgs) -> Result<()> {
    announce_seed(a.seed.unwrap_or(0));
    let model = load_model(&a.model)?;
    let items = read_review_items(&a.input)?;
    let report = flag_for_review(&items, &model, a.min_words, a.min_conf);
    report.write_tsv(create(&a.out)?)?;
    println!(
        "flagged {} of {} ({:.2}%)",
        report.flagged().count(),
        report.rows.len(),
        100.0 * report.flagged_fraction()
    );
    Ok(())
}

fn load_table(path: &Path) -> Result<DeterministicRomanizer> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    DeterministicRomanizer::parse(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_romanize(a: RomanizeArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(0);
    announce_seed(seed);
    if !(0.0..=1.0).contains(&a.noise) {
        return Err(CliError::Usage(format!("noise {} is outside [0, 1]", a.noise)));
    }
    let table = load_table(&a.table)?;
    let xlit: Box<dyn Transliterator> = if a.noise > 0.0 {
        Box::new(NoisyTransliterator::new(table, a.noise, seed))
    } else {
        Box::new(table)
    };
    let native = read_labeled(&a.input, &source_name(&a.input), &FeaturizerConfig::default())?;
    let roman = romanize_corpus(&native, xlit.as_ref())?;
    roman.write_labeled(create(&a.out)?)?;
    if let Some(path) = &a.pairs {
        let mut w = create(path)?;
        for (n, r) in native.records().iter().zip(roman.records()) {
            writeln!(w, "__label__{}\t{}\t{}", n.label, n.text, r.text)?;
        }
        w.flush()?;
    }
    println!("romanized {} records into {}", roman.len(), a.out.display());
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(0);
    announce_seed(seed);
    let config = FeaturizerConfig::default();
    let corpus = read_corpora(&a.input, &config)?;
    let heldout: Vec<SourcedCorpus> = a
        .heldout
        .iter()
        .map(|p| read_labeled(p, &source_name(p), &config))
        .collect::<std::result::Result<_, _>>()?;
    let (corpus, removed) = dedup_against(&corpus, &heldout.iter().collect::<Vec<_>>(), &config);
    let classes: Vec<LanguageClass> = if !a.classes.is_empty() {
        a.classes
            .iter()
            .map(|t| parse_tag(t).map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_>>()?
    } else if let Some(path) = &a.registry {
        let present = corpus.class_counts();
        Registry::load(path)?
            .classes()
            .iter()
            .filter(|c| present.contains_key(c))
            .copied()
            .collect()
    } else {
        corpus.classes()
    };
    if a.target == 0 {
        return Err(CliError::Usage("--target must be >= 1".into()));
    }
    let sampled = balance_sample(&corpus, &classes, a.target, seed)?;
    sampled.write_labeled(create(&a.out)?)?;
    println!(
        "removed {removed} held-out duplicates; wrote {} records ({} classes x {}) to {}",
        sampled.len(),
        classes.len(),
        a.target,
        a.out.display()
    );
    Ok(())
}

fn stub_mode(spec: &str, registry: &Registry) -> Result<StubMode> {
    let bad = || CliError::Usage(format!("unknown stub mode `{spec}`"));
    let (name, arg) = spec.split_once(':').map_or((spec, None), |(n, a)| (n, Some(a)));
    Ok(match (name, arg) {
        ("uniform", None) => StubMode::Uniform,
        ("malformed", None) => StubMode::Malformed,
        ("extra", None) => StubMode::ExtraPrediction,
        ("unknown", Some(tag)) => StubMode::UnknownLabel(tag.to_string()),
        ("stall", Some(ms)) => StubMode::Stall(Duration::from_millis(ms.parse().map_err(|_| bad())?)),
        ("status", Some(code)) => StubMode::Status(code.parse().map_err(|_| bad())?),
        ("model", Some(path)) => {
            let model = load_model(Path::new(path))?;
            if let Some(c) = model.labels().iter().find(|c| !registry.contains(c)) {
                return Err(CliError::Usage(format!("model label {c} is not in the registry")));
            }
            StubMode::Classifier(Arc::new(LocalReference::new(model)))
        }
        _ => return Err(bad()),
    })
}

fn cmd_stub_server(a: StubServerArgs) -> Result<()> {
    announce_seed(a.seed.unwrap_or(0));
    let registry = Arc::new(Registry::load(&a.registry)?);
    let mode = stub_mode(&a.mode, &registry)?;
    let server = StubServer::start(a.port, mode, registry)
        .map_err(|e| CliError::Usage(format!("cannot bind 127.0.0.1:{}: {e}", a.port)))?;
    println!("listening on {}", server.base_url());
    std::io::stdout().flush()?;
    server.join();
    Ok(())
}

fn cmd_gen_toy(a: GenToyArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(0);
    announce_seed(seed);
    let defaults = ToyConfig::default();
    let config = ToyConfig {
        train_per_class: a.train_per_class.unwrap_or(defaults.train_per_class),
        test_per_class: a.test_per_class.unwrap_or(defaults.test_per_class),
        seed,
        ..defaults
    };
    if !(0.0..=1.0).contains(&a.noise) {
        return Err(CliError::Usage(format!("noise {} is outside [0, 1]", a.noise)));
    }
    let toy = generate(&config).map_err(CliError::Usage)?;
    let roman_train = romanize_corpus(&toy.native_train, &toy.romanizer)?;
    let roman_test = romanize_corpus(&toy.native_test, &toy.romanizer)?;
    let noisy = NoisyTransliterator::new(toy.romanizer.clone(), a.noise, seed);
    let roman_test_noisy = romanize_corpus(&toy.native_test, &noisy)?;

    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let write_text = |name: &str, text: &str| -> Result<()> {
        let mut w = create(&dir.join(name))?;
        w.write_all(text.as_bytes())?;
        Ok(w.flush()?)
    };
    write_text("registry.txt", &toy.registry.to_file_string())?;
    write_text("romanizer.tsv", &toy.romanizer.to_file_string())?;
    for (name, corpus) in [
        ("native_train.txt", &toy.native_train),
        ("native_test.txt", &toy.native_test),
        ("roman_train.txt", &roman_train),
        ("roman_test.txt", &roman_test),
        ("roman_test_noisy.txt", &roman_test_noisy),
    ] {
        corpus.write_labeled(create(&dir.join(name))?)?;
    }
    let mut pairs = create(&dir.join("review_pairs.tsv"))?;
    for (n, r) in toy.native_test.records().iter().zip(roman_test_noisy.records()) {
        writeln!(pairs, "__label__{}\t{}\t{}", n.label, n.text, r.text)?;
    }
    pairs.flush()?;
    println!(
        "wrote {} classes, {} train / {} test sentences per class to {}",
        toy.registry.len(),
        config.train_per_class,
        config.test_per_class,
        dir.display()
    );
    Ok(())
}
