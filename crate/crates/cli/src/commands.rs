use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use serde_json::{json, Value};
use voxmeta_core::age::{
    age_histogram, build_triplets, read_pairs_csv, select_ages, write_pairs_csv, write_triplets_csv, DEFAULT_BIN_EDGES,
};
use voxmeta_core::artifacts::{ensure_writable, write_atomic, write_json};
use voxmeta_core::consensus::{build_consensus, compare_with_original, write_consensus_csv};
use voxmeta_core::datasets::{split_with_folds, SpeakerPool, Split, DEFAULT_FOLDS, DEFAULT_TRAIN_RATIO};
use voxmeta_core::evaluation::{
    baseline_empirical, baseline_fixed, baseline_uniform, evaluate_model, mae_by_age, run_experiment, train_experiment,
    write_curve_csv, ExperimentConfig, Task, UniformDraw, DEFAULT_REPETITIONS,
};
use voxmeta_core::ingest::{
    parse_embeddings, parse_original_labels, parse_source_dump, parse_video_meta, write_embeddings, write_rejects,
    DirectoryConnector, EmbeddingRecord, FetchCache, FetchOutcome, ParseOptions, Parsed, Reject, EMBEDDING_DIM,
};
use voxmeta_core::regression::{DesignMatrix, ModelFile, ModelKind};
use voxmeta_core::synthetic::{age_population, learnable_embeddings, LearnableSpec};
use voxmeta_core::{Error, Gender, Result, SourceId, SourceRecord, SpeakerId};

use crate::args::*;
use crate::settings::Settings;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::at_path(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn parse_options(current_year: Option<i32>) -> ParseOptions {
    match current_year {
        Some(current_year) => ParseOptions { current_year },
        None => ParseOptions::default(),
    }
}

/// Renders into memory, then writes atomically.
fn emit(path: &Path, force: bool, render: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut bytes = Vec::new();
    render(&mut bytes)?;
    write_atomic(path, &bytes, force)
}

fn source_id(token: Option<&str>) -> Result<SourceId> {
    let token = token.ok_or_else(|| Error::validation("--source is required for this kind"))?;
    SourceId::ALL.into_iter().find(|s| s.token() == token).ok_or_else(|| {
        Error::validation(format!(
            "unknown source \"{token}\" (expected gkg, dbpedia or wikidata)"
        ))
    })
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::validation(format!("{flag} is required for this kind")))
}

/// A record in the dump line format, so normalized output can be re-ingested.
fn dump_line(r: &SourceRecord) -> Value {
    json!({
        "name": r.person_key.as_str(),
        "gender": if r.gender == Gender::Unknown { Value::Null } else { Value::from(r.gender.token()) },
        "birth_date": r.birth_date.map(|d| d.to_string()),
    })
}

fn write_dump(out: &mut Vec<u8>, records: &[SourceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, &dump_line(r))?;
        out.push(b'\n');
    }
    Ok(())
}

fn load_source(path: &Path, source: SourceId, opts: &ParseOptions) -> Result<Parsed<SourceRecord>> {
    let parsed = parse_source_dump(open(path)?, source, &file_label(path), opts)?;
    if !parsed.rejects.is_empty() {
        log::warn!("{}: {} line(s) rejected", path.display(), parsed.rejects.len());
    }
    Ok(parsed)
}

fn write_rejects_file(path: Option<&Path>, rejects: &[Reject], force: bool) -> Result<()> {
    match path {
        Some(p) => emit(p, force, |out| write_rejects(out, rejects)),
        None => Ok(()),
    }
}

pub fn ingest(args: &IngestArgs, settings: &Settings) -> Result<Value> {
    let opts = parse_options(args.current_year);
    let force = settings.force;
    if let Some(out) = &args.out {
        ensure_writable(out, force)?;
    }
    match args.kind {
        IngestKind::Source => {
            let source = source_id(args.source.as_deref())?;
            let input = required(&args.input, "--input")?;
            let parsed = load_source(input, source, &opts)?;
            if let Some(out) = &args.out {
                emit(out, force, |buf| write_dump(buf, &parsed.records))?;
            }
            write_rejects_file(args.rejects.as_deref(), &parsed.rejects, force)?;
            Ok(
                json!({"kind": "source", "source": source.token(), "lines": parsed.lines(),
                      "accepted": parsed.records.len(), "rejected": parsed.rejects.len()}),
            )
        }
        IngestKind::Videos => {
            let input = required(&args.input, "--input")?;
            let parsed = parse_video_meta(open(input)?, &file_label(input), &opts)?;
            if let Some(out) = &args.out {
                emit(out, force, |buf| {
                    for v in &parsed.records {
                        serde_json::to_writer(&mut *buf, v)?;
                        buf.push(b'\n');
                    }
                    Ok(())
                })?;
            }
            write_rejects_file(args.rejects.as_deref(), &parsed.rejects, force)?;
            Ok(json!({"kind": "videos", "lines": parsed.lines(),
                      "accepted": parsed.records.len(), "rejected": parsed.rejects.len()}))
        }
        IngestKind::Embeddings => {
            let input = required(&args.input, "--input")?;
            let set = parse_embeddings(open(input)?, None)?;
            if let Some(out) = &args.out {
                emit(out, force, |buf| write_embeddings(buf, &set))?;
            }
            let speakers: BTreeSet<&SpeakerId> = set.records.iter().map(|r| &r.speaker_id).collect();
            Ok(json!({"kind": "embeddings", "dimension": set.dimension,
                      "utterances": set.records.len(), "speakers": speakers.len()}))
        }
        IngestKind::Fetch => fetch(args, settings, &opts),
    }
}

/// Looks up every roster name through the response cache.
fn fetch(args: &IngestArgs, settings: &Settings, opts: &ParseOptions) -> Result<Value> {
    let source = source_id(args.source.as_deref())?;
    let roster = parse_original_labels(open(required(&args.roster, "--roster")?)?)?;
    let connector = DirectoryConnector::new(required(&args.mirror, "--mirror")?, source);
    let cache = FetchCache::new(&settings.cache_dir).with_parse_options(opts.clone());
    let mut keys: Vec<_> = roster
        .iter()
        .map(|o| voxmeta_core::PersonKey::normalize(&o.name))
        .collect();
    keys.sort();
    keys.dedup();
    let (mut found, mut absent, mut unavailable) = (Vec::new(), 0usize, Vec::new());
    for key in &keys {
        match cache.fetch(&connector, key)? {
            FetchOutcome::Found(record) => found.push(record),
            FetchOutcome::Absent => absent += 1,
            FetchOutcome::Unavailable { reason } => {
                log::warn!("{source}: \"{key}\" unavailable: {reason}");
                unavailable.push(json!({"person_key": key.as_str(), "reason": reason}));
            }
        }
    }
    if let Some(out) = &args.out {
        emit(out, settings.force, |buf| write_dump(buf, &found))?;
    }
    Ok(
        json!({"kind": "fetch", "source": source.token(), "queried": keys.len(), "found": found.len(),
              "absent": absent, "unavailable": unavailable,
              "cache_dir": settings.cache_dir.display().to_string()}),
    )
}

pub fn consensus(args: &ConsensusArgs, settings: &Settings) -> Result<Value> {
    let force = settings.force;
    for p in [Some(&args.out), args.divergence.as_ref(), args.rejects.as_ref()]
        .into_iter()
        .flatten()
    {
        ensure_writable(p, force)?;
    }
    let opts = parse_options(args.current_year);
    let roster = parse_original_labels(open(&args.roster)?)?;
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (source, path) in [
        (SourceId::Gkg, &args.gkg),
        (SourceId::DbPedia, &args.dbpedia),
        (SourceId::Wikidata, &args.wikidata),
    ] {
        let parsed = load_source(path, source, &opts)?;
        records.extend(parsed.records);
        rejects.extend(parsed.rejects);
    }
    let rows = build_consensus(&roster, &records);
    emit(&args.out, force, |buf| write_consensus_csv(buf, &rows))?;
    write_rejects_file(args.rejects.as_deref(), &rejects, force)?;

    let report = compare_with_original(&rows, &roster);
    if let Some(p) = &args.divergence {
        emit(p, force, |buf| report.write_csv(buf))?;
    }
    log::info!("{}", report.render_text().trim_end());
    let mut status = serde_json::Map::new();
    for row in &rows {
        let entry = status.entry(row.status().token()).or_insert(Value::from(0u64));
        *entry = Value::from(entry.as_u64().unwrap_or(0) + 1);
    }
    Ok(
        json!({"speakers": rows.len(), "status": status, "rejected_lines": rejects.len(),
              "divergence": {"compared": report.compared(), "relabeled": report.relabeled.len(), "by_category": report.by_category}}),
    )
}

pub fn derive_age(args: &DeriveAgeArgs, settings: &Settings) -> Result<Value> {
    let force = settings.force;
    for p in [Some(&args.out), args.pairs.as_ref(), args.rejects.as_ref()]
        .into_iter()
        .flatten()
    {
        ensure_writable(p, force)?;
    }
    let opts = parse_options(args.current_year);
    let consensus = voxmeta_core::consensus::read_consensus_csv(open(&args.consensus)?)?;
    let videos = parse_video_meta(open(&args.videos)?, &file_label(&args.videos), &opts)?;
    if !videos.rejects.is_empty() {
        log::warn!("{}: {} line(s) rejected", args.videos.display(), videos.rejects.len());
    }
    let (triplets, summary) = build_triplets(&consensus, &videos.records)?;
    emit(&args.out, force, |buf| write_triplets_csv(buf, &triplets))?;
    write_rejects_file(args.rejects.as_deref(), &videos.rejects, force)?;
    let mut result = json!({"summary": summary, "rejected_lines": videos.rejects.len()});
    if let Some(p) = &args.pairs {
        let seed = settings.require_seed()?;
        let pairs = select_ages(&triplets, seed)?;
        emit(p, force, |buf| write_pairs_csv(buf, &pairs))?;
        result["speakers"] = Value::from(pairs.len());
        result["seed"] = Value::from(seed);
    }
    Ok(result)
}

pub fn histogram(args: &HistogramArgs, settings: &Settings) -> Result<Value> {
    if let Some(out) = &args.out {
        ensure_writable(out, settings.force)?;
    }
    let pairs = read_pairs_csv(open(&args.pairs)?)?;
    let edges = args.edges.clone().unwrap_or_else(|| DEFAULT_BIN_EDGES.to_vec());
    let hist = age_histogram(&pairs, &edges)?;
    if let Some(out) = &args.out {
        emit(out, settings.force, |buf| hist.write_csv(buf))?;
    }
    eprint!("{}", hist.render_table());
    let bins: Vec<Value> = hist
        .labels()
        .into_iter()
        .zip(&hist.counts)
        .map(|(label, count)| json!({"interval": label, "count": count}))
        .collect();
    Ok(json!({"total": hist.total(), "bins": bins}))
}

fn load_records(path: &Path, dimension: Option<usize>) -> Result<Vec<EmbeddingRecord>> {
    Ok(parse_embeddings(open(path)?, Some(dimension.unwrap_or(EMBEDDING_DIM)))?.records)
}

pub fn split(args: &SplitArgs, settings: &Settings) -> Result<Value> {
    ensure_writable(&args.out, settings.force)?;
    let seed = settings.require_seed()?;
    let mut pool = SpeakerPool::default();
    if let Some(p) = &args.pairs {
        for pair in read_pairs_csv(open(p)?)? {
            if pair.tier.test_eligible() {
                pool.eligible.insert(pair.speaker_id);
            } else {
                pool.train_only.insert(pair.speaker_id);
            }
        }
    }
    if let Some(p) = &args.features {
        let speakers = load_records(p, args.dimension)?.into_iter().map(|r| r.speaker_id);
        if args.pairs.is_some() {
            // Both given: only speakers that also have embeddings.
            let present: BTreeSet<SpeakerId> = speakers.collect();
            pool.eligible.retain(|s| present.contains(s));
            pool.train_only.retain(|s| present.contains(s));
        } else {
            pool = SpeakerPool::from_speakers(speakers);
        }
    }
    let split = split_with_folds(
        &pool,
        args.ratio.unwrap_or(DEFAULT_TRAIN_RATIO),
        args.folds.unwrap_or(DEFAULT_FOLDS),
        seed,
    )?;
    write_json(&args.out, &split, settings.force)?;
    Ok(
        json!({"seed": seed, "train": split.train.len(), "test": split.test.len(),
              "train_only": split.train_only.len(), "folds": split.k}),
    )
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Age => Task::Age,
        TaskArg::Gender => Task::Gender,
    }
}

fn model_of(m: ModelArg) -> ModelKind {
    match m {
        ModelArg::Ols => ModelKind::Ols,
        ModelArg::Ridge => ModelKind::Ridge,
        ModelArg::Lasso => ModelKind::Lasso,
        ModelArg::Logistic => ModelKind::Logistic,
    }
}

pub fn train(args: &TrainArgs, settings: &Settings) -> Result<Value> {
    ensure_writable(&args.out, settings.force)?;
    if let Some(p) = &args.split_out {
        ensure_writable(p, settings.force)?;
    }
    let mut config = ExperimentConfig::new(
        task_of(args.task),
        &args.features,
        model_of(args.model),
        settings.require_seed()?,
    );
    config.split = args.split.clone();
    config.age_labels = args.age_labels.clone();
    config.lambda = args.lambda;
    config.train_ratio = args.ratio.unwrap_or(DEFAULT_TRAIN_RATIO);
    config.folds = args.folds.unwrap_or(DEFAULT_FOLDS);
    config.equalize_train = !args.no_equalize_train;
    config.n_per_speaker = args.n_per_speaker;
    config.balance_gender = args.balance_gender;
    config.dimension = args.dimension;
    let exp = train_experiment(&config)?;
    write_json(&args.out, &exp.model_file()?, settings.force)?;
    if let Some(p) = &args.split_out {
        write_json(p, &exp.split, settings.force)?;
    }
    let train_metrics = evaluate_model(&exp.model, config.task, &exp.prepared.train)?;
    Ok(
        json!({"model": exp.model.model_kind, "lambda": exp.model.lambda, "converged": exp.model.converged,
              "iterations": exp.model.iterations, "warnings": exp.model.warnings,
              "train": train_metrics, "dataset": exp.prepared.meta}),
    )
}

pub fn evaluate(args: &EvaluateArgs, settings: &Settings) -> Result<Value> {
    if let Some(p) = &args.curve {
        ensure_writable(p, settings.force)?;
    }
    let task = task_of(args.task);
    let model = read_json::<ModelFile>(&args.model)?.into_coefficients()?;
    if task == Task::Age && !model.model_kind.is_regressor() {
        return Err(Error::validation("the age task needs a regression model"));
    }
    if task == Task::Gender && model.model_kind != ModelKind::Logistic {
        return Err(Error::validation("the gender task needs a logistic model"));
    }
    let mut records = load_records(&args.features, args.dimension.or(Some(model.dimension())))?;
    if let Some(p) = &args.split {
        let split: Split = read_json(p)?;
        split.validate()?;
        let test: BTreeSet<&SpeakerId> = split.test_set();
        records.retain(|r| test.contains(&r.speaker_id));
    }
    let total = records.len();
    records.retain(|r| match task {
        Task::Age => r.age.is_some(),
        Task::Gender => r.gender.is_some_and(Gender::is_binary),
    });
    if records.len() < total {
        log::warn!("{} unlabeled utterance(s) skipped", total - records.len());
    }
    let metrics = evaluate_model(&model, task, &records)?;
    if let (Some(p), Task::Age) = (&args.curve, task) {
        let pred = model.predict(&DesignMatrix::from_records(&records)?)?;
        let ages: Vec<u32> = records.iter().map(|r| r.age.expect("filtered above")).collect();
        let curve = mae_by_age(&pred, &ages)?;
        emit(p, settings.force, |buf| write_curve_csv(buf, &curve))?;
    } else if args.curve.is_some() {
        return Err(Error::validation("--curve applies to the age task only"));
    }
    Ok(json!({"metrics": metrics, "skipped_unlabeled": total - records.len()}))
}

/// Reads the `age` column of any CSV with a header.
fn read_ages(path: &Path) -> Result<Vec<u32>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let column = reader
        .headers()?
        .iter()
        .position(|h| h.trim() == "age")
        .ok_or_else(|| Error::validation(format!("{}: no \"age\" column", path.display())))?;
    let mut ages = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let field = row.get(column).unwrap_or("").trim();
        let age = field
            .parse()
            .map_err(|_| Error::validation(format!("{}: row {}: invalid age \"{field}\"", path.display(), i + 2)))?;
        ages.push(age);
    }
    Ok(ages)
}

pub fn baseline(args: &BaselineArgs, settings: &Settings) -> Result<Value> {
    let ages = read_ages(&args.ages)?;
    let reps = args.repetitions.unwrap_or(DEFAULT_REPETITIONS);
    let result = match args.kind {
        BaselineArg::Fixed => baseline_fixed(&ages)?,
        BaselineArg::Empirical => baseline_empirical(&ages, reps, settings.require_seed()?)?,
        BaselineArg::Uniform => {
            let range = args.range.as_ref().map(|r| (r[0], r[1]));
            let draw = if args.continuous {
                UniformDraw::Continuous
            } else {
                UniformDraw::Integer
            };
            baseline_uniform(&ages, range, draw, reps, settings.require_seed()?)?
        }
    };
    Ok(serde_json::to_value(result)?)
}

pub fn report(args: &ReportArgs, settings: &Settings) -> Result<Value> {
    let mut config = ExperimentConfig::load(&args.experiment)?;
    if let Some(seed) = settings.seed {
        config.seed = Some(seed);
    }
    Ok(serde_json::to_value(run_experiment(
        &config,
        &args.out,
        settings.force,
    )?)?)
}

pub fn generate_synthetic(args: &SyntheticArgs, settings: &Settings) -> Result<Value> {
    ensure_writable(&args.out, settings.force)?;
    let seed = settings.require_seed()?;
    match args.kind {
        SyntheticKind::Ages => {
            let ages = age_population(seed);
            emit(&args.out, settings.force, |buf| {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(buf);
                w.write_record(["speaker_id", "age"])?;
                for (i, age) in ages.iter().enumerate() {
                    w.write_record([format!("id{:05}", 10001 + i), age.to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
            Ok(json!({"kind": "ages", "speakers": ages.len(), "seed": seed}))
        }
        SyntheticKind::Embeddings => {
            let defaults = LearnableSpec::default();
            let spec = LearnableSpec {
                speakers: args.speakers.unwrap_or(defaults.speakers),
                min_utterances: args.min_utterances.unwrap_or(defaults.min_utterances),
                max_utterances: args.max_utterances.unwrap_or(defaults.max_utterances),
                dimension: args.dimension.unwrap_or(defaults.dimension),
                age_noise: args.age_noise.unwrap_or(defaults.age_noise),
                seed,
                ..defaults
            };
            let corpus = learnable_embeddings(&spec)?;
            emit(&args.out, settings.force, |buf| {
                write_embeddings(buf, &corpus.embeddings)
            })?;
            Ok(json!({"kind": "embeddings", "speakers": corpus.speakers.len(),
                      "utterances": corpus.embeddings.records.len(),
                      "dimension": corpus.embeddings.dimension, "seed": seed}))
        }
    }
}
