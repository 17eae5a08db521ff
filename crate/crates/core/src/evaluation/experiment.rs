use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{baseline_empirical, baseline_fixed, baseline_uniform, BaselineResult, UniformDraw};
use super::metrics::{f1_score, mae, mae_by_age, write_curve_csv, AgePoint, ConfusionCounts};
use crate::age::{read_pairs_csv, ReliabilityTier};
use crate::artifacts;
use crate::datasets::{
    balance_gender, equalize_utterances, holdout_split, make_cv_folds, make_stratified_folds, utterance_counts,
    SpeakerPool, Split, DEFAULT_FOLDS, DEFAULT_TRAIN_RATIO,
};
use crate::error::{Error, Result};
use crate::ids::{Gender, SpeakerId};
use crate::ingest::{parse_embeddings, EmbeddingRecord, EMBEDDING_DIM};
use crate::regression::{
    fit_lasso_path, fit_logistic, fit_ols, fit_ridge_path, Coefficients, DesignMatrix, LassoOptions, LogisticOptions,
    ModelFile, ModelKind, SeedContext,
};

pub const DEFAULT_GRID_POINTS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Age,
    Gender,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Age => "age",
            Task::Gender => "gender",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "age" => Ok(Task::Age),
            "gender" => Ok(Task::Gender),
            other => Err(Error::validation(format!("unknown task \"{other}\""))),
        }
    }
}

/// `points` values log-spaced over `[1e-4, 1e4]`.
pub fn lambda_grid(points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![1.0];
    }
    (0..points)
        .map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / (points - 1) as f64))
        .collect()
}

fn default_ratio() -> f64 {
    DEFAULT_TRAIN_RATIO
}
fn default_folds() -> usize {
    DEFAULT_FOLDS
}
fn default_true() -> bool {
    true
}
fn default_repetitions() -> u64 {
    super::baselines::DEFAULT_REPETITIONS
}

/// Experiment configuration, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Embedding CSV.
    pub features: PathBuf,
    pub model: ModelKind,
    pub seed: Option<u64>,
    /// Speaker/age CSV with reliability tiers. Overrides the age column of the
    /// feature file; title-only speakers are kept out of the test side.
    #[serde(default)]
    pub age_labels: Option<PathBuf>,
    /// Existing split manifest; built from the seed when absent.
    #[serde(default)]
    pub split: Option<PathBuf>,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Defaults to on for gender and off for age.
    #[serde(default)]
    pub balance_gender: Option<bool>,
    /// Off reproduces the "all training utterances" regime. The test side is
    /// always equalized.
    #[serde(default = "default_true")]
    pub equalize_train: bool,
    /// Defaults to the smallest per-speaker utterance count on the test side.
    #[serde(default)]
    pub n_per_speaker: Option<usize>,
    /// Fixed λ; skips cross-validation.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Expected embedding dimension; defaults to 512.
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default = "default_repetitions")]
    pub baseline_repetitions: u64,
}

impl ExperimentConfig {
    pub fn new(task: Task, features: impl Into<PathBuf>, model: ModelKind, seed: u64) -> Self {
        ExperimentConfig {
            task,
            features: features.into(),
            model,
            seed: Some(seed),
            age_labels: None,
            split: None,
            train_ratio: DEFAULT_TRAIN_RATIO,
            folds: DEFAULT_FOLDS,
            balance_gender: None,
            equalize_train: true,
            n_per_speaker: None,
            lambda: None,
            lambda_grid: None,
            dimension: None,
            baseline_repetitions: default_repetitions(),
        }
    }

    /// Reads a config file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.features);
        cfg.age_labels.as_mut().map(resolve);
        cfg.split.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::validation("a seed is required"))
    }

    pub fn balances_gender(&self) -> bool {
        self.balance_gender.unwrap_or(self.task == Task::Gender)
    }

    pub fn grid(&self) -> Vec<f64> {
        self.lambda_grid
            .clone()
            .unwrap_or_else(|| lambda_grid(DEFAULT_GRID_POINTS))
    }

    /// Rejects inconsistent settings before any data is read.
    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        match (self.task, self.model) {
            (Task::Gender, ModelKind::Logistic) => {}
            (Task::Gender, m) => {
                return Err(Error::validation(format!(
                    "gender task needs a logistic model, got {m}"
                )))
            }
            (Task::Age, ModelKind::Logistic) => {
                return Err(Error::validation("age task needs a regression model, got logistic"))
            }
            (Task::Age, _) => {}
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::validation(format!(
                "train_ratio must lie in (0, 1), got {}",
                self.train_ratio
            )));
        }
        if self.folds < 2 {
            return Err(Error::validation(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::validation(format!("lambda must be finite and >= 0, got {l}")));
            }
            if self.model == ModelKind::Ols && l != 0.0 {
                return Err(Error::validation("ols takes no lambda"));
            }
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return Err(Error::validation(
                    "lambda_grid must be a non-empty list of finite values >= 0",
                ));
            }
        }
        if self.n_per_speaker == Some(0) {
            return Err(Error::validation("n_per_speaker must be at least 1"));
        }
        if self.dimension == Some(0) {
            return Err(Error::validation("dimension must be at least 1"));
        }
        if self.task == Task::Age && self.baseline_repetitions == 0 {
            return Err(Error::validation("baseline_repetitions must be at least 1"));
        }
        if self.task == Task::Gender && self.age_labels.is_some() {
            return Err(Error::validation("age_labels only applies to the age task"));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; names the report directory.
    pub fn content_hash(&self) -> Result<String> {
        Ok(artifacts::sha256_hex(&serde_json::to_vec(self)?))
    }
}

/// Dataset preparation record, archived in the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepMetadata {
    pub features_sha256: String,
    pub records_total: usize,
    pub records_unlabeled: usize,
    pub records_unassigned: usize,
    pub balance_gender: bool,
    pub equalize_train: bool,
    pub n_per_speaker: usize,
    pub train_speakers: usize,
    pub train_utterances: usize,
    pub test_speakers: usize,
    pub test_utterances: usize,
    pub train_only_speakers: usize,
    pub dropped_train: Vec<SpeakerId>,
    pub dropped_test: Vec<SpeakerId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: Vec<EmbeddingRecord>,
    pub test: Vec<EmbeddingRecord>,
    pub meta: PrepMetadata,
}

fn labeled(task: Task, r: &EmbeddingRecord) -> bool {
    match task {
        Task::Age => r.age.is_some(),
        Task::Gender => r.gender.is_some_and(Gender::is_binary),
    }
}

fn speakers_of(records: &[EmbeddingRecord]) -> BTreeSet<SpeakerId> {
    records.iter().map(|r| r.speaker_id.clone()).collect()
}

/// Builds (or checks) the split and applies balancing then equalization.
/// Returns the split actually used, with folds over the training side.
pub fn prepare_dataset(
    config: &ExperimentConfig,
    mut records: Vec<EmbeddingRecord>,
    features_sha256: String,
) -> Result<(Split, Prepared)> {
    let seed = config.seed()?;
    let records_total = records.len();
    let mut train_only = BTreeSet::new();
    if let Some(path) = &config.age_labels {
        let file = fs::File::open(path).map_err(|e| Error::at_path(path, e))?;
        let pairs = read_pairs_csv(file)?;
        let mut ages = BTreeMap::new();
        for p in pairs {
            if p.tier == ReliabilityTier::TitleOnly {
                train_only.insert(p.speaker_id.clone());
            }
            ages.insert(p.speaker_id, p.age);
        }
        for r in &mut records {
            r.age = ages.get(&r.speaker_id).copied();
        }
    }
    records.retain(|r| labeled(config.task, r));
    let records_unlabeled = records_total - records.len();

    let split = match &config.split {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::at_path(path, e))?;
            let split: Split =
                serde_json::from_str(&text).map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
            split.validate()?;
            if let Some(s) = split.test.iter().find(|s| train_only.contains(*s)) {
                return Err(Error::validation(format!(
                    "split puts title-only speaker {s} in the test set"
                )));
            }
            split
        }
        None => {
            let all = speakers_of(&records);
            let pool = SpeakerPool {
                eligible: all.iter().filter(|s| !train_only.contains(*s)).cloned().collect(),
                train_only: all.iter().filter(|s| train_only.contains(*s)).cloned().collect(),
            };
            holdout_split(&pool, config.train_ratio, seed)?
        }
    };
    let train_ids = split.train_set();
    let test_ids = split.test_set();
    let mut train: Vec<EmbeddingRecord> = Vec::new();
    let mut test: Vec<EmbeddingRecord> = Vec::new();
    let mut records_unassigned = 0;
    for r in records {
        if train_ids.contains(&r.speaker_id) {
            train.push(r);
        } else if test_ids.contains(&r.speaker_id) {
            test.push(r);
        } else {
            records_unassigned += 1;
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::validation(
            "split leaves the training or test side without labeled data",
        ));
    }

    // Folds partition the whole training side; a supplied manifest keeps its
    // own assignment.
    let mut split = split;
    let mut marked: BTreeSet<SpeakerId> = split.train_only.iter().cloned().collect();
    marked.extend(split.train.iter().filter(|s| train_only.contains(*s)).cloned());
    split.train_only = marked.into_iter().collect();
    if config.split.is_none() || split.folds.is_empty() {
        let ids: Vec<SpeakerId> = split.train.clone();
        split.folds = if config.task == Task::Gender {
            let genders: BTreeMap<&SpeakerId, Gender> = train
                .iter()
                .filter_map(|r| r.gender.map(|g| (&r.speaker_id, g)))
                .collect();
            let group = |g: Gender| {
                ids.iter()
                    .filter(|s| genders.get(s) == Some(&g))
                    .cloned()
                    .collect::<Vec<_>>()
            };
            make_stratified_folds(&[group(Gender::Male), group(Gender::Female)], config.folds, seed)?
        } else {
            make_cv_folds(&ids, config.folds, seed)?
        };
        split.k = config.folds;
    }

    let balance = config.balances_gender();
    if balance {
        train = balance_gender(&train, seed)?;
        test = balance_gender(&test, seed)?;
    }
    let n = match config.n_per_speaker {
        Some(n) => n,
        None => *utterance_counts(&test).values().min().expect("test side is non-empty"),
    };
    let eq_test = equalize_utterances(&test, n, seed)?;
    test = eq_test.records;
    let mut dropped_train = Vec::new();
    if config.equalize_train {
        let eq = equalize_utterances(&train, n, seed)?;
        train = eq.records;
        dropped_train = eq.dropped;
    } else {
        train.sort_by(|a, b| (&a.speaker_id, &a.utterance_id).cmp(&(&b.speaker_id, &b.utterance_id)));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::validation(format!(
            "no speaker has {n} utterances on the training or test side"
        )));
    }

    let train_speakers = speakers_of(&train);
    let meta = PrepMetadata {
        features_sha256,
        records_total,
        records_unlabeled,
        records_unassigned,
        balance_gender: balance,
        equalize_train: config.equalize_train,
        n_per_speaker: n,
        train_speakers: train_speakers.len(),
        train_utterances: train.len(),
        test_speakers: speakers_of(&test).len(),
        test_utterances: test.len(),
        train_only_speakers: train_speakers.iter().filter(|s| train_only.contains(*s)).count(),
        dropped_train,
        dropped_test: eq_test.dropped,
    };
    Ok((split, Prepared { train, test, meta }))
}

fn age_targets(records: &[EmbeddingRecord]) -> Vec<f64> {
    records
        .iter()
        .map(|r| r.age.expect("age-labeled record") as f64)
        .collect()
}

fn gender_targets(records: &[EmbeddingRecord]) -> Vec<bool> {
    records.iter().map(|r| r.gender == Some(Gender::Male)).collect()
}

/// Fits one model per λ on the same data.
fn fit_path(kind: ModelKind, records: &[EmbeddingRecord], lambdas: &[f64]) -> Result<Vec<Coefficients>> {
    let x = DesignMatrix::from_records(records)?;
    match kind {
        ModelKind::Ols => {
            let m = fit_ols(&x, &age_targets(records))?;
            Ok(lambdas.iter().map(|_| m.clone()).collect())
        }
        ModelKind::Ridge => fit_ridge_path(&x, &age_targets(records), lambdas),
        ModelKind::Lasso => fit_lasso_path(&x, &age_targets(records), lambdas, &LassoOptions::default()),
        ModelKind::Logistic => {
            let y = gender_targets(records);
            lambdas
                .iter()
                .map(|&l| fit_logistic(&x, &y, l, &LogisticOptions::default()))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// `mae` (lower is better) or `f1` (higher is better).
    pub metric: String,
    pub grid: Vec<f64>,
    pub mean_scores: Vec<f64>,
    pub fold_scores: Vec<Vec<f64>>,
    pub selected: f64,
}

/// Speaker-level k-fold selection of λ. Age picks the lowest mean MAE, gender
/// the highest mean F1; ties go to the larger λ. Folds run in parallel and
/// are combined in fold order. Speakers in `train_only` help fit every fold
/// they are not held out of but are never scored.
pub fn select_lambda(
    task: Task,
    kind: ModelKind,
    train: &[EmbeddingRecord],
    folds: &BTreeMap<SpeakerId, usize>,
    k: usize,
    grid: &[f64],
    train_only: &[SpeakerId],
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::validation("empty lambda grid"));
    }
    let fold_of = |r: &EmbeddingRecord| -> Result<usize> {
        folds
            .get(&r.speaker_id)
            .copied()
            .ok_or_else(|| Error::validation(format!("speaker {} has no fold", r.speaker_id)))
    };
    let assigned: Vec<usize> = train.iter().map(fold_of).collect::<Result<_>>()?;
    let unscored: BTreeSet<&SpeakerId> = train_only.iter().collect();
    let fold_scores: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let fit_part: Vec<EmbeddingRecord> = train
                .iter()
                .zip(&assigned)
                .filter(|(_, &a)| a != f)
                .map(|(r, _)| r.clone())
                .collect();
            let held: Vec<EmbeddingRecord> = train
                .iter()
                .zip(&assigned)
                .filter(|(r, &a)| a == f && !unscored.contains(&r.speaker_id))
                .map(|(r, _)| r.clone())
                .collect();
            if fit_part.is_empty() || held.is_empty() {
                return Err(Error::validation(format!(
                    "fold {f} has no training or no scorable data"
                )));
            }
            fit_path(kind, &fit_part, grid)?
                .iter()
                .map(|m| evaluate_model(m, task, &held).map(|t| t.score()))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mean_scores: Vec<f64> = (0..grid.len())
        .map(|i| fold_scores.iter().map(|s| s[i]).sum::<f64>() / k as f64)
        .collect();
    let better = |a: f64, b: f64| match task {
        Task::Age => a < b,
        Task::Gender => a > b,
    };
    let mut best = 0;
    for i in 1..grid.len() {
        let (s, b) = (mean_scores[i], mean_scores[best]);
        if better(s, b) || (s == b && grid[i] > grid[best]) {
            best = i;
        }
    }
    Ok(CvResult {
        metric: match task {
            Task::Age => "mae",
            Task::Gender => "f1",
        }
        .to_string(),
        grid: grid.to_vec(),
        mean_scores,
        fold_scores,
        selected: grid[best],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskMetrics {
    Age {
        mae: f64,
        trials: usize,
    },
    Gender {
        f1: f64,
        precision: f64,
        recall: f64,
        accuracy: f64,
        confusion: ConfusionCounts,
        trials: usize,
    },
}

impl TaskMetrics {
    /// The selection metric: MAE for age, F1 for gender.
    pub fn score(&self) -> f64 {
        match self {
            TaskMetrics::Age { mae, .. } => *mae,
            TaskMetrics::Gender { f1, .. } => *f1,
        }
    }
}

/// Scores a model on labeled records. Male is the positive class.
pub fn evaluate_model(model: &Coefficients, task: Task, records: &[EmbeddingRecord]) -> Result<TaskMetrics> {
    if records.is_empty() {
        return Err(Error::validation("no records to evaluate"));
    }
    let x = DesignMatrix::from_records(records)?;
    match task {
        Task::Age => {
            if records.iter().any(|r| r.age.is_none()) {
                return Err(Error::validation("age evaluation needs an age on every record"));
            }
            let pred = model.predict(&x)?;
            Ok(TaskMetrics::Age {
                mae: mae(&pred, &age_targets(records))?,
                trials: records.len(),
            })
        }
        Task::Gender => {
            if records.iter().any(|r| !r.gender.is_some_and(Gender::is_binary)) {
                return Err(Error::validation(
                    "gender evaluation needs a binary gender on every record",
                ));
            }
            let pred = model.classify(&x, 0.5)?;
            let s = f1_score(&pred, &gender_targets(records))?;
            Ok(TaskMetrics::Gender {
                f1: s.f1,
                precision: s.precision,
                recall: s.recall,
                accuracy: s.counts.accuracy(),
                confusion: s.counts,
                trials: records.len(),
            })
        }
    }
}

/// A trained experiment, before evaluation on the test side.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub split: Split,
    pub prepared: Prepared,
    pub cv: Option<CvResult>,
    pub model: Coefficients,
}

impl Experiment {
    pub fn model_file(&self) -> Result<ModelFile> {
        Ok(self.model.to_model_file(SeedContext {
            seed: self.config.seed,
            stream: "experiment".into(),
        }))
    }
}

/// Split, prepare, select λ by cross-validation (unless fixed), and fit on
/// the full training side.
pub fn train_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let bytes = fs::read(&config.features).map_err(|e| Error::at_path(&config.features, e))?;
    let set = parse_embeddings(bytes.as_slice(), Some(config.dimension.unwrap_or(EMBEDDING_DIM)))?;
    let (split, prepared) = prepare_dataset(config, set.records, artifacts::sha256_hex(&bytes))?;
    let (lambda, cv) = match (config.model, config.lambda) {
        (ModelKind::Ols, _) => (0.0, None),
        (_, Some(l)) => (l, None),
        (kind, None) => {
            let cv = select_lambda(
                config.task,
                kind,
                &prepared.train,
                &split.folds,
                split.k,
                &config.grid(),
                &split.train_only,
            )?;
            (cv.selected, Some(cv))
        }
    };
    let model = fit_path(config.model, &prepared.train, &[lambda])?.remove(0);
    for w in &model.warnings {
        log::warn!("final fit: {w}");
    }
    Ok(Experiment {
        config: config.clone(),
        split,
        prepared,
        cv,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeBaselines {
    pub empirical: BaselineResult,
    pub uniform: BaselineResult,
    pub fixed: BaselineResult,
    pub model_mae: f64,
    /// `1 − model_mae / fixed.mae`.
    pub improvement_over_fixed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub task: Task,
    pub model: ModelKind,
    pub lambda: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub lambda_selection: Option<CvResult>,
    pub train: TaskMetrics,
    pub test: TaskMetrics,
    pub dataset: PrepMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub report_dir: PathBuf,
    pub config_hash: String,
    pub task: Task,
    pub model: ModelKind,
    pub lambda: f64,
    pub test: TaskMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_baseline_mae: Option<f64>,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    created_at: String,
    tool_version: &'a str,
    config_hash: &'a str,
    threads: usize,
}

/// Runs the whole experiment and archives it under
/// `<out_root>/<first 16 hex digits of the config hash>/`. An existing report
/// is only replaced with `force`. Everything except `run.json` is a pure
/// function of the config and its inputs.
pub fn run_experiment(config: &ExperimentConfig, out_root: &Path, force: bool) -> Result<ReportSummary> {
    config.validate()?;
    let hash = config.content_hash()?;
    let dir = out_root.join(&hash[..16]);
    artifacts::ensure_writable(&dir, force)?;

    let exp = train_experiment(config)?;
    let train_metrics = evaluate_model(&exp.model, config.task, &exp.prepared.train)?;
    let test_metrics = evaluate_model(&exp.model, config.task, &exp.prepared.test)?;

    let mut files: Vec<(&str, Vec<u8>)> = vec![
        ("config.json", artifacts::json_bytes(config)?),
        ("split.json", artifacts::json_bytes(&exp.split)?),
        ("model.json", artifacts::json_bytes(&exp.model_file()?)?),
    ];
    let mut fixed_baseline_mae = None;
    if config.task == Task::Age {
        let x = DesignMatrix::from_records(&exp.prepared.test)?;
        let pred = exp.model.predict(&x)?;
        let ages: Vec<u32> = exp.prepared.test.iter().map(|r| r.age.expect("age-labeled")).collect();
        let curve: Vec<AgePoint> = mae_by_age(&pred, &ages)?;
        let mut csv_bytes = Vec::new();
        write_curve_csv(&mut csv_bytes, &curve)?;
        files.push(("curve.csv", csv_bytes));
        let seed = config.seed()?;
        let reps = config.baseline_repetitions;
        let fixed = baseline_fixed(&ages)?;
        let model_mae = test_metrics.score();
        let baselines = AgeBaselines {
            empirical: baseline_empirical(&ages, reps, seed)?,
            uniform: baseline_uniform(&ages, None, UniformDraw::Integer, reps, seed)?,
            improvement_over_fixed: if fixed.mae > 0.0 {
                1.0 - model_mae / fixed.mae
            } else {
                0.0
            },
            fixed,
            model_mae,
        };
        fixed_baseline_mae = Some(baselines.fixed.mae);
        files.push(("baselines.json", artifacts::json_bytes(&baselines)?));
    }
    let metrics = Metrics {
        task: config.task,
        model: config.model,
        lambda: exp.model.lambda,
        converged: exp.model.converged,
        warnings: exp.model.warnings.clone(),
        lambda_selection: exp.cv.clone(),
        train: train_metrics,
        test: test_metrics.clone(),
        dataset: exp.prepared.meta.clone(),
    };
    files.push(("metrics.json", artifacts::json_bytes(&metrics)?));
    let run = RunInfo {
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: &hash,
        threads: rayon::current_num_threads(),
    };
    files.push(("run.json", artifacts::json_bytes(&run)?));

    // Assemble next to the final location, then swap into place.
    fs::create_dir_all(out_root).map_err(|e| Error::at_path(out_root, e))?;
    let staging = out_root.join(format!(".{}.staging{}", &hash[..16], std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::at_path(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| Error::at_path(&staging, e))?;
    for (name, bytes) in &files {
        let p = staging.join(name);
        fs::write(&p, bytes).map_err(|e| Error::at_path(&p, e))?;
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::at_path(&dir, e))?;
    }
    fs::rename(&staging, &dir).map_err(|e| Error::at_path(&dir, e))?;

    Ok(ReportSummary {
        report_dir: dir,
        config_hash: hash,
        task: config.task,
        model: config.model,
        lambda: exp.model.lambda,
        test: test_metrics,
        fixed_baseline_mae,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::age::{write_pairs_csv, SpeakerAgePair};
    use crate::ingest::write_embeddings;
    use crate::synthetic::{learnable_embeddings, LearnableSpec};

    const DIM: usize = 24;

    fn corpus(dir: &Path, speakers: usize) -> PathBuf {
        let spec = LearnableSpec {
            speakers,
            dimension: DIM,
            seed: 5,
            ..Default::default()
        };
        let c = learnable_embeddings(&spec).unwrap();
        let path = dir.join("features.csv");
        write_embeddings(fs::File::create(&path).unwrap(), &c.embeddings).unwrap();
        path
    }

    fn config(task: Task, features: &Path, model: ModelKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(task, features, model, 17);
        c.dimension = Some(DIM);
        c.baseline_repetitions = 2000;
        c.lambda_grid = Some(lambda_grid(5));
        c
    }

    fn read(dir: &Path, name: &str) -> String {
        fs::read_to_string(dir.join(name)).unwrap()
    }

    #[test]
    fn inconsistent_configs_fail_before_reading_data() {
        let missing = Path::new("/nonexistent/features.csv");
        for (task, model) in [(Task::Gender, ModelKind::Ridge), (Task::Age, ModelKind::Logistic)] {
            let err = train_experiment(&config(task, missing, model)).unwrap_err();
            assert!(matches!(err, Error::Validation(_)), "{err}");
        }
        let mut c = config(Task::Age, missing, ModelKind::Ridge);
        c.seed = None;
        assert!(matches!(train_experiment(&c).unwrap_err(), Error::Validation(_)));
        c.seed = Some(1);
        c.folds = 1;
        assert!(matches!(train_experiment(&c).unwrap_err(), Error::Validation(_)));
        let ok = config(Task::Age, missing, ModelKind::Ridge);
        assert!(matches!(train_experiment(&ok).unwrap_err(), Error::Path { .. }));
    }

    #[test]
    fn grid_shape() {
        let g = lambda_grid(DEFAULT_GRID_POINTS);
        assert_eq!(g.len(), 17);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[16] - 1e4).abs() < 1e-8);
        assert!((g[8] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gender_report_contains_f1_and_confusion() {
        let dir = tempfile::tempdir().unwrap();
        let features = corpus(dir.path(), 80);
        let cfg = config(Task::Gender, &features, ModelKind::Logistic);
        let summary = run_experiment(&cfg, &dir.path().join("reports"), false).unwrap();
        let metrics: serde_json::Value = serde_json::from_str(&read(&summary.report_dir, "metrics.json")).unwrap();
        assert!(metrics["test"]["f1"].as_f64().unwrap() > 0.9);
        assert!(metrics["test"]["confusion"]["tp"].is_u64());
        assert!(metrics["dataset"]["balance_gender"].as_bool().unwrap());
        assert!(!summary.report_dir.join("baselines.json").exists());
        assert!(!summary.report_dir.join("curve.csv").exists());
        // Balanced on both sides.
        let split: Split = serde_json::from_str(&read(&summary.report_dir, "split.json")).unwrap();
        split.validate().unwrap();
    }

    #[test]
    fn age_reports_are_deterministic_and_protected() {
        let dir = tempfile::tempdir().unwrap();
        let features = corpus(dir.path(), 90);
        let cfg = config(Task::Age, &features, ModelKind::Ridge);
        let a = run_experiment(&cfg, &dir.path().join("a"), false).unwrap();
        let b = run_experiment(&cfg, &dir.path().join("b"), false).unwrap();
        for name in [
            "config.json",
            "split.json",
            "model.json",
            "metrics.json",
            "baselines.json",
            "curve.csv",
        ] {
            assert_eq!(read(&a.report_dir, name), read(&b.report_dir, name), "{name}");
        }
        assert!(a.report_dir.join("run.json").exists());
        let again = run_experiment(&cfg, &dir.path().join("a"), false).unwrap_err();
        assert!(matches!(again, Error::Validation(_)));
        run_experiment(&cfg, &dir.path().join("a"), true).unwrap();
        let baselines: AgeBaselines = serde_json::from_str(&read(&a.report_dir, "baselines.json")).unwrap();
        assert!(baselines.model_mae < baselines.fixed.mae);
    }

    #[test]
    fn equalization_flag_changes_only_preparation_and_results() {
        let dir = tempfile::tempdir().unwrap();
        let features = corpus(dir.path(), 90);
        let on = config(Task::Age, &features, ModelKind::Ridge);
        let mut off = on.clone();
        off.equalize_train = false;
        let a = run_experiment(&on, &dir.path().join("r"), false).unwrap();
        let b = run_experiment(&off, &dir.path().join("r"), false).unwrap();
        assert_ne!(a.report_dir, b.report_dir);
        let ma: Metrics = serde_json::from_str(&read(&a.report_dir, "metrics.json")).unwrap();
        let mb: Metrics = serde_json::from_str(&read(&b.report_dir, "metrics.json")).unwrap();
        assert!(ma.dataset.equalize_train && !mb.dataset.equalize_train);
        assert!(mb.dataset.train_utterances > ma.dataset.train_utterances);
        assert_eq!(ma.dataset.test_utterances, mb.dataset.test_utterances);
        let sa: Split = serde_json::from_str(&read(&a.report_dir, "split.json")).unwrap();
        let sb: Split = serde_json::from_str(&read(&b.report_dir, "split.json")).unwrap();
        assert_eq!((&sa.train, &sa.test), (&sb.train, &sb.test));
    }

    #[test]
    fn title_only_speakers_stay_in_training() {
        let dir = tempfile::tempdir().unwrap();
        let spec = LearnableSpec {
            speakers: 60,
            dimension: DIM,
            seed: 8,
            ..Default::default()
        };
        let c = learnable_embeddings(&spec).unwrap();
        let features = dir.path().join("features.csv");
        write_embeddings(fs::File::create(&features).unwrap(), &c.embeddings).unwrap();
        let pairs: Vec<SpeakerAgePair> = c
            .speakers
            .iter()
            .enumerate()
            .map(|(i, s)| SpeakerAgePair {
                speaker_id: s.speaker_id.clone(),
                age: s.age,
                source_triplet: format!("vid{i:05}"),
                tier: if i % 3 == 0 {
                    ReliabilityTier::TitleOnly
                } else {
                    ReliabilityTier::Strict
                },
            })
            .collect();
        let labels = dir.path().join("pairs.csv");
        write_pairs_csv(fs::File::create(&labels).unwrap(), &pairs).unwrap();
        let mut cfg = config(Task::Age, &features, ModelKind::Lasso);
        cfg.age_labels = Some(labels);
        let exp = train_experiment(&cfg).unwrap();
        let title_only: BTreeSet<&SpeakerId> = pairs
            .iter()
            .filter(|p| p.tier == ReliabilityTier::TitleOnly)
            .map(|p| &p.speaker_id)
            .collect();
        assert!(exp.prepared.test.iter().all(|r| !title_only.contains(&r.speaker_id)));
        assert!(exp.split.test.iter().all(|s| !title_only.contains(s)));
        assert_eq!(exp.prepared.meta.train_only_speakers, title_only.len());
        assert_eq!(exp.split.train_only.iter().collect::<BTreeSet<_>>(), title_only);
    }

    #[test]
    fn cv_ties_prefer_larger_lambda() {
        let dir = tempfile::tempdir().unwrap();
        let features = corpus(dir.path(), 40);
        let mut cfg = config(Task::Age, &features, ModelKind::Ols);
        cfg.lambda_grid = None;
        let exp = train_experiment(&cfg).unwrap();
        // OLS ignores λ, so every grid point ties.
        let cv = select_lambda(
            Task::Age,
            ModelKind::Ols,
            &exp.prepared.train,
            &exp.split.folds,
            exp.split.k,
            &[0.5, 2.0, 1.0],
            &[],
        )
        .unwrap();
        assert_eq!(cv.selected, 2.0);
        assert!(exp.cv.is_none());
    }
}
