use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "voxmeta",
    version,
    about = "Speaker metadata enrichment and age/gender evaluation pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// JSON file with defaults for the global options.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,

    /// Cache directory for knowledge-source responses.
    #[arg(long, global = true, env = "VOXMETA_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize an input file, or fetch source records.
    Ingest(IngestArgs),
    /// Three-source consensus for gender and birth year.
    Consensus(ConsensusArgs),
    /// Derive <video, speaker, age> triplets and one age per speaker.
    DeriveAge(DeriveAgeArgs),
    /// Tabulate speaker ages into intervals.
    Histogram(HistogramArgs),
    /// Speaker-disjoint holdout split with cross-validation folds.
    Split(SplitArgs),
    /// Fit an age regressor or gender classifier.
    Train(TrainArgs),
    /// Score a saved model on labeled embeddings.
    Evaluate(EvaluateArgs),
    /// Guessing baselines for age MAE.
    Baseline(BaselineArgs),
    /// Run a full experiment from a config file and archive the report.
    Report(ReportArgs),
    /// Write synthetic data for demos and tests.
    GenerateSynthetic(SyntheticArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IngestKind {
    Source,
    Videos,
    Embeddings,
    Fetch,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub kind: IngestKind,
    /// gkg, dbpedia or wikidata (source and fetch kinds).
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Roster CSV `speaker_id,name,gender` (fetch kind).
    #[arg(long)]
    pub roster: Option<PathBuf>,
    /// Directory of `<person key>.json` responses (fetch kind).
    #[arg(long)]
    pub mirror: Option<PathBuf>,
    /// Normalized output, re-ingestible.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    /// Reference year for plausibility checks (default: current year).
    #[arg(long)]
    pub current_year: Option<i32>,
}

#[derive(Debug, Args)]
pub struct ConsensusArgs {
    #[arg(long)]
    pub roster: PathBuf,
    #[arg(long)]
    pub gkg: PathBuf,
    #[arg(long)]
    pub dbpedia: PathBuf,
    #[arg(long)]
    pub wikidata: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Relabeled speakers versus the roster's original gender.
    #[arg(long)]
    pub divergence: Option<PathBuf>,
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[arg(long)]
    pub current_year: Option<i32>,
}

#[derive(Debug, Args)]
pub struct DeriveAgeArgs {
    #[arg(long)]
    pub videos: PathBuf,
    #[arg(long)]
    pub consensus: PathBuf,
    /// Triplet CSV `youtube_id,voxceleb_id,age,tier`.
    #[arg(long)]
    pub out: PathBuf,
    /// One age per speaker, `voxceleb_id,age,youtube_id,tier`.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[arg(long)]
    pub current_year: Option<i32>,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    /// Speaker/age pairs CSV.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Interval edges, e.g. 0,10,20,...,92.
    #[arg(long, value_delimiter = ',')]
    pub edges: Option<Vec<u32>>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Embedding CSV; its speakers are split.
    #[arg(long, required_unless_present = "pairs")]
    pub features: Option<PathBuf>,
    /// Speaker/age pairs CSV; title-only speakers go to training only.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Age,
    Gender,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Ols,
    Ridge,
    Lasso,
    Logistic,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub age_labels: Option<PathBuf>,
    /// Fixed λ instead of cross-validation.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Train on every utterance instead of an equal number per speaker.
    #[arg(long)]
    pub no_equalize_train: bool,
    #[arg(long)]
    pub n_per_speaker: Option<usize>,
    #[arg(long)]
    pub balance_gender: Option<bool>,
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Model JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the split actually used.
    #[arg(long)]
    pub split_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Restrict scoring to the test speakers of this split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Per-age MAE curve CSV (age task).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Empirical,
    Uniform,
    Fixed,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub kind: BaselineArg,
    /// CSV with an `age` column.
    #[arg(long)]
    pub ages: PathBuf,
    #[arg(long)]
    pub repetitions: Option<u64>,
    /// Uniform range `min,max` (default: the test ages' own range).
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub range: Option<Vec<u32>>,
    /// Draw real-valued uniform guesses instead of whole years.
    #[arg(long)]
    pub continuous: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub experiment: PathBuf,
    /// Directory holding report directories.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SyntheticKind {
    /// Ages with the published per-interval speaker counts.
    Ages,
    /// Embeddings with a planted age and gender signal.
    Embeddings,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long, value_enum)]
    pub kind: SyntheticKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub speakers: Option<usize>,
    #[arg(long)]
    pub dimension: Option<usize>,
    #[arg(long)]
    pub min_utterances: Option<usize>,
    #[arg(long)]
    pub max_utterances: Option<usize>,
    #[arg(long)]
    pub age_noise: Option<f64>,
}
