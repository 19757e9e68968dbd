use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (stage format version 1)");

#[derive(Debug, Parser)]
#[command(name = "quizdim", version = VERSION, about = "Measure question difficulty: obscurity, opacity, answer density")]
pub struct Cli {
    /// Worker threads (default: available cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a raw clue dump, filter and label it, and write a corpus file.
    Ingest(IngestArgs),
    /// Compute opacity, obscurity, density and question features per record.
    Score(ScoreArgs),
    /// Statistical reports over a scored corpus.
    Analyze(AnalyzeArgs),
    /// Fit the regression suite (models I-IV) on a scored corpus.
    Regress(RegressArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Crossword,
    Jeopardy,
}

impl From<SourceArg> for quizdim::corpus::Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::Crossword => quizdim::corpus::Source::Crossword,
            SourceArg::Jeopardy => quizdim::corpus::Source::Jeopardy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum EmbeddingFormatArg {
    /// Binary for `.bin` files, text otherwise.
    #[default]
    Auto,
    Binary,
    Text,
}

#[derive(Debug, Args)]
pub struct EmbeddingArgs {
    /// word2vec-format embedding file.
    #[arg(long)]
    pub embeddings: PathBuf,

    #[arg(long, value_enum, default_value_t = EmbeddingFormatArg::Auto)]
    pub embedding_format: EmbeddingFormatArg,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub source: SourceArg,

    /// Raw dump: delimited text for crosswords, JSON for Jeopardy.
    #[arg(long)]
    pub input: PathBuf,

    #[command(flatten)]
    pub embedding: EmbeddingArgs,

    /// Tab-separated `word<TAB>per_million` frequency list.
    #[arg(long)]
    pub frequencies: PathBuf,

    /// `token<TAB>TAG` lines; only noun, verb and adjective tokens are kept.
    #[arg(long)]
    pub pos_annotations: Option<PathBuf>,

    /// One stopword per line, replacing the built-in list.
    #[arg(long)]
    pub stoplist: Option<PathBuf>,

    /// Substring marking abbreviation clues; repeat to give several.
    #[arg(long = "abbreviation-marker")]
    pub abbreviation_markers: Vec<String>,

    /// Corpus file to write.
    #[arg(long)]
    pub out: PathBuf,

    /// Exclusion report (JSON) to write.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityVocabArg {
    Corpus,
    Top100k,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndependentArg {
    CosineMean,
    AngleMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OverlapArg {
    Shorter,
    Longer,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Corpus file from `ingest`.
    #[arg(long)]
    pub corpus: PathBuf,

    #[command(flatten)]
    pub embedding: EmbeddingArgs,

    #[arg(long)]
    pub frequencies: PathBuf,

    /// Words searched for each answer's nearest neighbour.
    #[arg(long, value_enum, default_value_t = DensityVocabArg::Top100k)]
    pub density_vocab: DensityVocabArg,

    /// Lexicon words added to the density search by `top100k`.
    #[arg(long, default_value_t = 100_000)]
    pub top_words: usize,

    /// How per-clue-word similarities are averaged in the independent model.
    #[arg(long, value_enum, default_value_t = IndependentArg::CosineMean)]
    pub independent: IndependentArg,

    /// Letter-overlap normalization for stem exclusion.
    #[arg(long, value_enum, default_value_t = OverlapArg::Shorter)]
    pub overlap_measure: OverlapArg,

    #[arg(long, default_value_t = 0.9)]
    pub overlap_threshold: f64,

    /// Comma-separated conjunction list.
    #[arg(long, value_delimiter = ',')]
    pub conjunctions: Option<Vec<String>>,

    /// Scored file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Groups,
    Null,
    Bins,
    Kde,
    Medians,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Synergistic,
    Independent,
    Keyword,
}

impl From<ModelArg> for quizdim::analysis::OpacityModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Synergistic => quizdim::analysis::OpacityModel::Synergistic,
            ModelArg::Independent => quizdim::analysis::OpacityModel::Independent,
            ModelArg::Keyword => quizdim::analysis::OpacityModel::Keyword,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Scored file from `score`.
    #[arg(long)]
    pub scored: PathBuf,

    #[arg(long, value_enum)]
    pub report: ReportKind,

    /// Master seed for every randomized step.
    #[arg(long, default_value_t = quizdim::rng::DEFAULT_SEED)]
    pub seed: u64,

    /// Null-model permutations.
    #[arg(long, default_value_t = quizdim::analysis::DEFAULT_NULL_REPETITIONS)]
    pub repetitions: usize,

    /// Bootstrap resamples for standard errors.
    #[arg(long, default_value_t = quizdim::analysis::DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,

    /// Opacity models for the null report (default: all three).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub models: Vec<ModelArg>,

    /// KDE grid points per axis.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,

    /// Embeddings the scored file was built from (required by `null`).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = EmbeddingFormatArg::Auto)]
    pub embedding_format: EmbeddingFormatArg,

    /// Report file (JSON) to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RowPolicyArg {
    PerModel,
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QLengthArg {
    Raw,
    Content,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[arg(long)]
    pub scored: PathBuf,

    /// Records of this source are fitted.
    #[arg(long, value_enum)]
    pub dataset: SourceArg,

    /// Rows used by each model.
    #[arg(long, value_enum, default_value_t = RowPolicyArg::PerModel)]
    pub rows: RowPolicyArg,

    /// Token count used for question length.
    #[arg(long, value_enum, default_value_t = QLengthArg::Raw)]
    pub q_length: QLengthArg,

    /// Plain-text regression table to write.
    #[arg(long)]
    pub out: PathBuf,

    /// Also write the coefficients as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// Also write the full fit as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}
