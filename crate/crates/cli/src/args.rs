use clap::{Args, Parser, Subcommand};
use reademb::model::Modality;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "reademb", version, about = "Word relevance classification from EEG and eye-gaze features")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags accepted by every subcommand. They override values from `--config`.
#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML file with run settings
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for fold training and feature extraction
    #[arg(long, global = true, value_parser = positive_usize)]
    pub jobs: Option<usize>,
    /// Comma-separated subset of eye, eeg, wemb
    #[arg(long, global = true, value_parser = modality_list, value_name = "LIST")]
    pub modalities: Option<ModalityList>,
    /// Histogram bins for conditional entropy
    #[arg(long, global = true, value_parser = bins)]
    pub bins: Option<usize>,
    #[arg(long, global = true, value_parser = fold_count)]
    pub folds: Option<usize>,
    #[arg(long, global = true, value_parser = positive_f64)]
    pub lr: Option<f64>,
    #[arg(long, global = true, value_parser = positive_usize)]
    pub epochs: Option<usize>,
    /// Weight of the BCE term
    #[arg(long, global = true, value_parser = weight)]
    pub lambda1: Option<f64>,
    /// Weight of the MSE term
    #[arg(long, global = true, value_parser = weight)]
    pub lambda2: Option<f64>,
    /// Weight of the soft-F1 term
    #[arg(long, global = true, value_parser = weight)]
    pub lambda3: Option<f64>,
    /// Double the soft-F1 numerator
    #[arg(long, global = true)]
    pub standard_f1: bool,
    /// Exclude words without fixations from training and scoring
    #[arg(long, global = true)]
    pub mask_zero_fixation: bool,
    /// Divide BCE and MSE by the full sample count, masked entries included
    #[arg(long, global = true)]
    pub literal_n: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-class dataset
    Synth(SynthArgs),
    /// Reduce raw EEG epochs to conditional-entropy features
    Extract(ExtractArgs),
    /// Per-subject k-fold cross-validation
    Cv(CvArgs),
    /// Train one model on a whole dataset
    Train(TrainArgs),
    /// Score a checkpoint on a dataset
    Eval(EvalArgs),
    /// Dump encoder outputs for every valid word
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output JSONL path; EEG goes to a sidecar next to it
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    pub subjects: usize,
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    pub sentences: usize,
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pub words: usize,
    /// Class separation in noise standard deviations
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true, value_parser = non_negative_f64)]
    pub delta: f64,
    #[arg(long, default_value_t = 5460, value_parser = positive_usize)]
    pub eeg_dim: usize,
    #[arg(long, value_parser = positive_usize)]
    pub wemb_dim: Option<usize>,
    /// Write EEG vectors inline instead of into a sidecar
    #[arg(long)]
    pub inline: bool,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// JSONL file whose words reference raw EEG epochs
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// L1-normalise each eye-gaze feature within its sentence
    #[arg(long)]
    pub l1_eye: bool,
    #[arg(long)]
    pub inline: bool,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory receiving metrics.json, roc.csv and fold checkpoints
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_checkpoints: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory receiving model.json, model.bin and train.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory receiving metrics.json and roc.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Embedding sidecar path; the label manifest is written beside it as .json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalityList(pub Vec<Modality>);

fn modality_list(s: &str) -> Result<ModalityList, String> {
    Modality::parse_list(s).map(ModalityList).map_err(|e| e.to_string())
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn bins(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        Ok(_) => Err("need at least 2 bins".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn fold_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        Ok(_) => Err("need at least 2 folds".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".into())
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    finite(s).and_then(|v| if v > 0.0 { Ok(v) } else { Err("must be positive".into()) })
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    finite(s).and_then(|v| if v >= 0.0 { Ok(v) } else { Err("must be non-negative".into()) })
}

fn weight(s: &str) -> Result<f64, String> {
    non_negative_f64(s)
}
