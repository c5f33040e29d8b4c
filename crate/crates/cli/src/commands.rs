use crate::args::{CvArgs, EvalArgs, ExportArgs, ExtractArgs, SynthArgs, TrainArgs};
use crate::config::RunConfig;
use anyhow::Context;
use reademb::dataio::{
    load_samples, normalize_eye, save_samples, synth_generate, Dataset, EegStorage, LoadOptions,
    SynthSpec,
};
use reademb::fsutil::write_bytes_atomic;
use reademb::harness::{
    cross_validate_subject_models, evaluate_dataset, export_embeddings, fit, manifest_path,
    Confusion, MetricsReport, RocPoint, TrainReport,
};
use reademb::model::{load_checkpoint, save_checkpoint, ReadingModel};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Envelope of every JSON file the tool writes.
#[derive(Serialize)]
struct Output<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    input: &'a Path,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, command: &'static str, input: &Path, cfg: &RunConfig, body: T) -> anyhow::Result<()> {
    let out = Output {
        tool: "reademb",
        version: env!("CARGO_PKG_VERSION"),
        command,
        input,
        config: cfg,
        body,
    };
    let mut bytes = serde_json::to_vec_pretty(&out)?;
    bytes.push(b'\n');
    write_bytes_atomic(path, &bytes)?;
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Loads a dataset and records its feature widths in the run config.
fn load(path: &Path, cfg: &RunConfig) -> anyhow::Result<(Dataset, RunConfig)> {
    let ds = load_samples(path, &cfg.load_options())?;
    let mut cfg = cfg.clone();
    let model = &mut cfg.train.model;
    model.eye_dim = ds.dims.eye;
    model.eeg_dim = ds.dims.eeg;
    if let Some(d) = ds.dims.wemb {
        model.wemb_dim = d;
    }
    Ok((ds, cfg))
}

pub fn synth(args: &SynthArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let spec = SynthSpec {
        subjects: args.subjects,
        n_sentences: args.sentences,
        words_per_sentence: args.words,
        delta: args.delta,
        eeg_dim: args.eeg_dim,
        wemb_dim: args.wemb_dim,
        seed: cfg.train.seed,
    };
    let ds = synth_generate(&spec)?;
    save_samples(&ds, &args.out, storage(args.inline))?;
    println!(
        "wrote {} words in {} sentences ({} subject(s)) to {}",
        ds.word_count(),
        ds.sentences.len(),
        ds.subjects().len(),
        args.out.display()
    );
    Ok(())
}

fn storage(inline: bool) -> EegStorage {
    if inline {
        EegStorage::Inline
    } else {
        EegStorage::Sidecar
    }
}

pub fn extract(args: &ExtractArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let opts = LoadOptions {
        require_raw: true,
        ..cfg.load_options()
    };
    let mut ds = load_samples(&args.input, &opts)?;
    if args.l1_eye {
        normalize_eye(&mut ds)?;
    }
    save_samples(&ds, &args.out, storage(args.inline))?;
    println!(
        "extracted {} words: {} channels -> {} features ({} bins), wrote {}",
        ds.word_count(),
        ds.header.eeg_channels.unwrap_or(0),
        ds.dims.eeg,
        cfg.bins,
        args.out.display()
    );
    Ok(())
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn cv(args: &CvArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let (ds, cfg) = load(&args.data, cfg)?;
    let cfg = &cfg;
    let mut subjects = Vec::new();
    let mut checkpoints = Vec::new();
    for subject in ds.subjects() {
        let (report, models) = cross_validate_subject_models(&ds.for_subject(&subject), &cfg.train)
            .with_context(|| format!("subject {subject}"))?;
        println!(
            "{}  accuracy {:.4}  auc {:.4}  ({} folds, {} test words)",
            report.subject,
            report.mean_accuracy,
            report.mean_auc,
            report.folds.len(),
            report.confusion.total()
        );
        for (fold, model) in models.into_iter().enumerate() {
            checkpoints.push((format!("{}-fold{fold}.json", file_safe(&subject)), model));
        }
        subjects.push(report);
    }
    let report = MetricsReport::from_subjects(subjects)?;

    create_dir(&args.out)?;
    if !args.no_checkpoints {
        let dir = args.out.join("checkpoints");
        create_dir(&dir)?;
        for (name, model) in &checkpoints {
            save_checkpoint(model, &cfg.train.loss, &dir.join(name))?;
        }
    }
    let metrics = args.out.join("metrics.json");
    write_json(&metrics, "cv", &args.data, cfg, Metrics { metrics: &report })?;
    report.write_roc_csv(&args.out.join("roc.csv"))?;
    println!(
        "mean accuracy {:.4}  mean auc {:.4} over {} subject(s); wrote {}",
        report.mean_accuracy,
        report.mean_auc,
        report.subjects.len(),
        metrics.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Metrics<'a> {
    metrics: &'a MetricsReport,
}

#[derive(Serialize)]
struct Training<'a> {
    checkpoint: PathBuf,
    training: &'a TrainReport,
}

pub fn train(args: &TrainArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let (ds, cfg) = load(&args.data, cfg)?;
    let cfg = &cfg;
    let (model, report) = fit(&ds, &cfg.train)?;
    create_dir(&args.out)?;
    let checkpoint = args.out.join("model.json");
    save_checkpoint(&model, &cfg.train.loss, &checkpoint)?;
    write_json(
        &args.out.join("train.json"),
        "train",
        &args.data,
        cfg,
        Training { checkpoint: PathBuf::from("model.json"), training: &report },
    )?;
    println!(
        "trained {} epochs, final loss {:.6}; wrote {}",
        report.epochs_run(),
        report.final_loss(),
        checkpoint.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalBody<'a> {
    checkpoint: &'a Path,
    accuracy: f64,
    auc: f64,
    test_samples: usize,
    confusion: Confusion,
    roc: Vec<RocPoint>,
}

/// Loads a checkpoint; the run config takes over its model and loss settings.
fn restore(path: &Path, cfg: &RunConfig) -> anyhow::Result<(ReadingModel, RunConfig)> {
    let (model, loss) = load_checkpoint(path)?;
    let mut cfg = cfg.clone();
    cfg.train.model = model.config().clone();
    cfg.train.loss = loss;
    Ok((model, cfg))
}

pub fn eval(args: &EvalArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let (model, cfg) = restore(&args.checkpoint, cfg)?;
    let cfg = &cfg;
    let (ds, _) = load(&args.data, cfg)?;
    let eval = evaluate_dataset(&model, &ds, cfg.train.balance_test, cfg.train.seed)?;
    let (roc, auc) = eval.roc_auc()?;
    create_dir(&args.out)?;
    let mut csv = String::from("threshold,fpr,tpr\n");
    for p in &roc {
        let t = p.threshold.map_or_else(|| "inf".to_string(), |t| t.to_string());
        csv.push_str(&format!("{t},{},{}\n", p.fpr, p.tpr));
    }
    let body = EvalBody {
        checkpoint: &args.checkpoint,
        accuracy: eval.accuracy(),
        auc,
        test_samples: eval.scores.len(),
        confusion: eval.confusion,
        roc,
    };
    let metrics = args.out.join("metrics.json");
    write_json(&metrics, "eval", &args.data, cfg, &body)?;
    write_bytes_atomic(&args.out.join("roc.csv"), csv.as_bytes())?;
    println!(
        "accuracy {:.4}  auc {:.4} on {} words; wrote {}",
        body.accuracy,
        body.auc,
        body.test_samples,
        metrics.display()
    );
    Ok(())
}

pub fn export(args: &ExportArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let (model, _) = restore(&args.checkpoint, cfg)?;
    let (ds, _) = load(&args.data, cfg)?;
    let manifest = export_embeddings(&model, &ds, &args.out)?;
    println!(
        "exported {} rows x {} dims to {} (labels in {})",
        manifest.rows,
        manifest.dim,
        args.out.display(),
        manifest_path(&args.out).display()
    );
    Ok(())
}
