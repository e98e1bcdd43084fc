mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Parser;
use serde::Serialize;
use signet::eval::{
    emit_report, evaluate_model, history_csv, run_sweep, top_confusions, write_confusion_files, ConfusionPair,
    SweepGrid,
};
use signet::io::write_atomic;
use signet::manifest::{load_manifest, DatasetManifest, LabelSet, Split};
use signet::nets::{
    read_checkpoint, train_with_holdout, write_checkpoint, Checkpoint, CheckpointMeta, LabeledSequence,
};
use signet::pipeline::{featurize_manifest, parse_mock, sample_split, BackendChoice, FeatureTable, FeaturizeOptions};
use signet::synth::{write_dataset, SynthConfig};

use args::{Cli, Command, DataArgs, EvalArgs, SplitName, SweepArgs, SynthArgs, TrainArgs};

/// A failure and the exit code it maps to.
enum Failure {
    /// Bad flags, unreadable manifest, invalid configuration: exit 2.
    Usage(anyhow::Error),
    /// Anything that went wrong while running: exit 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<signet::Error>() {
            Some(signet::Error::Config(_)) => Failure::Usage(e),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<signet::Error> for Failure {
    fn from(e: signet::Error) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Featurize(a) => featurize(a.data).map(|_| ()),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn synth(a: SynthArgs) -> CmdResult {
    let cfg = SynthConfig {
        classes: a.classes,
        train_per_class: a.train_per_class,
        test_per_class: a.test_per_class,
        width: a.size,
        height: a.size,
        min_frames: a.min_frames,
        max_frames: a.max_frames,
        seed: a.seed,
    };
    let m = write_dataset(&cfg, &a.out)?;
    eprintln!("wrote {} clips in {} classes to {}", m.len(), m.labels().len(), a.out.display());
    Ok(())
}

struct Loaded {
    manifest: DatasetManifest,
    table: FeatureTable,
    preprocess_tag: Option<String>,
}

fn load_dataset(d: &DataArgs) -> Result<(DatasetManifest, PathBuf), Failure> {
    if d.workers == 0 {
        return Err(Failure::Usage(anyhow!("--workers must be at least 1")));
    }
    let manifest = load_manifest(&d.manifest)
        .with_context(|| format!("cannot load manifest {}", d.manifest.display()))
        .map_err(Failure::Usage)?;
    let root = d
        .root
        .clone()
        .unwrap_or_else(|| d.manifest.parent().map(Path::to_path_buf).unwrap_or_default());
    Ok((manifest, root))
}

fn backend_choice(d: &DataArgs) -> Result<BackendChoice, Failure> {
    Ok(match &d.mock_features {
        Some(spec) => parse_mock(spec)?,
        None => BackendChoice::resolve(&d.backend, &d.model_dir)?,
    })
}

fn featurize(d: DataArgs) -> Result<Loaded, Failure> {
    let (manifest, root) = load_dataset(&d)?;
    let backend = backend_choice(&d)?;
    let subtractor = d.subtractor();
    if let Some(s) = &subtractor {
        s.validate()?;
    }
    let opts = FeaturizeOptions {
        preprocess: subtractor,
        cache_dir: d.cache_dir.clone().unwrap_or_else(|| root.join(".signet-cache")),
        workers: d.workers,
    };
    let table = featurize_manifest(&manifest, &root, &backend, &opts)?;
    eprintln!(
        "{} clips featurized as {} (cache {})",
        table.sequences.len(),
        table.feature_key,
        opts.cache_dir.display()
    );
    Ok(Loaded {
        manifest,
        table,
        preprocess_tag: subtractor.map(|s| s.tag()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

#[derive(Serialize)]
struct TrainSummary {
    head: String,
    backend: String,
    frames_per_clip: usize,
    train_accuracy: f64,
    test_accuracy: Option<f64>,
    initial_loss: f64,
    final_loss: f64,
    epochs_run: usize,
}

fn train(a: TrainArgs) -> CmdResult {
    let cfg = a.hyper.train_config();
    cfg.validate()?;
    if a.frames == 0 {
        return Err(Failure::Usage(anyhow!("--frames must be at least 1")));
    }
    let loaded = featurize(a.data)?;
    let (train_set, test_set) = sample_split(&loaded.manifest, &loaded.table, a.frames)?;
    let holdout = (!test_set.is_empty()).then_some(test_set.as_slice());
    let k = loaded.manifest.labels().len();
    let (model, history) = train_with_holdout(a.heads, &train_set, holdout, k, &cfg)?;

    create_dir(&a.out)?;
    let ckpt = Checkpoint {
        model,
        config: cfg,
        meta: Some(CheckpointMeta {
            labels: loaded.manifest.labels().names().to_vec(),
            backend: loaded.table.feature_key.clone(),
            frames_per_clip: a.frames,
            preprocess: loaded.preprocess_tag,
        }),
    };
    write_checkpoint(&a.out.join("model.ckpt"), &ckpt)?;
    write_atomic(&a.out.join("history.csv"), &history_csv(&history))?;
    let last = history.epochs.last().expect("at least one epoch");
    let summary = TrainSummary {
        head: a.heads.to_string(),
        backend: loaded.table.feature_key,
        frames_per_clip: a.frames,
        train_accuracy: last.train_accuracy,
        test_accuracy: last.test_accuracy,
        initial_loss: history.initial_loss,
        final_loss: last.loss,
        epochs_run: history.epochs.len(),
    };
    write_json(&a.out.join("train.json"), &summary)?;
    eprintln!(
        "{} N={}: train accuracy {:.3}, test accuracy {}",
        summary.head,
        a.frames,
        summary.train_accuracy,
        summary.test_accuracy.map(|t| format!("{t:.3}")).unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    split: String,
    samples: usize,
    accuracy: f64,
    backend: String,
    frames_per_clip: usize,
    top_confusions: Vec<ConfusionPair>,
    empty_classes: Vec<String>,
}

fn eval(a: EvalArgs) -> CmdResult {
    let ckpt = read_checkpoint(&a.checkpoint).map_err(|e| Failure::Usage(e.into()))?;
    let meta = ckpt
        .meta
        .clone()
        .ok_or_else(|| Failure::Usage(anyhow!("{} has no dataset metadata", a.checkpoint.display())))?;
    let loaded = featurize(a.data)?;
    if loaded.table.feature_key != meta.backend {
        return Err(Failure::Usage(anyhow!(
            "checkpoint was trained on {} features but the flags select {}",
            meta.backend,
            loaded.table.feature_key
        )));
    }
    if loaded.manifest.labels().names() != meta.labels.as_slice() {
        return Err(Failure::Usage(anyhow!("manifest labels differ from the checkpoint's label set")));
    }
    let (train_set, test_set) = sample_split(&loaded.manifest, &loaded.table, meta.frames_per_clip)?;
    let data: Vec<LabeledSequence> = match a.split {
        SplitName::Train => train_set,
        SplitName::Test => test_set,
        SplitName::All => train_set.into_iter().chain(test_set).collect(),
    };
    if data.is_empty() {
        return Err(Failure::Usage(anyhow!("the selected split has no clips")));
    }
    let labels = LabelSet::from_names(meta.labels.iter().cloned())?;
    let (_, accuracy, cm) = evaluate_model(&ckpt.model, &data, &labels)?;
    create_dir(&a.out)?;
    write_confusion_files(&a.out, "eval", &cm)?;
    let norm = signet::eval::normalize_rows(&cm);
    let summary = EvalSummary {
        split: match a.split {
            SplitName::Train => Split::Train.to_string(),
            SplitName::Test => Split::Test.to_string(),
            SplitName::All => "all".into(),
        },
        samples: data.len(),
        accuracy,
        backend: meta.backend,
        frames_per_clip: meta.frames_per_clip,
        top_confusions: top_confusions(&cm, 5),
        empty_classes: norm.zero_rows.iter().map(|&i| cm.labels[i].clone()).collect(),
    };
    write_json(&a.out.join("metrics.json"), &summary)?;
    eprintln!("{} accuracy {:.3} on {} clips", summary.split, accuracy, data.len());
    Ok(())
}

fn sweep(a: SweepArgs) -> CmdResult {
    let cfg = a.hyper.train_config();
    cfg.validate()?;
    let grid = SweepGrid {
        frames: a.frames.clone(),
        heads: a.heads.clone(),
    };
    grid.validate()?;
    let workers = a.data.workers;
    let loaded = featurize(a.data)?;
    let report = run_sweep(&loaded.manifest, &loaded.table, &grid, &cfg, workers)?;
    emit_report(&report, &a.out)?;
    for cell in &report.cells {
        match (&cell.metrics, &cell.error) {
            (Some(m), _) => eprintln!(
                "{:<5} N={:<3} train {:.3}  test {:.3}",
                cell.head.as_str(),
                cell.frames_per_clip,
                m.train_accuracy,
                m.test_accuracy
            ),
            (None, Some(e)) => eprintln!("{:<5} N={:<3} failed: {e}", cell.head.as_str(), cell.frames_per_clip),
            (None, None) => {}
        }
    }
    let failed = report.failed_cells().count();
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!(
            "{failed} of {} sweep cells failed; completed cells were written to {}",
            report.cells.len(),
            a.out.display()
        )));
    }
    Ok(())
}
