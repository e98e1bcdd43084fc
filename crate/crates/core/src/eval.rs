//! Metrics, confusion matrices, the sequence-length × head sweep and report
//! files.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{checksum64, read_file, write_atomic};
use crate::manifest::{DatasetManifest, LabelSet};
use crate::nets::{evaluate, predict, train_with_holdout, HeadKind, LabeledSequence, Model, TrainConfig, TrainHistory};
use crate::pipeline::{sample_split, FeatureTable};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

/// Fraction of positions where `preds` and `labels` agree.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::dims("prediction count", labels.len(), preds.len()));
    }
    if preds.is_empty() {
        return Err(Error::Invalid("accuracy of an empty prediction set".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Counts with rows = true class and columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`, or `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], label_set: &LabelSet) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::dims("prediction count", labels.len(), preds.len()));
    }
    let k = label_set.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= k || l >= k {
            return Err(Error::Invalid(format!("class id {} out of range for {k} classes", p.max(l))));
        }
        counts[l][p] += 1;
    }
    Ok(ConfusionMatrix {
        labels: label_set.names().to_vec(),
        counts,
    })
}

/// Row-normalized confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedConfusion {
    pub labels: Vec<String>,
    pub rates: Vec<Vec<f64>>,
    /// Rows without any samples; they stay all-zero.
    pub zero_rows: Vec<usize>,
}

pub fn normalize_rows(m: &ConfusionMatrix) -> NormalizedConfusion {
    let mut zero_rows = Vec::new();
    let rates = m
        .counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                zero_rows.push(i);
                vec![0.0; row.len()]
            } else {
                row.iter().map(|&c| c as f64 / sum as f64).collect()
            }
        })
        .collect();
    NormalizedConfusion {
        labels: m.labels.clone(),
        rates,
        zero_rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub true_label: String,
    pub predicted_label: String,
    pub rate: f64,
}

/// The `k` largest off-diagonal normalized rates, ties broken by
/// (row, column). Zero rates are never listed.
pub fn top_confusions(m: &ConfusionMatrix, k: usize) -> Vec<ConfusionPair> {
    let norm = normalize_rows(m);
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for (i, row) in norm.rates.iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            if i != j && r > 0.0 {
                cells.push((i, j, r));
            }
        }
    }
    cells.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    cells
        .into_iter()
        .take(k)
        .map(|(i, j, rate)| ConfusionPair {
            true_label: m.labels[i].clone(),
            predicted_label: m.labels[j].clone(),
            rate,
        })
        .collect()
}

/// Predictions of `model` on `data`, their accuracy and confusion matrix.
pub fn evaluate_model(model: &Model, data: &[LabeledSequence], labels: &LabelSet) -> Result<(Vec<usize>, f64, ConfusionMatrix)> {
    let mut preds = Vec::with_capacity(data.len());
    for s in data {
        preds.push(predict(model, &s.seq)?.0);
    }
    let truth: Vec<usize> = data.iter().map(|s| s.label).collect();
    let acc = accuracy(&preds, &truth)?;
    let cm = confusion(&preds, &truth, labels)?;
    Ok((preds, acc, cm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub frames: Vec<usize>,
    pub heads: Vec<HeadKind>,
}

impl SweepGrid {
    /// Cells in report order: sequence length major, head minor.
    pub fn cells(&self) -> Vec<(usize, HeadKind)> {
        self.frames
            .iter()
            .flat_map(|&n| self.heads.iter().map(move |&h| (n, h)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() || self.heads.is_empty() {
            return Err(Error::Config("sweep grid needs at least one sequence length and one head".into()));
        }
        if self.frames.contains(&0) {
            return Err(Error::Config("sequence lengths must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-cell training seed: XXH64 of `"<seed>/<features>/<head>/<frames>"`.
pub fn cell_seed(seed: u64, feature_key: &str, head: HeadKind, frames: usize) -> u64 {
    checksum64(format!("{seed}/{feature_key}/{head}/{frames}").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub history: TrainHistory,
    /// Test-split confusion counts.
    pub confusion: ConfusionMatrix,
    /// Labels with no test samples (all-zero confusion rows).
    pub empty_test_classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub backend: String,
    pub head: HeadKind,
    pub frames_per_clip: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<CellMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepCell {
    /// File-name stem for the cell's CSV and PGM outputs.
    pub fn stem(&self) -> String {
        format!("{}_{}_n{}", self.backend, self.head, self.frames_per_clip)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub labels: Vec<String>,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn failed_cells(&self) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    pub fn cell(&self, head: HeadKind, frames: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.head == head && c.frames_per_clip == frames)
    }
}

fn run_cell(
    manifest: &DatasetManifest,
    features: &FeatureTable,
    frames: usize,
    head: HeadKind,
    cfg: &TrainConfig,
) -> Result<CellMetrics> {
    let (train, test) = sample_split(manifest, features, frames)?;
    let k = manifest.labels().len();
    let holdout = (!test.is_empty()).then_some(test.as_slice());
    let (model, history) = train_with_holdout(head, &train, holdout, k, cfg)?;
    let (_, train_accuracy) = evaluate(&model, &train)?;
    let (test_accuracy, cm) = if test.is_empty() {
        (0.0, confusion(&[], &[], manifest.labels())?)
    } else {
        let (_, acc, cm) = evaluate_model(&model, &test, manifest.labels())?;
        (acc, cm)
    };
    let empty_test_classes = normalize_rows(&cm).zero_rows.iter().map(|&i| cm.labels[i].clone()).collect();
    Ok(CellMetrics {
        train_accuracy,
        test_accuracy,
        epochs_run: history.epochs.len(),
        final_loss: history.final_loss().unwrap_or(history.initial_loss),
        history,
        confusion: cm,
        empty_test_classes,
    })
}

/// Trains and evaluates every grid cell on `workers` threads.
///
/// Each cell samples N rows from the cached full-clip features, trains on
/// the train split and evaluates both splits. The cell's seed comes from
/// [`cell_seed`], so results do not depend on scheduling. A failing cell is
/// recorded with its error and does not stop the others.
pub fn run_sweep(
    manifest: &DatasetManifest,
    features: &FeatureTable,
    grid: &SweepGrid,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<SweepReport> {
    grid.validate()?;
    cfg.validate()?;
    if workers == 0 {
        return Err(Error::Config("worker count must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let cells: Vec<SweepCell> = pool.install(|| {
        grid.cells()
            .into_par_iter()
            .map(|(frames, head)| {
                let seed = cell_seed(cfg.seed, &features.feature_key, head, frames);
                let cell_cfg = TrainConfig { seed, ..cfg.clone() };
                let outcome = run_cell(manifest, features, frames, head, &cell_cfg);
                let (metrics, error) = match outcome {
                    Ok(m) => (Some(m), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                SweepCell {
                    backend: features.feature_key.clone(),
                    head,
                    frames_per_clip: frames,
                    seed,
                    metrics,
                    error,
                }
            })
            .collect()
    });
    Ok(SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        labels: manifest.labels().names().to_vec(),
        seed: cfg.seed,
        train_config: cfg.clone(),
        cells,
    })
}

pub fn report_to_json(report: &SweepReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report(text: &str) -> Result<SweepReport> {
    let report: SweepReport =
        serde_json::from_str(text).map_err(|e| Error::Invalid(format!("report JSON: {e}")))?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported report schema version {}",
            report.schema_version
        )));
    }
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<SweepReport> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Invalid(format!("{} is not UTF-8", path.display())))?;
    parse_report(&text)
}

fn csv_bytes(rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// `epoch,loss,train_acc,test_acc`, one row per epoch.
pub fn history_csv(history: &TrainHistory) -> Vec<u8> {
    let mut rows = vec![vec!["epoch".into(), "loss".into(), "train_acc".into(), "test_acc".into()]];
    for e in &history.epochs {
        rows.push(vec![
            e.epoch.to_string(),
            e.loss.to_string(),
            e.train_accuracy.to_string(),
            e.test_accuracy.map(|a| a.to_string()).unwrap_or_default(),
        ]);
    }
    csv_bytes(rows)
}

/// Counts with a header row of predicted labels and a leading column of
/// true labels.
pub fn confusion_csv(m: &ConfusionMatrix) -> Vec<u8> {
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(m.labels.iter().cloned());
    let mut rows = vec![header];
    for (label, row) in m.labels.iter().zip(&m.counts) {
        let mut r = vec![label.clone()];
        r.extend(row.iter().map(|c| c.to_string()));
        rows.push(r);
    }
    csv_bytes(rows)
}

pub fn normalized_csv(n: &NormalizedConfusion) -> Vec<u8> {
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(n.labels.iter().cloned());
    let mut rows = vec![header];
    for (label, row) in n.labels.iter().zip(&n.rates) {
        let mut r = vec![label.clone()];
        r.extend(row.iter().map(|v| v.to_string()));
        rows.push(r);
    }
    csv_bytes(rows)
}

/// Binary PGM (P5) with one pixel per cell, intensity `round(255 · rate)`.
pub fn confusion_pgm(n: &NormalizedConfusion) -> Vec<u8> {
    let k = n.rates.len();
    let mut out = format!("P5\n{k} {k}\n255\n").into_bytes();
    for row in &n.rates {
        out.extend(row.iter().map(|&r| (255.0 * r.clamp(0.0, 1.0)).round() as u8));
    }
    out
}

/// Writes the confusion CSVs and heatmap for one evaluation as
/// `<stem>.confusion.csv`, `<stem>.confusion_normalized.csv` and
/// `<stem>.confusion.pgm`.
pub fn write_confusion_files(dir: &Path, stem: &str, m: &ConfusionMatrix) -> Result<()> {
    let norm = normalize_rows(m);
    write_atomic(&dir.join(format!("{stem}.confusion.csv")), &confusion_csv(m))?;
    write_atomic(&dir.join(format!("{stem}.confusion_normalized.csv")), &normalized_csv(&norm))?;
    write_atomic(&dir.join(format!("{stem}.confusion.pgm")), &confusion_pgm(&norm))
}

/// Writes `report.json`, `summary.csv` and, per successful cell,
/// `<stem>.history.csv` plus the confusion files.
pub fn emit_report(report: &SweepReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_atomic(&out_dir.join(REPORT_FILE), report_to_json(report).as_bytes())?;
    let mut rows = vec![["backend", "head", "frames", "train_acc", "test_acc", "epochs", "error"]
        .map(String::from)
        .to_vec()];
    for cell in &report.cells {
        let m = cell.metrics.as_ref();
        rows.push(vec![
            cell.backend.clone(),
            cell.head.to_string(),
            cell.frames_per_clip.to_string(),
            m.map(|m| m.train_accuracy.to_string()).unwrap_or_default(),
            m.map(|m| m.test_accuracy.to_string()).unwrap_or_default(),
            m.map(|m| m.epochs_run.to_string()).unwrap_or_default(),
            cell.error.clone().unwrap_or_default(),
        ]);
        if let Some(m) = m {
            write_atomic(&out_dir.join(format!("{}.history.csv", cell.stem())), &history_csv(&m.history))?;
            write_confusion_files(out_dir, &cell.stem(), &m.confusion)?;
        }
    }
    write_atomic(&out_dir.join("summary.csv"), &csv_bytes(rows))
}
