//! Featurization over a whole manifest, with the on-disk feature cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::features::{
    extract_clip_embeddings, read_cache, write_cache, EmbeddingBackend, EmbeddingSequence, GridPoolBackend,
    MockBackend, Preset,
};
use crate::manifest::{DatasetManifest, SampleRecord, Split};
use crate::nets::LabeledSequence;
use crate::preprocess::{preprocess_clip, SubtractorConfig};
use crate::videoio::{load_clip, uniform_sample};

/// Where frame embeddings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendChoice {
    /// `mock:SEED:D`
    Mock { seed: u64, dim: usize },
    /// `grid`, `grid:G` or `grid:G:S`
    Grid { grid: u32, input_size: u32 },
    /// An exported model described by its JSON sidecar.
    Sidecar(PathBuf),
}

impl BackendChoice {
    /// Resolves a backend descriptor. Preset names map to
    /// `<model_dir>/<preset>.sidecar.json`; anything ending in `.json` is a
    /// sidecar path.
    pub fn resolve(desc: &str, model_dir: &Path) -> Result<Self> {
        if let Some(rest) = desc.strip_prefix("mock:") {
            return parse_mock(rest);
        }
        if let Some(g) = GridPoolBackend::from_descriptor(desc)? {
            let size = g.spec().input_size.0;
            let grid = (g.spec().embedding_dim as f64 / 3.0).sqrt().round() as u32;
            return Ok(BackendChoice::Grid { grid, input_size: size });
        }
        if desc.ends_with(".json") {
            return Ok(BackendChoice::Sidecar(PathBuf::from(desc)));
        }
        let preset = Preset::from_str(desc).map_err(|_| {
            Error::Config(format!(
                "unknown backend {desc:?}: expected a preset ({}), a sidecar .json path, grid[:G[:S]] or mock:SEED:D",
                Preset::ALL.map(|p| p.name()).join(", ")
            ))
        })?;
        Ok(BackendChoice::Sidecar(model_dir.join(format!("{}.sidecar.json", preset.name()))))
    }

    pub fn open(&self) -> Result<Box<dyn EmbeddingBackend>> {
        match self {
            BackendChoice::Mock { seed, dim } => Ok(Box::new(MockBackend::new(*seed, *dim)?)),
            BackendChoice::Grid { grid, input_size } => Ok(Box::new(GridPoolBackend::new(*grid, *input_size)?)),
            BackendChoice::Sidecar(path) => open_sidecar(path),
        }
    }
}

/// Parses the `SEED:D` form of mock features.
pub fn parse_mock(spec: &str) -> Result<BackendChoice> {
    let bad = || Error::Config(format!("mock features must be SEED:D, got {spec:?}"));
    let (seed, dim) = spec.split_once(':').ok_or_else(bad)?;
    let seed = seed.trim().parse().map_err(|_| bad())?;
    let dim: usize = dim.trim().parse().map_err(|_| bad())?;
    if dim == 0 {
        return Err(bad());
    }
    Ok(BackendChoice::Mock { seed, dim })
}

#[cfg(feature = "onnx")]
fn open_sidecar(path: &Path) -> Result<Box<dyn EmbeddingBackend>> {
    if !path.is_file() {
        return Err(Error::Config(format!("backend sidecar {} not found", path.display())));
    }
    Ok(Box::new(crate::features::OnnxBackend::from_sidecar(path)?))
}

#[cfg(not(feature = "onnx"))]
fn open_sidecar(path: &Path) -> Result<Box<dyn EmbeddingBackend>> {
    Err(Error::Config(format!(
        "{}: this build has no ONNX runtime (enable the `onnx` feature)",
        path.display()
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizeOptions {
    pub preprocess: Option<SubtractorConfig>,
    pub cache_dir: PathBuf,
    pub workers: usize,
}

/// Full-length embedding sequences of every clip in a manifest, keyed by
/// clip id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    /// Cache key: backend name, plus `+<preprocess tag>` when frames were
    /// background-subtracted.
    pub feature_key: String,
    pub sequences: BTreeMap<String, EmbeddingSequence>,
}

impl FeatureTable {
    pub fn get(&self, clip_id: &str) -> Result<&EmbeddingSequence> {
        self.sequences
            .get(clip_id)
            .ok_or_else(|| Error::Invalid(format!("no features for clip {clip_id:?}")))
    }
}

pub fn feature_key(backend_name: &str, preprocess: Option<&SubtractorConfig>) -> String {
    match preprocess {
        Some(cfg) => format!("{backend_name}+{}", cfg.tag()),
        None => backend_name.to_string(),
    }
}

/// Embeds one clip from its frames directory.
pub fn featurize_clip(
    record: &SampleRecord,
    root: &Path,
    backend: &dyn EmbeddingBackend,
    preprocess: Option<&SubtractorConfig>,
) -> Result<EmbeddingSequence> {
    let clip = load_clip(&root.join(&record.frames_dir), record.clip_id.clone())?;
    let clip = match preprocess {
        Some(cfg) => preprocess_clip(&clip, cfg)?,
        None => clip,
    };
    let seq = extract_clip_embeddings(&clip, backend, backend.spec())?;
    Ok(seq.with_backend_name(feature_key(backend.name(), preprocess)))
}

/// Returns every clip's features, reading valid cache entries and computing
/// (then caching) the rest on `opts.workers` threads. Each worker opens its
/// own backend. A corrupt cache entry is recomputed and overwritten.
pub fn featurize_manifest(
    manifest: &DatasetManifest,
    root: &Path,
    backend: &BackendChoice,
    opts: &FeaturizeOptions,
) -> Result<FeatureTable> {
    if opts.workers == 0 {
        return Err(Error::Config("worker count must be >= 1".into()));
    }
    if let Some(cfg) = &opts.preprocess {
        cfg.validate()?;
    }
    std::fs::create_dir_all(&opts.cache_dir).map_err(|e| Error::io(&opts.cache_dir, e))?;
    let probe = backend.open()?;
    let key = feature_key(probe.name(), opts.preprocess.as_ref());
    drop(probe);

    let records = manifest.records();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<EmbeddingSequence>>>> = Mutex::new((0..records.len()).map(|_| None).collect());
    let workers = opts.workers.min(records.len().max(1));
    let opened: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| -> Result<()> {
                    let mut local: Option<Box<dyn EmbeddingBackend>> = None;
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(record) = records.get(i) else { return Ok(()) };
                        let result = match read_cache(&opts.cache_dir, &record.clip_id, &key) {
                            Ok(seq) => Ok(seq),
                            Err(_) => {
                                if local.is_none() {
                                    local = Some(backend.open()?);
                                }
                                let b = local.as_deref().expect("backend opened");
                                featurize_clip(record, root, b, opts.preprocess.as_ref())
                                    .and_then(|seq| write_cache(&seq, &opts.cache_dir).map(|_| seq))
                            }
                        };
                        results.lock().unwrap()[i] = Some(result);
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("featurize worker panicked")).collect()
    });
    for r in opened {
        r?;
    }
    let mut sequences = BTreeMap::new();
    for (record, result) in records.iter().zip(results.into_inner().unwrap()) {
        let seq = result.ok_or_else(|| Error::Invalid(format!("clip {:?} was not processed", record.clip_id)))??;
        sequences.insert(record.clip_id.clone(), seq);
    }
    Ok(FeatureTable {
        feature_key: key,
        sequences,
    })
}

/// `N` uniformly sampled rows of every clip's features, grouped by split.
pub fn sample_split(
    manifest: &DatasetManifest,
    table: &FeatureTable,
    frames_per_clip: usize,
) -> Result<(Vec<LabeledSequence>, Vec<LabeledSequence>)> {
    if frames_per_clip == 0 {
        return Err(Error::Config("frames per clip must be >= 1".into()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for record in manifest.records() {
        let full = table.get(&record.clip_id)?;
        let seq = full.select(&uniform_sample(full.len(), frames_per_clip))?;
        let item = LabeledSequence::new(seq, manifest.class_of(record));
        match record.split {
            Split::Train => train.push(item),
            Split::Test => test.push(item),
        }
    }
    Ok((train, test))
}
