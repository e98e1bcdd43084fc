//! Dataset catalogs.
//!
//! A manifest is a UTF-8 text file with one JSON object per line:
//!
//! ```text
//! # comment lines start with '#'
//! {"clip_id":"a","frames_dir":"clips/a","label":"cat","signer_id":"s1","split":"train"}
//! ```
//!
//! `frames_dir` is relative to a caller-supplied root. Class ids are assigned
//! in order of first appearance, so the file alone fixes the row/column order
//! of every confusion matrix computed from it.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::videoio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub clip_id: String,
    pub frames_dir: PathBuf,
    pub label: String,
    pub signer_id: String,
    pub split: Split,
}

/// Ordered class names with a name → id index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = LabelSet::default();
        for name in names {
            let name = name.into();
            if set.index.contains_key(&name) {
                return Err(Error::Invalid(format!("duplicate label {name:?}")));
            }
            set.insert(name);
        }
        Ok(set)
    }

    fn insert(&mut self, name: String) -> usize {
        if let Some(&id) = self.index.get(&name) {
            return id;
        }
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        id
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name_of(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.names.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        LabelSet::from_names(names).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<SampleRecord>,
    labels: LabelSet,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    clip_id: String,
    frames_dir: String,
    label: String,
    signer_id: String,
    split: String,
}

impl DatasetManifest {
    /// Builds a manifest from records, checking id uniqueness and non-empty
    /// frame directories. Labels are indexed by first appearance.
    pub fn from_records(records: Vec<SampleRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut labels = LabelSet::default();
        for r in &records {
            if !seen.insert(r.clip_id.as_str()) {
                return Err(Error::DuplicateClipId(r.clip_id.clone()));
            }
            if r.frames_dir.as_os_str().is_empty() {
                return Err(Error::Invalid(format!("clip {:?} has an empty frames_dir", r.clip_id)));
            }
            labels.insert(r.label.clone());
        }
        Ok(Self { records, labels })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::ManifestParse {
                line: line_no,
                message: e.to_string(),
            })?;
            let split = match raw.split.as_str() {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::UnknownSplit {
                        line: line_no,
                        value: other.to_string(),
                    })
                }
            };
            if raw.frames_dir.is_empty() {
                return Err(Error::ManifestParse {
                    line: line_no,
                    message: "frames_dir is empty".into(),
                });
            }
            if !seen.insert(raw.clip_id.clone()) {
                return Err(Error::DuplicateClipId(raw.clip_id));
            }
            records.push(SampleRecord {
                clip_id: raw.clip_id,
                frames_dir: PathBuf::from(raw.frames_dir),
                label: raw.label,
                signer_id: raw.signer_id,
                split,
            });
        }
        Self::from_records(records)
    }

    /// Serializes back to the line-delimited format, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            // Field order is fixed by the struct, so output is byte-stable.
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Class id of a record's label.
    pub fn class_of(&self, record: &SampleRecord) -> usize {
        self.labels
            .index_of(&record.label)
            .expect("record labels are always indexed")
    }

    /// Partitions records by their declared split, preserving file order.
    pub fn split(&self) -> (Vec<&SampleRecord>, Vec<&SampleRecord>) {
        self.records.iter().partition(|r| r.split == Split::Train)
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::parse(&text)
}

pub fn split(m: &DatasetManifest) -> (Vec<&SampleRecord>, Vec<&SampleRecord>) {
    m.split()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordCheck {
    pub clip_id: String,
    pub frames_dir_exists: bool,
    pub frame_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Issue {
    MissingFramesDir { clip_id: String, path: PathBuf },
    NoFrames { clip_id: String, path: PathBuf },
    LabelMissingFromSplit { label: String, split: Split },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::MissingFramesDir { clip_id, path } => {
                write!(f, "clip {clip_id}: frames_dir {} does not exist", path.display())
            }
            Issue::NoFrames { clip_id, path } => {
                write!(f, "clip {clip_id}: no frames in {}", path.display())
            }
            Issue::LabelMissingFromSplit { label, split } => {
                write!(f, "label {label:?} has no {split} records")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub records: Vec<RecordCheck>,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    /// Clip ids flagged for a missing or empty frames directory.
    pub fn flagged_clips(&self) -> Vec<&str> {
        self.issues
            .iter()
            .filter_map(|i| match i {
                Issue::MissingFramesDir { clip_id, .. } | Issue::NoFrames { clip_id, .. } => {
                    Some(clip_id.as_str())
                }
                _ => None,
            })
            .collect()
    }

    /// Labels with no records in `split`.
    pub fn uncovered(&self, split: Split) -> Vec<&str> {
        self.issues
            .iter()
            .filter_map(|i| match i {
                Issue::LabelMissingFromSplit { label, split: s } if *s == split => {
                    Some(label.as_str())
                }
                _ => None,
            })
            .collect()
    }
}

/// Checks every record's frame directory under `root` and split coverage
/// per label. Never fails; callers decide which issues are fatal.
pub fn validate_manifest(m: &DatasetManifest, root: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    for r in m.records() {
        let dir = root.join(&r.frames_dir);
        let exists = dir.is_dir();
        let frame_count = if exists {
            videoio::list_frame_files(&dir).map(|f| f.len()).unwrap_or(0)
        } else {
            0
        };
        if !exists {
            report.issues.push(Issue::MissingFramesDir {
                clip_id: r.clip_id.clone(),
                path: dir.clone(),
            });
        } else if frame_count == 0 {
            report.issues.push(Issue::NoFrames {
                clip_id: r.clip_id.clone(),
                path: dir.clone(),
            });
        }
        report.records.push(RecordCheck {
            clip_id: r.clip_id.clone(),
            frames_dir_exists: exists,
            frame_count,
        });
    }
    for split in [Split::Train, Split::Test] {
        let covered: BTreeSet<&str> = m
            .records()
            .iter()
            .filter(|r| r.split == split)
            .map(|r| r.label.as_str())
            .collect();
        for name in m.labels().names() {
            if !covered.contains(name.as_str()) {
                report.issues.push(Issue::LabelMissingFromSplit {
                    label: name.clone(),
                    split,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(id: &str, label: &str, split: &str) -> String {
        format!(
            r#"{{"clip_id":"{id}","frames_dir":"clips/{id}","label":"{label}","signer_id":"s","split":"{split}"}}"#
        )
    }

    fn paper_shaped() -> String {
        let labels = [
            "bear", "bird", "cat", "elephant", "fish", "giraffe", "horse", "lion", "monkey",
            "mouse",
        ];
        let mut text = String::new();
        for label in labels {
            for k in 0..15 {
                let split = if k < 10 { "train" } else { "test" };
                text += &line(&format!("{label}{k}"), label, split);
                text.push('\n');
            }
        }
        text
    }

    #[test]
    fn two_line_manifest() {
        let text = format!("{}\n{}\n", line("a", "cat", "train"), line("b", "cat", "test"));
        let m = DatasetManifest::parse(&text).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.labels().len(), 1);
        assert_eq!(m.records()[0].clip_id, "a");
        assert_eq!(m.records()[1].split, Split::Test);
    }

    #[test]
    fn paper_shaped_manifest_splits_100_50() {
        let m = DatasetManifest::parse(&paper_shaped()).unwrap();
        assert_eq!(m.labels().len(), 10);
        let (train, test) = m.split();
        assert_eq!((train.len(), test.len()), (100, 50));
    }

    #[test]
    fn duplicate_clip_id_is_named() {
        let text = format!("{}\n{}\n", line("a", "cat", "train"), line("a", "dog", "test"));
        let err = DatasetManifest::parse(&text).unwrap_err();
        assert!(matches!(&err, Error::DuplicateClipId(id) if id == "a"));
        assert!(err.to_string().contains("\"a\""));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("# header\n{}\nnot json\n", line("a", "cat", "train"));
        match DatasetManifest::parse(&text).unwrap_err() {
            Error::ManifestParse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_split_rejected() {
        let text = line("a", "cat", "validation");
        assert!(matches!(
            DatasetManifest::parse(&text).unwrap_err(),
            Error::UnknownSplit { line: 1, .. }
        ));
    }

    #[test]
    fn labels_indexed_by_first_appearance() {
        let text = [
            line("a", "zebra", "train"),
            line("b", "ant", "train"),
            line("c", "zebra", "test"),
        ]
        .join("\n");
        let m = DatasetManifest::parse(&text).unwrap();
        assert_eq!(m.labels().names(), ["zebra", "ant"]);
        assert_eq!(m.labels().index_of("ant"), Some(1));
    }

    #[test]
    fn degenerate_splits() {
        let all_train = [line("a", "x", "train"), line("b", "y", "train")].join("\n");
        let m = DatasetManifest::parse(&all_train).unwrap();
        let (train, test) = m.split();
        assert_eq!((train.len(), test.len()), (2, 0));

        let empty = DatasetManifest::parse("").unwrap();
        let (train, test) = empty.split();
        assert!(train.is_empty() && test.is_empty());
    }

    #[test]
    fn jsonl_round_trip() {
        let m = DatasetManifest::parse(&paper_shaped()).unwrap();
        let again = DatasetManifest::parse(&m.to_jsonl()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn validation_flags_missing_dir_and_uncovered_label() {
        let root = tempfile::tempdir().unwrap();
        for id in ["a", "b", "c"] {
            let dir = root.path().join("clips").join(id);
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(dir.join("1.ppm"), b"P6\n1 1\n255\n\0\0\0").unwrap();
        }
        let text = [
            line("a", "cat", "train"),
            line("b", "cat", "test"),
            line("c", "horse", "train"),
        ]
        .join("\n");
        let m = DatasetManifest::parse(&text).unwrap();
        let report = validate_manifest(&m, root.path());
        assert_eq!(report.uncovered(Split::Test), ["horse"]);
        assert!(report.uncovered(Split::Train).is_empty());
        assert!(report.flagged_clips().is_empty());
        assert_eq!(report.records[0].frame_count, 1);

        std::fs::remove_dir_all(root.path().join("clips/b")).unwrap();
        let report = validate_manifest(&m, root.path());
        assert_eq!(report.flagged_clips(), ["b"]);
    }

    #[test]
    fn validation_clean_case() {
        let root = tempfile::tempdir().unwrap();
        for id in ["a", "b"] {
            let dir = root.path().join("clips").join(id);
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(dir.join("01.ppm"), b"P6\n1 1\n255\n\0\0\0").unwrap();
        }
        let text = [line("a", "cat", "train"), line("b", "cat", "test")].join("\n");
        let m = DatasetManifest::parse(&text).unwrap();
        assert!(validate_manifest(&m, root.path()).is_clean());
    }

    proptest! {
        #[test]
        fn split_is_a_partition(splits in proptest::collection::vec(any::<bool>(), 0..60)) {
            let text: Vec<String> = splits
                .iter()
                .enumerate()
                .map(|(i, &t)| line(&format!("c{i}"), &format!("l{}", i % 4), if t { "train" } else { "test" }))
                .collect();
            let m = DatasetManifest::parse(&text.join("\n")).unwrap();
            let (train, test) = m.split();
            prop_assert_eq!(train.len() + test.len(), m.len());
            let mut ids: Vec<&str> = train.iter().chain(test.iter()).map(|r| r.clip_id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), m.len());
            // relative order preserved within each side
            let pos = |id: &str| m.records().iter().position(|r| r.clip_id == id).unwrap();
            prop_assert!(train.windows(2).all(|w| pos(&w[0].clip_id) < pos(&w[1].clip_id)));
            prop_assert!(test.windows(2).all(|w| pos(&w[0].clip_id) < pos(&w[1].clip_id)));
        }

        #[test]
        fn label_index_round_trips(names in proptest::collection::hash_set("[a-z]{1,8}", 1..20)) {
            let set = LabelSet::from_names(names.iter().cloned()).unwrap();
            for i in 0..set.len() {
                prop_assert_eq!(set.index_of(set.name_of(i).unwrap()), Some(i));
            }
        }

        #[test]
        fn parse_is_deterministic(n in 0usize..30) {
            let text: Vec<String> = (0..n).map(|i| line(&format!("c{i}"), &format!("l{}", i % 3), "train")).collect();
            let text = text.join("\n");
            prop_assert_eq!(DatasetManifest::parse(&text).unwrap(), DatasetManifest::parse(&text).unwrap());
        }
    }
}
