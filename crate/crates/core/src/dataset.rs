//! Subject-labelled corpora and deterministic train/test splits.
//!
//! A corpus on disk is laid out as `<root>/<subject_id>/<image files>`.
//! Subjects and files are ordered lexicographically by name, so the same
//! directory always yields the same records. A `dataset.json` file at the
//! root, holding `[{"subject": .., "path": ..}, ..]`, replaces directory
//! scanning.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, GrayImage};

pub const MANIFEST_FILE: &str = "dataset.json";

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleRecord {
    pub subject_id: String,
    pub sample_index: usize,
    pub source_path: PathBuf,
}

/// Records with parallel payloads (images or feature vectors).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    records: Vec<SampleRecord>,
    payloads: Vec<T>,
    class_set: Vec<String>,
}

impl<T> LabeledDataset<T> {
    /// Builds a dataset. `class_set` must be sorted, duplicate-free and cover
    /// every record's subject; `(subject_id, sample_index)` must be unique.
    pub fn new(records: Vec<SampleRecord>, payloads: Vec<T>, class_set: Vec<String>) -> Result<Self> {
        if records.len() != payloads.len() {
            return Err(Error::Data(format!(
                "{} records but {} payloads",
                records.len(),
                payloads.len()
            )));
        }
        if class_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("class set must be sorted and duplicate-free".into()));
        }
        let mut seen = BTreeSet::new();
        for r in &records {
            if class_set.binary_search(&r.subject_id).is_err() {
                return Err(Error::Data(format!(
                    "subject {} missing from class set",
                    r.subject_id
                )));
            }
            if !seen.insert((r.subject_id.as_str(), r.sample_index)) {
                return Err(Error::Data(format!(
                    "duplicate sample {} of subject {}",
                    r.sample_index, r.subject_id
                )));
            }
        }
        Ok(LabeledDataset {
            records,
            payloads,
            class_set,
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn payloads(&self) -> &[T] {
        &self.payloads
    }

    pub fn class_set(&self) -> &[String] {
        &self.class_set
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SampleRecord, &T)> {
        self.records.iter().zip(&self.payloads)
    }

    /// Index of each record's subject within the class set.
    pub fn label_indices(&self) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| {
                self.class_set
                    .binary_search(&r.subject_id)
                    .expect("class set covers every record")
            })
            .collect()
    }

    /// Replaces the payloads, keeping records and class set.
    pub fn map<U>(self, f: impl FnMut(T) -> U) -> LabeledDataset<U> {
        LabeledDataset {
            records: self.records,
            payloads: self.payloads.into_iter().map(f).collect(),
            class_set: self.class_set,
        }
    }

    pub fn try_map<U>(self, f: impl FnMut(T) -> Result<U>) -> Result<LabeledDataset<U>> {
        Ok(LabeledDataset {
            records: self.records,
            payloads: self.payloads.into_iter().map(f).collect::<Result<_>>()?,
            class_set: self.class_set,
        })
    }

    pub fn into_parts(self) -> (Vec<SampleRecord>, Vec<T>, Vec<String>) {
        (self.records, self.payloads, self.class_set)
    }
}

#[derive(Deserialize)]
struct ManifestEntry {
    subject: String,
    path: PathBuf,
}

/// Loads every subject directory under `root` (or the entries of
/// `root/dataset.json` when present).
///
/// Unreadable files are skipped with a warning; a subject left without any
/// readable image is skipped as well. `sample_index` is the rank of the file
/// among the subject's readable images in lexicographic filename order (in
/// manifest order when a manifest is used).
pub fn scan_dataset(root: impl AsRef<Path>) -> Result<LabeledDataset<GrayImage>> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::EmptyDataset(format!(
            "{} is not a directory",
            root.display()
        )));
    }
    let manifest = root.join(MANIFEST_FILE);
    let by_subject = if manifest.is_file() {
        manifest_listing(root, &manifest)?
    } else {
        directory_listing(root)?
    };

    let mut records = Vec::new();
    let mut payloads = Vec::new();
    let mut class_set = Vec::new();
    for (subject, paths) in by_subject {
        let mut index = 0;
        for path in paths {
            match load_image(&path) {
                Ok(img) => {
                    records.push(SampleRecord {
                        subject_id: subject.clone(),
                        sample_index: index,
                        source_path: path,
                    });
                    payloads.push(img);
                    index += 1;
                }
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
        if index == 0 {
            log::warn!("subject {subject} has no readable images; skipped");
        } else {
            class_set.push(subject);
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no readable images under {}",
            root.display()
        )));
    }
    LabeledDataset::new(records, payloads, class_set)
}

fn directory_listing(root: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let Some(subject) = path.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
            log::warn!("skipping non-UTF-8 directory {}", path.display());
            continue;
        };
        let mut files: Vec<PathBuf> = std::fs::read_dir(&path)
            .map_err(|e| Error::io(&path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        out.insert(subject, files);
    }
    Ok(out)
}

fn manifest_listing(root: &Path, manifest: &Path) -> Result<BTreeMap<String, Vec<PathBuf>>> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", manifest.display())))?;
    let mut out: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for e in entries {
        out.entry(e.subject).or_default().push(root.join(e.path));
    }
    Ok(out)
}

/// How many samples of each subject go to the training side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "amount")]
pub enum SplitMode {
    PerSubjectCount(usize),
    /// Train count is `round(fraction * n)` per subject.
    PerSubjectFraction(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub mode: SplitMode,
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            mode: SplitMode::PerSubjectFraction(0.5),
            shuffle_seed: None,
        }
    }
}

impl SplitSpec {
    fn train_count(&self, subject: &str, available: usize) -> Result<usize> {
        let split_err = |reason: String| Error::Split {
            subject: subject.to_owned(),
            reason,
        };
        let count = match self.mode {
            SplitMode::PerSubjectCount(n) => {
                if n == 0 {
                    return Err(Error::Parameter("train count must be positive".into()));
                }
                n
            }
            SplitMode::PerSubjectFraction(f) => {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Parameter(format!(
                        "train fraction {f} outside (0, 1)"
                    )));
                }
                (f * available as f64).round() as usize
            }
        };
        if count == 0 || count >= available {
            return Err(split_err(format!(
                "{available} samples cannot give {count} training and at least one test sample"
            )));
        }
        Ok(count)
    }
}

/// Partitions every subject's samples into train and test sides.
///
/// Samples are taken in `sample_index` order, or in an order permuted by a
/// ChaCha8 generator seeded with `shuffle_seed` (subjects visited in class
/// set order). Each side keeps records in the input's relative order and the
/// full class set.
pub fn split_dataset<T: Clone>(
    ds: &LabeledDataset<T>,
    spec: &SplitSpec,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    let mut per_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.records.iter().enumerate() {
        per_subject.entry(&r.subject_id).or_default().push(i);
    }
    let mut rng = spec.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut in_train = vec![false; ds.len()];
    for (subject, mut members) in per_subject {
        members.sort_by_key(|&i| ds.records[i].sample_index);
        let count = spec.train_count(subject, members.len())?;
        if let Some(rng) = rng.as_mut() {
            members.shuffle(rng);
        }
        for &i in &members[..count] {
            in_train[i] = true;
        }
    }
    let side = |train: bool| {
        let idx: Vec<usize> = (0..ds.len()).filter(|&i| in_train[i] == train).collect();
        LabeledDataset {
            records: idx.iter().map(|&i| ds.records[i].clone()).collect(),
            payloads: idx.iter().map(|&i| ds.payloads[i].clone()).collect(),
            class_set: ds.class_set.clone(),
        }
    };
    Ok((side(true), side(false)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::write_pgm;

    fn toy(subjects: &[&str], per: usize) -> LabeledDataset<(String, usize)> {
        let mut records = Vec::new();
        let mut payloads = Vec::new();
        for s in subjects {
            for i in 0..per {
                records.push(SampleRecord {
                    subject_id: s.to_string(),
                    sample_index: i,
                    source_path: PathBuf::from(format!("{s}/{i}.pgm")),
                });
                payloads.push((s.to_string(), i));
            }
        }
        let mut class_set: Vec<String> = subjects.iter().map(|s| s.to_string()).collect();
        class_set.sort();
        LabeledDataset::new(records, payloads, class_set).unwrap()
    }

    fn write_images(root: &Path, layout: &[(&str, &[&str])]) {
        let img = GrayImage::constant(3, 3, 0.5).unwrap();
        for (dir, files) in layout {
            std::fs::create_dir_all(root.join(dir)).unwrap();
            for f in *files {
                write_pgm(&img, root.join(dir).join(f)).unwrap();
            }
        }
    }

    #[test]
    fn scan_enumerates_subjects() {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), &[("s02", &["a.pgm"]), ("s01", &["b.pgm", "a.pgm"])]);
        let ds = scan_dataset(dir.path()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.class_set(), &["s01", "s02"]);
        let first = &ds.records()[0];
        assert_eq!((first.subject_id.as_str(), first.sample_index), ("s01", 0));
        assert!(first.source_path.ends_with("s01/a.pgm"));
    }

    #[test]
    fn scan_minimal_and_lexicographic() {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), &[("only", &["x.pgm"])]);
        let ds = scan_dataset(dir.path()).unwrap();
        assert_eq!((ds.len(), ds.class_set().len()), (1, 1));

        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), &[("2", &["x.pgm"]), ("10", &["x.pgm"])]);
        let ds = scan_dataset(dir.path()).unwrap();
        assert_eq!(ds.class_set(), &["10", "2"]);
    }

    #[test]
    fn scan_skips_unreadable_subjects() {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), &[("good", &["x.pgm"])]);
        std::fs::create_dir(dir.path().join("bad")).unwrap();
        std::fs::write(dir.path().join("bad/notes.txt"), "hello").unwrap();
        let ds = scan_dataset(dir.path()).unwrap();
        assert_eq!(ds.class_set(), &["good"]);

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(scan_dataset(empty.path()), Err(Error::EmptyDataset(_))));
        std::fs::create_dir(empty.path().join("bad")).unwrap();
        std::fs::write(empty.path().join("bad/notes.txt"), "hello").unwrap();
        assert!(matches!(scan_dataset(empty.path()), Err(Error::EmptyDataset(_))));
        assert!(matches!(
            scan_dataset(empty.path().join("missing")),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn manifest_overrides_directories() {
        let dir = tempfile::tempdir().unwrap();
        write_images(dir.path(), &[("imgs", &["1.pgm", "2.pgm", "3.pgm"])]);
        std::fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"[{"subject":"bob","path":"imgs/3.pgm"},
                {"subject":"amy","path":"imgs/1.pgm"},
                {"subject":"bob","path":"imgs/2.pgm"}]"#,
        )
        .unwrap();
        let ds = scan_dataset(dir.path()).unwrap();
        assert_eq!(ds.class_set(), &["amy", "bob"]);
        assert!(ds.records()[1].source_path.ends_with("imgs/3.pgm"));
        assert_eq!(ds.records()[2].sample_index, 1);
    }

    #[test]
    fn count_split_takes_leading_samples() {
        let ds = toy(&["a", "b"], 4);
        let spec = SplitSpec {
            mode: SplitMode::PerSubjectCount(2),
            shuffle_seed: None,
        };
        let (train, test) = split_dataset(&ds, &spec).unwrap();
        let idx: Vec<usize> = train.records().iter().map(|r| r.sample_index).collect();
        assert_eq!(idx, vec![0, 1, 0, 1]);
        assert_eq!(test.len(), 4);
        assert_eq!(train.class_set(), test.class_set());
    }

    #[test]
    fn fraction_split_and_seeded_determinism() {
        let ds = toy(&["a", "b", "c"], 4);
        let spec = SplitSpec::default();
        let (train, test) = split_dataset(&ds, &spec).unwrap();
        assert_eq!((train.len(), test.len()), (6, 6));

        let seeded = SplitSpec {
            shuffle_seed: Some(7),
            ..spec
        };
        assert_eq!(
            split_dataset(&ds, &seeded).unwrap(),
            split_dataset(&ds, &seeded).unwrap()
        );
    }

    #[test]
    fn split_rejects_small_subjects() {
        let ds = toy(&["a"], 2);
        let spec = SplitSpec {
            mode: SplitMode::PerSubjectCount(2),
            shuffle_seed: None,
        };
        match split_dataset(&ds, &spec) {
            Err(Error::Split { subject, .. }) => assert_eq!(subject, "a"),
            other => panic!("expected split error, got {other:?}"),
        }
        let spec = SplitSpec {
            mode: SplitMode::PerSubjectFraction(0.2),
            shuffle_seed: None,
        };
        assert!(matches!(split_dataset(&ds, &spec), Err(Error::Split { .. })));
    }

    #[test]
    fn dataset_rejects_duplicates() {
        let r = SampleRecord {
            subject_id: "a".into(),
            sample_index: 0,
            source_path: PathBuf::new(),
        };
        assert!(LabeledDataset::new(vec![r.clone(), r], vec![0, 1], vec!["a".into()]).is_err());
    }
}
