//! Declarative experiment runs: load, split, extract, classify, report.
//!
//! An [`ExperimentConfig`] names a dataset, the descriptors to extract, the
//! classifier variants and the descriptor pairs to fuse. [`cmd_run`] expands
//! that into a grid of independent cells:
//!
//! * every descriptor with every KNN metric (table 1 shape),
//! * every descriptor with every SVM kernel (table 2 shape),
//! * every fusion pair with every KNN metric and SVM kernel (tables 3 and 4).
//!
//! Cells run in parallel and fail independently. Outputs land in the
//! configured directory:
//!
//! ```text
//! out/
//!   report.json          config hash, config echo and every cell (deterministic)
//!   tables.txt           rendered tables
//!   records/<cell>.json  one record per cell, with wall time
//!   features/            feature dumps and their cache keys
//!   models/              SVM models and fusion schemas
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{
    sigma_median_heuristic, svm_train, DistanceMetric, KernelSpec, KnnModel, SvmParams, TrainingSet,
};
use crate::dataset::{scan_dataset, split_dataset, LabeledDataset, SampleRecord, SplitMode, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{render_report, ClassifierEcho, ConfusionMatrix, EvalReport, Layout, RunEcho};
use crate::features::{
    build_log_gabor_bank, dwt_descriptor, lbp_descriptor, log_gabor_descriptor, lpq_descriptor,
    read_feature_dump, write_feature_dump, Descriptor, FeatureVector, LogGaborParams, WaveletFilter,
    WaveletKind,
};
use crate::fusion::FusedSchema;
use crate::image::{preprocess, GrayImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub width: usize,
    pub height: usize,
    pub equalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            width: 128,
            height: 128,
            equalize: true,
        }
    }
}

fn default_window() -> usize {
    crate::features::lpq::DEFAULT_WINDOW
}

fn default_levels() -> usize {
    crate::features::wavelet::DEFAULT_LEVELS
}

/// One descriptor and its parameters, e.g. `{"kind": "LPQ", "window": 7}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE", deny_unknown_fields)]
pub enum DescriptorSpec {
    Lbp,
    Lpq {
        #[serde(default = "default_window")]
        window: usize,
    },
    LogGabor {
        #[serde(default)]
        params: LogGaborParams,
    },
    Haar {
        #[serde(default = "default_levels")]
        levels: usize,
    },
    Db8 {
        #[serde(default = "default_levels")]
        levels: usize,
    },
}

impl DescriptorSpec {
    pub fn descriptor(&self) -> Descriptor {
        match self {
            DescriptorSpec::Lbp => Descriptor::Lbp,
            DescriptorSpec::Lpq { .. } => Descriptor::Lpq,
            DescriptorSpec::LogGabor { .. } => Descriptor::LogGabor,
            DescriptorSpec::Haar { .. } => Descriptor::Haar,
            DescriptorSpec::Db8 { .. } => Descriptor::Db8,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DescriptorSpec::Lpq { window } if *window < 3 || window % 2 == 0 => Err(Error::Config(
                format!("LPQ window must be odd and at least 3, got {window}"),
            )),
            DescriptorSpec::Haar { levels: 0 } | DescriptorSpec::Db8 { levels: 0 } => {
                Err(Error::Config("wavelet levels must be at least 1".into()))
            }
            DescriptorSpec::LogGabor { params } => {
                params.validate().map_err(|e| Error::Config(e.to_string()))
            }
            _ => Ok(()),
        }
    }

    /// Computes this descriptor for every image, in parallel.
    pub fn extract(&self, images: &[GrayImage]) -> Result<Vec<FeatureVector>> {
        let Some(first) = images.first() else {
            return Ok(Vec::new());
        };
        match self {
            DescriptorSpec::Lbp => images.par_iter().map(lbp_descriptor).collect(),
            DescriptorSpec::Lpq { window } => {
                images.par_iter().map(|img| lpq_descriptor(img, *window)).collect()
            }
            DescriptorSpec::LogGabor { params } => {
                let bank = build_log_gabor_bank(first.width(), first.height(), *params)?;
                images
                    .par_iter()
                    .map(|img| log_gabor_descriptor(img, &bank))
                    .collect()
            }
            DescriptorSpec::Haar { levels } | DescriptorSpec::Db8 { levels } => {
                let kind = match self {
                    DescriptorSpec::Haar { .. } => WaveletKind::Haar,
                    _ => WaveletKind::Db8,
                };
                let filter = WaveletFilter::new(kind);
                images
                    .par_iter()
                    .map(|img| dwt_descriptor(img, &filter, *levels))
                    .collect()
            }
        }
    }
}

fn default_k() -> usize {
    crate::classify::knn::DEFAULT_K
}

fn default_metrics() -> Vec<DistanceMetric> {
    DistanceMetric::ALL.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<DistanceMetric>,
}

fn default_offset() -> f64 {
    1.0
}

/// Kernel choice. An RBF kernel without `sigma` takes the median pairwise
/// distance of the cell's training vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelConfig {
    Rbf {
        #[serde(default)]
        sigma: Option<f64>,
    },
    Polynomial {
        degree: u32,
        #[serde(default = "default_offset")]
        offset: f64,
    },
}

impl KernelConfig {
    fn resolve(self, train: &[Vec<f64>], seed: u64) -> Result<KernelSpec> {
        Ok(match self {
            KernelConfig::Rbf { sigma: Some(sigma) } => KernelSpec::Rbf { sigma },
            KernelConfig::Rbf { sigma: None } => KernelSpec::Rbf {
                sigma: sigma_median_heuristic(train, seed)?,
            },
            KernelConfig::Polynomial { degree, offset } => KernelSpec::Polynomial { degree, offset },
        })
    }

    fn slug(self) -> &'static str {
        match self {
            KernelConfig::Rbf { .. } => "rbf",
            KernelConfig::Polynomial { .. } => "poly",
        }
    }
}

fn default_kernels() -> Vec<KernelConfig> {
    vec![
        KernelConfig::Rbf { sigma: None },
        KernelConfig::Polynomial {
            degree: 3,
            offset: 1.0,
        },
    ]
}

fn default_c() -> f64 {
    SvmParams::default().c
}

fn default_tol() -> f64 {
    SvmParams::default().tol
}

fn default_max_passes() -> usize {
    SvmParams::default().max_passes
}

fn default_max_sweeps() -> usize {
    SvmParams::default().max_sweeps
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmConfig {
    #[serde(default = "default_kernels")]
    pub kernels: Vec<KernelConfig>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

impl SvmConfig {
    pub fn params(&self) -> SvmParams {
        SvmParams {
            c: self.c,
            tol: self.tol,
            max_passes: self.max_passes,
            max_sweeps: self.max_sweeps,
        }
    }
}

/// A whole experiment, read from a single JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub split: SplitSpec,
    pub descriptors: Vec<DescriptorSpec>,
    #[serde(default)]
    pub knn: Option<KnnConfig>,
    #[serde(default)]
    pub svm: Option<SvmConfig>,
    /// Descriptor groups to fuse, in concatenation order.
    #[serde(default)]
    pub fusion: Vec<Vec<Descriptor>>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.dataset_root.is_relative() {
            cfg.dataset_root = base.join(&cfg.dataset_root);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.preprocess.width == 0 || self.preprocess.height == 0 {
            return cfg_err("preprocess size must be positive".into());
        }
        match self.split.mode {
            SplitMode::PerSubjectCount(0) => return cfg_err("train count must be positive".into()),
            SplitMode::PerSubjectFraction(f) if !(f > 0.0 && f < 1.0) => {
                return cfg_err(format!("train fraction {f} outside (0, 1)"))
            }
            _ => {}
        }
        if self.descriptors.is_empty() {
            return cfg_err("no descriptors listed".into());
        }
        let tags: Vec<Descriptor> = self.descriptors.iter().map(|d| d.descriptor()).collect();
        for (i, t) in tags.iter().enumerate() {
            if tags[..i].contains(t) {
                return cfg_err(format!("descriptor {t} listed twice"));
            }
        }
        for d in &self.descriptors {
            d.validate()?;
        }
        let knn_cells = self.knn.as_ref().map_or(0, |k| k.metrics.len());
        let svm_cells = self.svm.as_ref().map_or(0, |s| s.kernels.len());
        if knn_cells + svm_cells == 0 {
            return cfg_err("no classifier variants configured".into());
        }
        if let Some(knn) = &self.knn {
            if knn.k == 0 {
                return cfg_err("k must be at least 1".into());
            }
        }
        if let Some(svm) = &self.svm {
            svm.params().validate().map_err(|e| Error::Config(e.to_string()))?;
            for kernel in &svm.kernels {
                let probe = match *kernel {
                    KernelConfig::Rbf { sigma: Some(sigma) } => KernelSpec::Rbf { sigma },
                    KernelConfig::Rbf { sigma: None } => continue,
                    KernelConfig::Polynomial { degree, offset } => {
                        KernelSpec::Polynomial { degree, offset }
                    }
                };
                probe.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        for group in &self.fusion {
            if group.len() < 2 {
                return cfg_err("a fusion group needs at least two descriptors".into());
            }
            for (i, d) in group.iter().enumerate() {
                if !tags.contains(d) {
                    return cfg_err(format!("fusion references {d}, which is not extracted"));
                }
                if group[..i].contains(d) {
                    return cfg_err(format!("fusion group repeats {d}"));
                }
            }
        }
        Ok(())
    }

    /// The config without its output directory, as canonical JSON.
    pub fn canonical(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        value
    }

    /// SHA-256 of the canonical form; independent of key order and of where
    /// output is written.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().to_string().as_bytes()))
    }
}

/// Preprocessed, split images plus a fingerprint of the raw inputs.
pub struct PreparedData {
    pub train: LabeledDataset<GrayImage>,
    pub test: LabeledDataset<GrayImage>,
    pub fingerprint: String,
}

fn fingerprint(ds: &LabeledDataset<GrayImage>, root: &Path) -> String {
    let mut h = Sha256::new();
    for (r, img) in ds.iter() {
        let rel = r.source_path.strip_prefix(root).unwrap_or(&r.source_path);
        h.update(format!("{}\t{}\t{}\t{}x{}\n", r.subject_id, r.sample_index, rel.display(), img.width(), img.height()));
        for v in img.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Scans, preprocesses and splits the dataset.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let raw = scan_dataset(&cfg.dataset_root)?;
    let fingerprint = fingerprint(&raw, &cfg.dataset_root);
    let (records, images, class_set) = raw.into_parts();
    let p = cfg.preprocess;
    let images: Vec<GrayImage> = images
        .par_iter()
        .map(|img| preprocess(img, p.width, p.height, p.equalize))
        .collect::<Result<_>>()?;
    let ds = LabeledDataset::new(records, images, class_set)?;
    let (train, test) = split_dataset(&ds, &cfg.split)?;
    Ok(PreparedData {
        train,
        test,
        fingerprint,
    })
}

/// Train and test vectors of one descriptor, in split order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub descriptor: Descriptor,
    pub train: Vec<FeatureVector>,
    pub test: Vec<FeatureVector>,
}

pub fn extract_table(spec: &DescriptorSpec, data: &PreparedData) -> Result<FeatureTable> {
    Ok(FeatureTable {
        descriptor: spec.descriptor(),
        train: spec.extract(data.train.payloads())?,
        test: spec.extract(data.test.payloads())?,
    })
}

const FEATURE_DIR: &str = "features";
const MODEL_DIR: &str = "models";
const RECORD_DIR: &str = "records";
pub const REPORT_FILE: &str = "report.json";
pub const TABLES_FILE: &str = "tables.txt";

fn dump_path(side: &str, d: Descriptor) -> PathBuf {
    Path::new(FEATURE_DIR).join(format!("{side}_{}.tsv", d.tag()))
}

fn key_path(d: Descriptor) -> PathBuf {
    Path::new(FEATURE_DIR).join(format!("{}.key", d.tag()))
}

fn cache_key(cfg: &ExperimentConfig, spec: &DescriptorSpec, fingerprint: &str) -> String {
    let value = serde_json::json!({
        "dataset": fingerprint,
        "preprocess": cfg.preprocess,
        "split": cfg.split,
        "descriptor": spec,
    });
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_dump(path: &Path, records: &[SampleRecord], fvs: &[FeatureVector]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_feature_dump(&mut w, records.iter().zip(fvs)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_dump(path: &Path, records: &[SampleRecord], descriptor: Descriptor) -> Result<Vec<FeatureVector>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = read_feature_dump(BufReader::new(file), path)?;
    let mismatch = |reason: String| Error::Record {
        path: path.to_owned(),
        reason,
    };
    if rows.len() != records.len() {
        return Err(mismatch(format!("{} rows for {} samples", rows.len(), records.len())));
    }
    rows.into_iter()
        .zip(records)
        .map(|(row, r)| {
            if row.subject_id != r.subject_id || row.sample_index != r.sample_index {
                return Err(mismatch(format!(
                    "row ({}, {}) where ({}, {}) was expected",
                    row.subject_id, row.sample_index, r.subject_id, r.sample_index
                )));
            }
            if row.features.descriptor() != descriptor {
                return Err(mismatch(format!("found {} features", row.features.descriptor())));
            }
            Ok(row.features)
        })
        .collect()
}

/// Writes both dumps of one table and its cache key.
fn store_table(
    out: &Path,
    table: &FeatureTable,
    data: &PreparedData,
    key: &str,
) -> Result<[PathBuf; 2]> {
    let d = table.descriptor;
    let train = dump_path("train", d);
    let test = dump_path("test", d);
    write_dump(&out.join(&train), data.train.records(), &table.train)?;
    write_dump(&out.join(&test), data.test.records(), &table.test)?;
    write_text(&out.join(key_path(d)), &format!("{key}\n"))?;
    Ok([train, test])
}

/// Reuses dumps whose cache key matches, recomputing otherwise.
fn cached_table(cfg: &ExperimentConfig, spec: &DescriptorSpec, data: &PreparedData) -> Result<FeatureTable> {
    let out = &cfg.output_dir;
    let d = spec.descriptor();
    let key = cache_key(cfg, spec, &data.fingerprint);
    let stored = fs::read_to_string(out.join(key_path(d))).ok();
    if stored.as_deref().map(str::trim) == Some(key.as_str()) {
        let cached = read_dump(&out.join(dump_path("train", d)), data.train.records(), d).and_then(
            |train| {
                let test = read_dump(&out.join(dump_path("test", d)), data.test.records(), d)?;
                Ok(FeatureTable {
                    descriptor: d,
                    train,
                    test,
                })
            },
        );
        match cached {
            Ok(table) => {
                log::info!("reusing cached {d} features");
                return Ok(table);
            }
            Err(e) => log::warn!("ignoring {d} feature cache: {e}"),
        }
    }
    log::info!("extracting {d} features");
    let table = extract_table(spec, data)?;
    store_table(out, &table, data, &key)?;
    Ok(table)
}

/// Extracts every configured descriptor and writes one dump per descriptor
/// per split side. Returns the dump paths relative to the output directory.
pub fn cmd_extract(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    ensure_dir(&cfg.output_dir.join(FEATURE_DIR))?;
    let mut paths = Vec::new();
    for spec in &cfg.descriptors {
        let table = extract_table(spec, &data)?;
        let key = cache_key(cfg, spec, &data.fingerprint);
        paths.extend(store_table(&cfg.output_dir, &table, &data, &key)?);
    }
    Ok(paths)
}

/// Outcome of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { error_kind: String, message: String },
}

/// Files a cell depends on or produced, relative to the output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub feature_dumps: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion_schema: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub id: String,
    pub layout: Layout,
    pub descriptor: String,
    #[serde(flatten)]
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    pub artifacts: Artifacts,
}

impl CellOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    pub fn is_convergence_failure(&self) -> bool {
        matches!(&self.status, CellStatus::Failed { error_kind, .. } if error_kind == "convergence")
    }
}

/// Per-cell record on disk; everything but `wall_time_secs` is deterministic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub config_hash: String,
    pub wall_time_secs: f64,
    pub cell: CellOutcome,
}

/// Contents of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: serde_json::Value,
    pub cells: Vec<CellOutcome>,
}

/// Short name of an error's category, as stored in failed cells.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::Format { .. } => "format",
        Error::Parameter(_) => "parameter",
        Error::Size(_) => "size",
        Error::Degenerate(_) => "degenerate",
        Error::Data(_) => "data",
        Error::EmptyDataset(_) => "empty_dataset",
        Error::Split { .. } => "split",
        Error::Structure(_) => "structure",
        Error::Fit(_) => "fit",
        Error::Training(_) => "training",
        Error::Convergence { .. } => "convergence",
        Error::Report(_) => "report",
        Error::Record { .. } => "record",
        Error::Config(_) => "config",
    }
}

#[derive(Clone, Copy, Debug)]
enum ClassifierPlan<'a> {
    Knn { k: usize, metric: DistanceMetric },
    Svm { kernel: KernelConfig, svm: &'a SvmConfig },
}

struct CellPlan<'a> {
    id: String,
    /// Index into the prepared inputs (single descriptors, then fusion groups).
    input: usize,
    classifier: ClassifierPlan<'a>,
}

/// Numeric inputs shared by the cells of one descriptor or fusion group.
struct CellInputs {
    label: String,
    train: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
    dumps: Vec<PathBuf>,
    schema: Option<(PathBuf, String)>,
}

fn plain_inputs(table: &FeatureTable) -> CellInputs {
    let d = table.descriptor;
    CellInputs {
        label: d.tag().to_owned(),
        train: table.train.iter().map(|f| f.values().to_vec()).collect(),
        test: table.test.iter().map(|f| f.values().to_vec()).collect(),
        dumps: vec![dump_path("train", d), dump_path("test", d)],
        schema: None,
    }
}

fn fused_inputs(group: &[Descriptor], tables: &[FeatureTable]) -> Result<CellInputs> {
    let parts: Vec<&FeatureTable> = group
        .iter()
        .map(|d| tables.iter().find(|t| t.descriptor == *d).expect("validated group"))
        .collect();
    let families: Vec<&[FeatureVector]> = parts.iter().map(|t| t.train.as_slice()).collect();
    let schema = FusedSchema::fit(&families)?;
    let fuse_side = |side: fn(&FeatureTable) -> &[FeatureVector]| -> Result<Vec<Vec<f64>>> {
        let n = side(parts[0]).len();
        (0..n)
            .map(|i| {
                let sample: Vec<&FeatureVector> = parts.iter().map(|t| &side(t)[i]).collect();
                Ok(schema.fuse(&sample)?.into_values())
            })
            .collect()
    };
    let train = fuse_side(|t| &t.train)?;
    let test = fuse_side(|t| &t.test)?;
    let label = schema.label();
    let path = Path::new(MODEL_DIR).join(format!("fusion_{}.json", label.replace('+', "_")));
    let json = serde_json::to_string_pretty(&schema).expect("schema serializes");
    Ok(CellInputs {
        label,
        train,
        test,
        dumps: group
            .iter()
            .flat_map(|d| [dump_path("train", *d), dump_path("test", *d)])
            .collect(),
        schema: Some((path, json)),
    })
}

struct Labels<'a> {
    train: &'a [usize],
    test: &'a [usize],
    class_set: &'a [String],
    seed: u64,
}

/// Trains and scores one cell. Returns the report and, for SVM cells, the
/// model JSON.
fn evaluate_cell(
    inputs: &CellInputs,
    classifier: ClassifierPlan<'_>,
    labels: &Labels<'_>,
) -> Result<(EvalReport, Option<String>)> {
    let set = TrainingSet::new(inputs.train.clone(), labels.train.to_vec(), labels.class_set.to_vec())?;
    let (echo, predictions, model) = match classifier {
        ClassifierPlan::Knn { k, metric } => {
            let model = KnnModel::new(set, k, metric)?;
            let preds = inputs
                .test
                .iter()
                .map(|q| model.predict(q))
                .collect::<Result<Vec<_>>>()?;
            (ClassifierEcho::Knn { k, metric }, preds, None)
        }
        ClassifierPlan::Svm { kernel, svm } => {
            let kernel = kernel.resolve(&inputs.train, labels.seed)?;
            let model = svm_train(&set, kernel, &svm.params())?;
            let preds = inputs
                .test
                .iter()
                .map(|q| model.predict(q))
                .collect::<Result<Vec<_>>>()?;
            (
                ClassifierEcho::Svm { kernel, c: svm.c },
                preds,
                Some(model.to_json()),
            )
        }
    };
    let confusion = ConfusionMatrix::from_indices(labels.test, &predictions, labels.class_set)?;
    let echo = RunEcho {
        descriptor: inputs.label.clone(),
        classifier: echo,
    };
    Ok((EvalReport::new(echo, confusion), model))
}

fn plan_cells<'a>(cfg: &'a ExperimentConfig, labels: &[String]) -> Vec<CellPlan<'a>> {
    let mut variants: Vec<(String, ClassifierPlan<'a>)> = Vec::new();
    if let Some(knn) = &cfg.knn {
        for &metric in &knn.metrics {
            let slug = serde_json::to_value(metric).expect("metric serializes");
            let slug = slug.as_str().unwrap_or("metric").to_owned();
            variants.push((format!("knn-{slug}"), ClassifierPlan::Knn { k: knn.k, metric }));
        }
    }
    if let Some(svm) = &cfg.svm {
        for (i, &kernel) in svm.kernels.iter().enumerate() {
            variants.push((format!("svm{i}-{}", kernel.slug()), ClassifierPlan::Svm { kernel, svm }));
        }
    }
    let mut cells = Vec::new();
    // KNN cells before SVM cells within singles and within fused groups,
    // so records list in table order.
    let singles = cfg.descriptors.len();
    for range in [0..singles, singles..labels.len()] {
        for knn_pass in [true, false] {
            for input in range.clone() {
                for (slug, plan) in &variants {
                    if matches!(plan, ClassifierPlan::Knn { .. }) != knn_pass {
                        continue;
                    }
                    cells.push(CellPlan {
                        id: format!("{:03}_{}_{slug}", cells.len(), labels[input].replace('+', "_")),
                        input,
                        classifier: *plan,
                    });
                }
            }
        }
    }
    cells
}

/// Everything `run` produced, as returned to the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub tables: String,
}

impl RunOutput {
    pub fn any_failed(&self) -> bool {
        self.report.cells.iter().any(|c| !c.is_ok())
    }

    pub fn any_convergence_failure(&self) -> bool {
        self.report.cells.iter().any(CellOutcome::is_convergence_failure)
    }
}

fn fused_layout(classifier: &ClassifierPlan<'_>, fused: bool) -> Layout {
    match (classifier, fused) {
        (ClassifierPlan::Knn { .. }, false) => Layout::Table1,
        (ClassifierPlan::Svm { .. }, false) => Layout::Table2,
        (ClassifierPlan::Knn { .. }, true) => Layout::Table3,
        (ClassifierPlan::Svm { .. }, true) => Layout::Table4,
    }
}

fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Runs the full grid and writes every output file.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let data = prepare(cfg)?;
    for sub in [FEATURE_DIR, MODEL_DIR, RECORD_DIR] {
        let dir = out.join(sub);
        if sub != FEATURE_DIR && dir.is_dir() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        ensure_dir(&dir)?;
    }
    let tables: Vec<FeatureTable> = cfg
        .descriptors
        .iter()
        .map(|spec| cached_table(cfg, spec, &data))
        .collect::<Result<_>>()?;

    let mut inputs: Vec<Result<CellInputs>> = tables.iter().map(|t| Ok(plain_inputs(t))).collect();
    for group in &cfg.fusion {
        inputs.push(fused_inputs(group, &tables));
    }
    let input_labels: Vec<String> = cfg
        .descriptors
        .iter()
        .map(|d| d.descriptor().tag().to_owned())
        .chain(cfg.fusion.iter().map(|g| {
            g.iter().map(|d| d.tag()).collect::<Vec<_>>().join("+")
        }))
        .collect();
    for input in inputs.iter().flatten() {
        if let Some((path, json)) = &input.schema {
            write_text(&out.join(path), &format!("{json}\n"))?;
        }
    }

    let train_labels = data.train.label_indices();
    let test_labels = data.test.label_indices();
    let labels = Labels {
        train: &train_labels,
        test: &test_labels,
        class_set: data.train.class_set(),
        seed: cfg.seed,
    };
    let plans = plan_cells(cfg, &input_labels);
    let singles = cfg.descriptors.len();
    let results: Vec<(CellOutcome, Option<String>, f64)> = plans
        .par_iter()
        .map(|plan| {
            let start = Instant::now();
            let layout = fused_layout(&plan.classifier, plan.input >= singles);
            let (status, report, model, artifacts) = match &inputs[plan.input] {
                Err(e) => (failed(e), None, None, Artifacts::default()),
                Ok(input) => {
                    let mut artifacts = Artifacts {
                        feature_dumps: input.dumps.clone(),
                        model: None,
                        fusion_schema: input.schema.as_ref().map(|(p, _)| p.clone()),
                    };
                    match evaluate_cell(input, plan.classifier, &labels) {
                        Ok((report, model)) => {
                            if model.is_some() {
                                artifacts.model =
                                    Some(Path::new(MODEL_DIR).join(format!("{}.json", plan.id)));
                            }
                            (CellStatus::Ok, Some(report), model, artifacts)
                        }
                        Err(e) => (failed(&e), None, None, artifacts),
                    }
                }
            };
            if let CellStatus::Failed { message, .. } = &status {
                log::warn!("cell {} failed: {message}", plan.id);
            }
            let outcome = CellOutcome {
                id: plan.id.clone(),
                layout,
                descriptor: input_labels[plan.input].clone(),
                status,
                report,
                artifacts,
            };
            (outcome, model, start.elapsed().as_secs_f64())
        })
        .collect();

    let config_hash = cfg.hash();
    let mut cells = Vec::with_capacity(results.len());
    for (outcome, model, secs) in results {
        if let (Some(path), Some(json)) = (&outcome.artifacts.model, model) {
            write_text(&out.join(path), &json)?;
        }
        let record = RunRecord {
            config_hash: config_hash.clone(),
            wall_time_secs: secs,
            cell: outcome,
        };
        let path = out.join(RECORD_DIR).join(format!("{}.json", record.cell.id));
        write_text(&path, &to_json_line(&record))?;
        cells.push(record.cell);
    }
    let tables = render_tables(&cells);
    let report = RunReport {
        config_hash,
        config: cfg.canonical(),
        cells,
    };
    write_text(&out.join(REPORT_FILE), &to_json_line(&report))?;
    write_text(&out.join(TABLES_FILE), &tables)?;
    Ok(RunOutput { report, tables })
}

fn failed(e: &Error) -> CellStatus {
    CellStatus::Failed {
        error_kind: error_kind(e).to_owned(),
        message: e.to_string(),
    }
}

/// Renders every layout that has cells, followed by a list of failed cells.
pub fn render_tables(cells: &[CellOutcome]) -> String {
    let mut out = String::new();
    for layout in Layout::ALL {
        let in_layout: Vec<&CellOutcome> = cells.iter().filter(|c| c.layout == layout).collect();
        if in_layout.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        let reports: Vec<EvalReport> = in_layout.iter().filter_map(|c| c.report.clone()).collect();
        match render_report(&reports, layout) {
            Ok(text) => out.push_str(&text),
            Err(e) => {
                let _ = writeln!(out, "{layout}: {e}");
            }
        }
    }
    let failures: Vec<&CellOutcome> = cells.iter().filter(|c| !c.is_ok()).collect();
    if !failures.is_empty() {
        out.push_str("\nFailed cells\n");
        for c in failures {
            if let CellStatus::Failed { message, .. } = &c.status {
                let _ = writeln!(out, "  {}: {message}", c.id);
            }
        }
    }
    out
}

/// Stored records of a run directory, in cell order.
pub fn read_records(run_dir: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let dir = run_dir.as_ref().join(RECORD_DIR);
    let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    if paths.is_empty() {
        return Err(Error::Report(format!(
            "no run records under {}",
            run_dir.as_ref().display()
        )));
    }
    paths.sort();
    let mut records = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let record: RunRecord = serde_json::from_str(&text).map_err(|e| Error::Record {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if let Some(first) = records.first() {
            let first: &RunRecord = first;
            if first.config_hash != record.config_hash {
                return Err(Error::Record {
                    path,
                    reason: "config hash differs from the other records".into(),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

/// Re-renders the tables of a finished run from its records.
pub fn cmd_report(run_dir: impl AsRef<Path>) -> Result<(String, Vec<CellOutcome>)> {
    let cells: Vec<CellOutcome> = read_records(run_dir)?.into_iter().map(|r| r.cell).collect();
    Ok((render_tables(&cells), cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "dataset_root": "data",
            "descriptors": [{"kind": "LBP"}, {"kind": "LPQ"}, {"kind": "HAAR", "levels": 2}],
            "knn": {"k": 3},
            "svm": {"kernels": [{"kind": "rbf"}, {"kind": "polynomial", "degree": 2}]},
            "fusion": [["LPQ", "HAAR"]],
            "output_dir": "out"
        }"#
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.preprocess, PreprocessConfig::default());
        assert_eq!(cfg.split, SplitSpec::default());
        assert_eq!(cfg.descriptors[1], DescriptorSpec::Lpq { window: 7 });
        assert_eq!(cfg.knn.as_ref().unwrap().metrics.len(), 4);
        let svm = cfg.svm.as_ref().unwrap();
        assert_eq!((svm.c, svm.tol), (10.0, 1e-3));
        assert_eq!(
            svm.kernels[1],
            KernelConfig::Polynomial {
                degree: 2,
                offset: 1.0
            }
        );
    }

    #[test]
    fn hash_survives_reserialization() {
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        let again = ExperimentConfig::from_json(&serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        assert_eq!(cfg.hash(), again.hash());
        let moved = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..cfg.clone()
        };
        assert_eq!(cfg.hash(), moved.hash());
        let reseeded = ExperimentConfig { seed: 1, ..cfg.clone() };
        assert_ne!(cfg.hash(), reseeded.hash());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            minimal().replace(r#"["LPQ", "HAAR"]"#, r#"["LPQ", "DB8"]"#),
            minimal().replace(r#"["LPQ", "HAAR"]"#, r#"["LPQ"]"#),
            minimal().replace(r#"{"kind": "LBP"}, "#, r#"{"kind": "LPQ", "window": 4}, "#),
            minimal().replace(r#""k": 3"#, r#""k": 0"#),
            minimal().replace(r#""output_dir""#, r#""typo": 1, "output_dir""#),
            minimal().replace(r#"{"kind": "LBP"}"#, r#"{"kind": "HAAR"}"#),
        ];
        for text in bad {
            assert!(
                matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn grid_shape() {
        let cfg = ExperimentConfig::from_json(minimal()).unwrap();
        let labels = vec!["LBP".into(), "LPQ".into(), "HAAR".into(), "LPQ+HAAR".into()];
        let plans = plan_cells(&cfg, &labels);
        // 3 descriptors × (4 metrics + 2 kernels) + 1 pair × 6 variants
        assert_eq!(plans.len(), 24);
        let fused: Vec<&CellPlan> = plans.iter().filter(|p| p.input == 3).collect();
        assert_eq!(fused.len(), 6);
        assert_eq!(plans[0].id, "000_LBP_knn-euclidean");
        assert!(plans[23].id.starts_with("023_LPQ_HAAR_svm1-poly"));
        let mut sorted: Vec<&str> = plans.iter().map(|p| p.id.as_str()).collect();
        sorted.sort();
        assert_eq!(sorted, plans.iter().map(|p| p.id.as_str()).collect::<Vec<_>>());
    }
}
