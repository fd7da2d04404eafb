//! Closed-set identification metrics and table rendering.
//!
//! Recognition rate is plain accuracy in percent. Recall, precision and
//! F-measure are computed per class from the confusion matrix and averaged
//! without weights (macro average). A class with no true samples (or no
//! predictions) gets recall (or precision) 0 and is flagged.

use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use crate::classify::{DistanceMetric, KernelSpec};
use crate::error::{Error, Result};

/// Rows are the true class, columns the predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_set: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Builds the matrix from class indices into `class_set`.
    pub fn from_indices(truth: &[usize], pred: &[usize], class_set: &[String]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Parameter(format!(
                "{} truths but {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::Parameter("no samples to evaluate".into()));
        }
        let c = class_set.len();
        let mut counts = vec![vec![0u64; c]; c];
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= c || p >= c {
                return Err(Error::Data(format!("class index {} outside class set", t.max(p))));
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix {
            class_set: class_set.to_vec(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

/// Confusion matrix from label strings.
pub fn confusion_matrix<S: AsRef<str>>(truth: &[S], pred: &[S], class_set: &[String]) -> Result<ConfusionMatrix> {
    let index = |label: &S| {
        class_set
            .iter()
            .position(|c| c == label.as_ref())
            .ok_or_else(|| Error::Data(format!("unknown label {:?}", label.as_ref())))
    };
    if truth.len() != pred.len() {
        return Err(Error::Parameter(format!(
            "{} truths but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let t = truth.iter().map(index).collect::<Result<Vec<_>>>()?;
    let p = pred.iter().map(index).collect::<Result<Vec<_>>>()?;
    ConfusionMatrix::from_indices(&t, &p, class_set)
}

/// `100 · correct / total`.
pub fn recognition_rate(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    100.0 * cm.correct() as f64 / total as f64
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    /// Set when nothing was predicted as this class.
    pub precision_undefined: bool,
    /// Set when the class has no true samples.
    pub recall_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f_measure: f64,
}

pub fn precision_recall_f(cm: &ConfusionMatrix) -> Metrics {
    let c = cm.class_set.len();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = cm.counts[k][k] as f64;
            let row: u64 = cm.counts[k].iter().sum();
            let col: u64 = cm.counts.iter().map(|r| r[k]).sum();
            let recall = if row > 0 { tp / row as f64 } else { 0.0 };
            let precision = if col > 0 { tp / col as f64 } else { 0.0 };
            ClassMetrics {
                label: cm.class_set[k].clone(),
                precision,
                recall,
                f_measure: f_measure(precision, recall),
                precision_undefined: col == 0,
                recall_undefined: row == 0,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if c == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / c as f64
        }
    };
    Metrics {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f_measure: mean(|m| m.f_measure),
        per_class,
    }
}

/// Classifier settings echoed in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "classifier")]
pub enum ClassifierEcho {
    Knn { k: usize, metric: DistanceMetric },
    Svm { kernel: KernelSpec, c: f64 },
}

impl ClassifierEcho {
    fn row_label(&self) -> String {
        match self {
            ClassifierEcho::Knn { metric, .. } => metric.display_name().to_owned(),
            ClassifierEcho::Svm { kernel, .. } => kernel.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    /// Descriptor tag, or tags joined by `+` for fused runs.
    pub descriptor: String,
    #[serde(flatten)]
    pub classifier: ClassifierEcho,
}

impl RunEcho {
    pub fn is_fused(&self) -> bool {
        self.descriptor.contains('+')
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RunEcho,
    pub recognition_rate: f64,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn new(config: RunEcho, confusion: ConfusionMatrix) -> Self {
        EvalReport {
            config,
            recognition_rate: recognition_rate(&confusion),
            metrics: precision_recall_f(&confusion),
            confusion,
        }
    }
}

/// The four table shapes: single-descriptor rate grids for KNN (`Table1`)
/// and SVM (`Table2`); fused runs with rate, recall, precision and F-measure
/// for KNN (`Table3`) and SVM (`Table4`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Table1,
    Table2,
    Table3,
    Table4,
}

impl Layout {
    pub const ALL: [Layout; 4] = [Layout::Table1, Layout::Table2, Layout::Table3, Layout::Table4];

    pub fn for_run(echo: &RunEcho) -> Layout {
        match (&echo.classifier, echo.is_fused()) {
            (ClassifierEcho::Knn { .. }, false) => Layout::Table1,
            (ClassifierEcho::Svm { .. }, false) => Layout::Table2,
            (ClassifierEcho::Knn { .. }, true) => Layout::Table3,
            (ClassifierEcho::Svm { .. }, true) => Layout::Table4,
        }
    }

    fn title(self) -> &'static str {
        match self {
            Layout::Table1 => "Performance of K-NN classifier",
            Layout::Table2 => "Performance of SVM classifier",
            Layout::Table3 => "Performance of K-NN classifier with z-score feature-level fusion",
            Layout::Table4 => "Performance of SVM classifier with z-score feature-level fusion",
        }
    }

    fn row_header(self) -> &'static str {
        match self {
            Layout::Table1 | Layout::Table3 => "Distance measure",
            Layout::Table2 | Layout::Table4 => "Kernel option",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Layout::Table1 => "table1",
            Layout::Table2 => "table2",
            Layout::Table3 => "table3",
            Layout::Table4 => "table4",
        };
        f.write_str(s)
    }
}

fn unique_in_order<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

fn render_rows(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        s.trim_end().to_owned()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// Renders reports as one of the four table shapes. Rows and columns appear
/// in order of first occurrence; every grid cell must be covered.
pub fn render_report(reports: &[EvalReport], layout: Layout) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Report(format!("no reports to render as {layout}")));
    }
    if let Some(bad) = reports.iter().find(|r| Layout::for_run(&r.config) != layout) {
        return Err(Error::Report(format!(
            "{} run with {} does not belong in {layout}",
            bad.config.descriptor,
            bad.config.classifier.row_label()
        )));
    }
    let row_keys = unique_in_order(reports.iter().map(|r| r.config.classifier.row_label()));
    let descriptors = unique_in_order(reports.iter().map(|r| r.config.descriptor.clone()));
    let cell = |row: &str, descriptor: &str| {
        reports
            .iter()
            .find(|r| r.config.classifier.row_label() == row && r.config.descriptor == descriptor)
            .ok_or_else(|| Error::Report(format!("{layout} is missing cell ({row}, {descriptor})")))
    };

    let mut out = format!("{}\n\n", layout.title());
    match layout {
        Layout::Table1 | Layout::Table2 => {
            let mut header = vec![layout.row_header().to_owned()];
            header.extend(descriptors.iter().cloned());
            let mut rows = Vec::new();
            for row in &row_keys {
                let mut cells = vec![row.clone()];
                for d in &descriptors {
                    cells.push(format!("{:.2}", cell(row, d)?.recognition_rate));
                }
                rows.push(cells);
            }
            out.push_str("Recognition rate (%)\n");
            out.push_str(&render_rows(&header, &rows));
        }
        Layout::Table3 | Layout::Table4 => {
            for (n, d) in descriptors.iter().enumerate() {
                if n > 0 {
                    out.push('\n');
                }
                let header: Vec<String> = [
                    layout.row_header(),
                    "Fusion recognition rate (%)",
                    "Recall",
                    "Precision",
                    "F-measure",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect();
                let mut rows = Vec::new();
                for row in &row_keys {
                    let r = cell(row, d)?;
                    rows.push(vec![
                        row.clone(),
                        format!("{:.2}", r.recognition_rate),
                        format!("{:.3}", r.metrics.macro_recall),
                        format!("{:.3}", r.metrics.macro_precision),
                        format!("{:.3}", r.metrics.macro_f_measure),
                    ]);
                }
                let _ = writeln!(out, "{d}");
                out.push_str(&render_rows(&header, &rows));
            }
        }
    }
    Ok(out)
}
