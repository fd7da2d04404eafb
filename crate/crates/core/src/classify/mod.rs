//! Nearest-neighbour and support-vector classifiers.

pub mod distance;
pub mod kernel;
pub mod knn;
pub mod svm;

use crate::error::{Error, Result};

pub use distance::{distance, DistanceMetric};
pub use kernel::{gram_matrix, kernel_eval, KernelSpec};
pub use knn::KnnModel;
pub use svm::{sigma_median_heuristic, svm_predict, svm_train, SvmParams, TrainedSvm};

/// Labelled training vectors. Labels index into `class_set`, whose order
/// is the final tie-breaker of both classifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    vectors: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_set: Vec<String>,
}

impl TrainingSet {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<usize>, class_set: Vec<String>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        if vectors.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        let dim = vectors[0].len();
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Data("training vectors must share a positive dimension".into()));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite training feature".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_set.len()) {
            return Err(Error::Data(format!("label {bad} outside class set")));
        }
        let mut sorted = class_set.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("class set has duplicates".into()));
        }
        Ok(TrainingSet {
            vectors,
            labels,
            class_set,
        })
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_set(&self) -> &[String] {
        &self.class_set
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}
