use crate::classify::distance::{distance, DistanceMetric};
use crate::classify::TrainingSet;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;

/// Nearest-neighbour classifier over stored training vectors.
///
/// Ties are resolved by fixed rules so predictions are a total function of
/// the inputs:
/// * among equal distances at the k-th position, lower training index wins;
/// * among classes with equal vote counts, the smaller summed neighbour
///   distance wins, then the earlier class in the class set.
#[derive(Clone, Debug)]
pub struct KnnModel {
    k: usize,
    metric: DistanceMetric,
    train: TrainingSet,
}

impl KnnModel {
    pub fn new(train: TrainingSet, k: usize, metric: DistanceMetric) -> Result<Self> {
        if k == 0 || k > train.len() {
            return Err(Error::Parameter(format!(
                "k = {k} must lie in 1..={}",
                train.len()
            )));
        }
        Ok(KnnModel { k, metric, train })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn class_set(&self) -> &[String] {
        self.train.class_set()
    }

    /// The k nearest training indices with their distances, nearest first.
    pub fn neighbours(&self, query: &[f64]) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.train.dim() {
            return Err(Error::Parameter(format!(
                "query has {} dimensions, model expects {}",
                query.len(),
                self.train.dim()
            )));
        }
        let mut scored = self
            .train
            .vectors()
            .iter()
            .enumerate()
            .map(|(i, v)| distance(v, query, self.metric).map(|d| (i, d)))
            .collect::<Result<Vec<_>>>()?;
        let order = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        if self.k < scored.len() {
            scored.select_nth_unstable_by(self.k - 1, order);
            scored.truncate(self.k);
        }
        scored.sort_unstable_by(order);
        Ok(scored)
    }

    /// Predicted class index into the class set.
    pub fn predict(&self, query: &[f64]) -> Result<usize> {
        let neighbours = self.neighbours(query)?;
        let classes = self.train.class_set().len();
        let mut votes = vec![0usize; classes];
        let mut summed = vec![0.0f64; classes];
        for &(i, d) in &neighbours {
            let c = self.train.labels()[i];
            votes[c] += 1;
            summed[c] += d;
        }
        let best = (0..classes)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b]
                    .cmp(&votes[a])
                    .then(summed[a].total_cmp(&summed[b]))
                    .then(a.cmp(&b))
            })
            .expect("k >= 1 neighbours vote");
        Ok(best)
    }

    pub fn predict_label(&self, query: &[f64]) -> Result<&str> {
        Ok(&self.train.class_set()[self.predict(query)?])
    }
}
