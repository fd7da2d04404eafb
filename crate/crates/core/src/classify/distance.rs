use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dissimilarity measures available to the nearest-neighbour classifier.
///
/// * Euclidean: `sqrt(Σ (xⱼ - yⱼ)²)`
/// * City block: `Σ |xⱼ - yⱼ|`
/// * Cosine: `1 - x·y / (‖x‖ ‖y‖)`
/// * Correlation: one minus the sample correlation of `x` and `y`, i.e.
///   cosine distance after subtracting each vector's mean.
///
/// Cosine and correlation lie in `[0, 2]` and are not metrics in the strict
/// sense (no triangle inequality).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    Cityblock,
    Cosine,
    Correlation,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 4] = [
        DistanceMetric::Euclidean,
        DistanceMetric::Cityblock,
        DistanceMetric::Cosine,
        DistanceMetric::Correlation,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "Euclidean",
            DistanceMetric::Cityblock => "City block",
            DistanceMetric::Cosine => "Cosine",
            DistanceMetric::Correlation => "Correlation",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

pub fn distance(x: &[f64], y: &[f64], metric: DistanceMetric) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Parameter(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Parameter("vectors must be non-empty".into()));
    }
    match metric {
        DistanceMetric::Euclidean => Ok(x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()),
        DistanceMetric::Cityblock => Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()),
        DistanceMetric::Cosine => {
            let (nx, ny) = (norm(x), norm(y));
            if nx == 0.0 || ny == 0.0 {
                return Err(Error::Degenerate("cosine distance of a zero vector".into()));
            }
            Ok(one_minus(dot(x, y) / (nx * ny)))
        }
        DistanceMetric::Correlation => {
            if x.len() < 2 {
                return Err(Error::Degenerate(
                    "correlation distance needs at least two dimensions".into(),
                ));
            }
            let cx = centered(x);
            let cy = centered(y);
            let (nx, ny) = (norm(&cx), norm(&cy));
            if nx == 0.0 || ny == 0.0 {
                return Err(Error::Degenerate("correlation distance of a constant vector".into()));
            }
            Ok(one_minus(dot(&cx, &cy) / (nx * ny)))
        }
    }
}

fn one_minus(similarity: f64) -> f64 {
    1.0 - similarity.clamp(-1.0, 1.0)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use DistanceMetric::*;

    #[test]
    fn textbook_values() {
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0], Euclidean).unwrap(), 5.0);
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0], Cityblock).unwrap(), 7.0);
        assert_eq!(distance(&[1.0, 0.0], &[0.0, 1.0], Cosine).unwrap(), 1.0);
        assert!(distance(&[1.0, 2.0], &[2.0, 4.0], Cosine).unwrap().abs() < 1e-15);
        assert!((distance(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], Correlation).unwrap() - 2.0).abs() < 1e-15);
        assert!(distance(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0], Correlation).unwrap().abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(distance(&[0.0, 0.0], &[1.0, 2.0], Cosine), Err(Error::Degenerate(_))));
        assert!(matches!(distance(&[3.0, 3.0], &[1.0, 2.0], Correlation), Err(Error::Degenerate(_))));
        assert!(matches!(distance(&[3.0], &[1.0], Correlation), Err(Error::Degenerate(_))));
        assert!(matches!(distance(&[1.0], &[1.0, 2.0], Euclidean), Err(Error::Parameter(_))));
    }
}
