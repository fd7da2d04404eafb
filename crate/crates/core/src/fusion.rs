//! Feature-level fusion: per-dimension z-score normalization fitted on the
//! training side, followed by concatenation.
//!
//! Each descriptor family gets its own [`ZScoreParams`]; a dimension that is
//! constant on the training data carries no information and is mapped to 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Descriptor, FeatureVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScoreParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Indices whose training standard deviation is 0.
    pub dropped: Vec<usize>,
}

impl ZScoreParams {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Fits mean and sample standard deviation (divisor `N - 1`) per dimension.
pub fn fit_zscore<V: AsRef<[f64]>>(train: &[V]) -> Result<ZScoreParams> {
    if train.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 training vectors, got {}",
            train.len()
        )));
    }
    let dim = train[0].as_ref().len();
    if train.iter().any(|v| v.as_ref().len() != dim) {
        return Err(Error::Fit("training vectors differ in dimension".into()));
    }
    let n = train.len() as f64;
    let mut mu = vec![0.0; dim];
    let mut sigma = vec![0.0; dim];
    let mut dropped = Vec::new();
    for j in 0..dim {
        let column = || train.iter().map(|v| v.as_ref()[j]);
        let first = train[0].as_ref()[j];
        if column().all(|x| x == first) {
            mu[j] = first;
            dropped.push(j);
            continue;
        }
        let mean = column().sum::<f64>() / n;
        let var = column().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        mu[j] = mean;
        sigma[j] = var.sqrt();
    }
    if dropped.len() == dim {
        log::warn!("every dimension is constant on the training data; z-score output will be all zeros");
    }
    Ok(ZScoreParams { mu, sigma, dropped })
}

/// `(xⱼ - μⱼ) / σⱼ`, with 0 on dropped dimensions.
pub fn apply_zscore(x: &[f64], p: &ZScoreParams) -> Result<Vec<f64>> {
    if x.len() != p.dim() {
        return Err(Error::Parameter(format!(
            "vector has {} dimensions, normalizer expects {}",
            x.len(),
            p.dim()
        )));
    }
    Ok(x.iter()
        .zip(p.mu.iter().zip(&p.sigma))
        .map(|(&v, (&m, &s))| if s == 0.0 { 0.0 } else { (v - m) / s })
        .collect())
}

/// Normalizes each part with its own parameters and concatenates them in the
/// given order.
pub fn fuse_concat(parts: &[(&FeatureVector, &ZScoreParams)]) -> Result<FeatureVector> {
    if parts.len() < 2 {
        return Err(Error::Parameter(format!(
            "fusion needs at least two parts, got {}",
            parts.len()
        )));
    }
    let mut values = Vec::with_capacity(parts.iter().map(|(fv, _)| fv.dim()).sum());
    for (fv, params) in parts {
        values.extend(apply_zscore(fv.values(), params)?);
    }
    FeatureVector::new(Descriptor::Fused, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedPart {
    pub descriptor: Descriptor,
    pub dim: usize,
    pub params: ZScoreParams,
}

/// Ordered normalizers of a fused representation, persisted next to models
/// so train and test features can be checked for the same layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedSchema {
    pub parts: Vec<FusedPart>,
    pub total_dim: usize,
}

impl FusedSchema {
    /// Fits one normalizer per descriptor family. `families[p][i]` is the
    /// training vector of sample `i` for part `p`.
    pub fn fit(families: &[&[FeatureVector]]) -> Result<Self> {
        if families.len() < 2 {
            return Err(Error::Parameter("fusion needs at least two parts".into()));
        }
        let mut parts = Vec::with_capacity(families.len());
        for family in families {
            let first = family
                .first()
                .ok_or_else(|| Error::Fit("empty training family".into()))?;
            let descriptor = first.descriptor();
            if family.iter().any(|fv| fv.descriptor() != descriptor) {
                return Err(Error::Fit("mixed descriptors within one fusion part".into()));
            }
            let rows: Vec<&[f64]> = family.iter().map(|fv| fv.values()).collect();
            let params = fit_zscore(&rows)?;
            parts.push(FusedPart {
                descriptor,
                dim: params.dim(),
                params,
            });
        }
        let total_dim = parts.iter().map(|p| p.dim).sum();
        Ok(FusedSchema { parts, total_dim })
    }

    /// Fuses one sample's per-part vectors, checking descriptor order.
    pub fn fuse(&self, vectors: &[&FeatureVector]) -> Result<FeatureVector> {
        if vectors.len() != self.parts.len() {
            return Err(Error::Parameter(format!(
                "schema has {} parts, got {} vectors",
                self.parts.len(),
                vectors.len()
            )));
        }
        for (fv, part) in vectors.iter().zip(&self.parts) {
            if fv.descriptor() != part.descriptor {
                return Err(Error::Parameter(format!(
                    "expected {} part, got {}",
                    part.descriptor,
                    fv.descriptor()
                )));
            }
        }
        let pairs: Vec<(&FeatureVector, &ZScoreParams)> =
            vectors.iter().copied().zip(self.parts.iter().map(|p| &p.params)).collect();
        fuse_concat(&pairs)
    }

    pub fn label(&self) -> String {
        self.parts
            .iter()
            .map(|p| p.descriptor.tag())
            .collect::<Vec<_>>()
            .join("+")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_spaced_column() {
        let p = fit_zscore(&[[1.0], [2.0], [3.0]]).unwrap();
        assert_eq!((p.mu[0], p.sigma[0]), (2.0, 1.0));
        let mapped: Vec<f64> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&v| apply_zscore(&[v], &p).unwrap()[0])
            .collect();
        assert_eq!(mapped, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_columns_are_dropped() {
        let p = fit_zscore(&[[1.0, 0.1], [2.0, 0.1], [4.0, 0.1]]).unwrap();
        assert_eq!(p.dropped, vec![1]);
        assert_eq!(p.sigma[1], 0.0);
        assert_eq!(apply_zscore(&[9.0, 5.0], &p).unwrap()[1], 0.0);

        let p = fit_zscore(&[[1.0, 2.0], [1.0, 2.0]]).unwrap();
        assert_eq!(p.dropped, vec![0, 1]);
    }

    #[test]
    fn mean_maps_to_origin() {
        let p = fit_zscore(&[[1.0, 5.0], [3.0, -1.0], [8.0, 2.0]]).unwrap();
        let z = apply_zscore(&p.mu.clone(), &p).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_preconditions() {
        assert!(matches!(fit_zscore(&[[1.0]]), Err(Error::Fit(_))));
        let p = fit_zscore(&[[1.0], [2.0]]).unwrap();
        assert!(matches!(apply_zscore(&[1.0, 2.0], &p), Err(Error::Parameter(_))));
    }

    #[test]
    fn concat_dims_and_order() {
        let a = FeatureVector::new(Descriptor::Lpq, vec![1.0, 2.0]).unwrap();
        let b = FeatureVector::new(Descriptor::Haar, vec![3.0]).unwrap();
        let pa = ZScoreParams {
            mu: vec![0.0, 0.0],
            sigma: vec![1.0, 2.0],
            dropped: vec![],
        };
        let pb = ZScoreParams {
            mu: vec![1.0],
            sigma: vec![1.0],
            dropped: vec![],
        };
        let ab = fuse_concat(&[(&a, &pa), (&b, &pb)]).unwrap();
        assert_eq!(ab.descriptor(), Descriptor::Fused);
        assert_eq!(ab.values(), &[1.0, 1.0, 2.0]);
        let ba = fuse_concat(&[(&b, &pb), (&a, &pa)]).unwrap();
        assert_eq!(ba.values(), &[2.0, 1.0, 1.0]);
        assert!(fuse_concat(&[(&a, &pa)]).is_err());
    }

    #[test]
    fn schema_checks_part_order() {
        let lpq: Vec<FeatureVector> = (0..3)
            .map(|i| FeatureVector::new(Descriptor::Lpq, vec![i as f64, 1.0]).unwrap())
            .collect();
        let haar: Vec<FeatureVector> = (0..3)
            .map(|i| FeatureVector::new(Descriptor::Haar, vec![(i * i) as f64]).unwrap())
            .collect();
        let schema = FusedSchema::fit(&[&lpq, &haar]).unwrap();
        assert_eq!(schema.total_dim, 3);
        assert_eq!(schema.label(), "LPQ+HAAR");
        assert_eq!(schema.fuse(&[&lpq[0], &haar[0]]).unwrap().dim(), 3);
        assert!(schema.fuse(&[&haar[0], &lpq[0]]).is_err());
    }
}
