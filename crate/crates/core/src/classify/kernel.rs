use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SVM kernel.
///
/// * RBF: `k(x, x') = exp(-‖x - x'‖² / (2σ²))`
/// * Polynomial: `K(x, y) = (xᵀy + c)^d`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum KernelSpec {
    Rbf { sigma: f64 },
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::Parameter(format!("RBF sigma must be positive, got {sigma}")),
            ),
            KernelSpec::Polynomial { degree: 0, .. } => {
                Err(Error::Parameter("polynomial degree must be positive".into()))
            }
            KernelSpec::Polynomial { offset, .. } if !(offset >= 0.0 && offset.is_finite()) => Err(
                Error::Parameter(format!("polynomial offset must be >= 0, got {offset}")),
            ),
            _ => Ok(()),
        }
    }

    /// Evaluates the kernel; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { sigma } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Polynomial { degree, offset } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (dot + offset).powi(degree as i32)
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Rbf { .. } => f.write_str("Gaussian"),
            KernelSpec::Polynomial { .. } => f.write_str("Polynomial"),
        }
    }
}

pub fn kernel_eval(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::Parameter(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(spec.apply(x, y))
}

/// Kernel matrix `K[i][j] = k(xᵢ, xⱼ)`, row-major, computed on the upper
/// triangle and mirrored so it is exactly symmetric.
pub fn gram_matrix(vectors: &[Vec<f64>], spec: &KernelSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = vectors.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel_eval(&vectors[i], &vectors[j], spec)?;
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    Ok(k)
}
