//! Texture descriptors mapping a [`GrayImage`](crate::image::GrayImage) to a
//! fixed-length [`FeatureVector`].
//!
//! | descriptor | module | dim (defaults) |
//! |---|---|---|
//! | LBP | [`lbp`] | 256 |
//! | LPQ | [`lpq`] | 256 |
//! | Log-Gabor | [`log_gabor`] | 2 · scales · orientations = 48 |
//! | Haar / Db8 | [`wavelet`] | 2 · (3 · levels + 1) = 20 |

pub mod lbp;
pub mod log_gabor;
pub mod lpq;
pub mod wavelet;

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::SampleRecord;
use crate::error::{Error, Result};

pub use lbp::lbp_descriptor;
pub use log_gabor::{build_log_gabor_bank, log_gabor_descriptor, log_gabor_transfer, LogGaborBank, LogGaborParams};
pub use lpq::lpq_descriptor;
pub use wavelet::{dwt2, dwt_descriptor, idwt2, SubbandPyramid, WaveletFilter, WaveletKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Descriptor {
    Lbp,
    Lpq,
    LogGabor,
    Haar,
    Db8,
    Fused,
}

impl Descriptor {
    pub const fn tag(self) -> &'static str {
        match self {
            Descriptor::Lbp => "LBP",
            Descriptor::Lpq => "LPQ",
            Descriptor::LogGabor => "LOGGABOR",
            Descriptor::Haar => "HAAR",
            Descriptor::Db8 => "DB8",
            Descriptor::Fused => "FUSED",
        }
    }

    /// Histogram descriptors are nonnegative and sum to one.
    pub const fn is_histogram(self) -> bool {
        matches!(self, Descriptor::Lbp | Descriptor::Lpq)
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "LBP" => Descriptor::Lbp,
            "LPQ" => Descriptor::Lpq,
            "LOGGABOR" => Descriptor::LogGabor,
            "HAAR" => Descriptor::Haar,
            "DB8" => Descriptor::Db8,
            "FUSED" => Descriptor::Fused,
            other => return Err(Error::Data(format!("unknown descriptor tag {other:?}"))),
        })
    }
}

/// A tagged, finite, non-empty feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    descriptor: Descriptor,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(descriptor: Descriptor, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data(format!("empty {descriptor} feature vector")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in {descriptor} feature vector")));
        }
        Ok(FeatureVector { descriptor, values })
    }

    pub fn descriptor(&self) -> Descriptor {
        self.descriptor
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Turns raw bin counts into a histogram that sums to one.
pub(crate) fn normalized_histogram(descriptor: Descriptor, counts: &[u64]) -> Result<FeatureVector> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Size(format!("{descriptor}: no pixel produced a code")));
    }
    let total = total as f64;
    FeatureVector::new(descriptor, counts.iter().map(|&c| c as f64 / total).collect())
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Writes a feature dump: one line per sample,
/// `subject_id<TAB>sample_index<TAB>descriptor<TAB>v1,v2,...` with every
/// value at 17 significant digits.
pub fn write_feature_dump<W: Write>(
    mut out: W,
    rows: impl IntoIterator<Item = (impl AsRef<SampleRecord>, impl AsRef<FeatureVector>)>,
) -> std::io::Result<()> {
    for (record, fv) in rows {
        let (record, fv) = (record.as_ref(), fv.as_ref());
        write!(out, "{}\t{}\t{}\t", record.subject_id, record.sample_index, fv.descriptor)?;
        for (i, v) in fv.values.iter().enumerate() {
            if i > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{v:.16e}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One parsed line of a feature dump.
#[derive(Clone, Debug, PartialEq)]
pub struct DumpRow {
    pub subject_id: String,
    pub sample_index: usize,
    pub features: FeatureVector,
}

pub fn read_feature_dump<R: BufRead>(input: R, origin: &Path) -> Result<Vec<DumpRow>> {
    let bad = |line: usize, reason: &str| Error::Record {
        path: origin.to_owned(),
        reason: format!("line {line}: {reason}"),
    };
    let mut rows = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [subject, index, tag, values] = fields[..] else {
            return Err(bad(n + 1, "expected 4 tab-separated fields"));
        };
        let sample_index = index.parse().map_err(|_| bad(n + 1, "bad sample index"))?;
        let descriptor = tag.parse().map_err(|_| bad(n + 1, "bad descriptor tag"))?;
        let values = values
            .split(',')
            .map(f64::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(n + 1, "bad feature value"))?;
        let features =
            FeatureVector::new(descriptor, values).map_err(|e| bad(n + 1, &e.to_string()))?;
        rows.push(DumpRow {
            subject_id: subject.to_owned(),
            sample_index,
            features,
        });
    }
    Ok(rows)
}

impl AsRef<FeatureVector> for FeatureVector {
    fn as_ref(&self) -> &FeatureVector {
        self
    }
}

impl AsRef<SampleRecord> for SampleRecord {
    fn as_ref(&self) -> &SampleRecord {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::path::PathBuf;

    #[test]
    fn rejects_non_finite() {
        assert!(FeatureVector::new(Descriptor::Haar, vec![1.0, f64::NAN]).is_err());
        assert!(FeatureVector::new(Descriptor::Haar, vec![]).is_err());
    }

    #[test]
    fn dump_line_format() {
        let rec = SampleRecord {
            subject_id: "s01".into(),
            sample_index: 3,
            source_path: PathBuf::new(),
        };
        let fv = FeatureVector::new(Descriptor::Haar, vec![0.1, -2.0]).unwrap();
        let mut out = Vec::new();
        write_feature_dump(&mut out, [(&rec, &fv)]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "s01\t3\tHAAR\t1.0000000000000001e-1,-2.0000000000000000e0\n"
        );
    }

    proptest! {
        #[test]
        fn dump_round_trips_bit_exactly(values in prop::collection::vec(-1e300f64..1e300, 1..20)) {
            let rec = SampleRecord { subject_id: "x".into(), sample_index: 0, source_path: PathBuf::new() };
            let fv = FeatureVector::new(Descriptor::Lpq, values).unwrap();
            let mut out = Vec::new();
            write_feature_dump(&mut out, [(&rec, &fv)]).unwrap();
            let rows = read_feature_dump(&out[..], Path::new("mem")).unwrap();
            prop_assert_eq!(&rows[0].features, &fv);
        }
    }
}
