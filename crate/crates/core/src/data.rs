//! Datasets, min-max normalization, and the CSV format `x1,..,xd,y`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    #[default]
    Train,
    Validation,
    Test,
}

/// Row-major samples with one or more targets per row.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub kind: DatasetKind,
}

impl Dataset {
    /// Single-target dataset.
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, kind: DatasetKind) -> Self {
        Dataset {
            inputs,
            targets: targets.into_iter().map(|y| vec![y]).collect(),
            kind,
        }
    }

    pub fn empty(kind: DatasetKind) -> Self {
        Dataset {
            kind,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn n_targets(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// First target column.
    pub fn target_column(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t[0]).collect()
    }

    pub fn validate_shape(&self, features: usize, outputs: usize) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} input rows but {} target rows",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        for (row, (x, y)) in self.inputs.iter().zip(&self.targets).enumerate() {
            if x.len() != features {
                return Err(Error::FeatureCount {
                    expected: features,
                    found: x.len(),
                });
            }
            if y.len() != outputs {
                return Err(Error::SchemaMismatch(format!(
                    "row {row}: expected {outputs} targets, got {}",
                    y.len()
                )));
            }
        }
        Ok(())
    }

    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut out = self.clone();
        out.inputs.extend(other.inputs.iter().cloned());
        out.targets.extend(other.targets.iter().cloned());
        out
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            inputs: self.inputs[range.clone()].to_vec(),
            targets: self.targets[range].to_vec(),
            kind: self.kind,
        }
    }

    pub fn with_kind(mut self, kind: DatasetKind) -> Dataset {
        self.kind = kind;
        self
    }

    /// Reads `x1,..,xd,y` (or `..,y1,..,ym`) CSV with a header row.
    pub fn read_csv(path: &Path, kind: DatasetKind) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let n_targets = headers.iter().filter(|h| h.trim().starts_with('y')).count();
        if n_targets == 0 {
            return Err(Error::Format(format!(
                "{}: no y column in header",
                path.display()
            )));
        }
        let n_features = headers.len() - n_targets;
        let mut ds = Dataset::empty(kind);
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("{s:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != headers.len() {
                return Err(Error::Format(format!(
                    "row has {} fields, header {}",
                    vals.len(),
                    headers.len()
                )));
            }
            ds.inputs.push(vals[..n_features].to_vec());
            ds.targets.push(vals[n_features..].to_vec());
        }
        Ok(ds)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.n_features();
        let m = self.n_targets().max(1);
        let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        if m == 1 {
            header.push("y".into());
        } else {
            header.extend((1..=m).map(|i| format!("y{i}")));
        }
        w.write_record(&header)?;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            w.write_record(x.iter().chain(y).map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-feature min-max bounds mapping raw inputs onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Slack allowed when checking normalized inputs against `[0, 1]`.
const RANGE_SLACK: f64 = 1e-12;

impl Normalizer {
    pub fn identity(features: usize) -> Self {
        Normalizer {
            min: vec![0.0; features],
            max: vec![1.0; features],
        }
    }

    pub fn fit<'a>(sets: impl IntoIterator<Item = &'a Dataset>) -> Result<Self> {
        let mut min: Vec<f64> = Vec::new();
        let mut max: Vec<f64> = Vec::new();
        for ds in sets {
            for x in &ds.inputs {
                if min.is_empty() {
                    min = x.clone();
                    max = x.clone();
                    continue;
                }
                if x.len() != min.len() {
                    return Err(Error::FeatureCount {
                        expected: min.len(),
                        found: x.len(),
                    });
                }
                for (j, v) in x.iter().enumerate() {
                    min[j] = min[j].min(*v);
                    max[j] = max[j].max(*v);
                }
            }
        }
        if min.is_empty() {
            return Err(Error::EmptyDataset("cannot fit normalization bounds"));
        }
        Ok(Normalizer { min, max })
    }

    pub fn features(&self) -> usize {
        self.min.len()
    }

    fn scale(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            (v - self.min[j]) / span
        } else {
            0.5
        }
    }

    /// Normalizes every input; values landing outside `[0, 1]` are an error.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let mut out = ds.clone();
        for x in &mut out.inputs {
            if x.len() != self.features() {
                return Err(Error::FeatureCount {
                    expected: self.features(),
                    found: x.len(),
                });
            }
            for (j, v) in x.iter_mut().enumerate() {
                let t = self.scale(j, *v);
                if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&t) || t.is_nan() {
                    return Err(Error::OutOfRange {
                        feature: j,
                        value: *v,
                    });
                }
                *v = t.clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }

    /// Normalizes and clamps into `[0, 1]`; used for evaluation data.
    pub fn apply_clamped(&self, ds: &Dataset) -> Result<Dataset> {
        let mut out = ds.clone();
        for x in &mut out.inputs {
            if x.len() != self.features() {
                return Err(Error::FeatureCount {
                    expected: self.features(),
                    found: x.len(),
                });
            }
            for (j, v) in x.iter_mut().enumerate() {
                *v = self.scale(j, *v).clamp(0.0, 1.0);
            }
        }
        Ok(out)
    }
}
