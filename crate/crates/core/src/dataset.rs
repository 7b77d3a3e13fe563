//! Samples, datasets, seeded splits and CSV loading.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// One observation: feature vector `x` and response `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn scalar(x: Vec<f64>, y: f64) -> Self {
        Self { x, y: vec![y] }
    }

    /// The response of a scalar-response sample.
    pub fn y0(&self) -> f64 {
        self.y[0]
    }
}

/// A homogeneous collection of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    d: usize,
    p: usize,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Degenerate("dataset is empty".into()))?;
        let (d, p) = (first.x.len(), first.y.len());
        if d == 0 || p == 0 {
            return Err(Error::Validation("feature and response dimensions must be ≥ 1".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != d || s.y.len() != p {
                return Err(Error::Validation(format!(
                    "sample {i} has shape ({}, {}), expected ({d}, {p})",
                    s.x.len(),
                    s.y.len()
                )));
            }
            if !s.x.iter().chain(&s.y).all(|v| v.is_finite()) {
                return Err(Error::Validation(format!("sample {i} has a non-finite entry")));
            }
        }
        Ok(Self { samples, d, p })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.d
    }

    pub fn response_dim(&self) -> usize {
        self.p
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledSample> {
        self.samples.iter()
    }

    pub fn xs(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.x.clone()).collect()
    }

    /// Scalar responses; panics on vector-response datasets.
    pub fn ys(&self) -> Vec<f64> {
        assert_eq!(self.p, 1, "ys() needs scalar responses");
        self.samples.iter().map(LabeledSample::y0).collect()
    }

    /// Sample standard deviation of a scalar response.
    pub fn response_std(&self) -> f64 {
        let ys = self.ys();
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        var.sqrt()
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(idx.iter().map(|&i| self.samples[i].clone()).collect())
    }
}

/// Fractions for a train / calibration / test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub calib_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.calib_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Validation(format!("split fractions must lie in (0, 1), got {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("split fractions must sum to 1, got {fr:?}")));
        }
        Ok(())
    }

    /// Part sizes for `n` samples; the test part takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((self.train_fraction * n as f64).round() as usize).min(n);
        let calib = ((self.calib_fraction * n as f64).round() as usize).min(n - train);
        (train, calib, n - train - calib)
    }
}

/// Seeded permutation followed by partition into (train, calib, test).
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let n = ds.len();
    let (a, b, c) = spec.sizes(n);
    if a == 0 || b == 0 || c == 0 {
        return Err(Error::Degenerate(format!(
            "split of {n} samples leaves an empty part (sizes {a}, {b}, {c})"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(spec.seed, Domain::Split, 0));
    Ok((
        ds.subset(&idx[..a])?,
        ds.subset(&idx[a..a + b])?,
        ds.subset(&idx[a + b..])?,
    ))
}

/// Per-column affine transform applied to features at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub standardization: Option<Standardization>,
}

/// Loads a comma-separated file with a header row.
///
/// `targets` and `features` name header columns; an empty feature list means
/// "every column that is not a target".
pub fn load_csv(
    path: impl AsRef<Path>,
    targets: &[String],
    features: &[String],
    standardize: bool,
) -> Result<LoadedCsv> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    load_csv_from_reader(file, targets, features, standardize)
}

pub fn load_csv_from_reader<R: std::io::Read>(
    reader: R,
    targets: &[String],
    features: &[String],
    standardize: bool,
) -> Result<LoadedCsv> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(b',')
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(e, 1))?
        .iter()
        .map(str::to_owned)
        .collect();
    let find = |name: &String| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))
    };
    if targets.is_empty() {
        return Err(Error::Config("at least one target column is required".into()));
    }
    let target_idx = targets.iter().map(find).collect::<Result<Vec<_>>>()?;
    let feature_idx: Vec<usize> = if features.is_empty() {
        (0..headers.len()).filter(|i| !target_idx.contains(i)).collect()
    } else {
        features.iter().map(find).collect::<Result<Vec<_>>>()?
    };

    let mut samples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| csv_err(e, line))?;
        let cell = |i: usize| -> Result<f64> {
            let raw = rec.get(i).ok_or_else(|| Error::Parse {
                line,
                column: i + 1,
                message: "missing field".into(),
            })?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: i + 1,
                message: format!("`{raw}` is not a number (column `{}`)", headers[i]),
            })
        };
        let x = feature_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?;
        let y = target_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?;
        samples.push(LabeledSample::new(x, y));
    }

    let standardization = if standardize {
        Some(standardize_features(&mut samples))
    } else {
        None
    };
    Ok(LoadedCsv {
        dataset: Dataset::new(samples)?,
        standardization,
    })
}

fn csv_err(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

fn standardize_features(samples: &mut [LabeledSample]) -> Standardization {
    let d = samples.first().map_or(0, |s| s.x.len());
    let n = samples.len() as f64;
    let mut means = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for j in 0..d {
        let m = samples.iter().map(|s| s.x[j]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.x[j] - m).powi(2)).sum::<f64>() / n;
        means[j] = m;
        // constant columns are centered but not rescaled
        stds[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    for s in samples.iter_mut() {
        for j in 0..d {
            s.x[j] = (s.x[j] - means[j]) / stds[j];
        }
    }
    Standardization { means, stds }
}
