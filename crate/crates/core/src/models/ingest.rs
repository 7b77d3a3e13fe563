//! Per-point mixture parameters produced by an external estimator.
//!
//! File format, one record per point after a header line:
//!
//! ```text
//! # cp2-mixture-v1
//! 0; 0.5,0.5; -1.0,1.0; 0.3,0.3
//! ```
//!
//! Fields are `index; weights; means; standard deviations`, separated by `;`,
//! with `,` between the per-component values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Capabilities, ConditionalModel, Query, Role};
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

pub const MIXTURE_HEADER: &str = "# cp2-mixture-v1";

const WEIGHT_SUM_TOL: f64 = 1e-6;

/// Raw parameters of one point's conditional mixture, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureRecord {
    pub index: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl MixtureRecord {
    /// Weights are renormalized when they are off by more than rounding
    /// noise but within the accepted tolerance.
    pub fn to_mixture(&self) -> Result<GaussianMixture> {
        let total: f64 = self.weights.iter().sum();
        let weights = if (total - 1.0).abs() > 1e-10 {
            self.weights.iter().map(|w| w / total).collect()
        } else {
            self.weights.clone()
        };
        GaussianMixture::univariate(&weights, &self.means, &self.sigmas)
    }

    fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation(format!("record {}: negative or non-finite weight", self.index)));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Validation(format!(
                "record {}: weights sum to {total}, expected 1",
                self.index
            )));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation(format!("record {}: non-finite mean", self.index)));
        }
        if self.sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Validation(format!("record {}: standard deviations must be positive", self.index)));
        }
        Ok(())
    }
}

/// Mixtures keyed by point index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixtureTable {
    records: BTreeMap<usize, MixtureRecord>,
    mixtures: BTreeMap<usize, GaussianMixture>,
}

impl MixtureTable {
    pub fn from_records(records: Vec<MixtureRecord>) -> Result<Self> {
        let mut table = MixtureTable::default();
        for r in records {
            r.validate()?;
            let m = r.to_mixture()?;
            let idx = r.index;
            if table.records.insert(idx, r).is_some() {
                return Err(Error::Validation(format!("duplicate record index {idx}")));
            }
            table.mixtures.insert(idx, m);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&GaussianMixture> {
        self.mixtures.get(&index)
    }

    pub fn records(&self) -> impl Iterator<Item = &MixtureRecord> {
        self.records.values()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r').trim() == MIXTURE_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    column: 1,
                    message: format!("expected header `{MIXTURE_HEADER}`"),
                })
            }
        }
        let mut records = Vec::new();
        for (i, raw) in lines {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_record(line, i + 1)?);
        }
        Self::from_records(records)
    }

    /// Shortest round-trip formatting, so reading the output back yields
    /// bit-identical parameters.
    pub fn to_text(&self) -> String {
        let mut out = String::from(MIXTURE_HEADER);
        out.push('\n');
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        for r in self.records.values() {
            let _ = writeln!(
                out,
                "{}; {}; {}; {}",
                r.index,
                join(&r.weights),
                join(&r.means),
                join(&r.sigmas)
            );
        }
        out
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<MixtureRecord> {
    let err = |column: usize, message: String| Error::Parse {
        line: line_no,
        column,
        message,
    };
    let fields: Vec<&str> = line.split(';').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(err(1, format!("expected 4 `;`-separated fields, found {}", fields.len())));
    }
    let index = fields[0]
        .parse::<usize>()
        .map_err(|_| err(1, format!("invalid index `{}`", fields[0])))?;
    let reals = |col: usize| -> Result<Vec<f64>> {
        fields[col]
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .map_err(|_| err(col + 1, format!("invalid number `{s}`")))
            })
            .collect()
    };
    let weights = reals(1)?;
    let means = reals(2)?;
    let sigmas = reals(3)?;
    if means.len() != weights.len() || sigmas.len() != weights.len() {
        return Err(err(
            2,
            format!(
                "component counts differ: {} weights, {} means, {} sigmas",
                weights.len(),
                means.len(),
                sigmas.len()
            ),
        ));
    }
    Ok(MixtureRecord {
        index,
        weights,
        means,
        sigmas,
    })
}

pub fn read_mixture_file(path: impl AsRef<Path>) -> Result<MixtureTable> {
    MixtureTable::parse(&fs::read_to_string(path)?)
}

pub fn write_mixture_file(path: impl AsRef<Path>, table: &MixtureTable) -> Result<()> {
    fs::write(path, table.to_text())?;
    Ok(())
}

/// Ingested conditionals for the calibration and test points of one
/// experiment, looked up by the query's role and index.
#[derive(Debug, Clone)]
pub struct IngestedModel {
    pub calib: MixtureTable,
    pub test: MixtureTable,
}

impl ConditionalModel for IngestedModel {
    fn capabilities(&self) -> Capabilities {
        Capabilities::BOTH
    }

    fn conditional(&self, q: &Query<'_>) -> Result<GaussianMixture> {
        let table = match q.role {
            Role::Calib => &self.calib,
            Role::Test => &self.test,
            Role::Other => {
                return Err(Error::Capability(
                    "ingested mixtures are only defined at calibration and test points".into(),
                ))
            }
        };
        table
            .get(q.index)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("no ingested mixture for {:?} point {}", q.role, q.index)))
    }
}
