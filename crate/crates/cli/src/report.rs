//! Versioned experiment reports and their text-table rendering.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use cp2_core::metrics::{EvaluationReport, Size};

use crate::config::RunConfig;

pub const SCHEMA: &str = "cp2-report-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub dataset: String,
    pub seeds: SeedLineage,
    pub config: RunConfig,
    pub summary: Vec<MethodSummary>,
    pub replications: Vec<ReplicationRecord>,
}

/// How every replication seed follows from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master: u64,
    pub derivation: String,
    pub replications: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_calib: usize,
    pub n_test: usize,
    /// Response standard deviation used to scale set sizes.
    pub y_std: f64,
    pub methods: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    #[serde(with = "extended")]
    pub quantile_v: f64,
    /// Calibration points whose τ was clamped.
    pub tau_clamps: usize,
    pub evaluation: EvaluationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeStat {
    pub mean: Size,
    pub sd: Size,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabStat {
    pub delta: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub replications: usize,
    pub marginal_coverage: Stat,
    pub wsc: Vec<SlabStat>,
    pub scaled_size: SizeStat,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(v: &[f64]) -> Stat {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Stat { mean, sd }
}

/// Per-method aggregates over replications, in method order.
pub fn summarize(reps: &[ReplicationRecord], methods: &[String]) -> Vec<MethodSummary> {
    if reps.is_empty() {
        return Vec::new();
    }
    methods
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let evals: Vec<&EvaluationReport> = reps.iter().map(|r| &r.methods[j].evaluation).collect();
            let cov: Vec<f64> = evals.iter().map(|e| e.marginal_coverage).collect();
            let wsc = evals[0]
                .wsc
                .iter()
                .enumerate()
                .map(|(d, s)| {
                    let v: Vec<f64> = evals.iter().map(|e| e.wsc[d].wsc).collect();
                    let st = mean_sd(&v);
                    SlabStat { delta: s.delta, mean: st.mean, sd: st.sd }
                })
                .collect();
            let sizes: Vec<f64> = evals.iter().map(|e| e.mean_scaled_size.0).collect();
            let scaled_size = if sizes.iter().any(|s| s.is_infinite()) {
                SizeStat { mean: Size(f64::INFINITY), sd: Size(f64::INFINITY) }
            } else {
                let st = mean_sd(&sizes);
                SizeStat { mean: Size(st.mean), sd: Size(st.sd) }
            };
            MethodSummary {
                method: name.clone(),
                replications: reps.len(),
                marginal_coverage: mean_sd(&cov),
                wsc,
                scaled_size,
            }
        })
        .collect()
}

fn fmt2(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.2}")
    }
}

/// Renders reports as one block per dataset with a column per method and
/// the rows M.Cov, C.Cov and w_sd.
pub fn emit_table(reports: &[Report]) -> String {
    let mut methods: Vec<String> = Vec::new();
    for r in reports {
        for s in &r.summary {
            if !methods.contains(&s.method) {
                methods.push(s.method.clone());
            }
        }
    }
    let mut header = vec!["dataset".to_string(), "metric".to_string()];
    header.extend(methods.iter().cloned());
    let mut rows = vec![header];
    for r in reports {
        if r.summary.is_empty() {
            continue;
        }
        let cell = |f: &dyn Fn(&MethodSummary) -> String| -> Vec<String> {
            methods
                .iter()
                .map(|m| r.summary.iter().find(|s| &s.method == m).map_or_else(|| "-".into(), f))
                .collect()
        };
        let mut block: Vec<(String, Vec<String>)> = vec![("M.Cov".into(), cell(&|s| fmt2(s.marginal_coverage.mean)))];
        let deltas: Vec<f64> = r.summary[0].wsc.iter().map(|w| w.delta).collect();
        for (d, delta) in deltas.iter().enumerate() {
            let label = if deltas.len() == 1 { "C.Cov".into() } else { format!("C.Cov({:.2})", 1.0 - delta) };
            block.push((label, cell(&|s| s.wsc.get(d).map_or_else(|| "-".into(), |w| fmt2(w.mean)))));
        }
        block.push(("w_sd".into(), cell(&|s| fmt2(s.scaled_size.mean.0))));
        for (i, (label, cells)) in block.into_iter().enumerate() {
            let name = if i == 0 { r.dataset.clone() } else { String::new() };
            rows.push([vec![name, label], cells].concat());
        }
    }
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c < 2 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Extended reals as JSON: finite numbers as numbers, infinities as
/// `"inf"` / `"-inf"`.
mod extended {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("invalid number `{s}`"))),
            },
        }
    }
}
