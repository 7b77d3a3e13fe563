//! Experiment configuration, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cp2_core::conformal::{
    make_cp, make_cp2_hpd, make_cp2_pcp, make_cqr, make_pcp, make_pi_yx, MethodSpec, PcpVariant,
    QuantileMode, TauMode, DEFAULT_SAMPLES,
};
use cp2_core::metrics::DEFAULT_DIRECTIONS;
use cp2_core::models::{EmConfig, QuantileMethod};
use cp2_core::{AdjustmentFunction, AdjustmentKind, Error, Result, SplitSpec, SyntheticDgp};

/// Method names accepted in the `methods` list.
pub const METHOD_NAMES: [&str; 8] = ["CP", "CQR", "PCP", "PiYX", "CP2-HPD", "CP2-PCP", "CP2-PCP-L", "CP2-PCP-D"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Row label in the results table; defaults to the DGP name or file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub data: DataSource,
    pub methods: Vec<MethodConfig>,
    pub alpha: f64,
    /// WSC slabs hold at least `(1 − δ)` of the test points.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitConfig>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    pub output: PathBuf,
    #[serde(default = "default_directions")]
    pub n_directions: usize,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub quantile_model: QuantileMethod,
    /// Keep per-point outcomes in the report.
    #[serde(default)]
    pub keep_points: bool,
}

fn default_deltas() -> Vec<f64> {
    vec![0.9]
}

fn default_replications() -> usize {
    1
}

fn default_directions() -> usize {
    DEFAULT_DIRECTIONS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Fresh draws from a synthetic DGP in every replication.
    Dgp {
        dgp: SyntheticDgp,
        /// Total sample size; implied by a count split.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
    Csv {
        path: PathBuf,
        targets: Vec<String>,
        #[serde(default)]
        features: Vec<String>,
        #[serde(default)]
        standardize: bool,
    },
    /// Fixed calibration and test points with externally estimated
    /// conditional mixtures.
    Ingest {
        calib: PathBuf,
        test: PathBuf,
        calib_mixtures: PathBuf,
        test_mixtures: PathBuf,
        /// Training points, needed only by CQR.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train: Option<PathBuf>,
        targets: Vec<String>,
        #[serde(default)]
        features: Vec<String>,
    },
}

/// Part sizes, either as fractions or as counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitConfig {
    Counts { train: usize, calib: usize, test: usize },
    Fractions { train_fraction: f64, calib_fraction: f64, test_fraction: f64 },
}

impl SplitConfig {
    /// The split for `n` samples with the given seed.
    pub fn spec(&self, n: usize, seed: u64) -> Result<SplitSpec> {
        let (a, b, c) = match *self {
            SplitConfig::Counts { train, calib, test } => {
                if train + calib + test != n {
                    return Err(Error::Validation(format!(
                        "split counts {train} + {calib} + {test} do not add up to {n} samples"
                    )));
                }
                let n = n as f64;
                (train as f64 / n, calib as f64 / n, test as f64 / n)
            }
            SplitConfig::Fractions { train_fraction, calib_fraction, test_fraction } => {
                (train_fraction, calib_fraction, test_fraction)
            }
        };
        let spec = SplitSpec { train_fraction: a, calib_fraction: b, test_fraction: c, seed };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Diagonal Gaussian mixture over `(x, y)` fitted by EM on the training part.
    JointGmm {
        #[serde(default = "default_components")]
        components: usize,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// The exact conditional of the synthetic DGP.
    Oracle,
}

fn default_components() -> usize {
    4
}

fn default_max_iter() -> usize {
    500
}

fn default_tol() -> f64 {
    1e-7
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::JointGmm {
            components: default_components(),
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }
}

impl ModelConfig {
    pub fn em_config(&self, seed: u64) -> Option<EmConfig> {
        match *self {
            ModelConfig::JointGmm { components, max_iter, tol } => Some(EmConfig { components, seed, max_iter, tol }),
            ModelConfig::Oracle => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjustment: Option<AdjustmentKind>,
    /// Anchor φ of the adjustment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    /// Conditional samples `M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Second-sample size `Ñ` for monte-carlo τ; 0 selects analytic τ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_mode: Option<QuantileMode>,
}

impl MethodConfig {
    pub fn named(method: &str) -> Self {
        Self {
            method: method.into(),
            adjustment: None,
            phi: None,
            samples: None,
            tau_draws: None,
            quantile_mode: None,
        }
    }

    /// The method specification at level `alpha`.
    pub fn spec(&self, alpha: f64) -> Result<MethodSpec> {
        let m = self.samples.unwrap_or(DEFAULT_SAMPLES);
        let mut spec = match self.method.as_str() {
            "CP" => make_cp(alpha),
            "CQR" => make_cqr(alpha),
            "PCP" => make_pcp(alpha, m),
            "PiYX" => make_pi_yx(alpha, m),
            "CP2-HPD" => make_cp2_hpd(alpha),
            "CP2-PCP" | "CP2-PCP-L" => make_cp2_pcp(PcpVariant::L, alpha, m),
            "CP2-PCP-D" => make_cp2_pcp(PcpVariant::D, alpha, m),
            other => return Err(Error::Validation(format!("unsupported method `{other}`"))),
        };
        if let Some(kind) = self.adjustment {
            let fixed = matches!(self.method.as_str(), "CP" | "CQR" | "PCP" | "PiYX" | "CP2-PCP-L" | "CP2-PCP-D");
            if fixed && kind != spec.adjustment.kind {
                return Err(Error::Validation(format!(
                    "method `{}` fixes its adjustment; use CP2-PCP or CP2-HPD to choose one",
                    self.method
                )));
            }
            spec.adjustment = AdjustmentFunction::new(kind);
        }
        if let Some(phi) = self.phi {
            spec.adjustment.phi = phi;
        }
        if let Some(draws) = self.tau_draws {
            spec.tau_mode = if draws == 0 { TauMode::Analytic } else { TauMode::MonteCarlo { draws } };
        }
        if let Some(mode) = self.quantile_mode {
            spec.quantile_mode = mode;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl RunConfig {
    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.output);
        match &mut self.data {
            DataSource::Dgp { .. } => {}
            DataSource::Csv { path, .. } => fix(path),
            DataSource::Ingest { calib, test, calib_mixtures, test_mixtures, train, .. } => {
                fix(calib);
                fix(test);
                fix(calib_mixtures);
                fix(test_mixtures);
                if let Some(t) = train {
                    fix(t);
                }
            }
        }
    }

    /// Method specifications in config order.
    pub fn method_specs(&self) -> Result<Vec<MethodSpec>> {
        self.methods.iter().map(|m| m.spec(self.alpha)).collect()
    }

    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.data {
            DataSource::Dgp { dgp, .. } => dgp.name().into(),
            DataSource::Csv { path, .. } | DataSource::Ingest { test: path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "data".into()),
        }
    }

    /// Sample size drawn per replication for a DGP source.
    pub fn dgp_size(&self) -> Option<usize> {
        match (&self.data, &self.split) {
            (DataSource::Dgp { n: Some(n), .. }, _) => Some(*n),
            (DataSource::Dgp { n: None, .. }, Some(SplitConfig::Counts { train, calib, test })) => {
                Some(train + calib + test)
            }
            _ => None,
        }
    }

    pub fn needs_quantiles(&self) -> bool {
        self.methods.iter().any(|m| m.method == "CQR")
    }

    pub fn needs_conditional(&self) -> bool {
        self.methods.iter().any(|m| m.method != "CQR")
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Validation("no methods requested".into()));
        }
        for m in &self.methods {
            if !METHOD_NAMES.contains(&m.method.as_str()) {
                return Err(Error::Validation(format!(
                    "unsupported method `{}` (supported: {})",
                    m.method,
                    METHOD_NAMES.join(", ")
                )));
            }
        }
        let mut names: Vec<String> = self.method_specs()?.iter().map(|s| s.name()).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("method `{}` is listed twice", w[0])));
        }
        if self.replications == 0 {
            return Err(Error::Validation("replications must be at least 1".into()));
        }
        if self.n_directions == 0 {
            return Err(Error::Validation("n_directions must be at least 1".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d >= 0.0 && **d < 1.0)) {
            return Err(Error::Validation(format!("δ must lie in [0, 1), got {d}")));
        }
        match &self.data {
            DataSource::Dgp { dgp, .. } => {
                dgp.validate()?;
                let n = self.dgp_size().ok_or_else(|| {
                    Error::Validation("a DGP source needs `n` or a split given as counts".into())
                })?;
                if n == 0 {
                    return Err(Error::Validation("DGP sample size must be positive".into()));
                }
                match &self.split {
                    Some(s) => {
                        s.spec(n, 0)?;
                    }
                    None => return Err(Error::Validation("a DGP source needs a split".into())),
                }
            }
            DataSource::Csv { targets, .. } => {
                if targets.is_empty() {
                    return Err(Error::Validation("csv source needs at least one target column".into()));
                }
                match &self.split {
                    Some(s @ SplitConfig::Fractions { .. }) => {
                        s.spec(0, 0)?;
                    }
                    Some(SplitConfig::Counts { .. }) => {}
                    None => return Err(Error::Validation("a csv source needs a split".into())),
                }
                if self.model == ModelConfig::Oracle {
                    return Err(Error::Validation("the oracle model needs a DGP source".into()));
                }
            }
            DataSource::Ingest { train, targets, .. } => {
                if targets.is_empty() {
                    return Err(Error::Validation("ingest source needs at least one target column".into()));
                }
                if self.split.is_some() {
                    return Err(Error::Validation("an ingest source has fixed parts; remove `split`".into()));
                }
                if self.needs_quantiles() && train.is_none() {
                    return Err(Error::Validation("CQR on an ingest source needs a `train` file".into()));
                }
                if self.model == ModelConfig::Oracle {
                    return Err(Error::Validation("the oracle model needs a DGP source".into()));
                }
            }
        }
        if let ModelConfig::JointGmm { components: 0, .. } = self.model {
            return Err(Error::Validation("model needs at least one component".into()));
        }
        Ok(())
    }
}
