//! Replicated experiments: data, base models, calibration and evaluation.

use rayon::prelude::*;

use cp2_core::conformal::{calibrate, predict_sets, BaseModels, MethodSpec};
use cp2_core::metrics::{evaluate, EvalConfig};
use cp2_core::models::{fit_quantile_regressor, gmm_fit_em, read_mixture_file, ConditionalModel, IngestedModel};
use cp2_core::rng::{derive_seed, stream, Domain};
use cp2_core::{dgp_sample, load_csv, oracle_model, split, Dataset, Error, Result, SyntheticDgp};

use crate::config::{DataSource, ModelConfig, RunConfig, SplitConfig};
use crate::report::{summarize, MethodOutcome, ReplicationRecord, Report, SeedLineage, Status, SCHEMA};

enum Source {
    Dgp { dgp: SyntheticDgp, n: usize, split: SplitConfig },
    Csv { data: Dataset, split: SplitConfig },
    Ingest { train: Option<Dataset>, calib: Dataset, test: Dataset, model: IngestedModel },
}

struct Parts {
    train: Option<Dataset>,
    calib: Dataset,
    test: Dataset,
    y_std: f64,
}

/// A validated config with its data loaded.
pub struct Experiment {
    cfg: RunConfig,
    specs: Vec<MethodSpec>,
    source: Source,
}

fn merged(parts: &[&Dataset]) -> Result<Dataset> {
    Dataset::new(parts.iter().flat_map(|d| d.samples().iter().cloned()).collect())
}

impl Experiment {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let specs = cfg.method_specs()?;
        let split_cfg = cfg.split;
        let source = match &cfg.data {
            DataSource::Dgp { dgp, .. } => Source::Dgp {
                dgp: *dgp,
                n: cfg.dgp_size().expect("validated"),
                split: split_cfg.expect("validated"),
            },
            DataSource::Csv { path, targets, features, standardize } => Source::Csv {
                data: load_csv(path, targets, features, *standardize)?.dataset,
                split: split_cfg.expect("validated"),
            },
            DataSource::Ingest { calib, test, calib_mixtures, test_mixtures, train, targets, features } => {
                let load = |p| load_csv(p, targets, features, false).map(|l| l.dataset);
                let (calib, test) = (load(calib)?, load(test)?);
                let model = IngestedModel {
                    calib: read_mixture_file(calib_mixtures)?,
                    test: read_mixture_file(test_mixtures)?,
                };
                for (what, rows, table) in [("calibration", calib.len(), model.calib.len()), ("test", test.len(), model.test.len())] {
                    if rows != table {
                        return Err(Error::Validation(format!(
                            "{rows} {what} points but {table} ingested mixtures"
                        )));
                    }
                }
                let train = train.as_ref().map(load).transpose()?;
                Source::Ingest { train, calib, test, model }
            }
        };
        Ok(Self { cfg, specs, source })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    fn parts(&self, seed: u64) -> Result<Parts> {
        let split_all = |data: &Dataset, sc: &SplitConfig| -> Result<Parts> {
            let (train, calib, test) = split(data, &sc.spec(data.len(), seed)?)?;
            Ok(Parts { train: Some(train), calib, test, y_std: data.response_std() })
        };
        match &self.source {
            Source::Dgp { dgp, n, split } => split_all(&dgp_sample(dgp, *n, &mut stream(seed, Domain::Data, 0))?, split),
            Source::Csv { data, split } => split_all(data, split),
            Source::Ingest { train, calib, test, .. } => {
                let all = match train {
                    Some(t) => merged(&[t, calib, test])?,
                    None => merged(&[calib, test])?,
                };
                Ok(Parts { train: train.clone(), calib: calib.clone(), test: test.clone(), y_std: all.response_std() })
            }
        }
    }

    fn conditional_model(&self, train: Option<&Dataset>, seed: u64) -> Result<Option<Box<dyn ConditionalModel + '_>>> {
        if !self.cfg.needs_conditional() {
            return Ok(None);
        }
        let model: Box<dyn ConditionalModel> = match (&self.source, &self.cfg.model) {
            (Source::Ingest { model, .. }, _) => Box::new(model.clone()),
            (Source::Dgp { dgp, .. }, ModelConfig::Oracle) => Box::new(oracle_model(*dgp)),
            (_, m) => {
                let em = m.em_config(derive_seed(seed, Domain::Fit, 0)).expect("joint-gmm config");
                let train = train.ok_or_else(|| Error::Config("model fitting needs training data".into()))?;
                Box::new(gmm_fit_em(train, &em)?)
            }
        };
        Ok(Some(model))
    }

    /// One replication with every stream derived from `seed`.
    pub fn replicate(&self, index: usize, seed: u64) -> std::result::Result<ReplicationRecord, String> {
        let ctx = |what: &str, e: Error| format!("replication {index}, {what}: {e}");
        let parts = self.parts(seed).map_err(|e| ctx("data", e))?;
        let conditional = self
            .conditional_model(parts.train.as_ref(), seed)
            .map_err(|e| ctx("model fit", e))?;
        let quantiles = if self.cfg.needs_quantiles() {
            let train = parts.train.as_ref().ok_or_else(|| ctx("quantile fit", Error::Config("no training data".into())))?;
            let a = self.cfg.alpha;
            Some(fit_quantile_regressor(train, &[a / 2.0, 1.0 - a / 2.0], self.cfg.quantile_model).map_err(|e| ctx("quantile fit", e))?)
        } else {
            None
        };
        let models = BaseModels { conditional: conditional.as_deref(), quantiles: quantiles.as_ref() };
        let xs = parts.test.xs();
        let ys: Vec<Vec<f64>> = parts.test.iter().map(|s| s.y.clone()).collect();
        let eval = EvalConfig {
            alpha: self.cfg.alpha,
            deltas: self.cfg.deltas.clone(),
            n_directions: self.cfg.n_directions,
            seed,
            keep_points: self.cfg.keep_points,
        };
        let methods = self
            .specs
            .iter()
            .map(|spec| {
                let name = spec.name();
                let run = || -> Result<MethodOutcome> {
                    let cm = calibrate(&parts.calib, spec, &models, seed)?;
                    let sets = predict_sets(&cm, &xs, &models)?;
                    Ok(MethodOutcome {
                        method: name.clone(),
                        quantile_v: cm.quantile_v(),
                        tau_clamps: cm.warnings().len(),
                        evaluation: evaluate(&sets, &xs, &ys, parts.y_std, &eval)?,
                    })
                };
                run().map_err(|e| ctx(&name, e))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(ReplicationRecord {
            index,
            seed,
            n_train: parts.train.as_ref().map_or(0, Dataset::len),
            n_calib: parts.calib.len(),
            n_test: parts.test.len(),
            y_std: parts.y_std,
            methods,
        })
    }

    /// Runs every replication on the current rayon pool and reduces the
    /// results in replication order.
    pub fn run(&self) -> Report {
        let seeds: Vec<u64> = (0..self.cfg.replications)
            .map(|r| derive_seed(self.cfg.seed, Domain::Replication, r as u64))
            .collect();
        let results: Vec<_> = seeds.par_iter().enumerate().map(|(r, &s)| self.replicate(r, s)).collect();
        let mut reps = Vec::with_capacity(results.len());
        let mut errors = Vec::new();
        for res in results {
            match res {
                Ok(rec) => reps.push(rec),
                Err(e) => errors.push(e),
            }
        }
        let names: Vec<String> = self.specs.iter().map(MethodSpec::name).collect();
        let error = match errors.len() {
            0 => None,
            1 => Some(errors.remove(0)),
            k => Some(format!("{} ({} more replications failed)", errors[0], k - 1)),
        };
        Report {
            schema: SCHEMA.into(),
            status: if error.is_some() { Status::Failed } else { Status::Complete },
            error,
            dataset: self.cfg.dataset_name(),
            seeds: SeedLineage {
                master: self.cfg.seed,
                derivation: "replication r uses derive_seed(master, replication, r)".into(),
                replications: seeds,
            },
            config: self.cfg.clone(),
            summary: summarize(&reps, &names),
            replications: reps,
        }
    }
}

/// Loads the data for `cfg` and runs it, on a pool of `threads` workers when
/// given.
pub fn run(cfg: RunConfig, threads: Option<usize>) -> crate::Result<Report> {
    let exp = Experiment::new(cfg)?;
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(|| exp.run())),
        None => Ok(exp.run()),
    }
}
