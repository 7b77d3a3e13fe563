pub mod adjust;
pub mod conformal;
pub mod data;
pub mod dataset;
pub mod families;
pub mod error;
pub mod mixture;
pub mod metrics;
pub mod models;
pub mod order;
pub mod rng;
pub mod selfcheck;
pub mod set;

pub use adjust::{AdjustmentFunction, AdjustmentKind};
pub use data::{dgp_conditional, dgp_sample, oracle_model, SyntheticDgp};
pub use dataset::{load_csv, split, Dataset, LabeledSample, SplitSpec};
pub use error::{Error, Result};
pub use mixture::GaussianMixture;
pub use set::{Interval, IntervalUnion, PredictionSet};
