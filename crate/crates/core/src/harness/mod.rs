//! Experiment orchestration: config files, seeded multi-trial runs,
//! parameter sweeps and evaluation of saved artifacts.

mod config;
mod run;
mod sweep;

pub use config::{DataSource, ExperimentConfig};
pub use run::{config_hash, model_spec, prepare_dataset, prepare_split, run, RunMetrics, RunSummary, TrialSummary};
pub use sweep::{sweep, sweep_csv, SweepAxis, SweepPoint, SweepSpec, SWEEP_CSV_HEADER};

use crate::adversarial::{robust_accuracy, AttackSpec, RobustReport};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::mlp::Mlp;
use crate::train::head_accuracy;

/// Output root used for relative output directories when set.
pub const OUTPUT_ROOT_ENV: &str = "SAT_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EvalReport {
    pub clean_accuracy: f64,
    pub noisy_accuracy: f64,
    pub robust: Option<RobustReport>,
}

/// Accuracy of a saved model on a dataset, against clean labels on clean
/// inputs and against training labels on the stored inputs.
pub fn evaluate(model: &Mlp, ds: &LabeledDataset, attack: Option<&AttackSpec>, seed: u64) -> Result<EvalReport> {
    let c = ds.class_count();
    if model.spec().input_dim != ds.dim() || model.spec().num_classes != c {
        return Err(Error::invalid("model does not match the dataset"));
    }
    Ok(EvalReport {
        clean_accuracy: head_accuracy(model, ds.clean_inputs(), ds.clean_labels(), c)?,
        noisy_accuracy: head_accuracy(model, ds.inputs(), ds.noisy_indices(), c)?,
        robust: attack.map(|a| robust_accuracy(model, ds, a, seed)).transpose()?,
    })
}
