//! Experiment orchestration, persistence and metrics: the reproduction
//! scaffold that runs excite -> simulate -> train -> estimate -> report
//! with every artifact written to disk.

mod experiment;
mod io;
mod metrics;

pub use experiment::{
    compute_metrics, compute_residuals, optimize_excitation, run_experiment, run_observer,
    train_residual_models, ExcitationSettings, ExperimentConfig, ExperimentOutput,
    ExternalTorqueStep, FilterSettings, ObserverKind, TrainedModels,
};
pub use io::{
    estimates_from_csv, estimates_to_csv, excitation_from_doc, excitation_to_doc,
    experiment_from_doc, experiment_to_doc, filter_config_from_doc, filter_config_to_doc,
    friction_from_doc, friction_to_doc, gmm_from_doc, gmm_to_doc, gp_set_from_doc, gp_set_to_doc,
    kmp_set_from_doc, kmp_set_to_doc, TextDoc,
};
pub use metrics::{ground_truth_ext, ground_truth_ext_from_runs, rmse, MetricsReport};
