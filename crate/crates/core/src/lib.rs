//! Sensorless external joint-torque estimation for serial manipulators.
//!
//! The crate has two halves. The modeling half learns a probabilistic
//! model of residual joint torque (friction plus everything the rigid-body
//! model misses) from excitation data: a Gaussian mixture fitted by EM,
//! conditioned into a reference trajectory by GMR, then kernelized into a
//! predictor that returns both a mean and an input-dependent variance. The
//! estimation half folds those predictions into a momentum-based adaptive
//! Kalman filter whose measurement noise follows the model variance and
//! whose process noise adapts online through inverse-Wishart variational
//! updates.
//!
//! Everything runs against synthetic planar manipulators where ground
//! truth is exact, so the whole pipeline is testable end to end:
//!
//! 1. [`excitation`] designs random-Fourier joint trajectories that spread
//!    the sampled state cloud (genetic optimization of a log-det
//!    objective),
//! 2. [`dynamics`] simulates tracking those trajectories under injected
//!    friction, disturbance noise and external torque,
//! 3. [`mixture`] + [`kmp`] (or the [`gp`] baseline) learn the residual
//!    torque model per joint,
//! 4. [`observer`] reconstructs the external torque online,
//! 5. [`harness`] orchestrates runs, persists every artifact and scores
//!    the observers against the known truth.

pub mod dynamics;
pub mod error;
pub mod excitation;
pub mod gp;
pub mod harness;
pub mod kmp;
pub mod mixture;
pub mod observer;

pub use dynamics::{
    fd_acceleration, rollout, simulate, FrictionProfile, JointLimits, LinkParams,
    ManipulatorModel, SampledTrajectory,
};
pub use error::{Error, Result};
pub use excitation::{
    eval_trajectory, ga_optimize, logdet_objective, state_cloud, FourierTrajectoryParams,
    GaConfig, GaResult,
};
pub use gp::{gp_train, GpModel};
pub use harness::{
    ground_truth_ext, rmse, run_experiment, ExperimentConfig, ExperimentOutput, MetricsReport,
    ObserverKind,
};
pub use kmp::{
    asymptotic_variance, kmp_predict, kmp_train, se_kernel, KmpHyperparams, KmpModel,
    KmpPrediction,
};
pub use mixture::{
    em_fit, gmr_condition, support_grid, GaussianComponent, GmmModel, ReferenceTrajectory,
};
pub use observer::{
    innovation_akf_step, kalman_gain, kf_step, measurement_covariance, nis, static_kf_step,
    update_empirical_noise, variance_aware_step, vb_update, virtual_measurement, AdaptationMode,
    ConstantResidual, FilterConfig, FilterState, FilterUpdate, FrictionOracle, Observer,
    PerJointModel, ResidualModel, ScalarResidualModel, StepOutput, VirtualMeasurement,
};
