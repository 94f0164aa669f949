//! End-to-end experiment orchestration:
//! excite -> simulate -> train -> estimate -> report.

use super::io;
use super::metrics::{ground_truth_ext_from_runs, rmse, MetricsReport};
use crate::dynamics::{simulate, FrictionProfile, JointLimits, LinkParams, ManipulatorModel};
use crate::error::{Error, Result};
use crate::excitation::{ga_optimize, logdet_objective, state_cloud, FourierTrajectoryParams, GaConfig};
use crate::gp::{gp_train, GpModel};
use crate::kmp::{kmp_predict, kmp_train, KmpHyperparams, KmpModel};
use crate::mixture::{em_fit, gmr_condition, support_grid, GmmModel};
use crate::observer::{
    AdaptationMode, FilterConfig, Observer, PerJointModel, ResidualModel, StepOutput,
};
use crate::SampledTrajectory;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::path::Path;
use std::time::Instant;

/// Observer variants the harness can run against the same data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObserverKind {
    /// Kernelized residual model, variance-aware adaptive filter.
    Kmp,
    /// GP residual model feeding the same variance-aware filter.
    Gp,
    /// Innovation-based covariance adaptation, kernel mean compensation.
    InnovationAkf,
    /// Frozen covariances, kernel mean compensation.
    StaticKf,
}

impl ObserverKind {
    pub fn name(&self) -> &'static str {
        match self {
            ObserverKind::Kmp => "kmp-akf",
            ObserverKind::Gp => "gp-akf",
            ObserverKind::InnovationAkf => "innovation-akf",
            ObserverKind::StaticKf => "static-kf",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "kmp-akf" => Ok(ObserverKind::Kmp),
            "gp-akf" => Ok(ObserverKind::Gp),
            "innovation-akf" => Ok(ObserverKind::InnovationAkf),
            "static-kf" => Ok(ObserverKind::StaticKf),
            other => Err(Error::Parse {
                line: 0,
                message: format!("unknown observer `{other}`"),
            }),
        }
    }

    pub fn all() -> [ObserverKind; 4] {
        [
            ObserverKind::Kmp,
            ObserverKind::Gp,
            ObserverKind::InnovationAkf,
            ObserverKind::StaticKf,
        ]
    }
}

/// One piecewise-constant external-torque transition: from `time` onward,
/// `joint` carries `value` N m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalTorqueStep {
    pub joint: usize,
    pub time: f64,
    pub value: f64,
}

/// Scalar filter knobs expanded into a full [`FilterConfig`] at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub forgetting: f64,
    pub vb_iterations: usize,
    pub iw_per_iteration: bool,
    /// Prior mean of the process-noise diagonal.
    pub process_prior: f64,
    pub initial_cov: f64,
    pub initial_empirical: f64,
    pub empirical_min: f64,
    pub empirical_max: f64,
    /// Forgetting factors of the innovation-based baseline.
    pub innovation_rho_nu: f64,
    pub innovation_rho_d: f64,
    /// Constant model variance for the static/innovation baselines; empty
    /// means calibrate from the trained kernel model.
    pub static_model_var: Vec<f64>,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            forgetting: 0.02,
            vb_iterations: 3,
            iw_per_iteration: false,
            process_prior: 1e-4,
            initial_cov: 1.0,
            initial_empirical: 1e-6,
            empirical_min: 1e-8,
            empirical_max: 1e2,
            innovation_rho_nu: 0.05,
            innovation_rho_d: 0.02,
            static_model_var: Vec::new(),
        }
    }
}

impl FilterSettings {
    /// Expand into a full filter configuration for `n` joints.
    pub fn build(&self, n: usize, t_s: f64, static_model_var: &DVector<f64>) -> FilterConfig {
        let dof0 = n as f64 + 3.0;
        FilterConfig {
            t_s,
            forgetting: self.forgetting,
            vb_iterations: self.vb_iterations,
            iw_per_iteration: self.iw_per_iteration,
            iw_dof0: dof0,
            iw_scale0: DMatrix::identity(n, n) * (self.process_prior * (dof0 - n as f64 - 1.0)),
            initial_estimate: DVector::zeros(n),
            initial_cov: DMatrix::identity(n, n) * self.initial_cov,
            initial_process_cov: DMatrix::identity(n, n) * self.process_prior,
            initial_empirical: DVector::from_element(n, self.initial_empirical),
            empirical_min: DVector::from_element(n, self.empirical_min),
            empirical_max: DVector::from_element(n, self.empirical_max),
            static_model_var: static_model_var.clone(),
        }
    }
}

/// Excitation-design settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSettings {
    pub harmonics: usize,
    pub period: f64,
    /// Time samples of the state cloud used by the dispersion objective.
    pub cloud_grid: usize,
    pub ga: GaConfig,
}

impl Default for ExcitationSettings {
    fn default() -> Self {
        Self {
            harmonics: 5,
            period: 10.0,
            cloud_grid: 200,
            ga: GaConfig::default(),
        }
    }
}

/// Full description of one synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub label: String,
    pub links: Vec<LinkParams>,
    pub gravity_accel: f64,
    pub limits: Vec<JointLimits>,
    pub friction: FrictionProfile,
    pub excitation: ExcitationSettings,
    pub t_s: f64,
    pub train_duration: f64,
    pub eval_duration: f64,
    /// Mixture components and GMR support points per joint.
    pub components: usize,
    pub support_points: usize,
    /// Per-joint kernel hyperparameters.
    pub hyper: Vec<KmpHyperparams>,
    pub filter: FilterSettings,
    pub observers: Vec<ObserverKind>,
    /// Held-out fraction of training samples for residual-model scoring.
    pub test_fraction: f64,
    /// Piecewise-constant load profile applied during evaluation.
    pub ext_steps: Vec<ExternalTorqueStep>,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Desk-scale default: two-link planar arm at 250 Hz with strongly
    /// heteroscedastic synthetic friction and a stepped evaluation load.
    pub fn planar2() -> Self {
        let limits = vec![
            JointLimits {
                q_min: -1.4,
                q_max: 1.4,
                dq_max: 2.5,
                ddq_max: 15.0,
            },
            JointLimits {
                q_min: 0.35,
                q_max: 2.75,
                dq_max: 2.5,
                ddq_max: 15.0,
            },
        ];
        Self {
            label: "planar2".into(),
            links: vec![
                LinkParams {
                    mass: 4.0,
                    length: 0.45,
                    com_offset: 0.225,
                    inertia: 0.07,
                },
                LinkParams {
                    mass: 2.5,
                    length: 0.35,
                    com_offset: 0.175,
                    inertia: 0.03,
                },
            ],
            gravity_accel: 9.81,
            limits,
            friction: FrictionProfile::uniform(2, 0.6, 0.4, 0.4, 0.25, 0.04, 0.5),
            excitation: ExcitationSettings::default(),
            t_s: 0.004,
            train_duration: 60.0,
            eval_duration: 20.0,
            components: 20,
            support_points: 20,
            hyper: vec![
                KmpHyperparams {
                    length_scale: 0.05,
                    signal_var: 25.0,
                    lambda1: 0.1,
                    lambda2: 20.0,
                };
                2
            ],
            filter: FilterSettings::default(),
            observers: ObserverKind::all().to_vec(),
            test_fraction: 0.2,
            ext_steps: vec![
                ExternalTorqueStep {
                    joint: 0,
                    time: 5.0,
                    value: 4.0,
                },
                ExternalTorqueStep {
                    joint: 0,
                    time: 11.0,
                    value: -3.0,
                },
                ExternalTorqueStep {
                    joint: 0,
                    time: 16.0,
                    value: 0.0,
                },
                ExternalTorqueStep {
                    joint: 1,
                    time: 7.0,
                    value: 2.5,
                },
                ExternalTorqueStep {
                    joint: 1,
                    time: 14.0,
                    value: 0.0,
                },
            ],
            seed: 1,
        }
    }

    /// Six-link chain analog carrying the reference per-joint
    /// hyperparameters (length scales around 1e-2, lambda2 around 2e6,
    /// signal variance 1e4).
    pub fn chain6() -> Self {
        let n = 6;
        let masses = [3.0, 2.5, 2.0, 1.5, 1.0, 0.8];
        let lengths = [0.35, 0.3, 0.3, 0.25, 0.2, 0.15];
        let links: Vec<LinkParams> = (0..n)
            .map(|i| LinkParams {
                mass: masses[i],
                length: lengths[i],
                com_offset: 0.5 * lengths[i],
                inertia: masses[i] * lengths[i] * lengths[i] / 12.0,
            })
            .collect();
        let limits = vec![
            JointLimits {
                q_min: -1.2,
                q_max: 1.2,
                dq_max: 2.0,
                ddq_max: 12.0,
            };
            n
        ];
        let l = [0.0100, 0.0200, 0.0110, 0.0790, 0.1154, 0.1244];
        let l1 = [0.0676, 0.0020, 0.5032, 0.0729, 0.0300, 0.03418];
        let l2 = [10.0e5, 20.0e5, 20.0e5, 20.0e5, 20.0e5, 20.0e5];
        Self {
            label: "chain6".into(),
            links,
            gravity_accel: 9.81,
            limits,
            friction: FrictionProfile::uniform(n, 0.5, 0.35, 0.3, 0.25, 0.04, 0.4),
            excitation: ExcitationSettings::default(),
            t_s: 0.004,
            train_duration: 60.0,
            eval_duration: 20.0,
            components: 20,
            support_points: 20,
            hyper: (0..n)
                .map(|j| KmpHyperparams {
                    length_scale: l[j],
                    signal_var: 1e4,
                    lambda1: l1[j],
                    lambda2: l2[j],
                })
                .collect(),
            filter: FilterSettings::default(),
            observers: ObserverKind::all().to_vec(),
            test_fraction: 0.2,
            ext_steps: vec![
                ExternalTorqueStep {
                    joint: 1,
                    time: 5.0,
                    value: 3.0,
                },
                ExternalTorqueStep {
                    joint: 1,
                    time: 13.0,
                    value: 0.0,
                },
                ExternalTorqueStep {
                    joint: 3,
                    time: 8.0,
                    value: 1.5,
                },
                ExternalTorqueStep {
                    joint: 3,
                    time: 16.0,
                    value: 0.0,
                },
            ],
            seed: 1,
        }
    }

    pub fn joints(&self) -> usize {
        self.links.len()
    }

    /// Instantiate the manipulator: closed forms where available, the
    /// Newton-Euler chain otherwise.
    pub fn build_model(&self) -> ManipulatorModel {
        match self.links.len() {
            1 => ManipulatorModel::one_link(self.links[0], self.gravity_accel, self.limits[0]),
            2 => ManipulatorModel::two_link(
                [self.links[0], self.links[1]],
                self.gravity_accel,
                [self.limits[0], self.limits[1]],
            ),
            _ => {
                ManipulatorModel::chain(self.links.clone(), self.gravity_accel, self.limits.clone())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints();
        for (what, len) in [
            ("limits", self.limits.len()),
            ("hyper", self.hyper.len()),
            ("friction", self.friction.joints()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    actual: len,
                });
            }
        }
        if !(self.test_fraction >= 0.0 && self.test_fraction < 1.0) {
            return Err(Error::NonFinite("test fraction"));
        }
        if !(self.t_s > 0.0 && self.train_duration > 0.0 && self.eval_duration > 0.0) {
            return Err(Error::NonFinite("sampling period and durations"));
        }
        if self.components < 1 {
            return Err(Error::InsufficientData {
                needed: 1,
                actual: self.components,
            });
        }
        if self.support_points < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                actual: self.support_points,
            });
        }
        for step in &self.ext_steps {
            if step.joint >= n {
                return Err(Error::DimensionMismatch {
                    what: "external torque step joint",
                    expected: n,
                    actual: step.joint,
                });
            }
        }
        for h in &self.hyper {
            h.validate()?;
        }
        Ok(())
    }

    /// Piecewise-constant external torque profile for the evaluation run:
    /// per joint, the latest transition at or before t wins.
    pub fn external_profile(&self) -> impl Fn(f64) -> DVector<f64> + '_ {
        let n = self.joints();
        move |t: f64| {
            let mut tau = DVector::zeros(n);
            let mut active = vec![f64::NEG_INFINITY; n];
            for step in &self.ext_steps {
                if t >= step.time && step.time >= active[step.joint] {
                    active[step.joint] = step.time;
                    tau[step.joint] = step.value;
                }
            }
            tau
        }
    }
}

/// Residual models trained on one recording.
pub struct TrainedModels {
    pub gmms: Vec<GmmModel>,
    pub kmp: Vec<KmpModel>,
    pub gp: Vec<GpModel>,
    /// Held-out residual prediction RMSE per joint.
    pub kmp_test_rmse: DVector<f64>,
    pub gp_test_rmse: DVector<f64>,
    /// Mean kernel predictive variance over the support grid, the static
    /// baselines' constant model variance.
    pub mean_model_var: DVector<f64>,
}

/// Residual torque per sample: commanded minus nominal rigid-body torque.
pub fn compute_residuals(
    model: &ManipulatorModel,
    traj: &SampledTrajectory,
) -> Result<Vec<DVector<f64>>> {
    (0..traj.len())
        .map(|k| {
            Ok(&traj.tau_m[k] - model.inverse_dynamics(&traj.q[k], &traj.dq[k], &traj.ddq[k])?)
        })
        .collect()
}

/// GA-optimized excitation trajectory for the configured limits.
pub fn optimize_excitation(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<FourierTrajectoryParams> {
    let settings = &config.excitation;
    let grid: Vec<f64> = (0..settings.cloud_grid)
        .map(|i| settings.period * i as f64 / settings.cloud_grid as f64)
        .collect();
    let ga = GaConfig {
        seed,
        ..settings.ga.clone()
    };
    let result = ga_optimize(
        |params| logdet_objective(&state_cloud(params, &grid)),
        &config.limits,
        settings.harmonics,
        settings.period,
        &ga,
    )?;
    Ok(result.best)
}

/// Fit the per-joint mixture, reference and kernel models on a recording,
/// scoring them on a seeded held-out split.
pub fn train_residual_models(
    model: &ManipulatorModel,
    traj: &SampledTrajectory,
    config: &ExperimentConfig,
) -> Result<TrainedModels> {
    let n = model.joints();
    let residuals = compute_residuals(model, traj)?;
    let rows = traj.len();

    // seeded shuffle, last `test_fraction` of the permutation held out
    let mut order: Vec<usize> = (0..rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0001);
    for i in (1..rows).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let test_len = ((rows as f64) * config.test_fraction).floor() as usize;
    let (fit_idx, test_idx) = order.split_at(rows - test_len);

    struct JointFit {
        gmm: GmmModel,
        kmp: KmpModel,
        gp: GpModel,
        kmp_rmse: f64,
        gp_rmse: f64,
        mean_var: f64,
    }

    let fits: Vec<JointFit> = (0..n)
        .into_par_iter()
        .map(|j| -> Result<JointFit> {
            let data = DMatrix::from_fn(fit_idx.len(), 2, |r, c| {
                let k = fit_idx[r];
                if c == 0 {
                    traj.dq[k][j]
                } else {
                    residuals[k][j]
                }
            });
            let gmm = em_fit(&data, config.components, config.seed.wrapping_add(j as u64))?;
            let velocities: Vec<f64> = fit_idx.iter().map(|&k| traj.dq[k][j]).collect();
            let grid = support_grid(&velocities, config.support_points)?;
            let support: Vec<DVector<f64>> =
                grid.iter().map(|&s| DVector::from_element(1, s)).collect();
            let reference = gmr_condition(&gmm, &support, 1)?;
            let hyper = config.hyper[j];
            let kmp = kmp_train(reference.clone(), hyper)?;
            let gp = gp_train(&reference, hyper.length_scale, hyper.signal_var, hyper.lambda1)?;

            let mut kmp_sq = 0.0;
            let mut gp_sq = 0.0;
            for &k in test_idx {
                let s = DVector::from_element(1, traj.dq[k][j]);
                let truth = residuals[k][j];
                let kp = kmp_predict(&kmp, &s).mean[0];
                let (gm, _) = gp.predict(&s);
                kmp_sq += (kp - truth) * (kp - truth);
                gp_sq += (gm - truth) * (gm - truth);
            }
            let denom = test_idx.len().max(1) as f64;
            let mean_var = support
                .iter()
                .map(|s| kmp_predict(&kmp, s).cov[(0, 0)])
                .sum::<f64>()
                / support.len() as f64;
            Ok(JointFit {
                gmm,
                kmp,
                gp,
                kmp_rmse: (kmp_sq / denom).sqrt(),
                gp_rmse: (gp_sq / denom).sqrt(),
                mean_var,
            })
        })
        .collect::<Result<_>>()?;

    let mut out = TrainedModels {
        gmms: Vec::with_capacity(n),
        kmp: Vec::with_capacity(n),
        gp: Vec::with_capacity(n),
        kmp_test_rmse: DVector::zeros(n),
        gp_test_rmse: DVector::zeros(n),
        mean_model_var: DVector::zeros(n),
    };
    for (j, fit) in fits.into_iter().enumerate() {
        out.kmp_test_rmse[j] = fit.kmp_rmse;
        out.gp_test_rmse[j] = fit.gp_rmse;
        out.mean_model_var[j] = fit.mean_var;
        out.gmms.push(fit.gmm);
        out.kmp.push(fit.kmp);
        out.gp.push(fit.gp);
    }
    Ok(out)
}

/// Run one observer over a recording, timing the online loop.
pub fn run_observer(
    model: &ManipulatorModel,
    residual: &dyn ResidualModel,
    filter_config: FilterConfig,
    mode: AdaptationMode,
    traj: &SampledTrajectory,
) -> Result<(Vec<StepOutput>, f64)> {
    let mut observer = Observer::new(model, residual, filter_config, mode)?;
    let start = Instant::now();
    let outputs = observer.run(traj)?;
    Ok((outputs, start.elapsed().as_secs_f64()))
}

/// Score an estimate series against ground truth in joint and Cartesian
/// space.
pub fn compute_metrics(
    model: &ManipulatorModel,
    name: &str,
    estimates: &[DVector<f64>],
    truth: &[DVector<f64>],
    configurations: &[DVector<f64>],
    online_seconds: f64,
) -> Result<MetricsReport> {
    let joint = rmse(estimates, truth)?;
    let mut est_wrench = Vec::with_capacity(estimates.len());
    let mut true_wrench = Vec::with_capacity(estimates.len());
    for ((est, tru), q) in estimates.iter().zip(truth).zip(configurations) {
        est_wrench.push(model.cartesian_wrench(q, est)?);
        true_wrench.push(model.cartesian_wrench(q, tru)?);
    }
    let cartesian = rmse(&est_wrench, &true_wrench)?;
    let cartesian_rmse: Vec<f64> = cartesian.iter().copied().collect();
    Ok(MetricsReport {
        observer: name.to_string(),
        cartesian_aggregate: MetricsReport::aggregate_of(&cartesian_rmse),
        joint_rmse: joint.iter().copied().collect(),
        cartesian_rmse,
        online_seconds,
        per_sample_seconds: online_seconds / estimates.len().max(1) as f64,
    })
}

/// Everything a finished experiment produced.
pub struct ExperimentOutput {
    pub reports: Vec<MetricsReport>,
    pub kmp_test_rmse: DVector<f64>,
    pub gp_test_rmse: DVector<f64>,
    /// Worst deviation of loaded-minus-free recovery from the injected
    /// profile.
    pub groundtruth_check: f64,
    /// Deterministic report document.
    pub report: super::TextDoc,
    /// Wall-clock timings (not part of the determinism contract).
    pub timing: super::TextDoc,
}

/// Execute the full pipeline for every configured observer on identical
/// data. With an output directory, every artifact is persisted.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<ExperimentOutput> {
    config.validate().map_err(Error::stage("config"))?;
    let model = config.build_model();
    let n = model.joints();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Stage {
            stage: "setup",
            source: Box::new(e.into()),
        })?;
    }

    // excitation design: independent trajectories for training and
    // evaluation
    let train_excitation =
        optimize_excitation(config, config.seed).map_err(Error::stage("excite"))?;
    let eval_excitation = optimize_excitation(config, config.seed.wrapping_add(0x9e37_79b9))
        .map_err(Error::stage("excite"))?;

    // contact-free training run
    let train_traj = simulate(
        &model,
        &config.friction,
        |t| train_excitation.eval(t),
        |_| DVector::zeros(n),
        config.t_s,
        config.train_duration,
        config.seed,
    )
    .map_err(Error::stage("simulate"))?;

    // loaded and free evaluation runs over the same motion and noise
    let eval_seed = config.seed.wrapping_add(0x51d3_cafe);
    let profile = config.external_profile();
    let loaded = simulate(
        &model,
        &config.friction,
        |t| eval_excitation.eval(t),
        &profile,
        config.t_s,
        config.eval_duration,
        eval_seed,
    )
    .map_err(Error::stage("simulate"))?;
    let free = simulate(
        &model,
        &config.friction,
        |t| eval_excitation.eval(t),
        |_| DVector::zeros(n),
        config.t_s,
        config.eval_duration,
        eval_seed,
    )
    .map_err(Error::stage("simulate"))?;

    // loaded-minus-free recovery cross-checked against the injected truth;
    // samples inside the controller's settling window after each torque
    // transition are excluded (the transient is physical, not an error)
    let recovered = ground_truth_ext_from_runs(&loaded, &free).map_err(Error::stage("report"))?;
    let injected = loaded.tau_ext.as_ref().expect("simulate records tau_ext");
    let settling = 0.5;
    let groundtruth_check = recovered
        .iter()
        .zip(injected)
        .zip(&loaded.times)
        .filter(|&((_, _), &t)| {
            config
                .ext_steps
                .iter()
                .all(|s| !(t >= s.time && t < s.time + settling))
        })
        .map(|((r, i), _)| (r - i).amax())
        .fold(0.0f64, f64::max);

    let trained =
        train_residual_models(&model, &train_traj, config).map_err(Error::stage("train"))?;
    let static_var = if config.filter.static_model_var.is_empty() {
        trained.mean_model_var.clone()
    } else {
        DVector::from_column_slice(&config.filter.static_model_var)
    };

    let kmp_set = PerJointModel(trained.kmp.clone());
    let gp_set = PerJointModel(trained.gp.clone());

    let mut reports = Vec::new();
    let mut traces: Vec<(ObserverKind, Vec<StepOutput>)> = Vec::new();
    for kind in &config.observers {
        let filter_config = config.filter.build(n, config.t_s, &static_var);
        let (residual, mode): (&dyn ResidualModel, AdaptationMode) = match kind {
            ObserverKind::Kmp => (&kmp_set, AdaptationMode::VarianceAware),
            ObserverKind::Gp => (&gp_set, AdaptationMode::VarianceAware),
            ObserverKind::InnovationAkf => (
                &kmp_set,
                AdaptationMode::Innovation {
                    rho_nu: config.filter.innovation_rho_nu,
                    rho_d: config.filter.innovation_rho_d,
                },
            ),
            ObserverKind::StaticKf => (&kmp_set, AdaptationMode::Static),
        };
        let (outputs, seconds) = run_observer(&model, residual, filter_config, mode, &loaded)
            .map_err(Error::stage("estimate"))?;
        let estimates: Vec<DVector<f64>> = outputs.iter().map(|o| o.estimate.clone()).collect();
        let report = compute_metrics(&model, kind.name(), &estimates, injected, &loaded.q, seconds)
            .map_err(Error::stage("report"))?;
        reports.push(report);
        traces.push((*kind, outputs));
    }

    // deterministic report + separate timing file
    let mut report = super::TextDoc::new("report", 1);
    report.set_str("label", &config.label);
    report.set_u64("seed", config.seed);
    report.set_u64("joints", n as u64);
    report.set_str(
        "observers",
        &config
            .observers
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>()
            .join(", "),
    );
    report.set_f64("groundtruth_check", groundtruth_check);
    report.set_vector("residual_rmse.kmp", &trained.kmp_test_rmse);
    report.set_vector("residual_rmse.gp", &trained.gp_test_rmse);
    for r in &reports {
        report.set_slice(&format!("{}.joint_rmse", r.observer), &r.joint_rmse);
        report.set_slice(&format!("{}.cartesian_rmse", r.observer), &r.cartesian_rmse);
        report.set_f64(
            &format!("{}.cartesian_aggregate", r.observer),
            r.cartesian_aggregate,
        );
    }
    let mut timing = super::TextDoc::new("timing", 1);
    timing.set_u64("samples", loaded.len() as u64);
    for r in &reports {
        timing.set_f64(&format!("{}.online_seconds", r.observer), r.online_seconds);
        timing.set_f64(
            &format!("{}.per_sample_seconds", r.observer),
            r.per_sample_seconds,
        );
    }

    if let Some(dir) = out_dir {
        let write = |res: Result<()>| res.map_err(Error::stage("write"));
        write(io::excitation_to_doc(&train_excitation).save(&dir.join("excitation_train.txt")))?;
        write(io::excitation_to_doc(&eval_excitation).save(&dir.join("excitation_eval.txt")))?;
        write(train_traj.save_csv(&dir.join("train.csv")))?;
        write(loaded.save_csv(&dir.join("eval_loaded.csv")))?;
        write(free.save_csv(&dir.join("eval_free.csv")))?;
        for (j, gmm) in trained.gmms.iter().enumerate() {
            write(io::gmm_to_doc(gmm).save(&dir.join(format!("gmm_j{j}.txt"))))?;
        }
        write(io::kmp_set_to_doc(&trained.kmp).save(&dir.join("kmp_set.txt")))?;
        write(io::gp_set_to_doc(&trained.gp).save(&dir.join("gp_set.txt")))?;
        let filter_config = config.filter.build(n, config.t_s, &static_var);
        write(io::filter_config_to_doc(&filter_config).save(&dir.join("filter.txt")))?;
        for (kind, outputs) in &traces {
            write(io::estimates_to_csv(
                outputs,
                &loaded.times,
                &dir.join(format!("estimates_{}.csv", kind.name())),
            ))?;
        }
        write(report.save(&dir.join("report.txt")))?;
        write(timing.save(&dir.join("timing.txt")))?;
    }

    Ok(ExperimentOutput {
        reports,
        kmp_test_rmse: trained.kmp_test_rmse,
        gp_test_rmse: trained.gp_test_rmse,
        groundtruth_check,
        report,
        timing,
    })
}
