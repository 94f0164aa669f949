//! Momentum-based external-torque observers.
//!
//! The external torque is modeled as a random walk and observed through a
//! virtual measurement built from generalized-momentum differences with the
//! learned residual mean subtracted. Three adaptation modes share the same
//! recursion:
//!
//! * variance-aware: the residual model's predictive variance inflates the
//!   measurement covariance sample by sample, an EWMA of squared
//!   innovations tracks the empirical noise floor, and the process noise
//!   follows inverse-Wishart variational updates iterated to a fixed
//!   point;
//! * innovation-based: classical forgetting-factor covariance adaptation
//!   driven by the innovation sequence;
//! * static: both covariances frozen at their configured values.

use crate::dynamics::{FrictionProfile, ManipulatorModel, SampledTrajectory};
use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::kmp::{kmp_predict, KmpModel};
use nalgebra::{DMatrix, DVector};

/// Residual-torque predictor queried at the measured joint velocities.
pub trait ResidualModel: Sync {
    fn joints(&self) -> usize;
    /// Per-joint predictive mean and variance.
    fn predict(&self, dq: &DVector<f64>) -> (DVector<f64>, DVector<f64>);
}

/// Scalar single-joint predictor.
pub trait ScalarResidualModel: Sync {
    fn predict_scalar(&self, s: f64) -> (f64, f64);
}

impl ScalarResidualModel for KmpModel {
    fn predict_scalar(&self, s: f64) -> (f64, f64) {
        debug_assert_eq!(self.reference().output_dim(), 1);
        let pred = kmp_predict(self, &DVector::from_element(1, s));
        (pred.mean[0], pred.cov[(0, 0)])
    }
}

impl ScalarResidualModel for GpModel {
    fn predict_scalar(&self, s: f64) -> (f64, f64) {
        self.predict(&DVector::from_element(1, s))
    }
}

/// Independent per-joint models assembled into a diagonal covariance.
pub struct PerJointModel<M>(pub Vec<M>);

impl<M: ScalarResidualModel> ResidualModel for PerJointModel<M> {
    fn joints(&self) -> usize {
        self.0.len()
    }

    fn predict(&self, dq: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.0.len();
        let mut mean = DVector::zeros(n);
        let mut var = DVector::zeros(n);
        for j in 0..n {
            let (m, v) = self.0[j].predict_scalar(dq[j]);
            mean[j] = m;
            var[j] = v;
        }
        (mean, var)
    }
}

/// Oracle residual model exposing the simulator's ground-truth friction
/// mean and noise variance; used by consistency tests.
pub struct FrictionOracle<'a>(pub &'a FrictionProfile);

impl ResidualModel for FrictionOracle<'_> {
    fn joints(&self) -> usize {
        self.0.joints()
    }

    fn predict(&self, dq: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let std = self.0.noise_std(dq);
        (self.0.deterministic(dq), std.component_mul(&std))
    }
}

/// Constant mean/variance residual model.
pub struct ConstantResidual {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
}

impl ResidualModel for ConstantResidual {
    fn joints(&self) -> usize {
        self.mean.len()
    }

    fn predict(&self, _dq: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (self.mean.clone(), self.var.clone())
    }
}

/// Covariance adaptation strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptationMode {
    /// Model variance + EWMA empirical noise + inverse-Wishart process
    /// adaptation.
    VarianceAware,
    /// Forgetting-factor innovation adaptation of both covariances.
    Innovation { rho_nu: f64, rho_d: f64 },
    /// Frozen covariances.
    Static,
}

/// Filter parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Sampling period (s).
    pub t_s: f64,
    /// EWMA forgetting factor for the empirical noise, in (0, 1).
    pub forgetting: f64,
    /// Fixed-point iterations of the variational update.
    pub vb_iterations: usize,
    /// Increment the inverse-Wishart dof inside the iteration loop
    /// (literal algorithm reading) instead of once per sample.
    pub iw_per_iteration: bool,
    /// Inverse-Wishart prior dof, must exceed n + 1.
    pub iw_dof0: f64,
    /// Inverse-Wishart prior scale matrix.
    pub iw_scale0: DMatrix<f64>,
    pub initial_estimate: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
    pub initial_process_cov: DMatrix<f64>,
    /// Initial empirical noise diagonal.
    pub initial_empirical: DVector<f64>,
    /// Per-joint clamp bounds on the empirical noise diagonal.
    pub empirical_min: DVector<f64>,
    pub empirical_max: DVector<f64>,
    /// Constant per-joint model variance consumed by the Static and
    /// Innovation modes in place of the per-sample predictive variance.
    pub static_model_var: DVector<f64>,
}

impl FilterConfig {
    /// Weakly informative defaults: prior process noise mean 1e-4 I,
    /// dof n + 3, forgetting 0.02, three fixed-point iterations.
    pub fn defaults(n: usize, t_s: f64) -> Self {
        let dof0 = n as f64 + 3.0;
        Self {
            t_s,
            forgetting: 0.02,
            vb_iterations: 3,
            iw_per_iteration: false,
            iw_dof0: dof0,
            iw_scale0: DMatrix::identity(n, n) * (1e-4 * (dof0 - n as f64 - 1.0)),
            initial_estimate: DVector::zeros(n),
            initial_cov: DMatrix::identity(n, n),
            initial_process_cov: DMatrix::identity(n, n) * 1e-4,
            initial_empirical: DVector::from_element(n, 1e-6),
            empirical_min: DVector::from_element(n, 1e-8),
            empirical_max: DVector::from_element(n, 1e2),
            static_model_var: DVector::from_element(n, 1.0),
        }
    }

    pub fn joints(&self) -> usize {
        self.initial_estimate.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints();
        if !self.t_s.is_finite() || self.t_s <= 0.0 {
            return Err(Error::NonFinite("sampling period"));
        }
        if !(self.forgetting > 0.0 && self.forgetting < 1.0) {
            return Err(Error::NonFinite("forgetting factor must be in (0, 1)"));
        }
        if self.vb_iterations < 1 {
            return Err(Error::InsufficientData {
                needed: 1,
                actual: 0,
            });
        }
        if !self.iw_dof0.is_finite() || self.iw_dof0 <= n as f64 + 1.0 {
            return Err(Error::NonFinite("inverse-Wishart dof must exceed n + 1"));
        }
        for (what, len) in [
            ("iw_scale0", self.iw_scale0.nrows()),
            ("initial_cov", self.initial_cov.nrows()),
            ("initial_process_cov", self.initial_process_cov.nrows()),
            ("initial_empirical", self.initial_empirical.len()),
            ("empirical_min", self.empirical_min.len()),
            ("empirical_max", self.empirical_max.len()),
            ("static_model_var", self.static_model_var.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    actual: len,
                });
            }
        }
        if self.iw_scale0.clone().cholesky().is_none() {
            return Err(Error::IllConditioned("inverse-Wishart prior scale"));
        }
        for j in 0..n {
            if !(self.initial_empirical[j] > 0.0)
                || self.empirical_min[j] > self.empirical_max[j]
            {
                return Err(Error::NonFinite("empirical noise bounds"));
            }
        }
        Ok(())
    }
}

/// Filter state carried between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// External-torque estimate.
    pub estimate: DVector<f64>,
    /// Estimate covariance P.
    pub cov: DMatrix<f64>,
    /// Process-noise covariance.
    pub process_cov: DMatrix<f64>,
    /// Empirical measurement-noise component (diagonal by construction).
    pub empirical: DMatrix<f64>,
    /// Inverse-Wishart degrees of freedom.
    pub iw_dof: f64,
    /// Inverse-Wishart scale matrix.
    pub iw_scale: DMatrix<f64>,
    /// Measurement covariance at the last step (persistent state for the
    /// innovation and static modes).
    pub meas_cov: DMatrix<f64>,
}

impl FilterState {
    pub fn new(config: &FilterConfig) -> Self {
        let empirical = DMatrix::from_diagonal(&config.initial_empirical);
        let meas_cov = measurement_covariance(
            &DMatrix::from_diagonal(&config.static_model_var),
            &empirical,
            config.t_s,
        );
        Self {
            estimate: config.initial_estimate.clone(),
            cov: config.initial_cov.clone(),
            process_cov: config.initial_process_cov.clone(),
            empirical,
            iw_dof: config.iw_dof0,
            iw_scale: config.iw_scale0.clone(),
            meas_cov,
        }
    }
}

/// Virtual measurement of the external torque with its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualMeasurement {
    /// Momentum-units measurement value (equals -t_s tau_ext for an exact
    /// model and residual mean).
    pub value: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl VirtualMeasurement {
    pub fn new(
        x_k: &DVector<f64>,
        x_prev: &DVector<f64>,
        u_prev: &DVector<f64>,
        residual_mean: &DVector<f64>,
        model_cov: &DMatrix<f64>,
        empirical: &DMatrix<f64>,
        t_s: f64,
    ) -> Self {
        Self {
            value: virtual_measurement(x_k, x_prev, u_prev, residual_mean, t_s),
            cov: measurement_covariance(model_cov, empirical, t_s),
        }
    }
}

/// Virtual measurement coupling the momentum step to the external torque:
/// zeta = x_k - x_{k-1} - t_s u_{k-1} + t_s mu_k, which equals
/// -t_s tau_ext for an exact model and residual mean.
pub fn virtual_measurement(
    x_k: &DVector<f64>,
    x_prev: &DVector<f64>,
    u_prev: &DVector<f64>,
    residual_mean: &DVector<f64>,
    t_s: f64,
) -> DVector<f64> {
    x_k - x_prev - t_s * u_prev + t_s * residual_mean
}

/// Total measurement covariance t_s^2 model_cov + empirical.
pub fn measurement_covariance(
    model_cov: &DMatrix<f64>,
    empirical: &DMatrix<f64>,
    t_s: f64,
) -> DMatrix<f64> {
    t_s * t_s * model_cov + empirical
}

/// EWMA of squared innovations with per-joint diagonal clamping.
pub fn update_empirical_noise(
    empirical: &DMatrix<f64>,
    innovation: &DVector<f64>,
    rho: f64,
    min: &DVector<f64>,
    max: &DVector<f64>,
) -> DMatrix<f64> {
    let n = innovation.len();
    let squared = DMatrix::from_diagonal(&innovation.component_mul(innovation));
    let mut out = empirical + rho * (squared - empirical);
    for j in 0..n {
        out[(j, j)] = out[(j, j)].clamp(min[j], max[j]);
    }
    out
}

/// Kalman gain for the measurement matrix H = -t_s I.
pub fn kalman_gain(
    p_pred: &DMatrix<f64>,
    meas_cov: &DMatrix<f64>,
    t_s: f64,
) -> Result<DMatrix<f64>> {
    let s = t_s * t_s * p_pred + meas_cov;
    let chol = s
        .cholesky()
        .ok_or(Error::IllConditioned("innovation covariance"))?;
    Ok(-t_s * chol.solve(p_pred).transpose())
}

/// One measurement update against H = -t_s I.
fn measurement_update(
    omega_pred: &DVector<f64>,
    p_pred: &DMatrix<f64>,
    meas: &DVector<f64>,
    meas_cov: &DMatrix<f64>,
    t_s: f64,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let gain = kalman_gain(p_pred, meas_cov, t_s)?;
    let innovation = meas + t_s * omega_pred;
    let omega = omega_pred + &gain * innovation;
    let n = omega.len();
    let mut p = (DMatrix::identity(n, n) + t_s * &gain) * p_pred;
    p = 0.5 * (&p + p.transpose());
    Ok((omega, p, gain))
}

/// Inverse-Wishart conjugate update: dof' = dof + 1,
/// scale' = scale + e e^T + P, process covariance = scale' / (dof' - n - 1).
pub fn vb_update(
    dof: f64,
    scale: &DMatrix<f64>,
    transition_error: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let n = transition_error.len() as f64;
    let dof_next = dof + 1.0;
    let scale_next = scale + transition_error * transition_error.transpose() + cov;
    let process = &scale_next / (dof_next - n - 1.0);
    (dof_next, scale_next, process)
}

/// Normalized innovation squared r^T S^-1 r.
pub fn nis(innovation: &DVector<f64>, innovation_cov: &DMatrix<f64>) -> Result<f64> {
    let chol = innovation_cov
        .clone()
        .cholesky()
        .ok_or(Error::IllConditioned("innovation covariance"))?;
    Ok(innovation.dot(&chol.solve(innovation)))
}

/// Measurement-level filter update with audit quantities.
#[derive(Debug, Clone)]
pub struct FilterUpdate {
    pub state: FilterState,
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// Plain prediction + update with the covariances frozen in `state`.
pub fn kf_step(
    state: &FilterState,
    meas: &DVector<f64>,
    meas_cov: &DMatrix<f64>,
    config: &FilterConfig,
) -> Result<FilterState> {
    let p_pred = &state.cov + &state.process_cov;
    let (omega, p, _) = measurement_update(&state.estimate, &p_pred, meas, meas_cov, config.t_s)?;
    let mut next = state.clone();
    next.estimate = omega;
    next.cov = p;
    next.meas_cov = meas_cov.clone();
    Ok(next)
}

/// Static baseline: [`kf_step`] against the constant covariances carried in
/// the state.
pub fn static_kf_step(
    state: &FilterState,
    meas: &DVector<f64>,
    config: &FilterConfig,
) -> Result<FilterUpdate> {
    let ts = config.t_s;
    let p_pred = &state.cov + &state.process_cov;
    let (omega, p, gain) = measurement_update(&state.estimate, &p_pred, meas, &state.meas_cov, ts)?;
    let innovation = meas + ts * &state.estimate;
    let innovation_cov = ts * ts * &p_pred + &state.meas_cov;
    let mut next = state.clone();
    next.estimate = omega;
    next.cov = p;
    Ok(FilterUpdate {
        state: next,
        gain,
        innovation,
        innovation_cov,
    })
}

/// Innovation-based adaptive baseline: forgetting-factor updates of the
/// measurement covariance (before the gain) and of the process covariance
/// (after the update).
pub fn innovation_akf_step(
    state: &FilterState,
    meas: &DVector<f64>,
    rho_nu: f64,
    rho_d: f64,
    config: &FilterConfig,
) -> Result<FilterUpdate> {
    let ts = config.t_s;
    let p_pred = &state.cov + &state.process_cov;
    let innovation = meas + ts * &state.estimate;
    let mut meas_cov = (1.0 - rho_nu) * &state.meas_cov
        + rho_nu * (&innovation * innovation.transpose() + ts * ts * &p_pred);
    meas_cov = 0.5 * (&meas_cov + meas_cov.transpose());
    let (omega, p, gain) = measurement_update(&state.estimate, &p_pred, meas, &meas_cov, ts)?;
    let spread = &gain * &innovation * innovation.transpose() * gain.transpose();
    let mut process = (1.0 - rho_d) * &state.process_cov + rho_d * spread;
    process = 0.5 * (&process + process.transpose());
    let innovation_cov = ts * ts * &p_pred + &meas_cov;
    let mut next = state.clone();
    next.estimate = omega;
    next.cov = p;
    next.process_cov = process;
    next.meas_cov = meas_cov;
    Ok(FilterUpdate {
        state: next,
        gain,
        innovation,
        innovation_cov,
    })
}

/// Variance-aware update: EWMA empirical noise from the pre-update
/// innovation, model variance folded into the measurement covariance, and
/// the gain/state/process-noise fixed point iterated `vb_iterations` times.
/// The inverse-Wishart dof advances once per sample unless
/// `iw_per_iteration` is set.
pub fn variance_aware_step(
    state: &FilterState,
    meas: &DVector<f64>,
    model_var: &DVector<f64>,
    config: &FilterConfig,
) -> Result<FilterUpdate> {
    let ts = config.t_s;
    let innovation = meas + ts * &state.estimate;
    let empirical = update_empirical_noise(
        &state.empirical,
        &innovation,
        config.forgetting,
        &config.empirical_min,
        &config.empirical_max,
    );
    let meas_cov = measurement_covariance(&DMatrix::from_diagonal(model_var), &empirical, ts);

    let prior_dof = state.iw_dof;
    let prior_scale = state.iw_scale.clone();
    let mut dof = prior_dof;
    let mut scale = prior_scale.clone();
    let mut process = state.process_cov.clone();
    let mut last = None;
    for _ in 0..config.vb_iterations {
        let p_pred = &state.cov + &process;
        let (omega, p, gain) = measurement_update(&state.estimate, &p_pred, meas, &meas_cov, ts)?;
        let e = &omega - &state.estimate;
        let (d, s, pr) = if config.iw_per_iteration {
            vb_update(dof, &scale, &e, &p)
        } else {
            vb_update(prior_dof, &prior_scale, &e, &p)
        };
        dof = d;
        scale = s;
        process = pr;
        last = Some((omega, p, gain, p_pred));
    }
    let (omega, p, gain, p_pred) = last.expect("vb_iterations >= 1");
    let innovation_cov = ts * ts * &p_pred + &meas_cov;
    let mut next = state.clone();
    next.estimate = omega;
    next.cov = p;
    next.process_cov = process;
    next.empirical = empirical;
    next.iw_dof = dof;
    next.iw_scale = scale;
    next.meas_cov = meas_cov;
    Ok(FilterUpdate {
        state: next,
        gain,
        innovation,
        innovation_cov,
    })
}

/// Per-step observer output with audit quantities.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub estimate: DVector<f64>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub meas_cov: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub model_mean: DVector<f64>,
    pub model_var: DVector<f64>,
    /// Diagonal of the post-update estimate covariance.
    pub cov_diag: DVector<f64>,
    /// Diagonal of the process-noise covariance after adaptation.
    pub process_diag: DVector<f64>,
}

/// Online external-torque observer over a manipulator model and a trained
/// residual model.
pub struct Observer<'a> {
    model: &'a ManipulatorModel,
    residual: &'a dyn ResidualModel,
    config: FilterConfig,
    mode: AdaptationMode,
    state: FilterState,
    prev: Option<(DVector<f64>, DVector<f64>)>,
}

impl<'a> Observer<'a> {
    pub fn new(
        model: &'a ManipulatorModel,
        residual: &'a dyn ResidualModel,
        config: FilterConfig,
        mode: AdaptationMode,
    ) -> Result<Self> {
        config.validate()?;
        if config.joints() != model.joints() {
            return Err(Error::DimensionMismatch {
                what: "filter config joints",
                expected: model.joints(),
                actual: config.joints(),
            });
        }
        if residual.joints() != model.joints() {
            return Err(Error::DimensionMismatch {
                what: "residual model joints",
                expected: model.joints(),
                actual: residual.joints(),
            });
        }
        if let AdaptationMode::Innovation { rho_nu, rho_d } = mode {
            if !(0.0..=1.0).contains(&rho_nu) || !(0.0..=1.0).contains(&rho_d) {
                return Err(Error::NonFinite("innovation forgetting factors"));
            }
        }
        let state = FilterState::new(&config);
        Ok(Self {
            model,
            residual,
            config,
            mode,
            state,
            prev: None,
        })
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Process one sample. The first call only primes the momentum history
    /// and returns the initial estimate.
    pub fn step(
        &mut self,
        q: &DVector<f64>,
        dq: &DVector<f64>,
        tau_m: &DVector<f64>,
    ) -> Result<StepOutput> {
        let n = self.model.joints();
        let ts = self.config.t_s;
        let (model_mean, model_var) = self.residual.predict(dq);
        let x = self.model.generalized_momentum(q, dq)?;
        let u = self.model.momentum_input(q, dq, tau_m)?;

        let Some((x_prev, u_prev)) = self.prev.take() else {
            self.prev = Some((x, u));
            return Ok(StepOutput {
                estimate: self.state.estimate.clone(),
                innovation: DVector::zeros(n),
                innovation_cov: ts * ts * (&self.state.cov + &self.state.process_cov)
                    + &self.state.meas_cov,
                meas_cov: self.state.meas_cov.clone(),
                gain: DMatrix::zeros(n, n),
                model_mean,
                model_var,
                cov_diag: self.state.cov.diagonal(),
                process_diag: self.state.process_cov.diagonal(),
            });
        };

        let zeta = virtual_measurement(&x, &x_prev, &u_prev, &model_mean, ts);
        let update = match self.mode {
            AdaptationMode::VarianceAware => {
                variance_aware_step(&self.state, &zeta, &model_var, &self.config)?
            }
            AdaptationMode::Innovation { rho_nu, rho_d } => {
                innovation_akf_step(&self.state, &zeta, rho_nu, rho_d, &self.config)?
            }
            AdaptationMode::Static => static_kf_step(&self.state, &zeta, &self.config)?,
        };
        self.state = update.state;
        self.prev = Some((x, u));
        Ok(StepOutput {
            estimate: self.state.estimate.clone(),
            innovation: update.innovation,
            innovation_cov: update.innovation_cov,
            meas_cov: self.state.meas_cov.clone(),
            gain: update.gain,
            model_mean,
            model_var,
            cov_diag: self.state.cov.diagonal(),
            process_diag: self.state.process_cov.diagonal(),
        })
    }

    /// Run the observer over a full recording.
    pub fn run(&mut self, traj: &SampledTrajectory) -> Result<Vec<StepOutput>> {
        (0..traj.len())
            .map(|k| self.step(&traj.q[k], &traj.dq[k], &traj.tau_m[k]))
            .collect()
    }
}
