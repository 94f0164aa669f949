//! Random-Fourier excitation trajectories and their genetic optimization.
//!
//! A trajectory is a per-joint Fourier series around the joint's range
//! midpoint. Candidates are scored by the negative log-determinant of the
//! sample covariance of the (q, dq, ddq) state cloud: minimizing it spreads
//! the cloud over the reachable state space, which is what makes the
//! residual-torque training data informative.

use crate::dynamics::JointLimits;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Fourier-series joint trajectory parameters.
///
/// q_j(t) = midpoint_j + sum_k [a_jk sin(w_k t) + b_jk cos(w_k t)] with
/// harmonic frequencies w_k = 2 pi k / period.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTrajectoryParams {
    /// Range midpoint per joint (rad).
    pub midpoints: DVector<f64>,
    /// Sine coefficients, one row per joint, one column per harmonic (rad).
    pub a: DMatrix<f64>,
    /// Cosine coefficients, same layout (rad).
    pub b: DMatrix<f64>,
    /// Base period (s).
    pub period: f64,
}

impl FourierTrajectoryParams {
    pub fn zeros(midpoints: DVector<f64>, harmonics: usize, period: f64) -> Self {
        let n = midpoints.len();
        Self {
            midpoints,
            a: DMatrix::zeros(n, harmonics),
            b: DMatrix::zeros(n, harmonics),
            period,
        }
    }

    pub fn joints(&self) -> usize {
        self.midpoints.len()
    }

    pub fn harmonics(&self) -> usize {
        self.a.ncols()
    }

    /// kappa-th harmonic frequency (kappa counted from 1).
    pub fn omega(&self, kappa: usize) -> f64 {
        2.0 * std::f64::consts::PI * kappa as f64 / self.period
    }

    /// Analytic position, velocity and acceleration at time t.
    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n = self.joints();
        let mut q = self.midpoints.clone();
        let mut dq = DVector::zeros(n);
        let mut ddq = DVector::zeros(n);
        for kappa in 1..=self.harmonics() {
            let w = self.omega(kappa);
            let (s, c) = (w * t).sin_cos();
            for j in 0..n {
                let (aj, bj) = (self.a[(j, kappa - 1)], self.b[(j, kappa - 1)]);
                q[j] += aj * s + bj * c;
                dq[j] += w * (aj * c - bj * s);
                ddq[j] += -w * w * (aj * s + bj * c);
            }
        }
        (q, dq, ddq)
    }

    /// Flatten the coefficients into the 2 n K optimization vector.
    pub fn theta(&self) -> DVector<f64> {
        let (n, k) = (self.joints(), self.harmonics());
        let mut theta = DVector::zeros(2 * n * k);
        for j in 0..n {
            for kk in 0..k {
                theta[2 * k * j + kk] = self.a[(j, kk)];
                theta[2 * k * j + k + kk] = self.b[(j, kk)];
            }
        }
        theta
    }

    /// Rebuild parameters from a flat coefficient vector.
    pub fn from_theta(
        midpoints: DVector<f64>,
        harmonics: usize,
        period: f64,
        theta: &DVector<f64>,
    ) -> Self {
        let n = midpoints.len();
        assert_eq!(theta.len(), 2 * n * harmonics, "theta length");
        let mut out = Self::zeros(midpoints, harmonics, period);
        for j in 0..n {
            for kk in 0..harmonics {
                out.a[(j, kk)] = theta[2 * harmonics * j + kk];
                out.b[(j, kk)] = theta[2 * harmonics * j + harmonics + kk];
            }
        }
        out
    }
}

/// Spec-level alias for [`FourierTrajectoryParams::eval`].
pub fn eval_trajectory(
    params: &FourierTrajectoryParams,
    t: f64,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    params.eval(t)
}

/// Stack the (q, dq, ddq) states over a time grid: one row per sample,
/// 3 n columns.
pub fn state_cloud(params: &FourierTrajectoryParams, grid: &[f64]) -> DMatrix<f64> {
    assert!(!grid.is_empty(), "state cloud needs a nonempty grid");
    let n = params.joints();
    let mut cloud = DMatrix::zeros(grid.len(), 3 * n);
    for (row, &t) in grid.iter().enumerate() {
        let (q, dq, ddq) = params.eval(t);
        for j in 0..n {
            cloud[(row, j)] = q[j];
            cloud[(row, n + j)] = dq[j];
            cloud[(row, 2 * n + j)] = ddq[j];
        }
    }
    cloud
}

/// Negative log-determinant of the unbiased sample covariance of a cloud.
///
/// A diagonal jitter of 1e-9 is added before factorization; degenerate
/// clouds evaluate to +infinity.
pub fn logdet_objective(cloud: &DMatrix<f64>) -> f64 {
    let rows = cloud.nrows();
    let d = cloud.ncols();
    assert!(rows > d, "need at least dim + 1 samples, got {rows}");
    let mean = cloud.row_mean();
    let mut cov = DMatrix::zeros(d, d);
    for r in 0..rows {
        let dev = cloud.row(r) - &mean;
        cov += dev.transpose() * dev;
    }
    cov /= (rows - 1) as f64;
    for i in 0..d {
        cov[(i, i)] += 1e-9;
    }
    match cov.cholesky() {
        Some(chol) => {
            let logdet: f64 = (0..d).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
            if logdet.is_finite() {
                -logdet
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    }
}

/// Grid feasibility predicate: positions inside the box and velocity/
/// acceleration magnitudes under their bounds at every grid point.
pub fn within_limits(
    params: &FourierTrajectoryParams,
    limits: &[JointLimits],
    grid_points: usize,
) -> bool {
    limit_violation(params, limits, grid_points, 0.0) == 0.0
}

/// Total clamped limit excess over a uniform grid on one period; `margin`
/// shrinks every bound by the given fraction.
fn limit_violation(
    params: &FourierTrajectoryParams,
    limits: &[JointLimits],
    grid_points: usize,
    margin: f64,
) -> f64 {
    let mut total = 0.0;
    for g in 0..grid_points {
        let t = params.period * g as f64 / grid_points as f64;
        let (q, dq, ddq) = params.eval(t);
        for (j, lim) in limits.iter().enumerate() {
            let half = 0.5 * (lim.q_max - lim.q_min) * (1.0 - margin);
            let mid = lim.midpoint();
            total += (q[j] - (mid + half)).max(0.0);
            total += ((mid - half) - q[j]).max(0.0);
            total += (dq[j].abs() - lim.dq_max * (1.0 - margin)).max(0.0);
            total += (ddq[j].abs() - lim.ddq_max * (1.0 - margin)).max(0.0);
        }
    }
    total
}

/// Genetic-algorithm settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    /// Probability that an offspring mixes both parents.
    pub crossover_rate: f64,
    /// Std of the per-coefficient Gaussian mutation (rad).
    pub mutation_std: f64,
    /// Weight on the total limit violation added to the objective.
    pub penalty_weight: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            tournament: 3,
            crossover_rate: 0.9,
            mutation_std: 0.02,
            penalty_weight: 1e4,
            seed: 0,
        }
    }
}

/// Outcome of a GA run.
#[derive(Debug, Clone)]
pub struct GaResult {
    pub best: FourierTrajectoryParams,
    /// Best penalized objective after each generation (non-increasing).
    pub history: Vec<f64>,
    pub best_objective: f64,
}

const OPT_GRID: usize = 200;
const FEAS_MARGIN: f64 = 0.01;
const REJECTION_CAP: usize = 1000;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw a coefficient vector whose per-joint amplitude budgets respect the
/// position/velocity/acceleration bounds, then verify on the grid.
fn sample_feasible(
    midpoints: &DVector<f64>,
    limits: &[JointLimits],
    harmonics: usize,
    period: f64,
    rng: &mut ChaCha8Rng,
) -> Option<FourierTrajectoryParams> {
    let n = limits.len();
    for _ in 0..REJECTION_CAP {
        let mut params =
            FourierTrajectoryParams::zeros(midpoints.clone(), harmonics, period);
        for j in 0..n {
            let mut raw: Vec<(f64, f64)> = (0..harmonics)
                .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let lim = limits[j];
            let (mut pos, mut vel, mut acc) = (0.0, 0.0, 0.0);
            for (kappa, (a, b)) in raw.iter().enumerate() {
                let w = 2.0 * std::f64::consts::PI * (kappa + 1) as f64 / period;
                let amp = a.abs() + b.abs();
                pos += amp;
                vel += w * amp;
                acc += w * w * amp;
            }
            let room = 0.5 * (lim.q_max - lim.q_min) * (1.0 - 2.0 * FEAS_MARGIN);
            let scale = (room / pos)
                .min(lim.dq_max * (1.0 - 2.0 * FEAS_MARGIN) / vel)
                .min(lim.ddq_max * (1.0 - 2.0 * FEAS_MARGIN) / acc)
                * rng.random_range(0.5..1.0);
            for (a, b) in raw.iter_mut() {
                *a *= scale;
                *b *= scale;
            }
            for (kappa, (a, b)) in raw.iter().enumerate() {
                params.a[(j, kappa)] = *a;
                params.b[(j, kappa)] = *b;
            }
        }
        if limit_violation(&params, limits, OPT_GRID, FEAS_MARGIN) == 0.0 {
            return Some(params);
        }
    }
    None
}

/// Maximize state-cloud dispersion (or any custom objective) over Fourier
/// coefficients with tournament selection, uniform crossover, Gaussian
/// mutation and one elite slot.
///
/// Deterministic for a fixed seed: each individual draws from its own
/// counter-derived ChaCha stream.
pub fn ga_optimize(
    objective: impl Fn(&FourierTrajectoryParams) -> f64 + Sync,
    limits: &[JointLimits],
    harmonics: usize,
    period: f64,
    config: &GaConfig,
) -> Result<GaResult> {
    assert!(config.generations >= 1, "generations >= 1");
    assert!(config.population >= 1, "population >= 1");
    assert!((0.0..=1.0).contains(&config.crossover_rate));
    let midpoints = DVector::from_fn(limits.len(), |j, _| limits[j].midpoint());

    let mut population: Vec<FourierTrajectoryParams> = Vec::with_capacity(config.population);
    for i in 0..config.population {
        let mut rng = stream_rng(config.seed, i as u64);
        population.push(
            sample_feasible(&midpoints, limits, harmonics, period, &mut rng).ok_or(
                Error::InfeasiblePopulation {
                    attempts: REJECTION_CAP,
                },
            )?,
        );
    }

    let penalized = |params: &FourierTrajectoryParams| -> f64 {
        let violation = limit_violation(params, limits, OPT_GRID, FEAS_MARGIN);
        objective(params) + config.penalty_weight * violation
    };
    let mut fitness: Vec<f64> = population.par_iter().map(&penalized).collect();

    let mut history = Vec::with_capacity(config.generations);
    let mut best_feasible: Option<(f64, FourierTrajectoryParams)> = None;

    for generation in 0..config.generations {
        // track the best feasible candidate seen so far
        for (params, &fit) in population.iter().zip(&fitness) {
            let feasible = limit_violation(params, limits, OPT_GRID, FEAS_MARGIN) == 0.0;
            if feasible && best_feasible.as_ref().is_none_or(|(f, _)| fit < *f) {
                best_feasible = Some((fit, params.clone()));
            }
        }
        history.push(best_feasible.as_ref().expect("initial population feasible").0);

        if generation + 1 == config.generations {
            break;
        }

        let elite_idx = fitness
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty population");
        let mut next: Vec<FourierTrajectoryParams> = Vec::with_capacity(config.population);
        next.push(population[elite_idx].clone());
        for i in 1..config.population {
            let mut rng = stream_rng(
                config.seed,
                (generation as u64 + 1) * config.population as u64 + i as u64,
            );
            let pick = |rng: &mut ChaCha8Rng| -> usize {
                (0..config.tournament.max(1))
                    .map(|_| rng.random_range(0..config.population))
                    .min_by(|&a, &b| fitness[a].total_cmp(&fitness[b]))
                    .unwrap()
            };
            let p1 = pick(&mut rng);
            let p2 = pick(&mut rng);
            let mut theta = population[p1].theta();
            if rng.random_range(0.0..1.0) < config.crossover_rate {
                let other = population[p2].theta();
                for g in 0..theta.len() {
                    if rng.random_range(0.0..1.0) < 0.5 {
                        theta[g] = other[g];
                    }
                }
            }
            if config.mutation_std > 0.0 {
                let normal = Normal::new(0.0, config.mutation_std).expect("valid std");
                for g in 0..theta.len() {
                    theta[g] += normal.sample(&mut rng);
                }
            }
            next.push(FourierTrajectoryParams::from_theta(
                midpoints.clone(),
                harmonics,
                period,
                &theta,
            ));
        }
        population = next;
        fitness = population.par_iter().map(&penalized).collect();
    }

    let (fit, best) = best_feasible.expect("initial population feasible");
    Ok(GaResult {
        best_objective: fit,
        best,
        history,
    })
}
