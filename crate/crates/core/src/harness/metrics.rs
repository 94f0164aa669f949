//! Error metrics and ground-truth construction.

use crate::error::{Error, Result};
use nalgebra::DVector;

/// Per-observer error report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub observer: String,
    /// Per-joint external-torque RMSE (N m).
    pub joint_rmse: Vec<f64>,
    /// Per-axis Cartesian wrench RMSE (Fx, Fy, Fz, Mx, My, Mz).
    pub cartesian_rmse: Vec<f64>,
    /// Euclidean norm of the six per-axis values (mixed units).
    pub cartesian_aggregate: f64,
    /// Wall-clock time of the online loop (s); excluded from report files.
    pub online_seconds: f64,
    /// Average per-sample processing time (s).
    pub per_sample_seconds: f64,
}

impl MetricsReport {
    /// Recompute the aggregate from the per-axis values.
    pub fn aggregate_of(cartesian_rmse: &[f64]) -> f64 {
        cartesian_rmse.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Loaded-minus-free ground truth from two recordings of the same motion,
/// rejecting mismatched lengths or sampling periods.
pub fn ground_truth_ext_from_runs(
    loaded: &crate::dynamics::SampledTrajectory,
    free: &crate::dynamics::SampledTrajectory,
) -> Result<Vec<DVector<f64>>> {
    if loaded.t_s != free.t_s {
        return Err(Error::SeriesMismatch(format!(
            "sampling periods differ: {} vs {}",
            loaded.t_s, free.t_s
        )));
    }
    ground_truth_ext(&loaded.tau_m, &free.tau_m)
}

/// Loaded-minus-free ground truth: elementwise torque difference of two
/// recordings of the same motion.
pub fn ground_truth_ext(
    loaded: &[DVector<f64>],
    free: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    if loaded.len() != free.len() {
        return Err(Error::SeriesMismatch(format!(
            "loaded has {} rows, free has {}",
            loaded.len(),
            free.len()
        )));
    }
    if loaded.is_empty() {
        return Err(Error::EmptySeries("ground truth torque series"));
    }
    loaded
        .iter()
        .zip(free)
        .map(|(l, f)| {
            if l.len() != f.len() {
                return Err(Error::DimensionMismatch {
                    what: "ground truth joint count",
                    expected: l.len(),
                    actual: f.len(),
                });
            }
            Ok(l - f)
        })
        .collect()
}

/// Per-channel root-mean-square error between two equal-length series.
pub fn rmse(estimates: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<DVector<f64>> {
    if estimates.is_empty() {
        return Err(Error::EmptySeries("rmse input"));
    }
    if estimates.len() != truth.len() {
        return Err(Error::SeriesMismatch(format!(
            "estimates has {} rows, truth has {}",
            estimates.len(),
            truth.len()
        )));
    }
    let n = estimates[0].len();
    let mut acc = DVector::zeros(n);
    for (e, t) in estimates.iter().zip(truth) {
        if e.len() != n || t.len() != n {
            return Err(Error::DimensionMismatch {
                what: "rmse channel count",
                expected: n,
                actual: e.len().min(t.len()),
            });
        }
        let d = e - t;
        acc += d.component_mul(&d);
    }
    Ok((acc / estimates.len() as f64).map(f64::sqrt))
}
