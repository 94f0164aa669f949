//! Kernelized prediction over a probabilistic reference trajectory.
//!
//! The predictor minimizes a KL objective against the GMR reference, which
//! gives a ridge-like mean and a variance that passes through the
//! reference's heteroscedastic covariances near the data and saturates at
//! (N / lambda2) sigma_f^2 far away. Mean and variance hyperparameters
//! decouple: lambda2 and sigma_f^2 shape the uncertainty without moving
//! the mean fit.

use crate::error::{Error, Result};
use crate::mixture::ReferenceTrajectory;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Kernel and regularization parameters.
///
/// `length_scale` enters the squared-exponential kernel as an inverse
/// multiplier of the squared distance, so it carries input^2 units and the
/// kernel's characteristic length is its square root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmpHyperparams {
    pub length_scale: f64,
    pub signal_var: f64,
    /// Mean regularizer (>= 0).
    pub lambda1: f64,
    /// Variance regularizer (> 0).
    pub lambda2: f64,
}

impl KmpHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.signal_var > 0.0) {
            return Err(Error::NonFinite("kernel hyperparameters must be positive"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 > 0.0) {
            return Err(Error::NonFinite("regularizers out of range"));
        }
        Ok(())
    }
}

/// Squared-exponential kernel sigma_f^2 exp(-(s - s')^T (s - s') / (2 l)).
pub fn se_kernel(s1: &DVector<f64>, s2: &DVector<f64>, length_scale: f64, signal_var: f64) -> f64 {
    let d2 = (s1 - s2).norm_squared();
    signal_var * (-0.5 * d2 / length_scale).exp()
}

/// Trained per-output-block kernel predictor.
#[derive(Debug, Clone)]
pub struct KmpModel {
    reference: ReferenceTrajectory,
    hyper: KmpHyperparams,
    /// Cholesky of the Gram plus lambda1-scaled reference covariance, kept
    /// so mean-side systems can be re-solved without refactorizing.
    #[allow(dead_code)]
    chol_mean: Cholesky<f64, Dyn>,
    /// Cholesky of the Gram plus lambda2-scaled reference covariance.
    chol_var: Cholesky<f64, Dyn>,
    /// Cached solve (K + lambda1 Sigma)^-1 mu.
    weights: DVector<f64>,
}

/// Predictive mean and covariance at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct KmpPrediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

const JITTER: f64 = 1e-10;

fn cholesky_with_jitter(mut m: DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    match m.clone().cholesky() {
        Some(c) => Ok(c),
        None => {
            for i in 0..m.nrows() {
                m[(i, i)] += JITTER;
            }
            m.cholesky().ok_or(Error::IllConditioned(what))
        }
    }
}

impl KmpModel {
    pub fn reference(&self) -> &ReferenceTrajectory {
        &self.reference
    }

    pub fn hyperparams(&self) -> &KmpHyperparams {
        &self.hyper
    }

    fn block_kernel_column(&self, s: &DVector<f64>) -> DMatrix<f64> {
        let o = self.reference.output_dim();
        let n = self.reference.len();
        let mut col = DMatrix::zeros(o * n, o);
        for (i, si) in self.reference.inputs.iter().enumerate() {
            let k = se_kernel(s, si, self.hyper.length_scale, self.hyper.signal_var);
            for a in 0..o {
                col[(i * o + a, a)] = k;
            }
        }
        col
    }

    /// Residual of the cached weight solve, for diagnostics.
    pub fn weight_residual(&self) -> f64 {
        let gram = assemble(&self.reference, &self.hyper, self.hyper.lambda1);
        let mu = stacked_means(&self.reference);
        (gram * &self.weights - mu).amax()
    }
}

fn stacked_means(reference: &ReferenceTrajectory) -> DVector<f64> {
    let o = reference.output_dim();
    let mut mu = DVector::zeros(o * reference.len());
    for (i, m) in reference.means.iter().enumerate() {
        mu.rows_mut(i * o, o).copy_from(m);
    }
    mu
}

/// Gram matrix with k(. , .) I_o blocks plus `lambda` times the
/// block-diagonal reference covariance.
fn assemble(
    reference: &ReferenceTrajectory,
    hyper: &KmpHyperparams,
    lambda: f64,
) -> DMatrix<f64> {
    let n = reference.len();
    let o = reference.output_dim();
    let mut m = DMatrix::zeros(o * n, o * n);
    for i in 0..n {
        for j in i..n {
            let k = se_kernel(
                &reference.inputs[i],
                &reference.inputs[j],
                hyper.length_scale,
                hyper.signal_var,
            );
            for a in 0..o {
                m[(i * o + a, j * o + a)] = k;
                m[(j * o + a, i * o + a)] = k;
            }
        }
        let block = &reference.covs[i];
        for a in 0..o {
            for b in 0..o {
                m[(i * o + a, i * o + b)] += lambda * block[(a, b)];
            }
        }
    }
    m
}

/// Build the predictor: assemble both regularized Gram matrices, factorize
/// (retrying once with a 1e-10 jitter) and cache the mean weights.
pub fn kmp_train(reference: ReferenceTrajectory, hyper: KmpHyperparams) -> Result<KmpModel> {
    hyper.validate()?;
    reference.validate()?;
    let chol_mean = cholesky_with_jitter(
        assemble(&reference, &hyper, hyper.lambda1),
        "kernel system (mean)",
    )?;
    let chol_var = cholesky_with_jitter(
        assemble(&reference, &hyper, hyper.lambda2),
        "kernel system (variance)",
    )?;
    let weights = chol_mean.solve(&stacked_means(&reference));
    Ok(KmpModel {
        reference,
        hyper,
        chol_mean,
        chol_var,
        weights,
    })
}

/// Predictive mean k_*^T w and covariance
/// (N / lambda2) (k_** - k_*^T (K + lambda2 Sigma)^-1 k_*), symmetrized
/// with negative eigenvalues clamped to zero.
pub fn kmp_predict(model: &KmpModel, s: &DVector<f64>) -> KmpPrediction {
    let o = model.reference.output_dim();
    let n = model.reference.len() as f64;
    let kstar = model.block_kernel_column(s);
    let mean = kstar.transpose() * &model.weights;
    let solved = model.chol_var.solve(&kstar);
    let quad = kstar.transpose() * solved;
    let mut cov = (n / model.hyper.lambda2)
        * (DMatrix::identity(o, o) * model.hyper.signal_var - quad);
    cov = 0.5 * (&cov + cov.transpose());
    if o == 1 {
        cov[(0, 0)] = cov[(0, 0)].max(0.0);
    } else {
        let eig = cov.symmetric_eigen();
        let clamped = DVector::from_fn(o, |i, _| eig.eigenvalues[i].max(0.0));
        cov = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    }
    KmpPrediction { mean, cov }
}

/// Far-field covariance limit (N / lambda2) sigma_f^2 I.
pub fn asymptotic_variance(model: &KmpModel) -> DMatrix<f64> {
    let o = model.reference.output_dim();
    DMatrix::identity(o, o)
        * (model.reference.len() as f64 / model.hyper.lambda2 * model.hyper.signal_var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_reference(points: &[(f64, f64, f64)]) -> ReferenceTrajectory {
        ReferenceTrajectory {
            inputs: points.iter().map(|p| DVector::from_element(1, p.0)).collect(),
            means: points.iter().map(|p| DVector::from_element(1, p.1)).collect(),
            covs: points
                .iter()
                .map(|p| DMatrix::from_element(1, 1, p.2))
                .collect(),
        }
    }

    fn random_reference(rng: &mut ChaCha8Rng, n: usize, spacing: f64) -> ReferenceTrajectory {
        let points: Vec<(f64, f64, f64)> = (0..n)
            .map(|i| {
                (
                    i as f64 * spacing + rng.random_range(0.0..0.2 * spacing),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(0.05..1.5),
                )
            })
            .collect();
        scalar_reference(&points)
    }

    fn hyper(l: f64, sf2: f64, l1: f64, l2: f64) -> KmpHyperparams {
        KmpHyperparams {
            length_scale: l,
            signal_var: sf2,
            lambda1: l1,
            lambda2: l2,
        }
    }

    #[test]
    fn kernel_examples() {
        let s = DVector::from_element(1, 0.3);
        assert_eq!(se_kernel(&s, &s, 0.7, 2.5), 2.5);
        let s2 = DVector::from_element(1, 1.3);
        let k = se_kernel(&s, &s2, 1.0, 1.0);
        assert!((k - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k - 0.6065306597126334).abs() < 1e-12);
        assert_eq!(k, se_kernel(&s2, &s, 1.0, 1.0));
    }

    #[test]
    fn single_support_closed_forms() {
        let (mu, var) = (1.7, 0.4);
        let h = hyper(0.05, 2.0, 0.3, 5.0);
        let model = kmp_train(scalar_reference(&[(0.2, mu, var)]), h).unwrap();
        let pred = kmp_predict(&model, &DVector::from_element(1, 0.2));
        let expect_mean = h.signal_var * mu / (h.signal_var + h.lambda1 * var);
        let expect_var = 1.0 * h.signal_var * var / (h.signal_var + h.lambda2 * var);
        assert!((pred.mean[0] - expect_mean).abs() < 1e-12);
        assert!((pred.cov[(0, 0)] - expect_var).abs() < 1e-12);

        // lambda1 = 0: exact interpolation of the single support
        let model = kmp_train(scalar_reference(&[(0.2, mu, var)]), hyper(0.05, 2.0, 0.0, 5.0))
            .unwrap();
        let pred = kmp_predict(&model, &DVector::from_element(1, 0.2));
        assert!((pred.mean[0] - mu).abs() < 1e-12);
    }

    #[test]
    fn weight_solve_residual_is_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let reference = random_reference(&mut rng, 12, 0.5);
            let model = kmp_train(reference, hyper(0.05, 4.0, 0.2, 8.0)).unwrap();
            assert!(model.weight_residual() < 1e-10);
        }
    }

    #[test]
    fn far_query_reaches_asymptote() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let reference = random_reference(&mut rng, 10, 0.4);
            let h = hyper(0.05, 4.0, 0.2, 8.0);
            let far = reference.inputs.last().unwrap()[0] + 20.0 * h.length_scale.sqrt();
            let model = kmp_train(reference, h).unwrap();
            let pred = kmp_predict(&model, &DVector::from_element(1, far));
            let limit = asymptotic_variance(&model)[(0, 0)];
            assert!(
                (pred.cov[(0, 0)] - limit).abs() / limit < 0.01,
                "far variance {} vs limit {limit}",
                pred.cov[(0, 0)]
            );
            assert!(pred.mean[0].abs() < 1e-6);
        }
    }

    #[test]
    fn asymptotic_variance_values() {
        // reference-scale hyperparameters: 20 supports, lambda2 = 2e6,
        // sigma_f^2 = 1e4 -> 0.1
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reference = random_reference(&mut rng, 20, 0.3);
        let model = kmp_train(reference, hyper(0.01, 1e4, 0.05, 2e6)).unwrap();
        assert!((asymptotic_variance(&model)[(0, 0)] - 0.1).abs() < 1e-12);

        let single = kmp_train(scalar_reference(&[(0.0, 1.0, 0.5)]), hyper(0.1, 1.0, 0.0, 1.0))
            .unwrap();
        assert_eq!(asymptotic_variance(&single)[(0, 0)], 1.0);
    }

    #[test]
    fn mean_is_decoupled_from_variance_hyperparameters() {
        // with lambda1 = 0 the mean must not move under either a lambda2
        // change or a signal-variance change, each varied on its own
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let reference = random_reference(&mut rng, 10, 0.5);
        let queries: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..6.0)).collect();
        let base = kmp_train(reference.clone(), hyper(0.05, 2.0, 0.0, 5.0)).unwrap();
        let lambda2_only = kmp_train(reference.clone(), hyper(0.05, 2.0, 0.0, 50.0)).unwrap();
        let signal_only = kmp_train(reference.clone(), hyper(0.05, 20.0, 0.0, 5.0)).unwrap();
        for &q in &queries {
            let s = DVector::from_element(1, q);
            let m0 = kmp_predict(&base, &s).mean[0];
            for (name, model) in [("lambda2", &lambda2_only), ("sigma_f^2", &signal_only)] {
                let m = kmp_predict(model, &s).mean[0];
                assert!(
                    (m0 - m).abs() < 1e-8,
                    "mean moved under {name} rescaling: {m0} vs {m}"
                );
            }
        }
    }

    #[test]
    fn variance_is_monotone_in_distance_for_single_support() {
        let model = kmp_train(scalar_reference(&[(0.0, 1.0, 0.3)]), hyper(0.1, 2.0, 0.1, 4.0))
            .unwrap();
        let mut last = -1.0;
        for i in 0..40 {
            let r = i as f64 * 0.05;
            let v = kmp_predict(&model, &DVector::from_element(1, r)).cov[(0, 0)];
            assert!(v >= last - 1e-12, "variance decreased at r = {r}");
            last = v;
        }
    }

    #[test]
    fn interpolates_support_means_without_regularization() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // well-separated supports keep the unregularized Gram conditioned
        let reference = random_reference(&mut rng, 8, 0.8);
        let model = kmp_train(reference.clone(), hyper(0.04, 3.0, 0.0, 6.0)).unwrap();
        for (s, m) in reference.inputs.iter().zip(&reference.means) {
            let pred = kmp_predict(&model, s);
            assert!(
                (pred.mean[0] - m[0]).abs() < 1e-6,
                "interpolation error {:.2e}",
                (pred.mean[0] - m[0]).abs()
            );
        }
    }

    #[test]
    fn heteroscedasticity_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let reference = random_reference(&mut rng, 10, 0.5);
        let mut doubled = reference.clone();
        for cov in &mut doubled.covs {
            *cov *= 2.0;
        }
        let h = hyper(0.05, 2.0, 0.1, 4.0);
        let base = kmp_train(reference.clone(), h).unwrap();
        let wide = kmp_train(doubled, h).unwrap();
        for s in &reference.inputs {
            let v1 = kmp_predict(&base, s).cov[(0, 0)];
            let v2 = kmp_predict(&wide, s).cov[(0, 0)];
            assert!(v2 > v1 + 1e-12, "variance did not grow: {v1} vs {v2}");
        }
    }

    #[test]
    fn unsorted_supports_are_rejected() {
        let reference = scalar_reference(&[(0.5, 1.0, 0.2), (0.5, 0.8, 0.3)]);
        assert!(kmp_train(reference, hyper(0.05, 2.0, 0.1, 4.0)).is_err());
    }

    #[test]
    fn two_output_blocks_work() {
        let reference = ReferenceTrajectory {
            inputs: vec![DVector::from_element(1, 0.0), DVector::from_element(1, 1.0)],
            means: vec![
                DVector::from_column_slice(&[1.0, -1.0]),
                DVector::from_column_slice(&[0.5, 0.2]),
            ],
            covs: vec![
                DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.3]),
                DMatrix::from_row_slice(2, 2, &[0.4, -0.1, -0.1, 0.2]),
            ],
        };
        let model = kmp_train(reference, hyper(0.5, 2.0, 0.1, 4.0)).unwrap();
        let pred = kmp_predict(&model, &DVector::from_element(1, 0.4));
        assert_eq!(pred.mean.len(), 2);
        assert_eq!(pred.cov.shape(), (2, 2));
        assert!((pred.cov[(0, 1)] - pred.cov[(1, 0)]).abs() < 1e-14);
        assert!(pred.cov.symmetric_eigenvalues().min() >= 0.0);
    }
}
