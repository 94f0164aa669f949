//! Gaussian-process baseline regressor over the GMR reference points.
//!
//! Trains on the support triples directly: inputs are the support points,
//! targets the conditional means, and the per-point noise is lambda1 times
//! the conditional variance. Its far-field variance saturates at the prior
//! sigma_f^2, which couples mean fit and uncertainty scale; the contrast
//! with the kernel predictor's decoupled (N / lambda2) sigma_f^2 limit is
//! covered in the tests.

use crate::error::{Error, Result};
use crate::kmp::se_kernel;
use crate::mixture::ReferenceTrajectory;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Scalar-output Gaussian-process regressor with per-point noise.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<DVector<f64>>,
    targets: DVector<f64>,
    noise: DVector<f64>,
    length_scale: f64,
    signal_var: f64,
    lambda1: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

const JITTER: f64 = 1e-10;

/// Fit the regressor: factorize K + lambda1 diag(reference covariances).
pub fn gp_train(
    reference: &ReferenceTrajectory,
    length_scale: f64,
    signal_var: f64,
    lambda1: f64,
) -> Result<GpModel> {
    reference.validate()?;
    if reference.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            what: "gp baseline output",
            expected: 1,
            actual: reference.output_dim(),
        });
    }
    let n = reference.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = se_kernel(
                &reference.inputs[i],
                &reference.inputs[j],
                length_scale,
                signal_var,
            );
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let noise = DVector::from_fn(n, |i, _| lambda1 * reference.covs[i][(0, 0)]);
    for i in 0..n {
        k[(i, i)] += noise[i];
    }
    let chol = match k.clone().cholesky() {
        Some(c) => c,
        None => {
            for i in 0..n {
                k[(i, i)] += JITTER;
            }
            k.cholesky().ok_or(Error::IllConditioned("gp system"))?
        }
    };
    let targets = DVector::from_fn(n, |i, _| reference.means[i][0]);
    let alpha = chol.solve(&targets);
    Ok(GpModel {
        inputs: reference.inputs.clone(),
        targets,
        noise,
        length_scale,
        signal_var,
        lambda1,
        chol,
        alpha,
    })
}

impl GpModel {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn signal_var(&self) -> f64 {
        self.signal_var
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    /// Posterior mean and variance (variance clamped at zero).
    pub fn predict(&self, s: &DVector<f64>) -> (f64, f64) {
        let kstar = DVector::from_fn(self.len(), |i, _| {
            se_kernel(s, &self.inputs[i], self.length_scale, self.signal_var)
        });
        let mean = kstar.dot(&self.alpha);
        let var = self.signal_var - kstar.dot(&self.chol.solve(&kstar));
        (mean, var.max(0.0))
    }
}

/// Free-function form of [`GpModel::predict`].
pub fn gp_predict(model: &GpModel, s: &DVector<f64>) -> (f64, f64) {
    model.predict(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmp::{kmp_predict, kmp_train, KmpHyperparams};
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
        scalar_reference(
            &(0..n)
                .map(|i| {
                    (
                        i as f64 * spacing + rng.random_range(0.0..0.2 * spacing),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(0.05..1.5),
                    )
                })
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn single_point_closed_form() {
        let (mu, var, sf2, l1) = (1.3, 0.5, 2.0, 0.4);
        let model = gp_train(&scalar_reference(&[(0.3, mu, var)]), 0.1, sf2, l1).unwrap();
        let (mean, _) = model.predict(&DVector::from_element(1, 0.3));
        assert!((mean - mu * sf2 / (sf2 + l1 * var)).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_interpolates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reference = random_reference(&mut rng, 8, 0.8);
        let model = gp_train(&reference, 0.04, 3.0, 0.0).unwrap();
        for (s, m) in reference.inputs.iter().zip(&reference.means) {
            let (mean, var) = model.predict(s);
            assert!((mean - m[0]).abs() < 1e-8);
            assert!(var <= 1e-8, "support variance {var:.2e}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reference = random_reference(&mut rng, 10, 0.5);
        let m1 = gp_train(&reference, 0.05, 2.0, 0.2).unwrap();
        let m2 = gp_train(&reference, 0.05, 2.0, 0.2).unwrap();
        assert_eq!(m1.alpha, m2.alpha);
    }

    #[test]
    fn far_field_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let reference = random_reference(&mut rng, 10, 0.5);
        let (l, sf2): (f64, f64) = (0.05, 2.5);
        let model = gp_train(&reference, l, sf2, 0.3).unwrap();
        let far = DVector::from_element(1, reference.inputs.last().unwrap()[0] + 20.0 * l.sqrt());
        let (mean, var) = model.predict(&far);
        assert!((var - sf2).abs() / sf2 < 0.01);
        assert!(mean.abs() < 1e-6);
    }

    #[test]
    fn posterior_variance_never_exceeds_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reference = random_reference(&mut rng, 12, 0.4);
        let sf2 = 3.0;
        let model = gp_train(&reference, 0.05, sf2, 0.2).unwrap();
        for _ in 0..200 {
            let s = DVector::from_element(1, rng.random_range(-2.0..8.0));
            let (_, var) = model.predict(&s);
            assert!(var <= sf2 + 1e-10);
        }
    }

    #[test]
    fn coupling_contrast_with_kernel_predictor() {
        // scaling sigma_f^2 by 10 moves the GP's far-field variance and its
        // mean (fixed absolute noise), while the kernel predictor's mean
        // with lambda1 = 0 stays put and its far variance scales only
        // because lambda2 was held fixed
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let reference = random_reference(&mut rng, 8, 0.8);
        let l: f64 = 0.05;
        let far = DVector::from_element(1, reference.inputs.last().unwrap()[0] + 20.0 * l.sqrt());
        let probe = DVector::from_element(1, reference.inputs[3][0] + 0.1);

        // GP with fixed absolute noise: replace per-point variances so the
        // noise term stays constant while sigma_f^2 scales
        let gp1 = gp_train(&reference, l, 2.0, 0.5).unwrap();
        let gp10 = gp_train(&reference, l, 20.0, 0.5).unwrap();
        let (_, v1) = gp1.predict(&far);
        let (_, v10) = gp10.predict(&far);
        assert!((v10 / v1 - 10.0).abs() < 0.01);
        let (m1, _) = gp1.predict(&probe);
        let (m10, _) = gp10.predict(&probe);
        assert!(
            (m1 - m10).abs() > 1e-6,
            "gp mean should move with sigma_f^2 when noise is absolute"
        );

        let h1 = KmpHyperparams {
            length_scale: l,
            signal_var: 2.0,
            lambda1: 0.0,
            lambda2: 5.0,
        };
        let h10 = KmpHyperparams {
            signal_var: 20.0,
            ..h1
        };
        let k1 = kmp_train(reference.clone(), h1).unwrap();
        let k10 = kmp_train(reference.clone(), h10).unwrap();
        let kv1 = kmp_predict(&k1, &far).cov[(0, 0)];
        let kv10 = kmp_predict(&k10, &far).cov[(0, 0)];
        assert!((kv10 / kv1 - 10.0).abs() < 0.01);
        let km1 = kmp_predict(&k1, &probe).mean[0];
        let km10 = kmp_predict(&k10, &probe).mean[0];
        assert!(
            (km1 - km10).abs() < 1e-8,
            "kernel predictor mean moved: {km1} vs {km10}"
        );
    }
}
