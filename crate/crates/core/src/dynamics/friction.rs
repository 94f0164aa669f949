//! Ground-truth residual torque generator for the synthetic test bed.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Smooth velocity-dependent friction plus heteroscedastic disturbance noise.
///
/// The deterministic part is odd in velocity and vanishes at rest: Coulomb
/// and Stribeck levels are shaped by tanh(2 v / v_s) instead of sign(v), so
/// no stick-slip discontinuity is modeled.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionProfile {
    /// Coulomb level per joint (N m).
    pub coulomb: Vec<f64>,
    /// Viscous coefficient per joint (N m s/rad).
    pub viscous: Vec<f64>,
    /// Stribeck magnitude per joint (N m).
    pub stribeck: Vec<f64>,
    /// Stribeck velocity scale per joint (rad/s).
    pub stribeck_vel: Vec<f64>,
    /// Disturbance noise std at rest per joint (N m).
    pub noise_floor: Vec<f64>,
    /// Disturbance noise std growth with |velocity| per joint (N m s/rad).
    pub noise_slope: Vec<f64>,
}

impl FrictionProfile {
    /// All-zero profile (frictionless, noiseless).
    pub fn zero(n: usize) -> Self {
        Self {
            coulomb: vec![0.0; n],
            viscous: vec![0.0; n],
            stribeck: vec![0.0; n],
            stribeck_vel: vec![1.0; n],
            noise_floor: vec![0.0; n],
            noise_slope: vec![0.0; n],
        }
    }

    /// One scalar parameter set replicated over `n` joints.
    pub fn uniform(
        n: usize,
        coulomb: f64,
        viscous: f64,
        stribeck: f64,
        stribeck_vel: f64,
        noise_floor: f64,
        noise_slope: f64,
    ) -> Self {
        Self {
            coulomb: vec![coulomb; n],
            viscous: vec![viscous; n],
            stribeck: vec![stribeck; n],
            stribeck_vel: vec![stribeck_vel; n],
            noise_floor: vec![noise_floor; n],
            noise_slope: vec![noise_slope; n],
        }
    }

    pub fn joints(&self) -> usize {
        self.coulomb.len()
    }

    /// Deterministic friction torque at the given joint velocities.
    pub fn deterministic(&self, dq: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.joints(), |j, _| {
            let v = dq[j];
            let vs = self.stribeck_vel[j].max(1e-9);
            let level = self.coulomb[j] + self.stribeck[j] * (-(v / vs).powi(2)).exp();
            level * (2.0 * v / vs).tanh() + self.viscous[j] * v
        })
    }

    /// Disturbance noise standard deviation at the given joint velocities.
    pub fn noise_std(&self, dq: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.joints(), |j, _| {
            self.noise_floor[j] + self.noise_slope[j] * dq[j].abs()
        })
    }

    /// Draw one disturbance sample.
    pub fn sample_noise<R: Rng>(&self, dq: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let std = self.noise_std(dq);
        DVector::from_fn(self.joints(), |j, _| {
            if std[j] > 0.0 {
                Normal::new(0.0, std[j]).expect("valid std").sample(rng)
            } else {
                0.0
            }
        })
    }

    /// Total residual torque: deterministic friction plus a noise draw.
    pub fn residual<R: Rng>(&self, dq: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        self.deterministic(dq) + self.sample_noise(dq, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_part_is_odd_and_zero_at_rest() {
        let f = FrictionProfile::uniform(3, 0.4, 0.3, 0.3, 0.3, 0.05, 0.6);
        let zero = f.deterministic(&DVector::zeros(3));
        assert!(zero.amax() == 0.0);
        for v in [0.01, 0.1, 0.7, 2.3] {
            let dq = DVector::from_element(3, v);
            let plus = f.deterministic(&dq);
            let minus = f.deterministic(&(-dq));
            // exact odd symmetry of the deterministic part
            assert!((plus + minus).amax() == 0.0);
        }
    }

    #[test]
    fn noise_std_grows_with_speed() {
        let f = FrictionProfile::uniform(1, 0.0, 0.0, 0.0, 0.3, 0.05, 0.6);
        let slow = f.noise_std(&DVector::from_element(1, 0.1))[0];
        let fast = f.noise_std(&DVector::from_element(1, 2.0))[0];
        assert!((slow - 0.11).abs() < 1e-15);
        assert!((fast - 1.25).abs() < 1e-15);
    }
}
