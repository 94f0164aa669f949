//! Gaussian mixture fitting by EM and Gaussian mixture regression.
//!
//! Fitted per joint on (velocity, residual torque) pairs; the GMR
//! conditional evaluated on a support grid yields the probabilistic
//! reference trajectory consumed by the kernel models.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Eigenvalue floor applied to every fitted or conditioned covariance.
pub const COV_FLOOR: f64 = 1e-8;
const MAX_ITERS: usize = 500;
const REL_TOL: f64 = 1e-7;
/// A component whose responsibility mass falls below this is re-seeded.
const EMPTY_MASS: f64 = 1e-6;

/// One mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// EM bookkeeping kept with the fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInfo {
    pub seed: u64,
    pub iterations: usize,
    pub final_log_likelihood: f64,
    /// Total data log-likelihood after each iteration.
    pub log_likelihood_history: Vec<f64>,
    /// Number of empty-component re-seeds that occurred.
    pub reseeds: usize,
}

/// Gaussian mixture model over joint (input, output) space.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub components: Vec<GaussianComponent>,
    pub cov_floor: f64,
    pub fit: FitInfo,
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }
}

/// Probabilistic reference trajectory: support inputs with conditional
/// means and covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub inputs: Vec<DVector<f64>>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |s| s.len())
    }

    pub fn output_dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptySeries("reference trajectory"));
        }
        if self.means.len() != self.len() || self.covs.len() != self.len() {
            return Err(Error::SeriesMismatch(
                "reference triple lengths disagree".into(),
            ));
        }
        for cov in &self.covs {
            if cov.symmetric_eigenvalues().min() <= 0.0 {
                return Err(Error::IllConditioned("reference covariance"));
            }
        }
        if self.input_dim() == 1 {
            for w in self.inputs.windows(2) {
                if w[1][0] <= w[0][0] {
                    return Err(Error::SeriesMismatch(
                        "1-d support points must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Clamp the eigenvalues of a symmetric matrix from below.
fn floor_eigenvalues(cov: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = 0.5 * (cov + cov.transpose());
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let clamped = DVector::from_fn(eig.eigenvalues.len(), |i, _| eig.eigenvalues[i].max(floor));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

struct Precision {
    prec: DMatrix<f64>,
    log_norm: f64, // -(d ln 2pi + ln det) / 2
}

fn precision(cov: &DMatrix<f64>) -> Result<Precision> {
    let d = cov.nrows();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or(Error::IllConditioned("mixture covariance"))?;
    let logdet: f64 = (0..d).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
    Ok(Precision {
        prec: chol.inverse(),
        log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + logdet),
    })
}

fn quad_form(prec: &DMatrix<f64>, dev: &[f64]) -> f64 {
    let d = dev.len();
    let mut q = 0.0;
    for a in 0..d {
        for b in 0..d {
            q += dev[a] * prec[(a, b)] * dev[b];
        }
    }
    q
}

/// k-means++ center selection (seeding only).
fn kmeanspp_centers(data: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let rows = data.nrows();
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
    centers.push(data.row(rng.random_range(0..rows)).transpose());
    let mut dist2 = vec![0.0f64; rows];
    while centers.len() < k {
        let mut total = 0.0;
        for i in 0..rows {
            let d2 = centers
                .iter()
                .map(|c| (data.row(i).transpose() - c).norm_squared())
                .fold(f64::INFINITY, f64::min);
            dist2[i] = d2;
            total += d2;
        }
        let idx = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = rows - 1;
            for (i, &d2) in dist2.iter().enumerate() {
                target -= d2;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..rows)
        };
        centers.push(data.row(idx).transpose());
    }
    centers
}

/// Move a dead component to the point farthest from all current means.
fn reseed_component(
    components: &mut [GaussianComponent],
    idx: usize,
    data: &DMatrix<f64>,
    base_cov: &DMatrix<f64>,
) {
    let mut best = (0usize, -1.0f64);
    for i in 0..data.nrows() {
        let min_d2 = components
            .iter()
            .map(|c| (data.row(i).transpose() - &c.mean).norm_squared())
            .fold(f64::INFINITY, f64::min);
        if min_d2 > best.1 {
            best = (i, min_d2);
        }
    }
    components[idx].mean = data.row(best.0).transpose();
    components[idx].cov = base_cov.clone();
    let k = components.len() as f64;
    components[idx].weight = 1.0 / k;
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in components.iter_mut() {
        c.weight /= total;
    }
}

/// Fit a Gaussian mixture by EM with k-means++ initialization.
///
/// Stops when the relative log-likelihood improvement drops below 1e-7 or
/// after 500 iterations; covariance eigenvalues are floored at 1e-8.
pub fn em_fit(data: &DMatrix<f64>, n_components: usize, seed: u64) -> Result<GmmModel> {
    let rows = data.nrows();
    let d = data.ncols();
    assert!(n_components >= 1, "need at least one component");
    if rows < 10 * n_components {
        return Err(Error::InsufficientData {
            needed: 10 * n_components,
            actual: rows,
        });
    }
    if !data.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("mixture training data"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global_mean = data.row_mean().transpose();
    let mut global_cov = DMatrix::zeros(d, d);
    for i in 0..rows {
        let dev = data.row(i).transpose() - &global_mean;
        global_cov += &dev * dev.transpose();
    }
    global_cov /= rows as f64;
    let global_cov = floor_eigenvalues(&global_cov, COV_FLOOR);

    let mut components: Vec<GaussianComponent> = kmeanspp_centers(data, n_components, &mut rng)
        .into_iter()
        .map(|mean| GaussianComponent {
            weight: 1.0 / n_components as f64,
            mean,
            cov: global_cov.clone(),
        })
        .collect();

    let mut resp = DMatrix::zeros(rows, n_components);
    let mut history = Vec::new();
    let mut reseeds = 0usize;
    let mut iterations = 0usize;
    let mut dev = vec![0.0f64; d];

    for iter in 0..MAX_ITERS {
        iterations = iter + 1;

        // E-step in log space
        let precs: Vec<Precision> = components
            .iter()
            .map(|c| precision(&c.cov))
            .collect::<Result<_>>()?;
        let log_w: Vec<f64> = components.iter().map(|c| c.weight.ln()).collect();
        let mut loglik = 0.0;
        for i in 0..rows {
            let mut max_lp = f64::NEG_INFINITY;
            for (c, comp) in components.iter().enumerate() {
                for a in 0..d {
                    dev[a] = data[(i, a)] - comp.mean[a];
                }
                let lp = log_w[c] + precs[c].log_norm - 0.5 * quad_form(&precs[c].prec, &dev);
                resp[(i, c)] = lp;
                max_lp = max_lp.max(lp);
            }
            let mut sum = 0.0;
            for c in 0..n_components {
                sum += (resp[(i, c)] - max_lp).exp();
            }
            let lse = max_lp + sum.ln();
            loglik += lse;
            for c in 0..n_components {
                resp[(i, c)] = (resp[(i, c)] - lse).exp();
            }
        }
        history.push(loglik);

        // convergence on relative improvement
        if iter > 0 {
            let prev = history[iter - 1];
            let improvement = loglik - prev;
            if improvement.abs() < REL_TOL * prev.abs().max(1e-300) {
                break;
            }
        }

        // M-step
        let mut any_reseed = false;
        for c in 0..n_components {
            let nk: f64 = (0..rows).map(|i| resp[(i, c)]).sum();
            if nk < EMPTY_MASS {
                reseed_component(&mut components, c, data, &global_cov);
                reseeds += 1;
                any_reseed = true;
                continue;
            }
            let mut mean = DVector::zeros(d);
            for i in 0..rows {
                for a in 0..d {
                    mean[a] += resp[(i, c)] * data[(i, a)];
                }
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for i in 0..rows {
                for a in 0..d {
                    dev[a] = data[(i, a)] - mean[a];
                }
                let r = resp[(i, c)];
                for a in 0..d {
                    for b in a..d {
                        cov[(a, b)] += r * dev[a] * dev[b];
                    }
                }
            }
            for a in 0..d {
                for b in a..d {
                    let v = cov[(a, b)] / nk;
                    cov[(a, b)] = v;
                    cov[(b, a)] = v;
                }
            }
            components[c].weight = nk / rows as f64;
            components[c].mean = mean;
            components[c].cov = floor_eigenvalues(&cov, COV_FLOOR);
        }
        if any_reseed {
            let total: f64 = components.iter().map(|c| c.weight).sum();
            for c in components.iter_mut() {
                c.weight /= total;
            }
        }
    }

    let final_ll = *history.last().expect("at least one iteration");
    Ok(GmmModel {
        components,
        cov_floor: COV_FLOOR,
        fit: FitInfo {
            seed,
            iterations,
            final_log_likelihood: final_ll,
            log_likelihood_history: history,
            reseeds,
        },
    })
}

/// Condition the mixture on each support input: responsibilities from the
/// input marginals, per-component linear-Gaussian conditionals, then
/// moment matching.
pub fn gmr_condition(
    gmm: &GmmModel,
    support: &[DVector<f64>],
    input_dim: usize,
) -> Result<ReferenceTrajectory> {
    let dim = gmm.dim();
    assert!(input_dim >= 1 && input_dim < dim, "input dim must leave outputs");
    let out_dim = dim - input_dim;
    let k = gmm.components.len();

    struct Conditional {
        mean_in: DVector<f64>,
        prec_in: DMatrix<f64>,
        log_norm: f64,
        mean_out: DVector<f64>,
        gain: DMatrix<f64>,   // Sigma_os Sigma_ss^-1
        cond_cov: DMatrix<f64>, // Schur complement
        log_weight: f64,
    }
    let parts: Vec<Conditional> = gmm
        .components
        .iter()
        .map(|comp| -> Result<Conditional> {
            let mean_in = comp.mean.rows(0, input_dim).into_owned();
            let mean_out = comp.mean.rows(input_dim, out_dim).into_owned();
            let sigma_ss = comp.cov.view((0, 0), (input_dim, input_dim)).into_owned();
            let sigma_os = comp
                .cov
                .view((input_dim, 0), (out_dim, input_dim))
                .into_owned();
            let sigma_oo = comp
                .cov
                .view((input_dim, input_dim), (out_dim, out_dim))
                .into_owned();
            let p = precision(&sigma_ss)?;
            let gain = &sigma_os * &p.prec;
            let cond_cov = &sigma_oo - &gain * sigma_os.transpose();
            Ok(Conditional {
                mean_in,
                prec_in: p.prec,
                log_norm: p.log_norm,
                mean_out,
                gain,
                cond_cov,
                log_weight: comp.weight.ln(),
            })
        })
        .collect::<Result<_>>()?;

    let mut reference = ReferenceTrajectory {
        inputs: Vec::with_capacity(support.len()),
        means: Vec::with_capacity(support.len()),
        covs: Vec::with_capacity(support.len()),
    };
    for s in support {
        if s.len() != input_dim {
            return Err(Error::DimensionMismatch {
                what: "gmr support point",
                expected: input_dim,
                actual: s.len(),
            });
        }
        let mut logits = Vec::with_capacity(k);
        let mut max_lp = f64::NEG_INFINITY;
        for part in &parts {
            let dev: Vec<f64> = (0..input_dim).map(|a| s[a] - part.mean_in[a]).collect();
            let lp = part.log_weight + part.log_norm - 0.5 * quad_form(&part.prec_in, &dev);
            logits.push(lp);
            max_lp = max_lp.max(lp);
        }
        let lse = max_lp + logits.iter().map(|lp| (lp - max_lp).exp()).sum::<f64>().ln();

        let mut mean = DVector::zeros(out_dim);
        let mut second = DMatrix::zeros(out_dim, out_dim);
        for (part, lp) in parts.iter().zip(&logits) {
            let h = (lp - lse).exp();
            let cond_mean = &part.mean_out + &part.gain * (s - &part.mean_in);
            second += h * (&part.cond_cov + &cond_mean * cond_mean.transpose());
            mean += h * cond_mean;
        }
        let cov = second - &mean * mean.transpose();
        reference.inputs.push(s.clone());
        reference.means.push(mean);
        reference.covs.push(floor_eigenvalues(&cov, gmm.cov_floor));
    }
    Ok(reference)
}

/// Equally spaced support grid spanning the observed value range.
pub fn support_grid(values: &[f64], n: usize) -> Result<Vec<f64>> {
    assert!(n >= 2, "need at least two support points");
    if values.is_empty() {
        return Err(Error::EmptySeries("support grid source"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo <= 0.0 {
        return Err(Error::DegenerateRange("support grid"));
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}
