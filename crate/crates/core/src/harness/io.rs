//! Key-value text persistence for models and configurations.
//!
//! Every file starts with a `#format <tag> v<version>` line followed by
//! `key = value` entries. Floats are written in exponent form with the
//! shortest representation that parses back to the identical bits, so
//! load(save(x)) is exact. Kernel models persist their reference triples
//! and hyperparameters; factorizations are rebuilt on load and come out
//! bit-identical because the inputs do.

use crate::dynamics::FrictionProfile;
use crate::error::{Error, Result};
use crate::excitation::FourierTrajectoryParams;
use crate::gp::{gp_train, GpModel};
use crate::kmp::{kmp_train, KmpHyperparams, KmpModel};
use crate::mixture::{FitInfo, GaussianComponent, GmmModel, ReferenceTrajectory};
use crate::observer::FilterConfig;
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

/// Ordered key-value document with a format tag and version.
#[derive(Debug, Clone, PartialEq)]
pub struct TextDoc {
    tag: String,
    version: u32,
    entries: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl TextDoc {
    pub fn new(tag: &str, version: u32) -> Self {
        Self {
            tag: tag.to_string(),
            version,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn set_str(&mut self, key: &str, value: &str) {
        debug_assert!(!value.contains('\n'), "values must be single-line");
        if let Some(&i) = self.index.get(key) {
            self.entries[i].1 = value.to_string();
        } else {
            self.index.insert(key.to_string(), self.entries.len());
            self.entries.push((key.to_string(), value.to_string()));
        }
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.set_str(key, &format!("{value:e}"));
    }

    pub fn set_u64(&mut self, key: &str, value: u64) {
        self.set_str(key, &value.to_string());
    }

    pub fn set_bool(&mut self, key: &str, value: bool) {
        self.set_str(key, if value { "true" } else { "false" });
    }

    pub fn set_slice(&mut self, key: &str, values: &[f64]) {
        let mut s = String::new();
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "{v:e}");
        }
        self.set_str(key, &s);
    }

    pub fn set_vector(&mut self, key: &str, v: &DVector<f64>) {
        self.set_slice(key, v.as_slice());
    }

    /// Row-major matrix as three entries: `<key>.rows`, `<key>.cols`,
    /// `<key>.data`.
    pub fn set_matrix(&mut self, key: &str, m: &DMatrix<f64>) {
        self.set_u64(&format!("{key}.rows"), m.nrows() as u64);
        self.set_u64(&format!("{key}.cols"), m.ncols() as u64);
        let row_major: Vec<f64> = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| m[(r, c)])
            .collect();
        self.set_slice(&format!("{key}.data"), &row_major);
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.index
            .get(key)
            .map(|&i| self.entries[i].1.as_str())
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing key `{key}`"),
            })
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        self.get_str(key)?.parse().map_err(|e| Error::Parse {
            line: 0,
            message: format!("key `{key}`: {e}"),
        })
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        self.get_str(key)?.parse().map_err(|e| Error::Parse {
            line: 0,
            message: format!("key `{key}`: {e}"),
        })
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        Ok(self.get_u64(key)? as usize)
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.get_str(key)? {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(Error::Parse {
                line: 0,
                message: format!("key `{key}`: expected bool, got `{other}`"),
            }),
        }
    }

    pub fn get_slice(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.get_str(key)?;
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: 0,
                    message: format!("key `{key}`: {e}"),
                })
            })
            .collect()
    }

    pub fn get_vector(&self, key: &str) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.get_slice(key)?))
    }

    pub fn get_matrix(&self, key: &str) -> Result<DMatrix<f64>> {
        let rows = self.get_usize(&format!("{key}.rows"))?;
        let cols = self.get_usize(&format!("{key}.cols"))?;
        let data = self.get_slice(&format!("{key}.data"))?;
        if data.len() != rows * cols {
            return Err(Error::Parse {
                line: 0,
                message: format!("matrix `{key}`: expected {} values, got {}", rows * cols, data.len()),
            });
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    pub fn render(&self) -> String {
        let mut out = format!("#format {} v{}\n", self.tag, self.version);
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str, expected_tag: &str, expected_version: u32) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((_, l)) => break l.trim().to_string(),
                None => {
                    return Err(Error::SchemaVersion {
                        expected: format!("{expected_tag} v{expected_version}"),
                        found: "empty file".into(),
                    })
                }
            }
        };
        let expected = format!("#format {expected_tag} v{expected_version}");
        let Some(rest) = header.strip_prefix("#format ") else {
            return Err(Error::SchemaVersion {
                expected,
                found: header,
            });
        };
        if rest.trim() != format!("{expected_tag} v{expected_version}") {
            return Err(Error::SchemaVersion {
                expected,
                found: header,
            });
        }
        let mut doc = TextDoc::new(expected_tag, expected_version);
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            if doc.index.contains_key(key) {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
            doc.set_str(key, value.trim());
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: &Path, expected_tag: &str, expected_version: u32) -> Result<Self> {
        Self::parse(
            &std::fs::read_to_string(path)?,
            expected_tag,
            expected_version,
        )
    }
}

// -- reference trajectory ---------------------------------------------------

fn write_reference(doc: &mut TextDoc, prefix: &str, r: &ReferenceTrajectory) {
    let (n, d, o) = (r.len(), r.input_dim(), r.output_dim());
    doc.set_u64(&format!("{prefix}n"), n as u64);
    doc.set_u64(&format!("{prefix}d"), d as u64);
    doc.set_u64(&format!("{prefix}o"), o as u64);
    let inputs: Vec<f64> = r.inputs.iter().flat_map(|v| v.iter().copied()).collect();
    let means: Vec<f64> = r.means.iter().flat_map(|v| v.iter().copied()).collect();
    let covs: Vec<f64> = r
        .covs
        .iter()
        .flat_map(|m| {
            (0..o).flat_map(move |row| (0..o).map(move |col| m[(row, col)]))
        })
        .collect();
    doc.set_slice(&format!("{prefix}inputs"), &inputs);
    doc.set_slice(&format!("{prefix}means"), &means);
    doc.set_slice(&format!("{prefix}covs"), &covs);
}

fn read_reference(doc: &TextDoc, prefix: &str) -> Result<ReferenceTrajectory> {
    let n = doc.get_usize(&format!("{prefix}n"))?;
    let d = doc.get_usize(&format!("{prefix}d"))?;
    let o = doc.get_usize(&format!("{prefix}o"))?;
    let inputs = doc.get_slice(&format!("{prefix}inputs"))?;
    let means = doc.get_slice(&format!("{prefix}means"))?;
    let covs = doc.get_slice(&format!("{prefix}covs"))?;
    if inputs.len() != n * d || means.len() != n * o || covs.len() != n * o * o {
        return Err(Error::Parse {
            line: 0,
            message: format!("reference `{prefix}` block lengths inconsistent"),
        });
    }
    Ok(ReferenceTrajectory {
        inputs: (0..n)
            .map(|i| DVector::from_column_slice(&inputs[i * d..(i + 1) * d]))
            .collect(),
        means: (0..n)
            .map(|i| DVector::from_column_slice(&means[i * o..(i + 1) * o]))
            .collect(),
        covs: (0..n)
            .map(|i| DMatrix::from_row_slice(o, o, &covs[i * o * o..(i + 1) * o * o]))
            .collect(),
    })
}

// -- kernel model sets --------------------------------------------------

/// Persist per-joint kernel models (reference + hyperparameters).
pub fn kmp_set_to_doc(models: &[KmpModel]) -> TextDoc {
    let mut doc = TextDoc::new("kmp-set", 1);
    doc.set_u64("joints", models.len() as u64);
    for (j, m) in models.iter().enumerate() {
        let h = m.hyperparams();
        doc.set_f64(&format!("j{j}.length_scale"), h.length_scale);
        doc.set_f64(&format!("j{j}.signal_var"), h.signal_var);
        doc.set_f64(&format!("j{j}.lambda1"), h.lambda1);
        doc.set_f64(&format!("j{j}.lambda2"), h.lambda2);
        write_reference(&mut doc, &format!("j{j}.ref."), m.reference());
    }
    doc
}

pub fn kmp_set_from_doc(doc: &TextDoc) -> Result<Vec<KmpModel>> {
    let joints = doc.get_usize("joints")?;
    (0..joints)
        .map(|j| {
            let hyper = KmpHyperparams {
                length_scale: doc.get_f64(&format!("j{j}.length_scale"))?,
                signal_var: doc.get_f64(&format!("j{j}.signal_var"))?,
                lambda1: doc.get_f64(&format!("j{j}.lambda1"))?,
                lambda2: doc.get_f64(&format!("j{j}.lambda2"))?,
            };
            kmp_train(read_reference(doc, &format!("j{j}.ref."))?, hyper)
        })
        .collect()
}

/// Persist per-joint GP baselines (reference + hyperparameters).
pub fn gp_set_to_doc(models: &[GpModel]) -> TextDoc {
    let mut doc = TextDoc::new("gp-set", 1);
    doc.set_u64("joints", models.len() as u64);
    for (j, m) in models.iter().enumerate() {
        doc.set_f64(&format!("j{j}.length_scale"), m.length_scale());
        doc.set_f64(&format!("j{j}.signal_var"), m.signal_var());
        doc.set_f64(&format!("j{j}.lambda1"), m.lambda1());
        let reference = ReferenceTrajectory {
            inputs: m.inputs().to_vec(),
            means: m.targets().iter().map(|&t| DVector::from_element(1, t)).collect(),
            covs: m
                .noise()
                .iter()
                .map(|&v| {
                    DMatrix::from_element(1, 1, if m.lambda1() > 0.0 { v / m.lambda1() } else { 0.0 })
                })
                .collect(),
        };
        write_reference(&mut doc, &format!("j{j}.ref."), &reference);
    }
    doc
}

pub fn gp_set_from_doc(doc: &TextDoc) -> Result<Vec<GpModel>> {
    let joints = doc.get_usize("joints")?;
    (0..joints)
        .map(|j| {
            let reference = read_reference(doc, &format!("j{j}.ref."))?;
            gp_train(
                &reference,
                doc.get_f64(&format!("j{j}.length_scale"))?,
                doc.get_f64(&format!("j{j}.signal_var"))?,
                doc.get_f64(&format!("j{j}.lambda1"))?,
            )
        })
        .collect()
}

// -- mixture model ------------------------------------------------------

pub fn gmm_to_doc(model: &GmmModel) -> TextDoc {
    let mut doc = TextDoc::new("gmm", 1);
    doc.set_u64("components", model.components.len() as u64);
    doc.set_u64("dim", model.dim() as u64);
    doc.set_f64("cov_floor", model.cov_floor);
    doc.set_u64("fit.seed", model.fit.seed);
    doc.set_u64("fit.iterations", model.fit.iterations as u64);
    doc.set_f64("fit.final_log_likelihood", model.fit.final_log_likelihood);
    doc.set_u64("fit.reseeds", model.fit.reseeds as u64);
    for (c, comp) in model.components.iter().enumerate() {
        doc.set_f64(&format!("c{c}.weight"), comp.weight);
        doc.set_vector(&format!("c{c}.mean"), &comp.mean);
        doc.set_matrix(&format!("c{c}.cov"), &comp.cov);
    }
    doc
}

pub fn gmm_from_doc(doc: &TextDoc) -> Result<GmmModel> {
    let k = doc.get_usize("components")?;
    let components = (0..k)
        .map(|c| {
            Ok(GaussianComponent {
                weight: doc.get_f64(&format!("c{c}.weight"))?,
                mean: doc.get_vector(&format!("c{c}.mean"))?,
                cov: doc.get_matrix(&format!("c{c}.cov"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GmmModel {
        components,
        cov_floor: doc.get_f64("cov_floor")?,
        fit: FitInfo {
            seed: doc.get_u64("fit.seed")?,
            iterations: doc.get_usize("fit.iterations")?,
            final_log_likelihood: doc.get_f64("fit.final_log_likelihood")?,
            log_likelihood_history: Vec::new(),
            reseeds: doc.get_usize("fit.reseeds")?,
        },
    })
}

// -- excitation parameters ------------------------------------------------

pub fn excitation_to_doc(params: &FourierTrajectoryParams) -> TextDoc {
    let mut doc = TextDoc::new("excitation", 1);
    doc.set_u64("joints", params.joints() as u64);
    doc.set_u64("harmonics", params.harmonics() as u64);
    doc.set_f64("period", params.period);
    doc.set_vector("midpoints", &params.midpoints);
    doc.set_matrix("a", &params.a);
    doc.set_matrix("b", &params.b);
    doc
}

pub fn excitation_from_doc(doc: &TextDoc) -> Result<FourierTrajectoryParams> {
    let params = FourierTrajectoryParams {
        midpoints: doc.get_vector("midpoints")?,
        a: doc.get_matrix("a")?,
        b: doc.get_matrix("b")?,
        period: doc.get_f64("period")?,
    };
    if params.a.shape() != params.b.shape() || params.a.nrows() != params.joints() {
        return Err(Error::Parse {
            line: 0,
            message: "excitation coefficient shapes inconsistent".into(),
        });
    }
    Ok(params)
}

// -- filter configuration -------------------------------------------------

pub fn filter_config_to_doc(config: &FilterConfig) -> TextDoc {
    let mut doc = TextDoc::new("filter", 1);
    doc.set_f64("t_s", config.t_s);
    doc.set_f64("forgetting", config.forgetting);
    doc.set_u64("vb_iterations", config.vb_iterations as u64);
    doc.set_bool("iw_per_iteration", config.iw_per_iteration);
    doc.set_f64("iw_dof0", config.iw_dof0);
    doc.set_matrix("iw_scale0", &config.iw_scale0);
    doc.set_vector("initial_estimate", &config.initial_estimate);
    doc.set_matrix("initial_cov", &config.initial_cov);
    doc.set_matrix("initial_process_cov", &config.initial_process_cov);
    doc.set_vector("initial_empirical", &config.initial_empirical);
    doc.set_vector("empirical_min", &config.empirical_min);
    doc.set_vector("empirical_max", &config.empirical_max);
    doc.set_vector("static_model_var", &config.static_model_var);
    doc
}

pub fn filter_config_from_doc(doc: &TextDoc) -> Result<FilterConfig> {
    let config = FilterConfig {
        t_s: doc.get_f64("t_s")?,
        forgetting: doc.get_f64("forgetting")?,
        vb_iterations: doc.get_usize("vb_iterations")?,
        iw_per_iteration: doc.get_bool("iw_per_iteration")?,
        iw_dof0: doc.get_f64("iw_dof0")?,
        iw_scale0: doc.get_matrix("iw_scale0")?,
        initial_estimate: doc.get_vector("initial_estimate")?,
        initial_cov: doc.get_matrix("initial_cov")?,
        initial_process_cov: doc.get_matrix("initial_process_cov")?,
        initial_empirical: doc.get_vector("initial_empirical")?,
        empirical_min: doc.get_vector("empirical_min")?,
        empirical_max: doc.get_vector("empirical_max")?,
        static_model_var: doc.get_vector("static_model_var")?,
    };
    config.validate()?;
    Ok(config)
}

// -- estimate traces ----------------------------------------------------

/// Write an estimate trace CSV: time, per-joint estimate, and the diagonals
/// of the estimate, process and measurement covariances.
pub fn estimates_to_csv(
    outputs: &[crate::observer::StepOutput],
    times: &[f64],
    path: &Path,
) -> Result<()> {
    use std::io::Write;
    if outputs.len() != times.len() {
        return Err(Error::SeriesMismatch(format!(
            "{} outputs vs {} timestamps",
            outputs.len(),
            times.len()
        )));
    }
    let n = outputs.first().map_or(0, |o| o.estimate.len());
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    let mut header = String::from("t");
    for j in 1..=n {
        header.push_str(&format!(",tauhat_{j}"));
    }
    for block in ["P", "Sigma_d", "Sigma_nu"] {
        for j in 1..=n {
            header.push_str(&format!(",{block}_{j}{j}"));
        }
    }
    writeln!(w, "{header}")?;
    for (out, &t) in outputs.iter().zip(times) {
        let mut line = format!("{t:.16e}");
        for j in 0..n {
            line.push_str(&format!(",{:.16e}", out.estimate[j]));
        }
        for j in 0..n {
            line.push_str(&format!(",{:.16e}", out.cov_diag[j]));
        }
        for j in 0..n {
            line.push_str(&format!(",{:.16e}", out.process_diag[j]));
        }
        for j in 0..n {
            line.push_str(&format!(",{:.16e}", out.meas_cov[(j, j)]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Read back an estimate trace: timestamps and per-joint estimates.
pub fn estimates_from_csv(path: &Path) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty estimates file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with("tauhat_")).count();
    if n == 0 || cols.len() != 1 + 4 * n {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected estimates layout ({} columns)", cols.len()),
        });
    }
    let mut times = Vec::new();
    let mut estimates = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("bad float: {e}"),
            })?;
        if vals.len() != 1 + 4 * n {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {} values, got {}", 1 + 4 * n, vals.len()),
            });
        }
        times.push(vals[0]);
        estimates.push(DVector::from_column_slice(&vals[1..1 + n]));
    }
    Ok((times, estimates))
}

// -- friction profile -------------------------------------------------------

pub fn friction_to_doc(profile: &FrictionProfile) -> TextDoc {
    let mut doc = TextDoc::new("friction", 1);
    doc.set_slice("coulomb", &profile.coulomb);
    doc.set_slice("viscous", &profile.viscous);
    doc.set_slice("stribeck", &profile.stribeck);
    doc.set_slice("stribeck_vel", &profile.stribeck_vel);
    doc.set_slice("noise_floor", &profile.noise_floor);
    doc.set_slice("noise_slope", &profile.noise_slope);
    doc
}

pub fn friction_from_doc(doc: &TextDoc) -> Result<FrictionProfile> {
    Ok(FrictionProfile {
        coulomb: doc.get_slice("coulomb")?,
        viscous: doc.get_slice("viscous")?,
        stribeck: doc.get_slice("stribeck")?,
        stribeck_vel: doc.get_slice("stribeck_vel")?,
        noise_floor: doc.get_slice("noise_floor")?,
        noise_slope: doc.get_slice("noise_slope")?,
    })
}

// -- experiment configuration ------------------------------------------------

use super::experiment::{
    ExcitationSettings, ExperimentConfig, ExternalTorqueStep, FilterSettings, ObserverKind,
};
use crate::dynamics::{JointLimits, LinkParams};
use crate::excitation::GaConfig;

pub fn experiment_to_doc(config: &ExperimentConfig) -> TextDoc {
    let mut doc = TextDoc::new("experiment", 1);
    doc.set_str("label", &config.label);
    doc.set_u64("seed", config.seed);
    doc.set_f64("t_s", config.t_s);
    doc.set_f64("train_duration", config.train_duration);
    doc.set_f64("eval_duration", config.eval_duration);
    doc.set_u64("components", config.components as u64);
    doc.set_u64("support_points", config.support_points as u64);
    doc.set_f64("test_fraction", config.test_fraction);
    doc.set_f64("gravity_accel", config.gravity_accel);

    let pick = |f: fn(&LinkParams) -> f64| -> Vec<f64> { config.links.iter().map(f).collect() };
    doc.set_slice("links.mass", &pick(|l| l.mass));
    doc.set_slice("links.length", &pick(|l| l.length));
    doc.set_slice("links.com_offset", &pick(|l| l.com_offset));
    doc.set_slice("links.inertia", &pick(|l| l.inertia));

    let lim = |f: fn(&JointLimits) -> f64| -> Vec<f64> { config.limits.iter().map(f).collect() };
    doc.set_slice("limits.q_min", &lim(|l| l.q_min));
    doc.set_slice("limits.q_max", &lim(|l| l.q_max));
    doc.set_slice("limits.dq_max", &lim(|l| l.dq_max));
    doc.set_slice("limits.ddq_max", &lim(|l| l.ddq_max));

    doc.set_slice("friction.coulomb", &config.friction.coulomb);
    doc.set_slice("friction.viscous", &config.friction.viscous);
    doc.set_slice("friction.stribeck", &config.friction.stribeck);
    doc.set_slice("friction.stribeck_vel", &config.friction.stribeck_vel);
    doc.set_slice("friction.noise_floor", &config.friction.noise_floor);
    doc.set_slice("friction.noise_slope", &config.friction.noise_slope);

    doc.set_u64("excitation.harmonics", config.excitation.harmonics as u64);
    doc.set_f64("excitation.period", config.excitation.period);
    doc.set_u64("excitation.cloud_grid", config.excitation.cloud_grid as u64);
    doc.set_u64("excitation.ga.population", config.excitation.ga.population as u64);
    doc.set_u64("excitation.ga.generations", config.excitation.ga.generations as u64);
    doc.set_u64("excitation.ga.tournament", config.excitation.ga.tournament as u64);
    doc.set_f64("excitation.ga.crossover_rate", config.excitation.ga.crossover_rate);
    doc.set_f64("excitation.ga.mutation_std", config.excitation.ga.mutation_std);
    doc.set_f64("excitation.ga.penalty_weight", config.excitation.ga.penalty_weight);

    let hy = |f: fn(&crate::kmp::KmpHyperparams) -> f64| -> Vec<f64> {
        config.hyper.iter().map(f).collect()
    };
    doc.set_slice("hyper.length_scale", &hy(|h| h.length_scale));
    doc.set_slice("hyper.signal_var", &hy(|h| h.signal_var));
    doc.set_slice("hyper.lambda1", &hy(|h| h.lambda1));
    doc.set_slice("hyper.lambda2", &hy(|h| h.lambda2));

    doc.set_f64("filter.forgetting", config.filter.forgetting);
    doc.set_u64("filter.vb_iterations", config.filter.vb_iterations as u64);
    doc.set_bool("filter.iw_per_iteration", config.filter.iw_per_iteration);
    doc.set_f64("filter.process_prior", config.filter.process_prior);
    doc.set_f64("filter.initial_cov", config.filter.initial_cov);
    doc.set_f64("filter.initial_empirical", config.filter.initial_empirical);
    doc.set_f64("filter.empirical_min", config.filter.empirical_min);
    doc.set_f64("filter.empirical_max", config.filter.empirical_max);
    doc.set_f64("filter.innovation_rho_nu", config.filter.innovation_rho_nu);
    doc.set_f64("filter.innovation_rho_d", config.filter.innovation_rho_d);
    doc.set_slice("filter.static_model_var", &config.filter.static_model_var);

    doc.set_str(
        "observers",
        &config
            .observers
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>()
            .join(", "),
    );
    doc.set_slice(
        "ext.joint",
        &config.ext_steps.iter().map(|s| s.joint as f64).collect::<Vec<_>>(),
    );
    doc.set_slice(
        "ext.time",
        &config.ext_steps.iter().map(|s| s.time).collect::<Vec<_>>(),
    );
    doc.set_slice(
        "ext.value",
        &config.ext_steps.iter().map(|s| s.value).collect::<Vec<_>>(),
    );
    doc
}

pub fn experiment_from_doc(doc: &TextDoc) -> Result<ExperimentConfig> {
    let mass = doc.get_slice("links.mass")?;
    let length = doc.get_slice("links.length")?;
    let com = doc.get_slice("links.com_offset")?;
    let inertia = doc.get_slice("links.inertia")?;
    let n = mass.len();
    if length.len() != n || com.len() != n || inertia.len() != n {
        return Err(Error::Parse {
            line: 0,
            message: "link parameter blocks disagree in length".into(),
        });
    }
    let links = (0..n)
        .map(|i| LinkParams {
            mass: mass[i],
            length: length[i],
            com_offset: com[i],
            inertia: inertia[i],
        })
        .collect();
    let q_min = doc.get_slice("limits.q_min")?;
    let q_max = doc.get_slice("limits.q_max")?;
    let dq_max = doc.get_slice("limits.dq_max")?;
    let ddq_max = doc.get_slice("limits.ddq_max")?;
    let limits = (0..n)
        .map(|i| JointLimits {
            q_min: q_min[i],
            q_max: q_max[i],
            dq_max: dq_max[i],
            ddq_max: ddq_max[i],
        })
        .collect();
    let ls = doc.get_slice("hyper.length_scale")?;
    let sf = doc.get_slice("hyper.signal_var")?;
    let l1 = doc.get_slice("hyper.lambda1")?;
    let l2 = doc.get_slice("hyper.lambda2")?;
    let hyper = (0..n)
        .map(|i| crate::kmp::KmpHyperparams {
            length_scale: ls[i],
            signal_var: sf[i],
            lambda1: l1[i],
            lambda2: l2[i],
        })
        .collect();
    let observers = doc
        .get_str("observers")?
        .split(',')
        .map(|s| ObserverKind::from_name(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let ext_joint = doc.get_slice("ext.joint")?;
    let ext_time = doc.get_slice("ext.time")?;
    let ext_value = doc.get_slice("ext.value")?;
    let ext_steps = (0..ext_joint.len())
        .map(|i| ExternalTorqueStep {
            joint: ext_joint[i] as usize,
            time: ext_time[i],
            value: ext_value[i],
        })
        .collect();
    let config = ExperimentConfig {
        label: doc.get_str("label")?.to_string(),
        links,
        gravity_accel: doc.get_f64("gravity_accel")?,
        limits,
        friction: FrictionProfile {
            coulomb: doc.get_slice("friction.coulomb")?,
            viscous: doc.get_slice("friction.viscous")?,
            stribeck: doc.get_slice("friction.stribeck")?,
            stribeck_vel: doc.get_slice("friction.stribeck_vel")?,
            noise_floor: doc.get_slice("friction.noise_floor")?,
            noise_slope: doc.get_slice("friction.noise_slope")?,
        },
        excitation: ExcitationSettings {
            harmonics: doc.get_usize("excitation.harmonics")?,
            period: doc.get_f64("excitation.period")?,
            cloud_grid: doc.get_usize("excitation.cloud_grid")?,
            ga: GaConfig {
                population: doc.get_usize("excitation.ga.population")?,
                generations: doc.get_usize("excitation.ga.generations")?,
                tournament: doc.get_usize("excitation.ga.tournament")?,
                crossover_rate: doc.get_f64("excitation.ga.crossover_rate")?,
                mutation_std: doc.get_f64("excitation.ga.mutation_std")?,
                penalty_weight: doc.get_f64("excitation.ga.penalty_weight")?,
                seed: 0,
            },
        },
        t_s: doc.get_f64("t_s")?,
        train_duration: doc.get_f64("train_duration")?,
        eval_duration: doc.get_f64("eval_duration")?,
        components: doc.get_usize("components")?,
        support_points: doc.get_usize("support_points")?,
        hyper,
        filter: FilterSettings {
            forgetting: doc.get_f64("filter.forgetting")?,
            vb_iterations: doc.get_usize("filter.vb_iterations")?,
            iw_per_iteration: doc.get_bool("filter.iw_per_iteration")?,
            process_prior: doc.get_f64("filter.process_prior")?,
            initial_cov: doc.get_f64("filter.initial_cov")?,
            initial_empirical: doc.get_f64("filter.initial_empirical")?,
            empirical_min: doc.get_f64("filter.empirical_min")?,
            empirical_max: doc.get_f64("filter.empirical_max")?,
            innovation_rho_nu: doc.get_f64("filter.innovation_rho_nu")?,
            innovation_rho_d: doc.get_f64("filter.innovation_rho_d")?,
            static_model_var: doc.get_slice("filter.static_model_var")?,
        },
        observers,
        test_fraction: doc.get_f64("test_fraction")?,
        ext_steps,
        seed: doc.get_u64("seed")?,
    };
    config.validate()?;
    Ok(config)
}
