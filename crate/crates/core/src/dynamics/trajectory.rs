//! Sampled trajectory container and its CSV form.

use crate::error::{Error, Result};
use nalgebra::DVector;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Uniformly sampled joint-space recording of one run.
///
/// Rows hold (t, q, dq, ddq, tau_m) with an optional external-torque block
/// when the run had a known injected load.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectory {
    /// Sampling period (s).
    pub t_s: f64,
    pub times: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub dq: Vec<DVector<f64>>,
    pub ddq: Vec<DVector<f64>>,
    pub tau_m: Vec<DVector<f64>>,
    pub tau_ext: Option<Vec<DVector<f64>>>,
}

impl SampledTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn joints(&self) -> usize {
        self.q.first().map_or(0, |v| v.len())
    }

    /// Validate the structural invariants: at least two rows, matching block
    /// lengths, strictly increasing uniform timestamps.
    pub fn validate(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                actual: self.len(),
            });
        }
        let n = self.len();
        for (name, len) in [
            ("q", self.q.len()),
            ("dq", self.dq.len()),
            ("ddq", self.ddq.len()),
            ("tau_m", self.tau_m.len()),
        ] {
            if len != n {
                return Err(Error::SeriesMismatch(format!(
                    "{name} has {len} rows, times has {n}"
                )));
            }
        }
        if let Some(ext) = &self.tau_ext {
            if ext.len() != n {
                return Err(Error::SeriesMismatch(format!(
                    "tau_ext has {} rows, times has {n}",
                    ext.len()
                )));
            }
        }
        for k in 1..n {
            let dt = self.times[k] - self.times[k - 1];
            if dt <= 0.0 || (dt - self.t_s).abs() > 1e-9 * self.t_s.max(1.0) {
                return Err(Error::SeriesMismatch(format!(
                    "non-uniform timestamp spacing at row {k}: dt = {dt}"
                )));
            }
        }
        Ok(())
    }

    /// Write the CSV form: a `# ts=` comment, a header and 17-significant-
    /// digit floats.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.joints();
        writeln!(w, "# ts={:e}", self.t_s)?;
        let mut header = String::from("t");
        for block in ["q", "dq", "ddq", "tau_m"] {
            for j in 1..=n {
                header.push_str(&format!(",{block}_{j}"));
            }
        }
        if self.tau_ext.is_some() {
            for j in 1..=n {
                header.push_str(&format!(",tau_ext_{j}"));
            }
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let mut line = format!("{:.16e}", self.times[k]);
            for block in [&self.q, &self.dq, &self.ddq, &self.tau_m] {
                for j in 0..n {
                    line.push_str(&format!(",{:.16e}", block[k][j]));
                }
            }
            if let Some(ext) = &self.tau_ext {
                for j in 0..n {
                    line.push_str(&format!(",{:.16e}", ext[k][j]));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();

        let (_, first) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let first = first?;
        let t_s = first
            .strip_prefix("# ts=")
            .ok_or(Error::Parse {
                line: 1,
                message: "expected `# ts=<value>` comment line".into(),
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse {
                line: 1,
                message: format!("bad ts value: {e}"),
            })?;

        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 2,
            message: "missing header".into(),
        })?;
        let header = header?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(Error::Parse {
                line: 2,
                message: "header must start with `t`".into(),
            });
        }
        let n = cols.iter().filter(|c| c.starts_with("q_")).count();
        let has_ext = cols.iter().any(|c| c.starts_with("tau_ext_"));
        let expected_cols = 1 + n * if has_ext { 5 } else { 4 };
        if n == 0 || cols.len() != expected_cols {
            return Err(Error::Parse {
                line: 2,
                message: format!("unexpected column layout ({} columns)", cols.len()),
            });
        }

        let mut traj = SampledTrajectory {
            t_s,
            times: Vec::new(),
            q: Vec::new(),
            dq: Vec::new(),
            ddq: Vec::new(),
            tau_m: Vec::new(),
            tau_ext: has_ext.then(Vec::new),
        };
        for (idx, line) in lines {
            let line = line?;
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
            if vals.len() != expected_cols {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {expected_cols} values, got {}", vals.len()),
                });
            }
            traj.times.push(vals[0]);
            let block = |b: usize| DVector::from_column_slice(&vals[1 + b * n..1 + (b + 1) * n]);
            traj.q.push(block(0));
            traj.dq.push(block(1));
            traj.ddq.push(block(2));
            traj.tau_m.push(block(3));
            if let Some(ext) = &mut traj.tau_ext {
                ext.push(block(4));
            }
        }
        traj.validate()?;
        Ok(traj)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Centrally differenced acceleration from the recorded velocities, the
/// noisy alternative to the simulator's exact ddq (endpoints use one-sided
/// differences).
pub fn fd_acceleration(traj: &SampledTrajectory) -> Vec<DVector<f64>> {
    let n = traj.len();
    let ts = traj.t_s;
    (0..n)
        .map(|k| {
            if k == 0 {
                (&traj.dq[1] - &traj.dq[0]) / ts
            } else if k == n - 1 {
                (&traj.dq[n - 1] - &traj.dq[n - 2]) / ts
            } else {
                (&traj.dq[k + 1] - &traj.dq[k - 1]) / (2.0 * ts)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SampledTrajectory {
        let v = |x: f64| DVector::from_column_slice(&[x, -x]);
        SampledTrajectory {
            t_s: 0.5,
            times: vec![0.0, 0.5, 1.0],
            q: vec![v(0.1), v(0.2), v(0.3)],
            dq: vec![v(1.0), v(1.1), v(1.2)],
            ddq: vec![v(0.0), v(0.2), v(0.2)],
            tau_m: vec![v(5.0), v(5.5), v(6.0)],
            tau_ext: Some(vec![v(0.0), v(1.0), v(1.0)]),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let traj = tiny();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = SampledTrajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(traj, back);
    }

    #[test]
    fn csv_round_trip_without_ext_block() {
        let mut traj = tiny();
        traj.tau_ext = None;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = SampledTrajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(traj, back);
    }

    #[test]
    fn missing_ts_comment_is_a_parse_error() {
        let text = "t,q_1,dq_1,ddq_1,tau_m_1\n0,1,2,3,4\n";
        assert!(matches!(
            SampledTrajectory::read_csv(text.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn non_uniform_spacing_rejected() {
        let mut traj = tiny();
        traj.times[2] = 1.2;
        assert!(traj.validate().is_err());
    }

    #[test]
    fn fd_acceleration_matches_on_linear_velocity() {
        // dq rises linearly -> central difference is exact
        let traj = tiny();
        let acc = fd_acceleration(&traj);
        assert!((acc[1][0] - 0.2).abs() < 1e-12);
    }
}
