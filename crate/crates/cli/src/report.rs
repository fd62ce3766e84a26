//! Machine-readable run reports: canonical JSON and a long-format CSV of
//! the residual history.

use std::io::{self, Write};

use bosp_core::bosp::{regression_coefficients, BospConfig, EigenResult};
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub nev: usize,
    pub nb: usize,
    pub tol: f64,
    pub ngs: usize,
    pub s: usize,
    pub moving: bool,
    pub max_iter: usize,
    pub seed: u64,
    pub rank_hint: Option<usize>,
    pub inner_cg_tol: f64,
    pub inner_cg_max_iter: usize,
}

impl From<&BospConfig> for ConfigEcho {
    fn from(c: &BospConfig) -> Self {
        Self {
            nev: c.nev,
            nb: c.nb,
            tol: c.tol,
            ngs: c.ngs,
            s: c.s,
            moving: c.moving,
            max_iter: c.max_outer_iter,
            seed: c.rng_seed,
            rank_hint: c.rank_hint,
            inner_cg_tol: c.inner_cg_tol,
            inner_cg_max_iter: c.inner_cg_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDescriptor {
    pub name: String,
    pub n: usize,
    pub weighted: bool,
    pub nullspace_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub problem: ProblemDescriptor,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub wall_seconds: f64,
    /// `history[i][j]`: residual of pair `j` at iteration `i + 1`.
    pub history: Vec<Vec<Option<f64>>>,
    /// Per tracked pair; `None` when too few residuals lie above `10·tol`.
    pub regression: Vec<Option<Regression>>,
    pub converged: bool,
    pub nev_conv: usize,
    pub max_width: usize,
    pub biorth_error: f64,
    pub k_applications: usize,
    pub m_applications: usize,
}

impl RunReport {
    pub fn new(cfg: &BospConfig, problem: ProblemDescriptor, r: &EigenResult) -> Self {
        let regression = (0..r.history.tracked())
            .map(|i| {
                regression_coefficients(&r.history, i)
                    .ok()
                    .map(|f| Regression { alpha: f.alpha, beta: f.beta, samples: f.samples })
            })
            .collect();
        Self {
            config: cfg.into(),
            problem,
            eigenvalues: r.lambdas.clone(),
            residuals: r.residuals.clone(),
            iterations: r.iterations,
            wall_seconds: r.seconds,
            history: r.history.rows.clone(),
            regression,
            converged: r.converged,
            nev_conv: r.nev_conv,
            max_width: r.max_width,
            biorth_error: r.biorth_error,
            k_applications: r.k_applications,
            m_applications: r.m_applications,
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        to_canonical_json(&serde_json::to_value(self)?)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Long format, one row per (iteration, pair): exactly
    /// `iterations × tracked` data rows. Untracked entries are empty.
    pub fn write_history_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "pair", "residual"])?;
        for (i, row) in self.history.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let cell = v.map(|x| format!("{x:.16e}")).unwrap_or_default();
                out.write_record([(i + 1).to_string(), (j + 1).to_string(), cell])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Compact JSON, keys sorted (serde_json's default map is ordered), floats
/// with 17 significant digits so every `f64` survives a round trip.
struct Canonical;

impl Formatter for Canonical {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

pub fn to_canonical_json(v: &Value) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Canonical);
    v.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        RunReport {
            config: ConfigEcho {
                nev: 3,
                nb: 3,
                tol: 1e-10,
                ngs: 1,
                s: 3,
                moving: false,
                max_iter: 500,
                seed: 1,
                rank_hint: None,
                inner_cg_tol: 1e-2,
                inner_cg_max_iter: 20,
            },
            problem: ProblemDescriptor { name: "t0-n10".into(), n: 10, weighted: false, nullspace_rank: 0 },
            eigenvalues: vec![0.1 + 0.2, 1.0 / 3.0, 2.0],
            residuals: vec![1e-300, 5e-324, 0.0],
            iterations: 2,
            wall_seconds: 0.125,
            history: vec![vec![Some(0.5), None, Some(-0.0)], vec![Some(1.0 / 7.0), Some(3.0), None]],
            regression: vec![Some(Regression { alpha: 1.5, beta: 1.1, samples: 4 }), None, None],
            converged: true,
            nev_conv: 3,
            max_width: 9,
            biorth_error: 2.2e-16,
            k_applications: 12,
            m_applications: 12,
        }
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let r = sample();
        let a = r.to_json().unwrap();
        let back = RunReport::from_json(&a).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), a);
        let v: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(to_canonical_json(&v).unwrap(), a);
    }

    #[test]
    fn keys_are_sorted_and_floats_carry_17_digits() {
        let a = sample().to_json().unwrap();
        assert!(a.starts_with("{\"biorth_error\":2.2000000000000000e-16,\"config\":{"));
        assert!(a.contains("\"eigenvalues\":[3.0000000000000004e-1,3.3333333333333331e-1,2.0000000000000000e0]"));
    }

    #[test]
    fn csv_rows() {
        let r = sample();
        let mut buf = Vec::new();
        r.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert_eq!(lines[2], "1,2,");
        assert_eq!(lines[4], "2,1,1.4285714285714285e-1");
    }
}
