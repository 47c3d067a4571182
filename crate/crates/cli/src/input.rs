//! Parsing of state families, matrix files and parameter grids.

use crate::error::CliError;
use clap::ValueEnum;
use qcorr_core::matcore::{Mat3, SymMatrix3};
use qcorr_core::measures::CorrMatrixR;
use qcorr_core::states::{dephased_bell, gws, gws_phi, werner};
use qcorr_core::DensityMatrix2Q;
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Werner,
    Gws,
    #[value(name = "gws_phi")]
    GwsPhi,
    Dephased,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Werner => "werner",
            Family::Gws => "gws",
            Family::GwsPhi => "gws_phi",
            Family::Dephased => "dephased",
        }
    }

    pub fn uses_q(self) -> bool {
        self != Family::Werner
    }

    pub fn state(self, p: f64, q: Option<f64>) -> Result<DensityMatrix2Q, CliError> {
        let need_q = || q.ok_or_else(|| CliError::invalid(format!("family {} needs --q", self.name())));
        Ok(match self {
            Family::Werner => werner(p)?,
            Family::Gws => gws(p, need_q()?)?,
            Family::GwsPhi => gws_phi(p, need_q()?)?,
            Family::Dephased => dephased_bell(p, need_q()?)?,
        })
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixFile {
    Bare([[f64; 3]; 3]),
    Wrapped {
        #[serde(rename = "R")]
        r: [[f64; 3]; 3],
    },
}

/// R from a JSON file holding either a bare 3×3 array or `{"R": [[...]]}`.
/// The matrix must be symmetric with trace at most 3. Measured matrices can
/// have eigenvalues slightly above 1 or slightly below 0; both are accepted,
/// the latter down to `NEGATIVE_EIGENVALUE_TOLERANCE` and with a warning.
pub fn read_r(path: &Path) -> Result<CorrMatrixR, CliError> {
    let rows = match serde_json::from_str::<MatrixFile>(&read(path)?)
        .map_err(|e| CliError::invalid(format!("{}: expected a 3x3 JSON array: {e}", path.display())))?
    {
        MatrixFile::Bare(r) | MatrixFile::Wrapped { r } => r,
    };
    r_from_rows(rows)
}

pub const NEGATIVE_EIGENVALUE_TOLERANCE: f64 = 0.05;

pub fn r_from_rows(rows: [[f64; 3]; 3]) -> Result<CorrMatrixR, CliError> {
    let r = CorrMatrixR::from_mat3(&Mat3(rows))?;
    let min = r.min_raw_eigenvalue();
    if min < -NEGATIVE_EIGENVALUE_TOLERANCE {
        return Err(CliError::invalid(format!(
            "R is not positive semidefinite: min eigenvalue {min:.3e}"
        )));
    }
    if min < -1e-9 {
        eprintln!("qcorr: warning: R has a negative eigenvalue {min:.3e}; measures use the clamped spectrum");
    }
    if r.trace_flagged() {
        return Err(CliError::invalid(format!("Tr R = {:.6} exceeds 3", r.matrix().trace())));
    }
    Ok(r)
}

/// ρ from a JSON file `{"re": [[4×4]], "im": [[4×4]]}`; physicality is
/// checked on load.
pub fn read_rho(path: &Path) -> Result<DensityMatrix2Q, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Inclusive range `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || CliError::invalid(format!("range `{s}` is not start:stop:step"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let r = Range {
            start: num(parts[0])?,
            stop: num(parts[1])?,
            step: num(parts[2])?,
        };
        if !(r.step > 0.0 && r.step.is_finite()) {
            return Err(CliError::invalid(format!("range `{s}`: step must be positive")));
        }
        if !(r.start.is_finite() && r.stop.is_finite()) || r.stop < r.start {
            return Err(CliError::invalid(format!("range `{s}`: stop must not precede start")));
        }
        Ok(r)
    }

    /// Grid points start + k·step up to stop, with a 1e-9 relative slack
    /// so that 0:1:0.01 ends at exactly 1.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step * (1.0 + 1e-9) + 1e-9).floor() as usize;
        (0..=n).map(|k| (self.start + k as f64 * self.step).min(self.stop)).collect()
    }
}

/// `p0:p1:step[,q0:q1:step]`.
pub fn parse_grid(s: &str) -> Result<(Range, Option<Range>), CliError> {
    match s.split_once(',') {
        Some((p, q)) => Ok((Range::parse(p)?, Some(Range::parse(q)?))),
        None => Ok((Range::parse(s)?, None)),
    }
}

/// Comma-separated measure names; the empty string selects none.
pub fn parse_measures(s: &str, allowed: &[&str]) -> Result<Vec<String>, CliError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|name| {
            let name = name.trim();
            if allowed.contains(&name) {
                Ok(name.to_string())
            } else {
                Err(CliError::invalid(format!("unknown measure `{name}`; expected one of {}", allowed.join(", "))))
            }
        })
        .collect()
}

/// Rows of a symmetric matrix.
pub fn rows(m: &SymMatrix3) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m.get(i, j)))
}
