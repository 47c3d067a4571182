use crate::error::CliError;
use crate::format::{csv_string, sig6, sig6_opt, to_json};
use crate::input::{read_r, read_rho, rows, Family};
use qcorr_core::measures::classify_werner;
use qcorr_core::states::{bloch_decompose, corr_r};
use qcorr_core::{CorrMatrixR, MeasureSet};
use serde::Serialize;
use std::path::PathBuf;

/// Where the state or matrix comes from.
#[derive(Debug, Clone)]
pub enum Source {
    Family { family: Family, p: f64, q: Option<f64> },
    R(PathBuf),
    Rho(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasuresReport {
    pub source: String,
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub measures: MeasureSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub werner_region: Option<&'static str>,
}

pub fn compute(source: &Source) -> Result<MeasuresReport, CliError> {
    let (label, ms, r, region) = match source {
        Source::Family { family, p, q } => {
            let rho = family.state(*p, *q)?;
            let label = match q {
                Some(q) if family.uses_q() => format!("{}(p={p}, q={q})", family.name()),
                _ => format!("{}(p={p})", family.name()),
            };
            let region = match family {
                Family::Werner => Some(classify_werner(*p)?.label()),
                _ => None,
            };
            (label, MeasureSet::from_state(&rho), corr_r(&bloch_decompose(&rho)), region)
        }
        Source::R(path) => {
            let r = read_r(path)?;
            (format!("R from {}", path.display()), MeasureSet::from_r(&r), r, None)
        }
        Source::Rho(path) => {
            let rho = read_rho(path)?;
            (
                format!("rho from {}", path.display()),
                MeasureSet::from_state(&rho),
                corr_r(&bloch_decompose(&rho)),
                None,
            )
        }
    };
    Ok(MeasuresReport {
        source: label,
        r: rows(CorrMatrixR::matrix(&r)),
        measures: ms,
        werner_region: region,
    })
}

pub fn render_json(report: &MeasuresReport) -> Result<String, CliError> {
    to_json(report)
}

/// One header row of measure names and one row of values; measures that
/// need ρ are left empty for R-only input.
pub fn render_csv(report: &MeasuresReport) -> Result<String, CliError> {
    let mut header: Vec<String> = MeasureSet::NAMES.iter().map(|s| s.to_string()).collect();
    let mut row: Vec<String> = MeasureSet::NAMES.iter().map(|n| sig6_opt(report.measures.get(n))).collect();
    if let Some(region) = report.werner_region {
        header.push("werner_region".into());
        row.push(region.into());
    }
    csv_string(&header, &[row])
}

/// Plain-text summary for terminals.
pub fn render_text(report: &MeasuresReport) -> String {
    let mut out = format!("{}\n", report.source);
    for name in MeasureSet::NAMES {
        match report.measures.get(name) {
            Some(v) => out.push_str(&format!("  {name:<12} {}\n", sig6(v))),
            None => out.push_str(&format!("  {name:<12} n/a (needs rho)\n")),
        }
    }
    if let Some(region) = report.werner_region {
        out.push_str(&format!("  region       {region}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn werner(p: f64) -> MeasuresReport {
        compute(&Source::Family {
            family: Family::Werner,
            p,
            q: None,
        })
        .unwrap()
    }

    #[test]
    fn werner_half() {
        let r = werner(0.5);
        assert!((r.measures.fef - 0.25).abs() < 1e-12);
        assert_eq!(r.measures.steering_s, 0.0);
        assert_eq!(r.measures.bell_b, 0.0);
        assert_eq!(r.werner_region, Some("entangled-unsteerable"));
    }

    #[test]
    fn werner_zero_is_all_zero() {
        let r = werner(0.0);
        for name in MeasureSet::NAMES {
            assert_eq!(r.measures.get(name), Some(0.0), "{name}");
        }
    }

    #[test]
    fn csv_has_one_row() {
        let s = render_csv(&werner(0.8)).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("fef,concurrence,negativity"));
        assert!(lines[1].starts_with("0.7,0.7,0.7,"));
    }

    #[test]
    fn gws_needs_q() {
        let err = compute(&Source::Family {
            family: Family::Gws,
            p: 0.5,
            q: None,
        })
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
