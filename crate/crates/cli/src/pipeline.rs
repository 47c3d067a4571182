//! Simulation → calibration → reconstruction → interpolation, with Monte
//! Carlo error bars on every reported measure.

use crate::error::CliError;
use crate::format::{csv_string, sig6, sig6_opt, to_json};
use crate::input::{rows, Family};
use qcorr_core::inference::InferenceError;
use qcorr_core::measures::gws_oracle;
use qcorr_core::states::singlet;
use qcorr_core::{
    estimate_interference_fraction, interpolate_r, mle_reconstruct, monte_carlo_errors, simulate_counts,
    white_noise_counts, CorrMatrixR, CountRecord, InterferenceModel, MeasureSet, MleConfig, MonteCarloConfig,
    Parametrization, Reconstruction,
};
use serde::Serialize;
use std::collections::BTreeMap;

/// Measures that depend on R alone.
pub const R_MEASURES: [&str; 8] = [
    "fef",
    "steering_S",
    "steering_S3",
    "steering_S2",
    "bell_B",
    "bell_Bprime",
    "M",
    "hierarchy_H",
];

pub const DEFAULT_MEASURES: [&str; 5] = ["bell_B", "steering_S", "fef", "steering_S2", "steering_S3"];

pub const DEFAULT_P: [f64; 8] = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone)]
pub struct PipelineSpec {
    pub family: Family,
    pub q: Option<f64>,
    pub p_list: Vec<f64>,
    /// Two-copy trials per setting and regime.
    pub events: f64,
    pub seed: u64,
    /// 0 skips the error bars.
    pub mc_samples: usize,
    pub measures: Vec<String>,
    /// Non-interfering fraction used to simulate the data.
    pub fraction: f64,
}

impl PipelineSpec {
    pub fn new(family: Family, q: Option<f64>, events: f64, seed: u64) -> Self {
        Self {
            family,
            q,
            p_list: DEFAULT_P.to_vec(),
            events,
            seed,
            mc_samples: 1000,
            measures: DEFAULT_MEASURES.iter().map(|s| s.to_string()).collect(),
            fraction: InterferenceModel::default().non_interfering_fraction(),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.family == Family::Dephased {
            return Err(CliError::invalid(
                "the pipeline interpolates with white noise; the dephased family is not such a mixture",
            ));
        }
        if self.p_list.is_empty() {
            return Err(CliError::invalid("empty p list"));
        }
        if let Some(p) = self.p_list.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(CliError::invalid(format!("p = {p} outside [0, 1]")));
        }
        if let Some(m) = self.measures.iter().find(|m| !R_MEASURES.contains(&m.as_str())) {
            return Err(CliError::invalid(format!("measure `{m}` is not computable from R")));
        }
        Ok(())
    }

    fn theory_q(&self) -> f64 {
        match self.family {
            Family::Werner => 0.5,
            _ => self.q.unwrap_or(0.5),
        }
    }
}

/// Simulated records: calibration on the singlet, the pure source state,
/// and white noise. Seeds are offsets of the base seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub calibration: Vec<CountRecord>,
    pub source: Vec<CountRecord>,
    pub noise: Vec<CountRecord>,
}

impl Dataset {
    pub fn simulate(spec: &PipelineSpec) -> Result<Self, CliError> {
        spec.validate()?;
        let model = InterferenceModel::new(spec.fraction)?;
        let pure = spec.family.state(1.0, spec.q)?;
        Ok(Self {
            calibration: simulate_counts(&singlet(), &model, spec.events, spec.seed)?,
            source: simulate_counts(&pure, &model, spec.events, spec.seed.wrapping_add(1))?,
            noise: white_noise_counts(&model, spec.events, spec.seed.wrapping_add(2))?,
        })
    }

    fn concat(&self) -> Vec<CountRecord> {
        [&self.calibration[..], &self.source[..], &self.noise[..]].concat()
    }

    /// Inverse of `concat`, splitting by the original block lengths.
    fn split_like(&self, all: &[CountRecord]) -> Self {
        let (a, rest) = all.split_at(self.calibration.len());
        let (b, c) = rest.split_at(self.source.len());
        Self {
            calibration: a.to_vec(),
            source: b.to_vec(),
            noise: c.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub fraction: f64,
    pub source: Reconstruction,
    pub noise: Reconstruction,
}

pub fn fit(data: &Dataset, parametrization: Parametrization) -> Result<Fit, InferenceError> {
    let fraction = estimate_interference_fraction(&data.calibration, &singlet())?;
    let config = MleConfig {
        non_interfering_fraction: fraction,
        parametrization,
        ..MleConfig::default()
    };
    Ok(Fit {
        fraction,
        source: mle_reconstruct(&data.source, &config)?,
        noise: mle_reconstruct(&data.noise, &config)?,
    })
}

impl Fit {
    pub fn r_at(&self, p: f64) -> Result<CorrMatrixR, CliError> {
        Ok(interpolate_r(&self.source.r, &self.noise.r, p)?)
    }
}

/// Selected measures of the source R, then of R(p) for each p.
fn flat_values(fit: &Fit, p_list: &[f64], measures: &[String]) -> Result<Vec<f64>, InferenceError> {
    let pick = |r: &CorrMatrixR| {
        let ms = MeasureSet::from_r(r);
        measures.iter().map(move |m| ms.get(m).expect("validated measure")).collect::<Vec<_>>()
    };
    let mut out = pick(&fit.source.r);
    for &p in p_list {
        let r = interpolate_r(&fit.source.r, &fit.noise.r, p)?;
        out.extend(pick(&r));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bar {
    pub value: f64,
    pub plus: Option<f64>,
    pub minus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointMeasure {
    pub value: f64,
    pub plus: Option<f64>,
    pub minus: Option<f64>,
    pub theory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub p: f64,
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub measures: BTreeMap<String, PointMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub log_likelihood: f64,
    pub iterations: usize,
    pub physicality_clamp_applied: bool,
}

impl From<&Reconstruction> for FitSummary {
    fn from(r: &Reconstruction) -> Self {
        Self {
            r: rows(r.r.matrix()),
            log_likelihood: r.log_likelihood,
            iterations: r.iterations,
            physicality_clamp_applied: r.physicality_clamp_applied,
        }
    }
}

/// Report of one run. The top-level R, likelihood and measures describe
/// the pure-source reconstruction; `points` hold the interpolated family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub family: &'static str,
    pub q: Option<f64>,
    pub events: f64,
    pub seed: u64,
    pub mc_samples: usize,
    pub non_interfering_fraction: f64,
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub log_likelihood: f64,
    pub iterations: usize,
    pub physicality_clamp_applied: bool,
    pub measures: BTreeMap<String, Bar>,
    pub noise: FitSummary,
    /// Largest entrywise difference between the Cholesky and direct-T
    /// reconstructions of either matrix.
    pub parametrization_agreement: f64,
    pub points: Vec<Point>,
}

pub fn run(spec: &PipelineSpec) -> Result<PipelineReport, CliError> {
    let data = Dataset::simulate(spec)?;
    run_on(spec, &data)
}

/// Runs the analysis on given records; `spec` supplies the p list,
/// measures and Monte Carlo settings.
pub fn run_on(spec: &PipelineSpec, data: &Dataset) -> Result<PipelineReport, CliError> {
    spec.validate()?;
    let main = fit(data, Parametrization::CholeskyR)?;
    let alt = fit(data, Parametrization::DirectT)?;
    let diff = |a: &Reconstruction, b: &Reconstruction| a.r.matrix().add(&b.r.matrix().scale(-1.0)).max_abs();
    let agreement = diff(&main.source, &alt.source).max(diff(&main.noise, &alt.noise));

    let values = flat_values(&main, &spec.p_list, &spec.measures)?;
    let bars: Vec<(Option<f64>, Option<f64>)> = if spec.mc_samples == 0 {
        vec![(None, None); values.len()]
    } else {
        let config = MonteCarloConfig {
            n_samples: spec.mc_samples,
            seed: spec.seed.wrapping_add(3),
            ..MonteCarloConfig::default()
        };
        let all = data.concat();
        let extractor = |recs: &[CountRecord]| {
            let fit = fit(&data.split_like(recs), Parametrization::CholeskyR)?;
            flat_values(&fit, &spec.p_list, &spec.measures)
        };
        monte_carlo_errors(&all, &config, extractor)?
            .into_iter()
            .map(|b| (Some(b.plus), Some(b.minus)))
            .collect()
    };

    let nm = spec.measures.len();
    let measures = spec
        .measures
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let (plus, minus) = bars[k];
            (m.clone(), Bar { value: values[k], plus, minus })
        })
        .collect();
    let mut points = Vec::with_capacity(spec.p_list.len());
    for (i, &p) in spec.p_list.iter().enumerate() {
        let theory = gws_oracle(p, spec.theory_q())?;
        let offset = nm * (i + 1);
        let measures = spec
            .measures
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let (plus, minus) = bars[offset + k];
                let pm = PointMeasure {
                    value: values[offset + k],
                    plus,
                    minus,
                    theory: theory.get(m).expect("validated measure"),
                };
                (m.clone(), pm)
            })
            .collect();
        points.push(Point {
            p,
            r: rows(main.r_at(p)?.matrix()),
            measures,
        });
    }

    Ok(PipelineReport {
        family: spec.family.name(),
        q: if spec.family.uses_q() { spec.q } else { None },
        events: spec.events,
        seed: spec.seed,
        mc_samples: spec.mc_samples,
        non_interfering_fraction: main.fraction,
        r: rows(main.source.r.matrix()),
        log_likelihood: main.source.log_likelihood,
        iterations: main.source.iterations,
        physicality_clamp_applied: main.source.physicality_clamp_applied,
        measures,
        noise: FitSummary::from(&main.noise),
        parametrization_agreement: agreement,
        points,
    })
}

pub fn render_json(report: &PipelineReport) -> Result<String, CliError> {
    to_json(report)
}

/// One row per p: each measure's value, bars and closed-form value.
pub fn render_csv(spec: &PipelineSpec, report: &PipelineReport) -> Result<String, CliError> {
    let mut header = vec!["p".to_string()];
    for m in &spec.measures {
        header.extend([m.clone(), format!("{m}_plus"), format!("{m}_minus"), format!("{m}_theory")]);
    }
    let body: Vec<Vec<String>> = report
        .points
        .iter()
        .map(|pt| {
            let mut line = vec![sig6(pt.p)];
            for m in &spec.measures {
                let v = &pt.measures[m];
                line.extend([sig6(v.value), sig6_opt(v.plus), sig6_opt(v.minus), sig6(v.theory)]);
            }
            line
        })
        .collect();
    csv_string(&header, &body)
}
