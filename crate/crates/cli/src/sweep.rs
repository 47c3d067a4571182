use crate::error::CliError;
use crate::format::{csv_string, sig6, sig6_opt};
use crate::input::{Family, Range};
use qcorr_core::MeasureSet;
use serde_json::{Map, Value};

/// A family evaluated on a p grid and, for families with a second
/// parameter, a q grid or a fixed q.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub family: Family,
    pub p: Range,
    pub q: QAxis,
    pub measures: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub enum QAxis {
    None,
    Fixed(f64),
    Grid(Range),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: f64,
    pub q: Option<f64>,
    pub values: Vec<Option<f64>>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        match (self.family.uses_q(), self.q) {
            (false, QAxis::None) | (true, QAxis::Fixed(_)) | (true, QAxis::Grid(_)) => Ok(()),
            (false, _) => Err(CliError::invalid("werner has no q parameter")),
            (true, QAxis::None) => Err(CliError::invalid(format!(
                "family {} needs a q grid or --q",
                self.family.name()
            ))),
        }
    }

    fn q_values(&self) -> Vec<Option<f64>> {
        match self.q {
            QAxis::None => vec![None],
            QAxis::Fixed(q) => vec![Some(q)],
            QAxis::Grid(r) => r.points().into_iter().map(Some).collect(),
        }
    }

    fn has_q_column(&self) -> bool {
        !matches!(self.q, QAxis::None)
    }
}

/// Evaluates every grid point, p outer and q inner.
pub fn run(spec: &SweepSpec) -> Result<Vec<SweepRow>, CliError> {
    spec.validate()?;
    let qs = spec.q_values();
    let mut out = Vec::new();
    for p in spec.p.points() {
        for &q in &qs {
            let ms = MeasureSet::from_state(&spec.family.state(p, q)?);
            out.push(SweepRow {
                p,
                q,
                values: spec.measures.iter().map(|m| ms.get(m)).collect(),
            });
        }
    }
    Ok(out)
}

/// With no measures selected the output is the header line alone.
pub fn render_csv(spec: &SweepSpec, rows: &[SweepRow]) -> Result<String, CliError> {
    let mut header = vec!["p".to_string()];
    if spec.has_q_column() {
        header.push("q".into());
    }
    header.extend(spec.measures.iter().cloned());
    if spec.measures.is_empty() {
        return csv_string(&header, &[]);
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![sig6(r.p)];
            if let Some(q) = r.q {
                line.push(sig6(q));
            }
            line.extend(r.values.iter().map(|&v| sig6_opt(v)));
            line
        })
        .collect();
    csv_string(&header, &body)
}

pub fn render_json(spec: &SweepSpec, rows: &[SweepRow]) -> Result<String, CliError> {
    let items: Vec<Value> = rows
        .iter()
        .map(|r| {
            let mut obj = Map::new();
            obj.insert("p".into(), r.p.into());
            if let Some(q) = r.q {
                obj.insert("q".into(), q.into());
            }
            for (name, v) in spec.measures.iter().zip(&r.values) {
                obj.insert(name.clone(), v.map_or(Value::Null, Value::from));
            }
            Value::Object(obj)
        })
        .collect();
    crate::format::to_json(&items)
}
