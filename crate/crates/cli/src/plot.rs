//! Standalone SVG rendering of sweep and pipeline CSV files.

use crate::error::CliError;
use clap::ValueEnum;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Measures against p, with the Werner thresholds marked.
    Curves,
    /// One measure over the (p, q) grid.
    Heatmap,
    /// S₃ against S and S₂ against B with their monotone relations.
    Scatter,
}

/// Parsed numeric CSV; empty fields are `None`.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .zip(&header)
                .map(|(field, name)| {
                    if field.is_empty() {
                        Ok(None)
                    } else {
                        field.parse::<f64>().map(Some).map_err(|_| {
                            CliError::invalid(format!("row {}: column {name}: `{field}` is not a number", line + 2))
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn open(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(svg: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (f.px(f.x.0), f.px(f.x.1), f.py(f.y.0), f.py(f.y.1));
    let _ = writeln!(svg, r#"<path d="M{x0:.2},{y1:.2}V{y0:.2}H{x1:.2}" fill="none" stroke="black"/>"#);
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let (xp, yp) = (f.px(xv), f.py(yv));
        let _ = writeln!(svg, r#"<path d="M{xp:.2},{y0:.2}v5M{x0:.2},{yp:.2}h-5" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<text x="{xp:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y0 + 18.0, tick(xv));
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, yp + 4.0, tick(yv));
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn legend(svg: &mut String, k: usize, color: &str, label: &str) {
    let y = TOP + 10.0 + 18.0 * k as f64;
    let x = W - RIGHT + 12.0;
    let _ = writeln!(svg, r#"<path d="M{x:.2},{y:.2}h18" stroke="{color}" stroke-width="2"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 24.0, y + 4.0, escape(label));
}

fn polyline(svg: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str, dashed: bool) {
    if pts.is_empty() {
        return;
    }
    let mut d = String::new();
    for (i, &(x, y)) in pts.iter().enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, f.px(x), f.py(y));
    }
    let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
    let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#);
}

fn marker(svg: &mut String, f: &Frame, x: f64, y: f64, color: &str) {
    let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, f.px(x), f.py(y));
}

fn y_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((0.0f64, 1.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (lo, hi)
}

/// Value columns for curves: everything except the grid axes and the
/// auxiliary `_plus`/`_minus`/`_theory` columns.
fn value_columns(t: &Table, select: &[String]) -> Vec<usize> {
    if !select.is_empty() {
        return select.iter().filter_map(|s| t.column(s)).collect();
    }
    t.header
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            !matches!(h.as_str(), "p" | "q") && !h.ends_with("_plus") && !h.ends_with("_minus") && !h.ends_with("_theory")
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn curves(t: &Table, select: &[String]) -> Result<String, CliError> {
    let mut svg = String::new();
    open(&mut svg, "measures against p");
    let pc = t.column("p");
    if !t.rows.is_empty() && pc.is_none() {
        return Err(CliError::invalid("curves need a `p` column"));
    }
    // with a q axis only the first q slice is drawn
    let rows: Vec<&Vec<Option<f64>>> = match t.column("q") {
        Some(qc) => {
            let q0 = t.rows.first().and_then(|r| r[qc]);
            t.rows.iter().filter(|r| r[qc] == q0).collect()
        }
        None => t.rows.iter().collect(),
    };
    let cols = value_columns(t, select);
    let aux = |c: usize, suffix: &str| t.column(&format!("{}_{suffix}", t.header[c]));
    let all = rows.iter().flat_map(|r| {
        cols.iter().flat_map(move |&c| {
            let hi = aux(c, "plus").and_then(|k| Some(r[c]? + r[k]?));
            [r[c], hi].into_iter().flatten()
        })
    });
    let f = Frame {
        x: (0.0, 1.0),
        y: y_range(all),
    };
    axes(&mut svg, &f, "p", "value");
    for (k, x) in [1.0 / 3.0, 1.0 / 3f64.sqrt(), 1.0 / 2f64.sqrt()].into_iter().enumerate() {
        polyline(&mut svg, &f, &[(x, f.y.0), (x, f.y.1)], "#888888", true);
        let _ = writeln!(svg, r##"<text x="{:.2}" y="{:.2}" fill="#555555">{}</text>"##, f.px(x) + 3.0, f.py(f.y.1) + 12.0, ["p_E", "p_S", "p_B"][k]);
    }
    let Some(pc) = pc else {
        svg.push_str("</svg>\n");
        return Ok(svg);
    };
    for (k, &c) in cols.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        legend(&mut svg, k, color, &t.header[c]);
        let series = |col: usize| -> Vec<(f64, f64)> { rows.iter().filter_map(|r| Some((r[pc]?, r[col]?))).collect() };
        match aux(c, "theory") {
            Some(th) => {
                polyline(&mut svg, &f, &series(th), color, false);
                for r in &rows {
                    let (Some(x), Some(y)) = (r[pc], r[c]) else { continue };
                    if let (Some(pk), Some(mk)) = (aux(c, "plus"), aux(c, "minus")) {
                        if let (Some(plus), Some(minus)) = (r[pk], r[mk]) {
                            polyline(&mut svg, &f, &[(x, y - minus), (x, y + plus)], color, false);
                        }
                    }
                    marker(&mut svg, &f, x, y, color);
                }
            }
            None => polyline(&mut svg, &f, &series(c), color, false),
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn half_gap(axis: &[f64], i: usize) -> (f64, f64) {
    let lo = if i > 0 { (axis[i] - axis[i - 1]) / 2.0 } else if axis.len() > 1 { (axis[1] - axis[0]) / 2.0 } else { 0.5 };
    let hi = if i + 1 < axis.len() { (axis[i + 1] - axis[i]) / 2.0 } else { lo };
    (lo, hi)
}

fn heat_color(v: f64, lo: f64, hi: f64, integer: bool) -> String {
    const LEVELS: [&str; 4] = ["#f7f7f7", "#fdd49e", "#fc8d59", "#b30000"];
    if integer && (0.0..=3.0).contains(&v) {
        return LEVELS[v as usize].to_string();
    }
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    let g = (255.0 * (1.0 - t)).round() as u8;
    format!("#{g:02x}{g:02x}{g:02x}")
}

pub fn heatmap(t: &Table, select: &[String]) -> Result<String, CliError> {
    let name = select.first().map(String::as_str).unwrap_or("hierarchy_H");
    let mut svg = String::new();
    open(&mut svg, &format!("{name} over (p, q)"));
    let f = Frame {
        x: (0.0, 1.0),
        y: (0.0, 1.0),
    };
    if t.rows.is_empty() {
        axes(&mut svg, &f, "p", "q");
        svg.push_str("</svg>\n");
        return Ok(svg);
    }
    let (Some(pc), Some(qc), Some(vc)) = (t.column("p"), t.column("q"), t.column(name)) else {
        return Err(CliError::invalid(format!("heatmap needs columns p, q and {name}")));
    };
    let cells: Vec<(f64, f64, f64)> = t.rows.iter().filter_map(|r| Some((r[pc]?, r[qc]?, r[vc]?))).collect();
    let ps = distinct(cells.iter().map(|c| c.0).collect());
    let qs = distinct(cells.iter().map(|c| c.1).collect());
    let (lo, hi) = cells.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c.2), b.max(c.2)));
    let integer = cells.iter().all(|c| c.2.fract() == 0.0);
    for &(p, q, v) in &cells {
        let i = ps.binary_search_by(|x| x.total_cmp(&p)).expect("p listed");
        let j = qs.binary_search_by(|x| x.total_cmp(&q)).expect("q listed");
        let (pl, ph) = half_gap(&ps, i);
        let (ql, qh) = half_gap(&qs, j);
        let (x0, x1) = (f.px((p - pl).max(0.0)), f.px((p + ph).min(1.0)));
        let (y0, y1) = (f.py((q + qh).min(1.0)), f.py((q - ql).max(0.0)));
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            x1 - x0,
            y1 - y0,
            heat_color(v, lo, hi, integer)
        );
    }
    axes(&mut svg, &f, "p", "q");
    if integer {
        for level in 0..=3 {
            if (lo..=hi).contains(&(level as f64)) {
                legend(&mut svg, level, &heat_color(level as f64, lo, hi, true), &format!("{name} = {level}"));
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn relation_s3(s: f64) -> f64 {
    ((2.0 * s * s + 1.0).sqrt() - 1.0) / (3f64.sqrt() - 1.0)
}

fn relation_bprime(b: f64) -> f64 {
    ((b * b + 1.0).sqrt() - 1.0) / (2f64.sqrt() - 1.0)
}

pub fn scatter(t: &Table) -> Result<String, CliError> {
    let mut svg = String::new();
    open(&mut svg, "monotone relations");
    let f = Frame {
        x: (0.0, 1.0),
        y: (0.0, 1.0),
    };
    axes(&mut svg, &f, "S or B", "S3 or S2");
    let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    polyline(&mut svg, &f, &[(0.0, 0.0), (1.0, 1.0)], "#888888", true);
    let pairs = [
        ("steering_S", "steering_S3", relation_s3 as fn(f64) -> f64),
        ("bell_B", "steering_S2", relation_bprime as fn(f64) -> f64),
    ];
    for (k, (xn, yn, rel)) in pairs.into_iter().enumerate() {
        let color = PALETTE[k];
        let curve: Vec<(f64, f64)> = grid.iter().map(|&x| (x, rel(x))).collect();
        polyline(&mut svg, &f, &curve, color, false);
        legend(&mut svg, k, color, &format!("{yn} vs {xn}"));
        if let (Some(xc), Some(yc)) = (t.column(xn), t.column(yn)) {
            for r in &t.rows {
                if let (Some(x), Some(y)) = (r[xc], r[yc]) {
                    marker(&mut svg, &f, x, y, color);
                }
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render(kind: PlotKind, csv_text: &str, select: &[String]) -> Result<String, CliError> {
    let t = Table::parse(csv_text)?;
    match kind {
        PlotKind::Curves => curves(&t, select),
        PlotKind::Heatmap => heatmap(&t, select),
        PlotKind::Scatter => scatter(&t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_csv_gives_empty_axes() {
        for kind in [PlotKind::Curves, PlotKind::Heatmap, PlotKind::Scatter] {
            let svg = render(kind, "", &[]).unwrap();
            assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
            assert!(!svg.contains("<circle"));
        }
        assert!(render(PlotKind::Curves, "p,fef\n", &[]).is_ok());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(render(PlotKind::Curves, "p,fef\n0.1,abc\n", &[]).is_err());
        assert!(render(PlotKind::Heatmap, "p,fef\n0.1,0.2\n", &[]).is_err());
    }

    #[test]
    fn curves_draw_threshold_lines_and_series() {
        let svg = render(PlotKind::Curves, "p,fef,bell_B\n0,0,0\n0.5,0.25,0\n1,1,1\n", &[]).unwrap();
        assert_eq!(svg.matches("stroke-dasharray").count(), 3);
        assert!(svg.contains(">fef</text>") && svg.contains(">bell_B</text>"));
    }

    #[test]
    fn relation_curves_stay_below_diagonal() {
        for k in 1..100 {
            let x = k as f64 / 100.0;
            assert!(relation_s3(x) < x && relation_bprime(x) < x);
        }
        assert!((relation_bprime(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heatmap_uses_plateau_colors() {
        let svg = render(PlotKind::Heatmap, "p,q,hierarchy_H\n0,0,0\n0,1,1\n1,0,2\n1,1,3\n", &[]).unwrap();
        assert_eq!(svg.matches("<rect").count(), 5);
        assert!(svg.contains("#b30000"));
    }
}
