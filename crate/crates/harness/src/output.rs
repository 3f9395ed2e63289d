//! CSV and SVG artifacts.
//!
//! Ensemble curves are written one row per arm and grid point under the
//! header [`CSV_HEADER`]. Times carry three decimals and errors seventeen
//! significant digits, so a parsed file reproduces the written series exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use crate::ensemble::EnsembleSummary;

pub const CSV_HEADER: [&str; 5] = ["arm", "time_s", "geo_rel_error", "n_trials", "n_finite"];

pub fn format_time(t: f64) -> String {
    format!("{t:.3}")
}

pub fn format_error(e: f64) -> String {
    format!("{e:.16e}")
}

pub fn write_csv<W: Write>(out: W, summaries: &[EnsembleSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in summaries {
        for p in &s.curve {
            w.write_record([
                s.arm.clone(),
                format_time(p.t),
                format_error(p.geo_rel_error),
                p.n_trials.to_string(),
                p.n_finite.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn csv_bytes(summaries: &[EnsembleSummary]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(&mut buf, summaries)?;
    Ok(buf)
}

pub fn emit_csv(summaries: &[EnsembleSummary], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(std::io::BufWriter::new(file), summaries)
        .with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub arm: String,
    pub time_s: f64,
    pub geo_rel_error: f64,
    pub n_trials: usize,
    pub n_finite: usize,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    anyhow::ensure!(
        header == CSV_HEADER,
        "unexpected CSV header {header:?}, expected {CSV_HEADER:?}"
    );
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Log-scale plot of error against time, one polyline per arm. Points
/// without a positive finite error are left out.
pub fn render_svg(rows: &[CsvRow]) -> String {
    // arm -> (first appearance, points)
    type Series = (usize, Vec<(f64, f64)>);
    let mut arms: BTreeMap<&str, Series> = BTreeMap::new();
    for row in rows {
        let order = arms.len();
        let entry = arms.entry(&row.arm).or_insert((order, Vec::new()));
        if row.geo_rel_error.is_finite() && row.geo_rel_error > 0.0 {
            entry.1.push((row.time_s, row.geo_rel_error.log10()));
        }
    }
    let mut arms: Vec<_> = arms.into_iter().collect();
    arms.sort_by_key(|(_, (order, _))| *order);

    let points = arms.iter().flat_map(|(_, (_, p))| p.iter());
    let (mut t_max, mut y_lo, mut y_hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(t, y) in points {
        t_max = t_max.max(t);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (-1.0, 0.0);
    }
    let (y_lo, y_hi) = (y_lo.floor(), y_hi.ceil().max(y_lo.floor() + 1.0));
    let t_max = if t_max > 0.0 { t_max } else { 1.0 };
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let x_of = |t: f64| MARGIN_LEFT + t / t_max * plot_w;
    let y_of = |y: f64| MARGIN_Y + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let step = ((y_hi - y_lo) / 8.0).ceil().max(1.0);
    let mut decade = y_lo;
    while decade <= y_hi {
        let y = y_of(decade);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{decade}</text>"##,
            MARGIN_LEFT + plot_w,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
        decade += step;
    }
    for k in 0..=5 {
        let t = t_max * k as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.2}</text>"#,
            x_of(t),
            MARGIN_Y + plot_h + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 6.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">geometric mean relative error</text>"#,
        MARGIN_Y + plot_h / 2.0
    );
    for (i, (arm, (_, pts))) in arms.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !pts.is_empty() {
            let coords: Vec<String> = pts
                .iter()
                .map(|&(t, y)| format!("{:.2},{:.2}", x_of(t), y_of(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                coords.join(" ")
            );
        }
        let ly = MARGIN_Y + 14.0 + 16.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            lx + 24.0,
            escape(arm)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn emit_svg_plot(csv_path: &Path, svg_path: &Path) -> Result<()> {
    let rows = read_csv(csv_path)?;
    std::fs::write(svg_path, render_svg(&rows))
        .with_context(|| format!("writing {}", svg_path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{CurvePoint, EnsembleSummary};
    use proptest::prelude::*;

    fn summary(arm: &str, points: &[(f64, f64)]) -> EnsembleSummary {
        EnsembleSummary {
            arm: arm.into(),
            trials: Vec::new(),
            curve: points
                .iter()
                .map(|&(t, e)| CurvePoint {
                    t,
                    geo_rel_error: e,
                    n_trials: 2,
                    n_finite: if e.is_finite() { 2 } else { 1 },
                })
                .collect(),
        }
    }

    #[test]
    fn empty_ensemble_list_is_header_only() {
        let text = String::from_utf8(csv_bytes(&[]).unwrap()).unwrap();
        assert_eq!(text, "arm,time_s,geo_rel_error,n_trials,n_finite\n");
        assert!(parse_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn single_sample_row() {
        let text = String::from_utf8(csv_bytes(&[summary("asj", &[(0.0, 1.0)])]).unwrap()).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "asj,0.000,1.0000000000000000e0,2,2"
        );
    }

    #[test]
    fn non_finite_errors_survive() {
        let s = summary("x", &[(0.0, f64::NAN), (0.01, f64::INFINITY)]);
        let rows = parse_csv(std::str::from_utf8(&csv_bytes(&[s]).unwrap()).unwrap()).unwrap();
        assert!(rows[0].geo_rel_error.is_nan());
        assert_eq!(rows[1].geo_rel_error, f64::INFINITY);
        assert_eq!(rows[0].n_finite, 1);
    }

    #[test]
    fn arm_names_with_commas_are_quoted() {
        let s = summary("asj-r, p=0.01", &[(0.0, 1.0)]);
        let rows = parse_csv(std::str::from_utf8(&csv_bytes(&[s]).unwrap()).unwrap()).unwrap();
        assert_eq!(rows[0].arm, "asj-r, p=0.01");
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(parse_csv("arm,t,err,n,m\n").is_err());
    }

    #[test]
    fn svg_has_one_polyline_per_arm() {
        let rows = vec![
            CsvRow {
                arm: "a".into(),
                time_s: 0.0,
                geo_rel_error: 1.0,
                n_trials: 1,
                n_finite: 1,
            },
            CsvRow {
                arm: "a".into(),
                time_s: 1.0,
                geo_rel_error: 1e-6,
                n_trials: 1,
                n_finite: 1,
            },
            CsvRow {
                arm: "b<c>".into(),
                time_s: 0.5,
                geo_rel_error: 1e-3,
                n_trials: 1,
                n_finite: 1,
            },
        ];
        let svg = render_svg(&rows);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c&gt;"));
        assert!(svg.contains(">1e-6<"));
    }

    #[test]
    fn svg_of_empty_csv_is_well_formed() {
        let svg = render_svg(&[]);
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    proptest! {
        #[test]
        fn errors_round_trip_exactly(errors in prop::collection::vec(any::<f64>(), 1..20)) {
            let points: Vec<(f64, f64)> = errors
                .iter()
                .enumerate()
                .map(|(k, &e)| (k as f64 * 0.01, e))
                .collect();
            let bytes = csv_bytes(&[summary("arm", &points)]).unwrap();
            let rows = parse_csv(std::str::from_utf8(&bytes).unwrap()).unwrap();
            prop_assert_eq!(rows.len(), errors.len());
            for (row, &e) in rows.iter().zip(&errors) {
                if e.is_nan() {
                    prop_assert!(row.geo_rel_error.is_nan());
                } else {
                    prop_assert_eq!(row.geo_rel_error, e);
                }
            }
        }
    }
}
