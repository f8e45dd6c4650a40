//! CSV ingestion and emission, and SVG I-V plots.
//!
//! Trace CSVs start with `#` comment lines carrying `key=value` metadata,
//! followed by a `t,v,i,g,n_a` header and one row per step. Numbers are
//! written with 17 significant digits so a read-back reproduces every value
//! exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fitting::{MeasuredSample, MeasuredTrace};
use crate::trace::{Trace, TraceRow};

pub const TRACE_HEADER: &str = "t,v,i,g,n_a";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders a trace in the CSV layout described at module level.
pub fn trace_csv_string(trace: &Trace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 8));
    for (key, value) in &trace.metadata {
        for line in value.lines() {
            let _ = writeln!(out, "# {key}={line}");
        }
    }
    if trace.saturated {
        out.push_str("# warning=diode current saturated at f64::MAX in at least one row\n");
    }
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(r.t),
            num(r.v),
            num(r.i),
            num(r.g),
            num(r.n_a)
        );
    }
    out
}

pub fn write_trace_csv(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, trace_csv_string(trace))?;
    Ok(())
}

/// Reads the named columns (located by header name; other columns are
/// ignored) from every row. Lines starting with `#` are comments.
fn read_columns<const K: usize>(text: &str, names: [&str; K]) -> Result<Vec<[f64; K]>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| csv_error(&e, 1))?
        .clone();
    let mut index = [0usize; K];
    for (slot, name) in index.iter_mut().zip(names) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: header_line(text),
            message: format!("missing column '{name}' in header '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        })?;
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = [0.0; K];
        for ((value, &idx), name) in row.iter_mut().zip(&index).zip(names) {
            let raw = record.get(idx).unwrap_or("");
            *value = raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column '{name}': cannot parse '{raw}' as a number"),
            })?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Parses `t,v,i` columns into a measurement.
pub fn parse_measurement_csv(text: &str, source: &str) -> Result<MeasuredTrace> {
    let samples = read_columns(text, ["t", "v", "i"])?
        .into_iter()
        .map(|[t, v, i]| MeasuredSample { t, v, i })
        .collect();
    MeasuredTrace::new(samples, source)
}

/// Parses a trace CSV as written by [`trace_csv_string`], including its
/// metadata comments.
pub fn parse_trace_csv(text: &str) -> Result<Trace> {
    let mut trace = Trace::default();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let Some((key, value)) = line.trim_start_matches('#').trim_start().split_once('=') else {
            continue;
        };
        if key == "warning" {
            trace.saturated = true;
            continue;
        }
        match trace.metadata.last_mut() {
            Some((k, v)) if k == key => {
                v.push('\n');
                v.push_str(value);
            }
            _ => trace.push_meta(key, value),
        }
    }
    trace.rows = read_columns(text, ["t", "v", "i", "g", "n_a"])?
        .into_iter()
        .map(|[t, v, i, g, n_a]| TraceRow { t, v, i, g, n_a })
        .collect();
    Ok(trace)
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Trace> {
    parse_trace_csv(&fs::read_to_string(path)?)
}

fn header_line(text: &str) -> u64 {
    text.lines()
        .position(|l| !l.trim_start().starts_with('#'))
        .map_or(1, |k| k as u64 + 1)
}

fn csv_error(e: &csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn read_measurement_csv(path: impl AsRef<Path>) -> Result<MeasuredTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_measurement_csv(&text, &path.display().to_string())
}

/// One polyline in an I-V plot.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 4] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad"];

/// SVG plot of current against voltage with axes and a legend.
pub fn iv_svg_string(series: &[Series], legend: &[String]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 540.0;
    const M: f64 = 70.0;

    let all = series.iter().flat_map(|s| s.points.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = if hi > lo { hi - lo } else { lo.abs().max(1e-12) };
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r##"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        W - 2.0 * M,
        H - 2.0 * M
    );
    if x0 < 0.0 && x1 > 0.0 {
        let x = sx(0.0);
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{M}" x2="{x:.2}" y2="{}" stroke="#444"/>"##, H - M);
    }
    if y0 < 0.0 && y1 > 0.0 {
        let y = sy(0.0);
        let _ = writeln!(out, r##"<line x1="{M}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#444"/>"##, W - M);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">V (V)</text>"#, W / 2.0, H - 20.0);
    let _ = writeln!(
        out,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">I (A)</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="{anchor}">{x:.3e}</text>"#, sx(x), H - M + 16.0);
    }
    for y in [y0, y1] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{y:.3e}</text>"#, M - 6.0, sy(y) + 4.0);
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::with_capacity(s.points.len() * 16);
        for &(x, y) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(y));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}" text-anchor="end">{}</text>"#,
            W - M - 8.0,
            M + 18.0 + 16.0 * k as f64,
            xml_escape(s.label)
        );
    }
    for (k, line) in legend.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            M + 8.0,
            M + 18.0 + 15.0 * k as f64,
            xml_escape(line)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Legend lines for a trace: every `param.*`, `mode` and `seed` entry.
pub fn legend_from_metadata(trace: &Trace) -> Vec<String> {
    trace
        .metadata
        .iter()
        .filter(|(k, _)| k.starts_with("param.") || k == "mode" || k == "seed")
        .map(|(k, v)| format!("{}={v}", k.trim_start_matches("param.")))
        .collect()
}

/// Single-polyline I-V plot of a trace.
pub fn write_iv_svg(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let series = [Series {
        label: "model",
        points: trace.rows.iter().map(|r| (r.v, r.i)).collect(),
    }];
    fs::write(path, iv_svg_string(&series, &legend_from_metadata(trace)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceRow;

    fn rows(n: usize) -> Vec<TraceRow> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 1e-6;
                TraceRow { t, v: (t * 3.1e3).sin() / 3.0, i: 1.0 / 3.0 * 1e-3 * t, g: 1.252e-3, n_a: 400.0 + k as f64 / 7.0 }
            })
            .collect()
    }

    #[test]
    fn comment_lines_and_header() {
        let mut trace = Trace { rows: rows(3), ..Default::default() };
        trace.push_meta("seed", "1");
        trace.push_meta("config", "a = 1\nb = 2");
        let text = trace_csv_string(&trace);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=1");
        assert_eq!(lines[1], "# config=a = 1");
        assert_eq!(lines[2], "# config=b = 2");
        assert_eq!(lines[3], TRACE_HEADER);
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn values_survive_a_round_trip() {
        let trace = Trace { rows: rows(12), ..Default::default() };
        let back = parse_measurement_csv(&trace_csv_string(&trace), "mem").unwrap();
        for (r, s) in trace.rows.iter().zip(back.samples()) {
            assert_eq!((r.t, r.v, r.i), (s.t, s.v, s.i));
        }
    }

    #[test]
    fn full_trace_round_trip_keeps_metadata() {
        let mut trace = Trace { rows: rows(5), ..Default::default() };
        trace.push_meta("seed", "3");
        trace.push_meta("config", "[grid]\ndt = 1e-6\n\nsteps = 5");
        trace.saturated = true;
        assert_eq!(parse_trace_csv(&trace_csv_string(&trace)).unwrap(), trace);
    }

    #[test]
    fn header_only_fails_validation() {
        let err = parse_measurement_csv("t,v,i\n", "x").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_row_names_its_line() {
        let err = parse_measurement_csv("t,v,i\n0.001,0.5,abc\n", "x").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn line_numbers_count_comment_lines() {
        let text = "# a\n# b\nt,v,i\n0,0,0\n1,0,x\n";
        match parse_measurement_csv(text, "x").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ragged_row_is_a_parse_error() {
        let err = parse_measurement_csv("t,v,i\n0,0,0\n1,2\n", "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_column_is_reported() {
        let err = parse_measurement_csv("t,v,current\n", "x").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn non_monotone_time_fails_validation() {
        let mut text = String::from("t,v,i\n");
        for k in [0, 1, 2, 3, 4, 5, 4, 7, 8, 9, 10] {
            text.push_str(&format!("{k},0,0\n"));
        }
        assert!(matches!(parse_measurement_csv(&text, "x"), Err(Error::Validation(_))));
    }

    #[test]
    fn svg_has_one_polyline_and_legend() {
        let mut trace = Trace { rows: rows(50), ..Default::default() };
        trace.push_meta("param.phi", "1e0");
        let series = [Series { label: "model", points: trace.rows.iter().map(|r| (r.v, r.i)).collect() }];
        let svg = iv_svg_string(&series, &legend_from_metadata(&trace));
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("phi=1e0"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
