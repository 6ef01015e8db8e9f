//! Self-contained SVG line plots of summary CSVs with a log-scaled y axis.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;
use crate::output::{read_summary_csv, SummaryRow};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    DistSq,
    FValue,
    GradNormSq,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Metric> {
        match s {
            "dist_sq" => Some(Metric::DistSq),
            "f_value" => Some(Metric::FValue),
            "grad_norm_sq" => Some(Metric::GradNormSq),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::DistSq => "‖x − x*‖²",
            Metric::FValue => "f(x)",
            Metric::GradNormSq => "‖∇f(x)‖²",
        }
    }

    fn pick(self, r: &SummaryRow) -> Option<(f64, f64)> {
        match self {
            Metric::DistSq => r.dist_sq_mean.zip(r.dist_sq_ci),
            Metric::FValue => Some((r.f_mean, r.f_ci)),
            Metric::GradNormSq => Some((r.grad_norm_sq_mean, r.grad_norm_sq_ci)),
        }
    }
}

struct Series {
    method: String,
    /// `(epoch, mean, ci)`
    points: Vec<(f64, f64, f64)>,
}

fn group(rows: &[SummaryRow], metric: Metric) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let Some((mean, ci)) = metric.pick(r) else { continue };
        if !mean.is_finite() {
            continue;
        }
        let point = (r.epoch as f64, mean, if ci.is_finite() { ci } else { 0.0 });
        match out.iter_mut().find(|s| s.method == r.method) {
            Some(s) => s.points.push(point),
            None => out.push(Series {
                method: r.method.clone(),
                points: vec![point],
            }),
        }
    }
    for s in &mut out {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the summary rows. Fails when no row carries the metric.
pub fn render_svg(rows: &[SummaryRow], metric: Metric, title: &str) -> Result<String, String> {
    let series = group(rows, metric);
    if series.is_empty() {
        return Err(format!("no rows with a finite {} column", metric_column(metric)));
    }
    let all = series.iter().flat_map(|s| s.points.iter());
    let positive: Vec<f64> = all
        .clone()
        .flat_map(|&(_, m, c)| [m, m + c, m - c])
        .filter(|v| *v > 0.0 && v.is_finite())
        .collect();
    // everything nonpositive: plot a flat line at the floor
    let floor = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1e-16 };
    let top = positive.iter().copied().fold(floor, f64::max);
    let (mut lo_exp, mut hi_exp) = (floor.log10().floor(), top.log10().ceil());
    if hi_exp <= lo_exp {
        hi_exp = lo_exp + 1.0;
    }
    lo_exp = lo_exp.max(hi_exp - 30.0);
    let (x_min, x_max) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_min) / x_span * plot_w;
    let py = |y: f64| {
        let v = y.max(10f64.powf(lo_exp)).log10();
        TOP + (hi_exp - v) / (hi_exp - lo_exp) * plot_h
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="18" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h
    );
    let step = ((hi_exp - lo_exp) / 8.0).ceil().max(1.0);
    let mut e = lo_exp;
    while e <= hi_exp {
        let y = py(10f64.powf(e));
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/>"#,
            LEFT - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            e as i64
        );
        e += step;
    }
    for k in 0..=4 {
        let x = x_min + x_span * k as f64 / 4.0;
        let sx = px(x);
        let _ = writeln!(
            svg,
            r#"<line x1="{sx:.2}" y1="{:.2}" x2="{sx:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + plot_h,
            TOP + plot_h + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{sx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            trim(x)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">epoch</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(metric.label())
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for (j, &(x, m, c)) in s.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, px(x), py(m + c));
        }
        for &(x, m, c) in s.points.iter().rev() {
            let _ = write!(d, "L{:.2},{:.2} ", px(x), py(m - c));
        }
        d.push('Z');
        let _ = writeln!(
            svg,
            r#"<path d="{d}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#
        );
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.method)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn metric_column(metric: Metric) -> &'static str {
    match metric {
        Metric::DistSq => "dist_sq_mean",
        Metric::FValue => "f_mean",
        Metric::GradNormSq => "grad_norm_sq_mean",
    }
}

fn trim(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.2}")
    }
}

/// Reads summary CSVs, renders, and writes `out`. Nothing is written on error.
pub fn emit_plot(inputs: &[&Path], out: &Path, metric: Metric, title: &str) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for path in inputs {
        rows.extend(read_summary_csv(path)?);
    }
    let origin = inputs.first().map(|p| p.to_path_buf()).unwrap_or_default();
    let svg = render_svg(&rows, metric, title).map_err(|message| CliError::Csv { path: origin, message })?;
    crate::output::write_file(out, svg.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(methods: &[&str], epochs: usize) -> Vec<SummaryRow> {
        methods
            .iter()
            .flat_map(|m| {
                (0..epochs).map(move |t| SummaryRow {
                    method: m.to_string(),
                    epoch: t,
                    count: 20,
                    f_mean: 1.0,
                    f_ci: 0.0,
                    dist_sq_mean: Some(10f64.powi(-(t as i32))),
                    dist_sq_ci: Some(0.1 * 10f64.powi(-(t as i32))),
                    grad_norm_sq_mean: 0.0,
                    grad_norm_sq_ci: 0.0,
                })
            })
            .collect()
    }

    #[test]
    fn one_polyline_and_band_per_method() {
        let svg = render_svg(&rows(&["rr", "so"], 5), Metric::DistSq, "t").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg, render_svg(&rows(&["rr", "so"], 5), Metric::DistSq, "t").unwrap());
    }

    #[test]
    fn empty_and_degenerate_inputs() {
        assert!(render_svg(&[], Metric::DistSq, "t").is_err());
        let mut r = rows(&["ig"], 3);
        for row in &mut r {
            row.dist_sq_mean = None;
        }
        assert!(render_svg(&r, Metric::DistSq, "t").is_err());
        // all-zero metric still renders
        let svg = render_svg(&r, Metric::GradNormSq, "<&>").unwrap();
        assert!(svg.contains("&lt;&amp;&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        // one epoch
        assert!(render_svg(&rows(&["rr"], 1), Metric::DistSq, "t").is_ok());
    }
}
