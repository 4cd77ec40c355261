//! Frontier scatter/line chart as plain SVG.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use gridsite::frontier::{pareto_filter, Dependence, FrontierRow, ModelLabel};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Series {
    label: ModelLabel,
    dependence: Dependence,
    points: Vec<(f64, f64)>,
}

/// Groups rows by `(label, dependence)` in order of first appearance and
/// keeps each group's nondominated points sorted by cost.
fn series(rows: &[FrontierRow]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for row in rows {
        let Some(p) = row.oos() else { continue };
        match out
            .iter_mut()
            .find(|s| s.label == row.label && s.dependence == row.dependence)
        {
            Some(s) => s.points.push(p),
            None => out.push(Series {
                label: row.label,
                dependence: row.dependence,
                points: vec![p],
            }),
        }
    }
    for s in &mut out {
        let mut kept = pareto_filter(&s.points, |p| *p);
        kept.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        kept.dedup();
        s.points = kept;
    }
    out
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-9 * hi.abs().max(1.0));
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.3e}")
    } else {
        format!("{v:.2}")
    }
}

pub fn render(rows: &[FrontierRow]) -> Result<String> {
    if rows.is_empty() {
        bail!("no data rows");
    }
    let groups = series(rows);
    if groups.is_empty() {
        bail!("no data rows with out-of-sample values");
    }
    let all = || groups.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = padded_range(all().map(|p| p.0));
    let (y0, y1) = padded_range(all().map(|p| p.1));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)?;
    writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )?;
    for k in 0..=TICKS {
        let f = k as f64 / TICKS as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            fmt_tick(xv)
        )?;
        writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            fmt_tick(yv)
        )?;
    }
    writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">out-of-sample average cost ($/h)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    )?;
    writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">tail-average load shed (MW)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )?;

    for (i, s) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let name = format!("{} ({})", s.label, s.dependence);
        let path: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        writeln!(
            svg,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        )?;
        for p in &s.points {
            writeln!(
                svg,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="{color}"><title>{name}: {}, {}</title></circle>"#,
                sx(p.0),
                sy(p.1),
                p.0,
                p.1
            )?;
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(
            svg,
            r#"<g class="legend"><rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/><text x="{:.2}" y="{:.2}">{name}</text></g>"#,
            ly - 10.0,
            lx + 18.0,
            ly
        )?;
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
