//! Text artifacts: the distance-matrix CSV, affinity tables and radar plots.

use std::fmt::Write as _;

use thiserror::Error;

use crate::protocol::{trial_seed, AffinityOrdering, DistanceMatrix, Metric, PairResult, Ranked};

pub const MATRIX_HEADER: &str = "language_a,language_b,xi,nu,d1,d2,d1_m,d2_m,seed";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("matrix csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("matrix csv has no rows")]
    Empty,
}

/// Serializes a matrix; `seed` is the global seed the trial seeds derive from.
pub fn matrix_csv(matrix: &DistanceMatrix, seed: u64) -> String {
    let mut out = String::from(MATRIX_HEADER);
    out.push('\n');
    for e in &matrix.entries {
        let _ = writeln!(out, "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{}", e.a, e.b, e.xi, e.nu, e.d1, e.d2, e.d1_m, e.d2_m, seed);
    }
    out
}

/// Parses [`matrix_csv`] output. Languages keep their order of first appearance.
pub fn parse_matrix_csv(text: &str) -> Result<(DistanceMatrix, u64), ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MATRIX_HEADER => {}
        _ => return Err(ReportError::Csv { line: 1, message: format!("expected header `{MATRIX_HEADER}`") }),
    }
    let mut languages: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    let mut global = None;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| ReportError::Csv { line: i + 1, message };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(bad(format!("expected 9 columns, got {}", cols.len())));
        }
        let num = |k: usize| cols[k].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", k + 1)));
        let seed: u64 = cols[8].parse().map_err(|e| bad(format!("seed: {e}")))?;
        if *global.get_or_insert(seed) != seed {
            return Err(bad("rows disagree on the global seed".into()));
        }
        let (a, b) = (cols[0].to_string(), cols[1].to_string());
        for id in [&a, &b] {
            if !languages.contains(id) {
                languages.push(id.clone());
            }
        }
        let seeds = [trial_seed(seed, &a, &b, &a), trial_seed(seed, &a, &b, &b)];
        let e = PairResult { xi: num(2)?, nu: num(3)?, d1: num(4)?, d2: num(5)?, d1_m: num(6)?, d2_m: num(7)?, seeds, a, b };
        entries.push(e);
    }
    let seed = global.ok_or(ReportError::Empty)?;
    Ok((DistanceMatrix { languages, entries }, seed))
}

/// Splits an ordering into contiguous groups of two or three, cutting where
/// the mean gap between neighbouring distances is largest. Orderings of three
/// or fewer stay whole.
pub fn group_by_gaps(order: &[Ranked]) -> Vec<Vec<Ranked>> {
    let n = order.len();
    if n <= 3 {
        return vec![order.to_vec()];
    }
    let gap = |i: usize| order[i].distance - order[i - 1].distance;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stack = vec![(0usize, Vec::<usize>::new())];
    while let Some((start, cuts)) = stack.pop() {
        if start == n {
            let score = cuts.iter().map(|&c| gap(c)).sum::<f64>() / cuts.len().max(1) as f64;
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, cuts));
            }
            continue;
        }
        for size in [3, 2] {
            let end = start + size;
            if end <= n {
                let mut next = cuts.clone();
                if end < n {
                    next.push(end);
                }
                stack.push((end, next));
            }
        }
    }
    let cuts = best.map(|(_, c)| c).unwrap_or_default();
    let mut groups = Vec::new();
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(n)) {
        groups.push(order[start..c].to_vec());
        start = c;
    }
    groups
}

/// Markdown and CSV tables of the orderings under one distance pair.
///
/// Languages are written as their 1-based position in the matrix; cells
/// where the two orderings disagree are emphasised.
pub fn affinity_tables(matrix: &DistanceMatrix, orderings: &[AffinityOrdering], manhattan: bool) -> (String, String) {
    let (m1, m2) = if manhattan { (Metric::D1M, Metric::D2M) } else { (Metric::D1, Metric::D2) };
    let number = |id: &str| matrix.languages.iter().position(|l| l == id).map(|p| p + 1).unwrap_or(0);
    let mut md = String::new();
    let _ = writeln!(md, "| # | language | by {} | by {} | groups by {} |", m1.name(), m2.name(), m1.name());
    let _ = writeln!(md, "|---|---|---|---|---|");
    let mut csv = format!("language,position,{},{},{}_distance,{}_distance,discrepancy,tied\n", m1.name(), m2.name(), m1.name(), m2.name());
    for o in orderings {
        let marks = if manhattan { &o.manhattan_discrepancy_marks } else { &o.discrepancy_marks };
        let (x, y) = (o.order(m1), o.order(m2));
        let cells = |order: &[Ranked]| {
            order
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let n = number(&r.language);
                    if marks.contains(&i) {
                        format!("**{n}**")
                    } else {
                        n.to_string()
                    }
                })
                .collect::<Vec<_>>()
                .join(", ")
        };
        let groups = group_by_gaps(x)
            .iter()
            .map(|g| g.iter().map(|r| number(&r.language).to_string()).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join(" | ");
        let _ = writeln!(md, "| {} | {} | {} | {} | {} |", number(&o.language), o.language, cells(x), cells(y), groups);
        for (i, (p, q)) in x.iter().zip(y).enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{:?},{:?},{},{}",
                o.language,
                i + 1,
                p.language,
                q.language,
                p.distance,
                q.distance,
                marks.contains(&i),
                p.tied || q.tied
            );
        }
    }
    md.push_str("\nLegend: ");
    md.push_str(&matrix.languages.iter().enumerate().map(|(i, l)| format!("{} = {l}", i + 1)).collect::<Vec<_>>().join(", "));
    md.push_str(". Bold entries differ between the two orderings.\n");
    (md, csv)
}

const RADAR_SIZE: f64 = 480.0;
const RADAR_RADIUS: f64 = 170.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Radar chart for one language: one axis per other language in matrix
/// order, two polygons for the given distances, linear radius scaled to
/// `scale` (the largest distance in the matrix).
pub fn radar_svg(matrix: &DistanceMatrix, language: &str, metrics: [Metric; 2], scale: f64) -> String {
    let axes: Vec<&String> = matrix.languages.iter().filter(|l| *l != language).collect();
    let c = RADAR_SIZE / 2.0;
    let point = |k: usize, r: f64| {
        let angle = std::f64::consts::TAU * k as f64 / axes.len() as f64 - std::f64::consts::FRAC_PI_2;
        (c + r * angle.cos(), c + r * angle.sin())
    };
    let radius = |d: f64| if scale > 0.0 && d.is_finite() { RADAR_RADIUS * (d / scale).clamp(0.0, 1.0) } else { 0.0 };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{RADAR_SIZE}" height="{RADAR_SIZE}" viewBox="0 0 {RADAR_SIZE} {RADAR_SIZE}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<title>{} ({} / {})</title>"#, escape(language), metrics[0].name(), metrics[1].name());
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for ring in 1..=4 {
        let r = RADAR_RADIUS * ring as f64 / 4.0;
        let _ = writeln!(svg, r##"<circle cx="{c}" cy="{c}" r="{r:.3}" fill="none" stroke="#ccc"/>"##);
    }
    for (k, name) in axes.iter().enumerate() {
        let (x, y) = point(k, RADAR_RADIUS);
        let (lx, ly) = point(k, RADAR_RADIUS + 24.0);
        let _ = writeln!(svg, r##"<line x1="{c}" y1="{c}" x2="{x:.3}" y2="{y:.3}" stroke="#999"/>"##);
        let _ = writeln!(svg, r#"<text x="{lx:.3}" y="{ly:.3}" text-anchor="middle">{}</text>"#, escape(name));
    }
    for (metric, colour) in metrics.iter().zip(["#1f77b4", "#d62728"]) {
        let pts: Vec<String> = axes
            .iter()
            .enumerate()
            .map(|(k, other)| {
                let (x, y) = point(k, radius(matrix.distance(language, other, *metric).unwrap_or(0.0)));
                format!("{x:.3},{y:.3}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="{}" points="{}" fill="{colour}" fill-opacity="0.15" stroke="{colour}" stroke-width="2"/>"#,
            metric.name(),
            pts.join(" ")
        );
    }
    for (i, (metric, colour)) in metrics.iter().zip(["#1f77b4", "#d62728"]).enumerate() {
        let y = 18.0 + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<rect x="10" y="{:.1}" width="10" height="10" fill="{colour}"/>"#, y - 9.0);
        let _ = writeln!(svg, r#"<text x="26" y="{y:.1}">{}</text>"#, metric.name());
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">scale {scale:.4}</text>"#, RADAR_SIZE - 10.0, RADAR_SIZE - 10.0);
    svg.push_str("</svg>\n");
    svg
}
