//! 2-D projection artifacts: `id,x,y` CSV and an SVG scatter plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Categorical palette; cycles when there are more categories.
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#bcbd22", "#7f7f7f",
];

pub fn points_to_csv(points: &[(String, f64, f64)]) -> String {
    let mut out = String::from("id,x,y\n");
    for (id, x, y) in points {
        let _ = writeln!(out, "{id},{x},{y}");
    }
    out
}

/// Scatter plot. When `category_of` is given (id -> category label), points
/// are colored per category and a legend is drawn.
pub fn points_to_svg(
    points: &[(String, f64, f64)],
    category_of: Option<&BTreeMap<String, String>>,
    title: &str,
) -> String {
    let (width, height, margin) = (640.0, 480.0, 40.0);
    let (min_x, max_x) = bounds(points.iter().map(|p| p.1));
    let (min_y, max_y) = bounds(points.iter().map(|p| p.2));
    let span_x = (max_x - min_x).max(1e-12);
    let span_y = (max_y - min_y).max(1e-12);
    let sx = |x: f64| margin + (x - min_x) / span_x * (width - 2.0 * margin);
    // SVG y grows downward.
    let sy = |y: f64| height - margin - (y - min_y) / span_y * (height - 2.0 * margin);

    let mut categories: Vec<String> = Vec::new();
    if let Some(map) = category_of {
        categories = map.values().cloned().collect();
        categories.sort_unstable();
        categories.dedup();
    }
    let color_of = |id: &str| -> &str {
        match category_of {
            Some(map) => match map.get(id) {
                Some(cat) => {
                    let idx = categories.iter().position(|c| c == cat).unwrap_or(0);
                    PALETTE[idx % PALETTE.len()]
                }
                None => "#7f7f7f",
            },
            None => PALETTE[0],
        }
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(svg, "  <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "  <rect x=\"{margin}\" y=\"{margin}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#cccccc\"/>",
        width - 2.0 * margin,
        height - 2.0 * margin
    );
    let _ = writeln!(
        svg,
        "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>",
        width / 2.0
    );
    for (id, x, y) in points {
        let _ = writeln!(
            svg,
            "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\"><title>{id}</title></circle>",
            sx(*x),
            sy(*y),
            color_of(id)
        );
    }
    for (i, cat) in categories.iter().enumerate() {
        let y = margin + 14.0 * i as f64 + 10.0;
        let _ = writeln!(
            svg,
            "  <circle cx=\"{}\" cy=\"{y}\" r=\"4\" fill=\"{}\"/>",
            width - margin + 8.0,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{cat}</text>",
            width - margin + 16.0,
            y + 3.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if min > max {
        (0.0, 1.0)
    } else {
        (min, max)
    }
}
