//! Minimal SVG line charts of series against time.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One named series sharing the chart's abscissa.
pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

/// Renders `series` against `t`; with `log_y`, nonpositive values are dropped.
pub fn line_chart(title: &str, t: &[f64], series: &[Series], log_y: bool) -> String {
    let tf = |v: f64| if log_y { v.log10() } else { v };
    let visible = |v: f64| v.is_finite() && (!log_y || v > 0.0);
    let (t_lo, t_hi) = bounds(t.iter().copied());
    let (y_lo, y_hi) = bounds(series.iter().flat_map(|s| s.values.iter().copied().filter(|v| visible(*v)).map(tf)));
    let px = |x: f64| MARGIN + (x - t_lo) / (t_hi - t_lo) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let ylab = |y: f64| if log_y { format!("1e{y:.1}") } else { format!("{y:.3e}") };
    for (y, anchor) in [(y_lo, HEIGHT - MARGIN), (y_hi, MARGIN + 10.0)] {
        let _ = writeln!(out, r#"<text x="{}" y="{anchor}" text-anchor="end">{}</text>"#, MARGIN - 4.0, ylab(y));
    }
    for x in [t_lo, t_hi] {
        let _ =
            writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x:.3}</text>"#, px(x), HEIGHT - MARGIN + 16.0);
    }
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = t
            .iter()
            .zip(s.values)
            .filter(|(_, v)| visible(**v))
            .map(|(x, v)| format!("{:.2},{:.2}", px(*x), py(tf(*v))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * (k as f64 + 1.0),
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_series() {
        let t = [0.0, 1.0, 2.0];
        let a = [1.0, 0.5, 0.25];
        let b = [0.0, 1e-3, 2e-3];
        let svg = line_chart("a<b", &t, &[Series { label: "a", values: &a }, Series { label: "b", values: &b }], true);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn constant_and_empty_series_do_not_divide_by_zero() {
        let svg = line_chart("c", &[0.0, 1.0], &[Series { label: "c", values: &[2.0, 2.0] }], false);
        assert!(!svg.contains("NaN"));
        let svg = line_chart("e", &[0.0, 1.0], &[Series { label: "e", values: &[0.0, -1.0] }], true);
        assert!(!svg.contains("NaN"));
    }
}
