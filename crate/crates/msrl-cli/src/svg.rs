//! Minimal standalone SVG emitters for the harness figures: scatter
//! plots, grouped bars, and line plots (KDE curves). No styling beyond
//! what the figures need.

fn axis_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn map(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> String {
    format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\n\
         <text x=\"{MARGIN}\" y=\"{}\" font-size=\"10\">{x_lo:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{x_hi:.3}</text>\n\
         <text x=\"6\" y=\"{}\" font-size=\"10\">{y_lo:.3}</text>\n\
         <text x=\"6\" y=\"{}\" font-size=\"10\">{y_hi:.3}</text>\n",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN,
        H - MARGIN + 14.0,
        W - MARGIN,
        H - MARGIN + 14.0,
        H - MARGIN,
        MARGIN + 8.0,
    )
}

/// Scatter plot; an optional per-point class flips the marker color.
pub fn scatter(title: &str, points: &[(f64, f64)], classes: Option<&[bool]>) -> String {
    let (x_lo, x_hi) = axis_bounds(points.iter().map(|p| p.0));
    let (y_lo, y_hi) = axis_bounds(points.iter().map(|p| p.1));
    let mut out = header(title);
    out.push_str(&frame(x_lo, x_hi, y_lo, y_hi));
    for (i, (x, y)) in points.iter().enumerate() {
        let px = map(*x, x_lo, x_hi, MARGIN, W - MARGIN);
        let py = map(*y, y_lo, y_hi, H - MARGIN, MARGIN);
        let color = match classes {
            Some(c) if c[i] => "#1f77b4",
            Some(_) => "#d62728",
            None => "#1f77b4",
        };
        out.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2\" fill=\"{color}\" fill-opacity=\"0.6\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart, one bar per (label, value).
pub fn bars(title: &str, entries: &[(String, f64)]) -> String {
    let (lo, hi) = axis_bounds(entries.iter().map(|e| e.1).chain([0.0]));
    let mut out = header(title);
    out.push_str(&frame(0.0, entries.len() as f64, lo, hi));
    let slot = (W - 2.0 * MARGIN) / entries.len() as f64;
    let zero_y = map(0.0, lo, hi, H - MARGIN, MARGIN);
    for (i, (label, value)) in entries.iter().enumerate() {
        let x = MARGIN + i as f64 * slot + 0.15 * slot;
        let vy = map(*value, lo, hi, H - MARGIN, MARGIN);
        let (top, height) = if vy < zero_y {
            (vy, zero_y - vy)
        } else {
            (zero_y, vy - zero_y)
        };
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{height:.2}\" fill=\"#1f77b4\"/>\n\
             <text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"9\">{value:.3}</text>\n",
            0.7 * slot,
            x + 0.35 * slot,
            H - MARGIN + 14.0,
            escape(label),
            x + 0.35 * slot,
            top - 3.0,
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Line plot for one or more named series (used for KDE curves).
pub fn lines(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (x_lo, x_hi) = axis_bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y_lo, y_hi) = axis_bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)).chain([0.0]));
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut out = header(title);
    out.push_str(&frame(x_lo, x_hi, y_lo, y_hi));
    for (si, (label, pts)) in series.iter().enumerate() {
        let color = palette[si % palette.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    map(*x, x_lo, x_hi, MARGIN, W - MARGIN),
                    map(*y, y_lo, y_hi, H - MARGIN, MARGIN)
                )
            })
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"{color}\">{}</text>\n",
            path.join(" "),
            W - MARGIN - 90.0,
            MARGIN + 14.0 * (si as f64 + 1.0),
            escape(label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emitters_produce_svg() {
        let s = scatter("s", &[(0.0, 0.0), (1.0, 2.0)], Some(&[true, false]));
        assert!(s.starts_with("<svg"));
        assert!(s.contains("circle"));
        let b = bars("b", &[("a".into(), 0.5), ("b".into(), -0.2)]);
        assert!(b.contains("rect"));
        let l = lines("l", &[("k".into(), vec![(0.0, 0.1), (1.0, 0.9)])]);
        assert!(l.contains("polyline"));
        assert!(l.ends_with("</svg>\n"));
    }

    #[test]
    fn degenerate_ranges_do_not_panic() {
        let s = scatter("s", &[(1.0, 1.0), (1.0, 1.0)], None);
        assert!(s.contains("</svg>"));
    }
}
