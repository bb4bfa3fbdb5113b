//! Log-log lifespan plot as a standalone SVG document.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;

/// Plots `(eps, T)` points on log-log axes together with a reference curve
/// sampled from `reference` over the same amplitude range.
pub fn lifespan_plot(points: &[(f64, f64)], reference: Option<&dyn Fn(f64) -> f64>, title: &str) -> String {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|&(e, t)| e > 0.0 && t > 0.0).collect();
    let (emin, emax) = bounds(pts.iter().map(|p| p.0));
    let curve: Vec<(f64, f64)> = match reference {
        Some(f) => (0..=64)
            .map(|j| {
                let e = emin * (emax / emin).powf(j as f64 / 64.0);
                (e, f(e))
            })
            .filter(|&(_, t)| t > 0.0 && t.is_finite())
            .collect(),
        None => Vec::new(),
    };
    let (tmin, tmax) = bounds(pts.iter().chain(&curve).map(|p| p.1));
    let (lx0, lx1) = (emin.log10() - 0.05, emax.log10() + 0.05);
    let (ly0, ly1) = (tmin.log10() - 0.1, tmax.log10() + 0.1);
    let x = |e: f64| MARGIN + (e.log10() - lx0) / (lx1 - lx0) * (WIDTH - 2.0 * MARGIN);
    let y = |t: f64| HEIGHT - MARGIN - (t.log10() - ly0) / (ly1 - ly0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    );
    for d in (lx0.ceil() as i32)..=(lx1.floor() as i32) {
        let px = x(10f64.powi(d));
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{top}" x2="{px:.2}" y2="{bottom}" stroke="#ddd"/>"##);
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">1e{d}</text>"#,
            bottom + 16.0
        );
    }
    for d in (ly0.ceil() as i32)..=(ly1.floor() as i32) {
        let py = y(10f64.powi(d));
        let _ = writeln!(s, r##"<line x1="{left}" y1="{py:.2}" x2="{right}" y2="{py:.2}" stroke="#ddd"/>"##);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="12">1e{d}</text>"#,
            left - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">epsilon</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" transform="rotate(-90 18 {})" text-anchor="middle" font-family="sans-serif" font-size="13">lifespan T</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    if curve.len() > 1 {
        let path: Vec<String> = curve.iter().map(|&(e, t)| format!("{:.2},{:.2}", x(e), y(t))).collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#c33" stroke-dasharray="6 4"/>"##,
            path.join(" ")
        );
    }
    for &(e, t) in &pts {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#248"/>"##, x(e), y(t));
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(lo > 0.0 && hi.is_finite()) {
        return (0.1, 1.0);
    }
    if hi / lo < 1.5 {
        return (lo / 1.5, hi * 1.5);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_points_and_reference() {
        let pts = [(0.8, 4.0), (0.4, 9.0), (0.2, 19.0)];
        let svg = lifespan_plot(&pts, Some(&|e: f64| 3.0 / e), "n=1 <test>");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("&lt;test&gt;"));
        let bare = lifespan_plot(&pts, None, "t");
        assert!(!bare.contains("<polyline"));
    }
}
