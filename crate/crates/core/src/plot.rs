//! SVG scatter of a vehicle's rescaled tire projection against time.
//!
//! Accepted tracks get one color each; points in discarded tracks are black.

use std::fmt::Write;

use crate::trax::AxleTrack;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
    "#bcbd22", "#7f7f7f",
];
pub const DISCARDED: &str = "#000000";

/// Color of the `i`-th accepted track.
pub fn track_color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

pub fn render_svg(title: &str, tracks: &[AxleTrack]) -> String {
    let points = || tracks.iter().flat_map(|t| t.points.iter());
    let t0 = points().map(|p| p.t).min().unwrap_or(0);
    let t1 = points().map(|p| p.t).max().unwrap_or(0).max(t0 + 1);
    let (mut z0, mut z1) = points().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.z), hi.max(p.z))
    });
    if !z0.is_finite() {
        (z0, z1) = (0.0, 1.0);
    }
    if z1 - z0 < 1e-9 {
        z0 -= 0.5;
        z1 += 0.5;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |t: u64| MARGIN + (t - t0) as f64 / (t1 - t0) as f64 * plot_w;
    let sy = |z: f64| HEIGHT - MARGIN - (z - z0) / (z1 - z0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/></g>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(svg, r#"<g font-family="sans-serif" font-size="11">"#);
    for k in 0..=4 {
        let t = t0 + (t1 - t0) * k / 4;
        let z = z0 + (z1 - z0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(t),
            HEIGHT - MARGIN + 16.0,
            t - t0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{z:.3}</text>"#,
            MARGIN - 6.0,
            sy(z) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">relative frame</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">projected position (rescaled)</text>"#,
        y = HEIGHT / 2.0
    );
    let _ = writeln!(svg, "</g>");

    let mut accepted = 0;
    for track in tracks {
        let color = if track.accepted {
            accepted += 1;
            track_color(accepted - 1)
        } else {
            DISCARDED
        };
        let _ = writeln!(
            svg,
            r#"<g fill="{color}" class="{}">"#,
            if track.accepted {
                "accepted"
            } else {
                "discarded"
            }
        );
        for p in &track.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#,
                sx(p.t),
                sy(p.z)
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trax::ProjectedPoint;

    fn track(n: u64, z: f64, accepted: bool) -> AxleTrack {
        AxleTrack {
            points: (0..n)
                .map(|t| ProjectedPoint {
                    t: t + 10,
                    z: z - 0.01 * t as f64,
                })
                .collect(),
            accepted,
        }
    }

    #[test]
    fn accepted_tracks_get_distinct_colors() {
        let svg = render_svg(
            "v",
            &[
                track(10, 1.0, true),
                track(10, 0.5, true),
                track(2, 0.2, false),
            ],
        );
        assert_eq!(svg.matches(r#"class="accepted""#).count(), 2);
        assert!(svg.contains(track_color(0)) && svg.contains(track_color(1)));
        assert_eq!(svg.matches(&format!(r#"fill="{DISCARDED}""#)).count(), 1);
        assert_eq!(svg.matches("<circle").count(), 22);
    }

    #[test]
    fn empty_plot_is_valid_svg() {
        let svg = render_svg("<empty>", &[]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("&lt;empty&gt;"));
    }
}
