//! Dependency-free SVG figures: the benchmark bar chart and path overlays.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::synth::BenchReport;
use crate::trajdata::{RetrievalManifest, Trajectory};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Mean precision per mode with a one-std whisker and per-seed dots.
pub fn bench_chart(report: &BenchReport) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &format!("precision@{} ({})", report.cfg.k, report.cfg.name),
    );
    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let y = |p: f64| y0 - p.clamp(0.0, 1.0) * plot_h;
    for tick in 0..=4 {
        let p = tick as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#ddd"/><text x="{2}" y="{3:.2}" text-anchor="end">{p:.2}</text>"##,
            y(p),
            WIDTH - MARGIN,
            x0 - 6.0,
            y(p) + 4.0
        );
    }
    let n = report.modes.len().max(1) as f64;
    let slot = (WIDTH - 2.0 * MARGIN) / n;
    for (i, m) in report.modes.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let left = x0 + slot * i as f64 + slot * 0.2;
        let w = slot * 0.6;
        let cx = left + w / 2.0;
        let _ = writeln!(
            out,
            r#"<rect x="{left:.2}" y="{:.2}" width="{w:.2}" height="{:.2}" fill="{color}"/>"#,
            y(m.precision_mean),
            y0 - y(m.precision_mean)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(m.precision_mean - m.precision_std),
            y(m.precision_mean + m.precision_std)
        );
        for p in &m.precision_per_seed {
            let _ = writeln!(
                out,
                r#"<circle cx="{cx:.2}" cy="{:.2}" r="2.5" fill="black" fill-opacity="0.5"/>"#,
                y(*p)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 16.0,
            escape(&m.name)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#,
            y(m.precision_mean) - 6.0,
            m.precision_mean
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    out.push_str("</svg>\n");
    out
}

fn polyline(out: &mut String, pts: &[[f64; 2]], color: &str, width: f64, opacity: f64) {
    let coords: Vec<String> = pts
        .iter()
        .map(|p| format!("{:.2},{:.2}", p[0], p[1]))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}" stroke-opacity="{opacity}"/>"#,
        coords.join(" ")
    );
}

/// Query path in black with every matched span drawn from the query's start
/// point, so shapes are compared independent of where they happened.
///
/// `play` must contain every trajectory the manifest references.
pub fn overlay(
    query: &Trajectory,
    manifest: &RetrievalManifest,
    play: &[Trajectory],
) -> Result<String> {
    let origin = *query
        .track
        .first()
        .ok_or_else(|| Error::Validation(format!("{}: empty track", query.id)))?;
    let mut curves: Vec<Vec<[f64; 2]>> = Vec::with_capacity(manifest.matches.len() + 1);
    let rel = |t: &[[f64; 2]]| -> Vec<[f64; 2]> {
        let s = t[0];
        t.iter()
            .map(|p| [p[0] - s[0] + origin[0], p[1] - s[1] + origin[1]])
            .collect()
    };
    for m in &manifest.matches {
        let traj = play
            .iter()
            .find(|t| t.id == m.traj_id)
            .ok_or_else(|| Error::Validation(format!("trajectory {} not provided", m.traj_id)))?;
        let span = traj
            .track
            .get(m.match_start..m.match_end)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| {
                Error::Validation(format!(
                    "match [{}, {}) outside {} ({} frames)",
                    m.match_start,
                    m.match_end,
                    traj.id,
                    traj.len()
                ))
            })?;
        curves.push(rel(span));
    }
    let q = rel(&query.track);

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in curves.iter().flatten().chain(&q) {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (HEIGHT - 2.0 * MARGIN) / span;
    let map = |c: &[[f64; 2]]| -> Vec<[f64; 2]> {
        c.iter()
            .map(|p| {
                [
                    MARGIN + (p[0] - lo[0]) * scale,
                    MARGIN + (p[1] - lo[1]) * scale,
                ]
            })
            .collect()
    };

    let mut out = String::new();
    header(
        &mut out,
        &format!("{}: top {} matches", query.id, manifest.matches.len()),
    );
    for (i, c) in curves.iter().enumerate() {
        polyline(&mut out, &map(c), PALETTE[i % PALETTE.len()], 1.5, 0.6);
    }
    polyline(&mut out, &map(&q), "black", 3.0, 1.0);
    let start = map(&q[..1])[0];
    let _ = writeln!(
        out,
        r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="black"/>"#,
        start[0], start[1]
    );
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathops::split_even;
    use crate::retrieval::{retrieve, RetrievalParams};
    use crate::synth::{
        compare_selected, gen_hand, gen_play, BenchConfig, HandConfig, Mode, MotifLibrary,
    };
    use std::sync::Arc;

    #[test]
    fn chart_has_one_bar_per_mode() {
        let lib = MotifLibrary::standard();
        let mut cfg = BenchConfig::standard(&lib);
        cfg.synth.per_task = 4;
        cfg.k = 3;
        cfg.m = 10;
        let r =
            compare_selected(&lib, &cfg, &[0, 1, 2], &[Mode::Hand, Mode::HandNoFilter]).unwrap();
        let svg = bench_chart(&r);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 6);
        assert!(svg.contains("HAND(-VF)"));
    }

    #[test]
    fn overlay_draws_query_and_matches() {
        let lib = MotifLibrary::standard();
        let mut cfg = BenchConfig::standard(&lib).synth;
        cfg.per_task = 3;
        let data = gen_play(&lib, &cfg, 5).unwrap();
        let play = data.segments(0.5, 5).unwrap();
        let (hand, table) = gen_hand(&lib, "scoop", &HandConfig::for_play(&cfg), 5).unwrap();
        let q = split_even(&hand, 1, 5)
            .unwrap()
            .remove(0)
            .with_embeddings(Arc::new(table));
        let params = RetrievalParams {
            k: 4,
            m: 10,
            ..RetrievalParams::default()
        };
        let manifest = retrieve(&[q], &play, &params).unwrap();
        let svg = overlay(&hand, &manifest, &data.trajectories).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 5);
        assert!(overlay(&hand, &manifest, &[]).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        assert_eq!(escape("a<b>&\""), "a&lt;b&gt;&amp;&quot;");
    }
}
