//! Standalone SVG emission: layer-by-head heatmaps and per-head metric
//! curves over training steps. Output is a pure function of the input
//! tables, byte-stable across reruns.

use std::fmt::Write as _;
use std::path::Path;

use induction_lens_core::{Error, Result};

const RAMP: [(u8, u8, u8); 5] = [
    (68, 1, 84),
    (59, 82, 139),
    (33, 145, 140),
    (94, 201, 98),
    (253, 231, 37),
];

/// Sequential color ramp on t in [0, 1].
pub fn colormap(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (t as usize).min(RAMP.len() - 2);
    let frac = t - i as f64;
    let (r0, g0, b0) = RAMP[i];
    let (r1, g1, b1) = RAMP[i + 1];
    let lerp = |a: u8, b: u8| (f64::from(a) + (f64::from(b) - f64::from(a)) * frac).round() as u8;
    (lerp(r0, r1), lerp(g0, g1), lerp(b0, b1))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A layers x heads grid; `None` cells (no contributions) come out hatched.
pub struct HeatGrid {
    pub title: String,
    pub n_layers: usize,
    pub n_heads: usize,
    /// layer-major: values[layer * n_heads + head]
    pub values: Vec<Option<f64>>,
    pub seed: u64,
}

impl HeatGrid {
    pub fn value(&self, layer: usize, head: usize) -> Option<f64> {
        self.values[layer * self.n_heads + head]
    }
}

/// Render the grid with layer 0 at the bottom, a color legend with printed
/// min/max, and hatching for undefined cells.
pub fn emit_heatmap(grid: &HeatGrid, path: &Path) -> Result<()> {
    if grid.values.is_empty() || grid.n_layers * grid.n_heads != grid.values.len() {
        return Err(Error::Input("empty or inconsistent heatmap grid".into()));
    }
    let defined: Vec<f64> = grid.values.iter().flatten().copied().collect();
    let (lo, hi) = defined
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let norm = |v: f64| {
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.5
        }
    };

    let (cw, ch) = (42.0, 30.0);
    let (left, top) = (70.0, 54.0);
    let grid_w = cw * grid.n_heads as f64;
    let grid_h = ch * grid.n_layers as f64;
    let width = left + grid_w + 150.0;
    let height = top + grid_h + 60.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>"#
    );
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(
        s,
        "<!-- induction-lens v{} seed={} -->",
        induction_lens_core::VERSION,
        grid.seed
    );
    let _ = writeln!(
        s,
        r##"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse"><rect width="6" height="6" fill="#f2f2f2"/><path d="M0,6 L6,0" stroke="#999999" stroke-width="1"/></pattern></defs>"##
    );
    let _ = writeln!(
        s,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" fill="#111111">{}</text>"##,
        left,
        esc(&grid.title)
    );

    for layer in 0..grid.n_layers {
        let y = top + (grid.n_layers - 1 - layer) as f64 * ch;
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="#333333" text-anchor="end">L{}</text>"##,
            left - 8.0,
            y + ch / 2.0 + 4.0,
            layer
        );
        for head in 0..grid.n_heads {
            let x = left + head as f64 * cw;
            match grid.value(layer, head) {
                Some(v) => {
                    let (r, g, b) = colormap(norm(v));
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="rgb({r},{g},{b})" stroke="#ffffff" stroke-width="1"/>"##
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        r##"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="url(#hatch)" stroke="#ffffff" stroke-width="1"/>"##
                    );
                }
            }
        }
    }
    for head in 0..grid.n_heads {
        let x = left + head as f64 * cw + cw / 2.0;
        let _ = writeln!(
            s,
            r##"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="#333333" text-anchor="middle">H{head}</text>"##,
            top + grid_h + 16.0
        );
    }

    // legend: vertical gradient bar with printed min/max
    let lx = left + grid_w + 30.0;
    let lh = grid_h.max(60.0);
    let steps = 24;
    for i in 0..steps {
        let t = 1.0 - i as f64 / (steps - 1) as f64;
        let (r, g, b) = colormap(t);
        let y = top + lh * i as f64 / steps as f64;
        let _ = writeln!(
            s,
            r##"<rect x="{lx:.1}" y="{y:.1}" width="16" height="{:.2}" fill="rgb({r},{g},{b})"/>"##,
            lh / steps as f64 + 0.5
        );
    }
    let (min_txt, max_txt) = if defined.is_empty() {
        ("n/a".to_string(), "n/a".to_string())
    } else {
        (format!("{lo:.4}"), format!("{hi:.4}"))
    };
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="#333333">max {max_txt}</text>"##,
        lx + 22.0,
        top + 10.0
    );
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="#333333">min {min_txt}</text>"##,
        lx + 22.0,
        top + lh
    );
    let _ = writeln!(s, "</svg>");
    std::fs::write(path, s)?;
    Ok(())
}

/// One metric trace for one attention head.
pub struct CurveSeries {
    pub layer: usize,
    pub head: usize,
    pub points: Vec<(u64, f64)>,
}

/// One polyline per head over the step axis, colored by the value at the
/// reference step (nearest available step is used).
pub fn emit_curves(
    series: &[CurveSeries],
    title: &str,
    ref_step: u64,
    seed: u64,
    path: &Path,
) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Input("no curve data".into()));
    }
    let (mut min_x, mut max_x) = (u64::MAX, 0u64);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
    }
    if !(min_y.is_finite() && max_y.is_finite()) {
        return Err(Error::Numeric("non-finite curve values".into()));
    }
    if max_y - min_y < 1e-12 {
        max_y = min_y + 1.0;
    }
    let span_x = (max_x - min_x).max(1) as f64;

    let (width, height) = (640.0, 420.0);
    let (left, top, right, bottom) = (60.0, 44.0, 30.0, 46.0);
    let (pw, ph) = (width - left - right, height - top - bottom);
    let px = |x: u64| left + (x - min_x) as f64 / span_x * pw;
    let py = |y: f64| top + (1.0 - (y - min_y) / (max_y - min_y)) * ph;

    // color by value at (nearest point to) the reference step
    let ref_value = |s: &CurveSeries| -> f64 {
        s.points
            .iter()
            .min_by_key(|(x, _)| x.abs_diff(ref_step))
            .map(|&(_, y)| y)
            .unwrap_or(0.0)
    };
    let refs: Vec<f64> = series.iter().map(ref_value).collect();
    let (rlo, rhi) = refs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(
        s,
        "<!-- induction-lens v{} seed={seed} ref_step={ref_step} -->",
        induction_lens_core::VERSION
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r##"<text x="{left:.1}" y="24" font-family="sans-serif" font-size="15" fill="#111111">{}</text>"##,
        esc(title)
    );
    // axes
    let _ = writeln!(
        s,
        r##"<line x1="{left:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#444444" stroke-width="1"/>"##,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(
        s,
        r##"<line x1="{left:.1}" y1="{top:.1}" x2="{left:.1}" y2="{:.1}" stroke="#444444" stroke-width="1"/>"##,
        top + ph
    );
    for (txt, x, y, anchor) in [
        (format!("{min_x}"), left, top + ph + 16.0, "middle"),
        (format!("{max_x}"), left + pw, top + ph + 16.0, "middle"),
        (format!("{min_y:.3}"), left - 6.0, top + ph + 4.0, "end"),
        (format!("{max_y:.3}"), left - 6.0, top + 10.0, "end"),
    ] {
        let _ = writeln!(
            s,
            r##"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" fill="#333333" text-anchor="{anchor}">{txt}</text>"##
        );
    }
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="#333333" text-anchor="middle">step</text>"##,
        left + pw / 2.0,
        top + ph + 34.0
    );

    for (i, serie) in series.iter().enumerate() {
        if serie.points.is_empty() {
            continue;
        }
        let t = if rhi > rlo {
            (refs[i] - rlo) / (rhi - rlo)
        } else {
            0.5
        };
        let (r, g, b) = colormap(t);
        let pts: Vec<String> = serie
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="rgb({r},{g},{b})" stroke-width="1.5"><title>L{}H{}</title></polyline>"##,
            pts.join(" "),
            serie.layer,
            serie.head
        );
    }
    let _ = writeln!(s, "</svg>");
    std::fs::write(path, s)?;
    Ok(())
}
