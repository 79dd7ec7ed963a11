//! Static SVG figures: expression heatmaps, the estimated feature grid and
//! simple line plots for the K-grid metrics.

use std::fmt::Write as _;

use ndarray::Array2;

/// Row order for a heatmap: subpopulations by decreasing weight, cells
/// within a subpopulation in their original order, noisy cells last.
/// Also returns the row index at which each band starts.
pub fn heatmap_order(lambda: &[usize], w: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut ks: Vec<usize> = (1..=w.len()).collect();
    ks.sort_by(|&a, &b| w[b - 1].total_cmp(&w[a - 1]).then(a.cmp(&b)));
    ks.push(0);
    let mut order = Vec::with_capacity(lambda.len());
    let mut starts = Vec::new();
    for k in ks {
        let before = order.len();
        order.extend((0..lambda.len()).filter(|&n| lambda[n] == k));
        if order.len() > before {
            starts.push(before);
        }
    }
    (order, starts)
}

/// Diverging blue-white-red colour for `y` clamped to `[-lim, lim]`.
pub fn diverging_color(y: f64, lim: f64) -> (u8, u8, u8) {
    let t = (y / lim).clamp(-1.0, 1.0);
    let fade = |t: f64| (255.0 * (1.0 - t.abs())).round() as u8;
    if t < 0.0 {
        (fade(t), fade(t), 255)
    } else {
        (255, fade(t), fade(t))
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const COLOR_LIMIT: f64 = 4.0;

/// Heatmap with one row per cell and one column per marker. `y` holds the
/// values to colour; entries with `observed` false are drawn black.
pub fn heatmap_svg(
    markers: &[String],
    y: &Array2<f64>,
    observed: &Array2<bool>,
    lambda: &[usize],
    w: &[f64],
    title: &str,
) -> String {
    let (nn, jn) = y.dim();
    let (order, starts) = heatmap_order(lambda, w);
    let cell_w = 16.0;
    let row_h = (600.0 / nn.max(1) as f64).clamp(0.05, 4.0);
    let (left, top) = (60.0, 40.0);
    let width = left + cell_w * jn as f64 + 20.0;
    let height = top + row_h * nn as f64 + 80.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" data-rows="{nn}" data-cols="{jn}">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, esc(title));
    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for (r, &n) in order.iter().enumerate() {
        let yy = top + r as f64 * row_h;
        let _ = write!(s, r#"<g class="cell" transform="translate({left},{yy:.3})">"#);
        for j in 0..jn {
            let fill = if observed[[n, j]] {
                let (cr, cg, cb) = diverging_color(y[[n, j]], COLOR_LIMIT);
                format!("#{cr:02x}{cg:02x}{cb:02x}")
            } else {
                "#000000".to_string()
            };
            let _ = write!(
                s,
                r#"<rect x="{:.0}" width="{cell_w:.0}" height="{row_h:.3}" fill="{fill}"/>"#,
                j as f64 * cell_w
            );
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</g>");
    for &st in starts.iter().skip(1) {
        let yy = top + st as f64 * row_h;
        let _ = writeln!(
            s,
            r##"<line class="separator" x1="{left}" x2="{:.1}" y1="{yy:.3}" y2="{yy:.3}" stroke="#ffff00" stroke-width="1.5"/>"##,
            left + cell_w * jn as f64
        );
    }
    let ly = top + row_h * nn as f64 + 12.0;
    for (j, m) in markers.iter().enumerate() {
        let x = left + (j as f64 + 0.5) * cell_w;
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{ly:.1}" font-size="9" transform="rotate(60 {x:.1} {ly:.1})">{}</text>"#,
            esc(m)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grid of the estimated feature allocation, columns with weight below
/// `min_weight` left out. Filled squares are expressed markers.
pub fn zgrid_svg(markers: &[String], z: &Array2<bool>, w: &[f64], min_weight: f64, title: &str) -> String {
    let keep: Vec<usize> = (0..w.len()).filter(|&k| w[k] >= min_weight).collect();
    let cell = 18.0;
    let (left, top) = (80.0, 50.0);
    let jn = markers.len();
    let width = left + cell * keep.len() as f64 + 20.0;
    let height = top + cell * jn as f64 + 40.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" data-cols="{}">"#,
        keep.len()
    );
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, esc(title));
    for (j, m) in markers.iter().enumerate() {
        let y = top + (j as f64 + 0.7) * cell;
        let _ = writeln!(s, r#"<text x="{:.0}" y="{y:.1}" font-size="10" text-anchor="end">{}</text>"#, left - 4.0, esc(m));
    }
    for (c, &k) in keep.iter().enumerate() {
        let x = left + c as f64 * cell;
        for j in 0..jn {
            let fill = if z[[j, k]] { "#000000" } else { "#ffffff" };
            let _ = writeln!(
                s,
                r##"<rect x="{x:.0}" y="{:.0}" width="{cell}" height="{cell}" fill="{fill}" stroke="#999999"/>"##,
                top + j as f64 * cell
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="8" text-anchor="middle">{:.1}%</text>"#,
            x + cell / 2.0,
            top + cell * jn as f64 + 12.0,
            100.0 * w[k]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Line plot of `ys` against `xs` with points marked.
pub fn line_plot_svg(xs: &[f64], ys: &[f64], title: &str, xlabel: &str, ylabel: &str) -> String {
    let (w, h) = (420.0, 300.0);
    let (l, r, t, b) = (70.0, 20.0, 30.0, 45.0);
    let finite = |v: &[f64]| {
        let lo = v.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        if lo > hi {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = finite(xs);
    let (y0, y1) = finite(ys);
    let px = |x: f64| l + (x - x0) / (x1 - x0) * (w - l - r);
    let py = |y: f64| h - b - (y - y0) / (y1 - y0) * (h - t - b);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(s, r#"<text x="{l}" y="18" font-size="13">{}</text>"#, esc(title));
    let _ = writeln!(
        s,
        r#"<path d="M{l},{t} V{} H{}" fill="none" stroke="black"/>"#,
        h - b,
        w - r
    );
    for (v, lab) in [(y0, y0), (y1, y1)] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{lab:.4}</text>"#,
            l - 4.0,
            py(v) + 3.0
        );
    }
    for &x in xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">{x}</text>"#,
            px(x),
            h - b + 12.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
        (l + w - r) / 2.0,
        h - 8.0,
        esc(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        esc(ylabel)
    );
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, pts.join(" "));
    for p in &pts {
        let (x, y) = p.split_once(',').unwrap();
        let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="steelblue"/>"#);
    }
    s.push_str("</svg>\n");
    s
}
