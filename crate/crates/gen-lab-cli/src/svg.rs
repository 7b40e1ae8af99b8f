//! Hand-rolled SVG emission: an MSE-vs-mesh-order line chart with +-1 std
//! shading, and mesh overlays (nodes + edges on the unit square). Output is
//! deterministic for fixed input.

use std::fmt::Write as _;

use gen_lab_core::geometry::SpatialMesh;

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series {
    pub label: String,
    /// (mesh order, mean mse, std of mse) sorted by mesh order.
    pub points: Vec<(usize, f64, f64)>,
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (0.01..1000.0).contains(&a) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// MSE against mesh order, one line per model, shaded +-1 standard
/// deviation band per series (zero-width for single seeds).
pub fn mse_chart(series: &[Series], title: &str) -> String {
    let (w, h) = (640.0, 440.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let plot_w = w - ml - mr;
    let plot_h = h - mt - mb;

    let ks: Vec<usize> = {
        let mut all: Vec<usize> = series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let (k_lo, k_hi) = (
        *ks.first().unwrap_or(&0) as f64,
        *ks.last().unwrap_or(&1) as f64,
    );
    let k_span = (k_hi - k_lo).max(1.0);
    let mut y_hi = f64::MIN;
    let mut y_lo = f64::MAX;
    for s in series {
        for &(_, mean, std) in &s.points {
            y_hi = y_hi.max(mean + std);
            y_lo = y_lo.min((mean - std).max(0.0));
        }
    }
    if !y_hi.is_finite() {
        y_hi = 1.0;
        y_lo = 0.0;
    }
    let y_span = (y_hi - y_lo).max(1e-12);
    let y_pad = 0.08 * y_span;
    let (y_min, y_max) = ((y_lo - y_pad).max(0.0), y_hi + y_pad);

    let x_of = |k: f64| ml + (k - k_lo) / k_span * plot_w;
    let y_of = |v: f64| mt + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = write!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        w / 2.0,
        title
    );

    // axes
    let _ = write!(
        svg,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    );
    let _ = write!(
        svg,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        mt + plot_h
    );
    for &k in &ks {
        let x = x_of(k as f64);
        let _ = write!(
            svg,
            r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/>"#,
            mt + plot_h,
            mt + plot_h + 5.0
        );
        let _ = write!(
            svg,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{k}</text>"#,
            mt + plot_h + 20.0
        );
    }
    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let y = y_of(v);
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{ml}" y2="{y}" stroke="black"/>"#,
            ml - 5.0
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            ml - 8.0,
            y + 4.0,
            fmt_num(v)
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">mesh order k</text>"#,
        ml + plot_w / 2.0,
        h - 12.0
    );
    let _ = write!(
        svg,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">test MSE</text>"#,
        mt + plot_h / 2.0,
        mt + plot_h / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        if s.points.is_empty() {
            continue;
        }
        // +-1 std band
        let mut band = String::new();
        for &(k, mean, std) in &s.points {
            let _ = write!(band, "{},{} ", x_of(k as f64), y_of(mean + std));
        }
        for &(k, mean, std) in s.points.iter().rev() {
            let _ = write!(
                band,
                "{},{} ",
                x_of(k as f64),
                y_of((mean - std).max(y_min))
            );
        }
        let _ = write!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            band.trim_end()
        );
        // mean line + markers
        let line: Vec<String> = s
            .points
            .iter()
            .map(|&(k, mean, _)| format!("{},{}", x_of(k as f64), y_of(mean)))
            .collect();
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for &(k, mean, _) in &s.points {
            let _ = write!(
                svg,
                r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                x_of(k as f64),
                y_of(mean)
            );
        }
        // legend
        let ly = mt + 14.0 + 18.0 * i as f64;
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            ml + plot_w - 150.0,
            ml + plot_w - 120.0
        );
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            ml + plot_w - 112.0,
            ly + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>");
    svg
}

/// Node positions and edges of a planar mesh drawn over the unit square.
pub fn mesh_overlay(mesh: &SpatialMesh, title: &str) -> String {
    let side = 420.0;
    let margin = 30.0;
    let scale = side - 2.0 * margin;
    let x_of = |v: f64| margin + v * scale;
    // flip y so the origin sits bottom-left
    let y_of = |v: f64| side - margin - v * scale + 20.0;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{}" viewBox="0 0 {side} {}">"#,
        side + 20.0,
        side + 20.0
    );
    let _ = write!(
        svg,
        r#"<rect width="{side}" height="{}" fill="white"/>"#,
        side + 20.0
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        side / 2.0,
        title
    );
    let _ = write!(
        svg,
        r##"<rect x="{margin}" y="{}" width="{scale}" height="{scale}" fill="#202840" stroke="black"/>"##,
        margin + 20.0
    );
    for &(u, v) in &mesh.undirected_edges() {
        let (p, q) = (mesh.position(u), mesh.position(v));
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="white" stroke-width="1.2"/>"#,
            x_of(p[0]),
            y_of(p[1]),
            x_of(q[0]),
            y_of(q[1])
        );
    }
    for l in 0..mesh.node_count() {
        let p = mesh.position(l);
        let _ = write!(
            svg,
            r#"<circle cx="{}" cy="{}" r="4" fill="white" stroke="black"/>"#,
            x_of(p[0]),
            y_of(p[1])
        );
    }
    svg.push_str("</svg>");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal well-formedness check: tags balance and attributes close.
    pub fn assert_well_formed_xml(doc: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = doc;
        while let Some(start) = rest.find('<') {
            let end = rest[start..]
                .find('>')
                .map(|e| start + e)
                .expect("unclosed tag");
            let tag = &rest[start + 1..end];
            assert_eq!(
                tag.matches('"').count() % 2,
                0,
                "unbalanced quotes in <{tag}>"
            );
            if let Some(name) = tag.strip_prefix('/') {
                assert_eq!(stack.pop().as_deref(), Some(name), "mismatched </{name}>");
            } else if !tag.ends_with('/') && !tag.starts_with('?') && !tag.starts_with('!') {
                let name: String = tag.chars().take_while(|c| !c.is_whitespace()).collect();
                stack.push(name);
            }
            rest = &rest[end + 1..];
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn chart_is_well_formed_and_deterministic() {
        let series = vec![
            Series {
                label: "gen".into(),
                points: vec![(2, 0.1, 0.02), (3, 0.05, 0.01), (4, 0.03, 0.0)],
            },
            Series {
                label: "np".into(),
                points: vec![(2, 0.08, 0.0), (4, 0.08, 0.0)],
            },
        ];
        let a = mse_chart(&series, "test chart");
        let b = mse_chart(&series, "test chart");
        assert_eq!(a, b);
        assert_well_formed_xml(&a);
        assert!(
            a.contains("gen") && a.contains("np"),
            "legend entries missing"
        );
    }

    #[test]
    fn overlay_is_well_formed() {
        let mesh = gen_lab_core::geometry::square_grid_mesh(3).unwrap();
        let svg = mesh_overlay(&mesh, "mesh");
        assert_well_formed_xml(&svg);
        assert_eq!(svg.matches("<circle").count(), 9);
    }
}
