//! Minimal static SVG emission for scan heatmaps. No plotting dependency;
//! the output is a deterministic string.

/// Diverging blue-white-red map on [-1, 1].
fn diverging_color(x: f64) -> (u8, u8, u8) {
    let x = x.clamp(-1.0, 1.0);
    if x >= 0.0 {
        let t = x;
        (255, (255.0 * (1.0 - 0.8 * t)) as u8, (255.0 * (1.0 - t)) as u8)
    } else {
        let t = -x;
        ((255.0 * (1.0 - t)) as u8, (255.0 * (1.0 - 0.8 * t)) as u8, 255)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Polar heatmap of values over local spherical coordinates: radius is
/// theta_loc / pi, angle is phi_loc. Points are (theta_loc, phi_loc, value).
pub fn polar_heatmap(points: &[(f64, f64, f64)], title: &str) -> String {
    let size = 640.0f64;
    let center = size / 2.0;
    let radius = 0.44 * size;
    let vmax = points
        .iter()
        .map(|p| p.2.abs())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut svg = String::with_capacity(64 * points.len() + 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>\n\
         <circle cx=\"{center}\" cy=\"{center}\" r=\"{radius}\" fill=\"none\" \
         stroke=\"#888\" stroke-width=\"1\"/>\n"
    ));
    for &(theta_loc, phi_loc, value) in points {
        let r = radius * (theta_loc / std::f64::consts::PI).clamp(0.0, 1.0);
        let x = center + r * phi_loc.cos();
        let y = center - r * phi_loc.sin();
        let (cr, cg, cb) = diverging_color(value / vmax);
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.6\" fill=\"rgb({cr},{cg},{cb})\"/>\n",
            x, y
        ));
    }
    svg.push_str(&format!(
        "<text x=\"12\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n\
         <text x=\"12\" y=\"44\" font-family=\"sans-serif\" font-size=\"12\">\
         scale: |value| max = {}</text>\n</svg>\n",
        fmt(vmax)
    ));
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_is_deterministic_and_well_formed() {
        let pts = vec![(0.3, 1.0, 0.5), (1.2, 2.0, -0.25), (2.9, 4.5, 0.0)];
        let a = polar_heatmap(&pts, "demo");
        let b = polar_heatmap(&pts, "demo");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<circle").count(), 4); // 3 points + outline
    }
}
