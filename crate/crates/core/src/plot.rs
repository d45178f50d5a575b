//! Density profiles as standalone SVG documents.

use std::fmt::Write as _;

use crate::measure::Measure1D;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 400.0;
/// Upper end of the density axis.
pub const Y_MAX: f64 = 1.05;

const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;

/// One density snapshot with an optional reference curve.
#[derive(Debug, Clone)]
pub struct DensityPlot<'a> {
    pub density: &'a Measure1D,
    pub time: f64,
    /// Samples `(r, rho)` of a reference profile, drawn dashed.
    pub reference: Option<Vec<(f64, f64)>>,
    /// Annotates the mass absorbed by the exit when present.
    pub show_exit: bool,
}

struct Frame {
    a: f64,
    r: f64,
}

impl Frame {
    fn x(&self, r: f64) -> f64 {
        MARGIN_L + (r - self.a) / (self.r - self.a) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, rho: f64) -> f64 {
        let h = HEIGHT - MARGIN_T - MARGIN_B;
        MARGIN_T + h * (1.0 - rho.clamp(0.0, Y_MAX) / Y_MAX)
    }
}

/// Step plot of the cell densities on `[a, R] x [0, 1.05]`.
pub fn density_svg(p: &DensityPlot) -> String {
    let m = p.density;
    let dom = m.domain();
    let fr = Frame { a: dom.a(), r: dom.r_max() };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    axes(&mut s, &fr);
    let mut d = String::new();
    let edges = m.edges();
    for (i, &rho) in m.rho().iter().enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{:.2},{:.2} ", fr.x(edges[i]), fr.y(rho));
        let _ = write!(d, "L{:.2},{:.2} ", fr.x(edges[i + 1]), fr.y(rho));
    }
    let _ = writeln!(
        s,
        r##"<path d="{}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>"##,
        d.trim_end()
    );
    if let Some(reference) = &p.reference {
        let mut d = String::new();
        for (i, &(r, rho)) in reference.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", fr.x(r), fr.y(rho));
        }
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="none" stroke="#c0392b" stroke-width="1" stroke-dasharray="5,4"/>"##,
            d.trim_end()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">t = {}</text>"#,
        WIDTH / 2.0,
        fmt_num(p.time)
    );
    if p.show_exit && dom.has_exit() {
        let x = fr.x(dom.a());
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#27ae60" stroke-width="4"/>"##,
            fr.y(0.0),
            fr.y(m.exit_mass().min(1.0) * Y_MAX)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12">exit mass {:.4}</text>"#,
            x + 8.0,
            MARGIN_T + 14.0,
            m.exit_mass()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn axes(s: &mut String, fr: &Frame) {
    let (x0, x1) = (fr.x(fr.a), fr.x(fr.r));
    let (y0, y1) = (fr.y(0.0), fr.y(Y_MAX));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let r = fr.a + (fr.r - fr.a) * k as f64 / 5.0;
        let x = fr.x(r);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            y0 + 16.0,
            fmt_num(r)
        );
    }
    for k in 0..=5 {
        let rho = 0.2 * k as f64;
        let y = fr.y(rho);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{rho:.1}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">r</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 8.0
    );
}

/// Shortest decimal form with at most four places.
fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain1D;

    #[test]
    fn svg_has_fixed_canvas_and_one_segment_per_cell() {
        let d = Domain1D::flat(0.0, 2.0, true).unwrap();
        let m = Measure1D::new(d, vec![0.5, 0.5, 0.25, 0.25], 0.25).unwrap();
        let svg = density_svg(&DensityPlot {
            density: &m,
            time: 1.5,
            reference: None,
            show_exit: true,
        });
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(r#"width="800" height="400""#));
        assert!(svg.contains("t = 1.5"));
        assert!(svg.contains("exit mass 0.2500"));
        let path = svg.lines().find(|l| l.contains("#1f4e9c")).unwrap();
        assert_eq!(path.matches('L').count(), 7);
    }

    #[test]
    fn density_axis_spans_the_plot() {
        let fr = Frame { a: 1.0, r: 10.0 };
        assert_eq!(fr.y(0.0), HEIGHT - MARGIN_B);
        assert_eq!(fr.y(Y_MAX), MARGIN_T);
        assert_eq!(fr.x(10.0), WIDTH - MARGIN_R);
        assert_eq!(fmt_num(6.0), "6");
        assert_eq!(fmt_num(0.25), "0.25");
    }
}
