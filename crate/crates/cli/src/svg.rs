//! Minimal SVG plots of triangle-mesh fields.

use std::fmt::Write;

use pseudosolid::mesh::Mesh;

pub type Segment = [[f64; 2]; 2];

/// Iso-line of a P1 field at `level`, one segment per crossed triangle.
///
/// Vertices exactly at `level` count as above it, so every crossed triangle
/// contributes exactly one segment.
pub fn contour_segments(mesh: &Mesh, field: &[f64], level: f64) -> Vec<Segment> {
    assert_eq!(field.len(), mesh.num_nodes(), "field length");
    let mut out = Vec::new();
    for t in &mesh.triangles {
        let mut pts = Vec::with_capacity(2);
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            let (fa, fb) = (field[a] - level, field[b] - level);
            if (fa >= 0.0) != (fb >= 0.0) {
                let s = fa / (fa - fb);
                let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                pts.push([pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]);
            }
        }
        if pts.len() == 2 {
            out.push([pts[0], pts[1]]);
        }
    }
    out
}

/// A plot in data coordinates, `y` up.
pub struct Plot {
    min: [f64; 2],
    max: [f64; 2],
    width: f64,
    body: String,
}

impl Plot {
    /// Plot covering `points` with a 5% margin, `width` pixels wide.
    pub fn covering(points: &[[f64; 2]], width: f64) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for c in 0..2 {
                min[c] = min[c].min(p[c]);
                max[c] = max[c].max(p[c]);
            }
        }
        let pad = 0.05 * (max[0] - min[0]).max(max[1] - min[1]).max(1e-12);
        Self {
            min: [min[0] - pad, min[1] - pad],
            max: [max[0] + pad, max[1] + pad],
            width,
            body: String::new(),
        }
    }

    fn scale(&self) -> f64 {
        self.width / (self.max[0] - self.min[0])
    }

    fn height(&self) -> f64 {
        (self.max[1] - self.min[1]) * self.scale()
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let s = self.scale();
        ((p[0] - self.min[0]) * s, (self.max[1] - p[1]) * s)
    }

    /// Fills each triangle with a gray level from the mean of `field`
    /// mapped from `[lo, hi]` to white..black.
    pub fn shade_triangles(&mut self, mesh: &Mesh, field: &[f64], lo: f64, hi: f64) {
        self.body.push_str("<g stroke=\"none\">\n");
        for t in &mesh.triangles {
            let v = (t.iter().map(|&i| field[i]).sum::<f64>() / 3.0 - lo) / (hi - lo);
            let g = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let pts: Vec<String> = t
                .iter()
                .map(|&i| {
                    let (x, y) = self.map(mesh.nodes[i]);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(self.body, "<polygon points=\"{}\" fill=\"rgb({g},{g},{g})\"/>", pts.join(" "));
        }
        self.body.push_str("</g>\n");
    }

    pub fn segments(&mut self, segs: &[Segment], color: &str, width: f64) {
        let _ = write!(self.body, "<path fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" d=\"");
        for s in segs {
            let (x0, y0) = self.map(s[0]);
            let (x1, y1) = self.map(s[1]);
            let _ = write!(self.body, "M{x0:.2} {y0:.2}L{x1:.2} {y1:.2}");
        }
        self.body.push_str("\"/>\n");
    }

    pub fn closed_curve(&mut self, points: &[[f64; 2]], color: &str, width: f64, dashed: bool) {
        let pts: Vec<String> = points
            .iter()
            .map(|&p| {
                let (x, y) = self.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<polygon points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash}/>",
            pts.join(" ")
        );
    }

    pub fn label(&mut self, text: &str) {
        let _ = writeln!(self.body, "<text x=\"8\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">{text}</text>");
    }

    pub fn to_svg(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height()
        )
    }
}
