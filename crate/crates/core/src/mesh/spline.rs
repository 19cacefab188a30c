//! Closed uniform cubic B-spline fitted by least squares.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use super::generate::check_simple;
use crate::error::{Error, Result};

const MIN_CONTROL_POINTS: usize = 16;
/// Chord samples per spline span in the arclength table.
const TABLE_SAMPLES_PER_SPAN: usize = 64;
/// Second-difference regularization weight relative to the data term; keeps
/// the normal equations definite when data are sparse.
const SMOOTHING_WEIGHT: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    control: Vec<[f64; 2]>,
    /// Parameter values and cumulative chord length along the curve.
    table_t: Vec<f64>,
    table_s: Vec<f64>,
}

#[inline]
fn basis(tau: f64) -> [f64; 4] {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let s = 1.0 - tau;
    [
        s * s * s / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * tau + 1.0) / 6.0,
        t3 / 6.0,
    ]
}

/// Span start index and local parameter for `t ∈ [0, 1]` on `n` spans.
#[inline]
fn span(t: f64, n: usize) -> (usize, f64) {
    let u = t * n as f64;
    let f = u.floor();
    ((f as i64).rem_euclid(n as i64) as usize, u - f)
}

impl BoundaryCurve {
    /// Fits a periodic cubic B-spline with `max(16, n/4)` control points to
    /// the ordered closed polygon `points`, using chord-length parameters.
    pub fn fit(points: &[[f64; 2]]) -> Result<Self> {
        let n = points.len();
        if n < 8 {
            return Err(Error::DegenerateBoundary(format!("spline fit needs >= 8 points, got {n}")));
        }
        check_simple(points)?;
        let nc = MIN_CONTROL_POINTS.max(n / 4);

        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let (a, b) = (points[i], points[(i + 1) % n]);
            cum.push(cum[i] + (b[0] - a[0]).hypot(b[1] - a[1]));
        }
        let total = cum[n];

        let mut ata = Mat::<f64>::zeros(nc, nc);
        let mut atb = Mat::<f64>::zeros(nc, 2);
        for i in 0..n {
            let (s0, tau) = span(cum[i] / total, nc);
            let b = basis(tau);
            let idx: [usize; 4] = std::array::from_fn(|k| (s0 + nc + k - 1) % nc);
            for a in 0..4 {
                for c in 0..4 {
                    ata[(idx[a], idx[c])] += b[a] * b[c];
                }
                atb[(idx[a], 0)] += b[a] * points[i][0];
                atb[(idx[a], 1)] += b[a] * points[i][1];
            }
        }
        let w = SMOOTHING_WEIGHT * n as f64 / nc as f64;
        for j in 0..nc {
            let idx = [(j + nc - 1) % nc, j, (j + 1) % nc];
            let coef = [1.0, -2.0, 1.0];
            for a in 0..3 {
                for c in 0..3 {
                    ata[(idx[a], idx[c])] += w * coef[a] * coef[c];
                }
            }
        }
        let llt = ata
            .llt(Side::Lower)
            .map_err(|e| Error::DegenerateBoundary(format!("spline normal equations: {e:?}")))?;
        let sol = llt.solve(&atb);
        let control: Vec<[f64; 2]> = (0..nc).map(|j| [sol[(j, 0)], sol[(j, 1)]]).collect();

        let mut curve = Self {
            control,
            table_t: Vec::new(),
            table_s: Vec::new(),
        };
        curve.build_table();
        Ok(curve)
    }

    fn build_table(&mut self) {
        let samples = self.control.len() * TABLE_SAMPLES_PER_SPAN;
        self.table_t = (0..=samples).map(|k| k as f64 / samples as f64).collect();
        self.table_s = Vec::with_capacity(samples + 1);
        self.table_s.push(0.0);
        let mut prev = self.eval(0.0);
        for k in 1..=samples {
            let p = self.eval(self.table_t[k]);
            let s = self.table_s[k - 1] + (p[0] - prev[0]).hypot(p[1] - prev[1]);
            self.table_s.push(s);
            prev = p;
        }
    }

    pub fn control_points(&self) -> &[[f64; 2]] {
        &self.control
    }

    /// Curve point at `t ∈ [0, 1]`; `eval(0) == eval(1)`.
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let nc = self.control.len();
        let (s0, tau) = span(t, nc);
        let b = basis(tau);
        let mut p = [0.0, 0.0];
        for (k, bk) in b.iter().enumerate() {
            let c = self.control[(s0 + nc + k - 1) % nc];
            p[0] += bk * c[0];
            p[1] += bk * c[1];
        }
        p
    }

    pub fn length(&self) -> f64 {
        *self.table_s.last().unwrap_or(&0.0)
    }

    /// Parameter at arclength `s` (linear in the chord table).
    pub fn param_at_length(&self, s: f64) -> f64 {
        let k = self.table_s.partition_point(|&v| v < s).clamp(1, self.table_s.len() - 1);
        let (s0, s1) = (self.table_s[k - 1], self.table_s[k]);
        let w = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.table_t[k - 1] + w * (self.table_t[k] - self.table_t[k - 1])
    }

    /// `max(8, round(L/h))` points at uniform arclength spacing, starting at
    /// `t = 0`, in curve orientation.
    pub fn sample_uniform(&self, h: f64) -> Vec<[f64; 2]> {
        let len = self.length();
        let m = ((len / h).round() as usize).max(8);
        (0..m)
            .map(|j| self.eval(self.param_at_length(len * j as f64 / m as f64)))
            .collect()
    }
}
