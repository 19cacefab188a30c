//! RBF parameterization of the level-set function.
//!
//! `ψ(x) = Σ α_ij ψ_ij(x)` with Wendland C² kernels centred on an `N × N`
//! knot grid over the design rectangle `D`.

mod heaviside;
mod quadtree;

use std::path::Path;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use heaviside::{adaptive_beta, smoothed_heaviside, smoothed_heaviside_derivs, BETA_FLOOR};
pub use quadtree::Quadtree;

/// Largest grid solved with a dense factorization.
const DENSE_FIT_LIMIT: usize = 40;

/// Wendland C² kernel `max{0, 1 − r}⁴ (4r + 1)`.
#[inline]
pub fn wendland(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        let s = 1.0 - r;
        let s2 = s * s;
        s2 * s2 * (4.0 * r + 1.0)
    }
}

/// Value, gradient and Hessian of `x ↦ wendland(|x − c| / rs)` given
/// `d = x − c`.
#[inline]
fn kernel_derivs(d: [f64; 2], rs: f64) -> (f64, [f64; 2], [f64; 3]) {
    let dist = d[0].hypot(d[1]);
    let r = dist / rs;
    if r >= 1.0 {
        return (0.0, [0.0; 2], [0.0; 3]);
    }
    let s = 1.0 - r;
    let s2 = s * s;
    let s3 = s2 * s;
    let inv_rs2 = 1.0 / (rs * rs);
    let value = s2 * s2 * (4.0 * r + 1.0);
    let gk = -20.0 * s3 * inv_rs2;
    let grad = [gk * d[0], gk * d[1]];
    // −20/rs² [ (1−r)³ I − 3(1−r)² d⊗d / (r rs²) ]; the second term → 0 as r → 0.
    let outer = if dist > 0.0 { 3.0 * s2 / (r * rs * rs) } else { 0.0 };
    let hxx = -20.0 * inv_rs2 * (s3 - outer * d[0] * d[0]);
    let hxy = -20.0 * inv_rs2 * (-outer * d[0] * d[1]);
    let hyy = -20.0 * inv_rs2 * (s3 - outer * d[1] * d[1]);
    (value, grad, [hxx, hxy, hyy])
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        x[0] >= self.x_min && x[0] <= self.x_max && x[1] >= self.y_min && x[1] <= self.y_max
    }
}

/// Level-set data at one point: value, gradient and Hessian `[xx, xy, yy]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalLevelSet {
    pub value: f64,
    pub gradient: [f64; 2],
    pub hessian: [f64; 3],
}

/// `H` at one point. Its derivative with respect to a coefficient `α_k` is
/// `dh_dpsi·ψ_k(x) + dh_dgrad·∇ψ_k(x)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeavisideSample {
    pub h: f64,
    pub dh_dx: [f64; 2],
    pub dh_dpsi: f64,
    pub dh_dgrad: [f64; 2],
}

/// The `N × N` knot grid with its support radius and spatial index.
#[derive(Debug, Clone)]
pub struct RbfGrid {
    n: usize,
    bounds: Rect,
    knots: Vec<[f64; 2]>,
    support_radius: f64,
    index: Quadtree,
}

impl RbfGrid {
    pub fn new(n: usize, bounds: Rect) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("RBF grid needs N >= 2, got {n}")));
        }
        if !(bounds.x_max > bounds.x_min && bounds.y_max > bounds.y_min) {
            return Err(Error::InvalidParameter(format!("empty design rectangle {bounds:?}")));
        }
        let m = (n - 1) as f64;
        let dx = (bounds.x_max - bounds.x_min) / m;
        let dy = (bounds.y_max - bounds.y_min) / m;
        let mut knots = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                knots.push([
                    bounds.x_min + j as f64 * (bounds.x_max - bounds.x_min) / m,
                    bounds.y_min + i as f64 * (bounds.y_max - bounds.y_min) / m,
                ]);
            }
        }
        let support_radius = 4.0 * dx.max(dy);
        let index = Quadtree::new(&knots);
        Ok(Self {
            n,
            bounds,
            knots,
            support_radius,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn bounds(&self) -> Rect {
        self.bounds
    }

    pub fn knots(&self) -> &[[f64; 2]] {
        &self.knots
    }

    /// Knot `(i, j)` (zero-based, `i` along y) in row-major storage.
    pub fn knot(&self, i: usize, j: usize) -> [f64; 2] {
        self.knots[i * self.n + j]
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Knots whose support contains `x`, ascending.
    pub fn query(&self, x: [f64; 2], out: &mut Vec<usize>) {
        self.index.query(x, self.support_radius, out);
    }

    /// `ψ_k(x)`.
    pub fn basis(&self, k: usize, x: [f64; 2]) -> f64 {
        let c = self.knots[k];
        wendland((x[0] - c[0]).hypot(x[1] - c[1]) / self.support_radius)
    }

    pub fn value(&self, alpha: &[f64], x: [f64; 2]) -> f64 {
        let mut idx = Vec::with_capacity(96);
        self.query(x, &mut idx);
        let mut sum = 0.0;
        for k in idx {
            sum += alpha[k] * self.basis(k, x);
        }
        sum
    }

    /// `(ψ(x), ∇ψ(x))` with the exact analytical gradient.
    pub fn eval(&self, alpha: &[f64], x: [f64; 2]) -> (f64, [f64; 2]) {
        let l = self.eval_local(alpha, x);
        (l.value, l.gradient)
    }

    pub fn eval_local(&self, alpha: &[f64], x: [f64; 2]) -> LocalLevelSet {
        let mut idx = Vec::with_capacity(96);
        self.query(x, &mut idx);
        let mut out = LocalLevelSet::default();
        for k in idx {
            let c = self.knots[k];
            let (v, g, h) = kernel_derivs([x[0] - c[0], x[1] - c[1]], self.support_radius);
            let a = alpha[k];
            out.value += a * v;
            out.gradient[0] += a * g[0];
            out.gradient[1] += a * g[1];
            for (o, hv) in out.hessian.iter_mut().zip(h) {
                *o += a * hv;
            }
        }
        out
    }

    /// Smoothed Heaviside `H_{sβ}(ψ(x))` with `β = δ‖∇ψ‖ + 1e-6`, together
    /// with its sensitivities. `scale` is 1 for the state equations and 2 for
    /// the gray-region penalty.
    pub fn heaviside(&self, alpha: &[f64], x: [f64; 2], delta: f64, scale: f64) -> HeavisideSample {
        let ls = self.eval_local(alpha, x);
        let g = ls.gradient;
        let gn = g[0].hypot(g[1]);
        let beta = scale * adaptive_beta(g, delta);
        let (h, hy, hb) = smoothed_heaviside_derivs(ls.value, beta);
        let dh_dgrad = if gn > 0.0 {
            let k = hb * scale * delta / gn;
            [k * g[0], k * g[1]]
        } else {
            [0.0, 0.0]
        };
        let [hxx, hxy, hyy] = ls.hessian;
        HeavisideSample {
            h,
            dh_dx: [
                hy * g[0] + hxx * dh_dgrad[0] + hxy * dh_dgrad[1],
                hy * g[1] + hxy * dh_dgrad[0] + hyy * dh_dgrad[1],
            ],
            dh_dpsi: hy,
            dh_dgrad,
        }
    }

    /// Brute-force value over every knot in storage order.
    pub fn value_brute_force(&self, alpha: &[f64], x: [f64; 2]) -> f64 {
        let mut sum = 0.0;
        for k in 0..self.knots.len() {
            sum += alpha[k] * self.basis(k, x);
        }
        sum
    }

    /// Per-knot basis values and gradients at `x` for knots whose support
    /// contains it.
    pub fn basis_terms(&self, x: [f64; 2], idx: &mut Vec<usize>, out: &mut Vec<(usize, f64, [f64; 2])>) {
        self.query(x, idx);
        out.clear();
        for &k in idx.iter() {
            let c = self.knots[k];
            let (v, g, _) = kernel_derivs([x[0] - c[0], x[1] - c[1]], self.support_radius);
            if v != 0.0 || g != [0.0, 0.0] {
                out.push((k, v, g));
            }
        }
    }

    /// Solves `ψ_N(knot_k) = target(knot_k)` for all knots.
    pub fn fit(&self, target: impl Fn([f64; 2]) -> f64, lower: f64, upper: f64) -> Result<DesignVector> {
        let m = self.len();
        let rhs: Vec<f64> = self.knots.iter().map(|&p| target(p)).collect();
        let alpha: Vec<f64> = if self.n <= DENSE_FIT_LIMIT {
            let a = Mat::<f64>::from_fn(m, m, |r, c| self.basis(c, self.knots[r]));
            let llt = a
                .llt(Side::Lower)
                .map_err(|e| Error::LinearSolver(format!("interpolation matrix: {e:?}")))?;
            let b = Col::<f64>::from_fn(m, |r| rhs[r]);
            let x = llt.solve(&b);
            (0..m).map(|r| x[r]).collect()
        } else {
            let mut trip = Vec::new();
            let mut idx = Vec::new();
            for (r, &p) in self.knots.iter().enumerate() {
                self.query(p, &mut idx);
                for &c in &idx {
                    let v = self.basis(c, p);
                    if v != 0.0 {
                        trip.push(Triplet::new(r, c, v));
                    }
                }
            }
            let a = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &trip)
                .map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
            let llt = a
                .sp_cholesky(Side::Lower)
                .map_err(|e| Error::LinearSolver(format!("interpolation matrix: {e:?}")))?;
            let b = Col::<f64>::from_fn(m, |r| rhs[r]);
            let x = llt.solve(&b);
            (0..m).map(|r| x[r]).collect()
        };
        let residual = self.knot_residual(&alpha, &rhs);
        if !(residual <= 1e-10) {
            return Err(Error::LinearSolver(format!(
                "interpolation residual {residual:e} exceeds 1e-10"
            )));
        }
        DesignVector::new(self.n, alpha, lower, upper)
    }

    /// Max-norm of `ψ_N(knot_k) − rhs_k`.
    pub fn knot_residual(&self, alpha: &[f64], rhs: &[f64]) -> f64 {
        self.knots
            .iter()
            .zip(rhs)
            .map(|(&p, &t)| (self.value(alpha, p) - t).abs())
            .fold(0.0, f64::max)
    }
}

/// RBF coefficients `α` (row-major, `N × N`) with their box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector {
    n: usize,
    pub alpha: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl DesignVector {
    pub fn new(n: usize, alpha: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if alpha.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "design vector has {} entries, expected {}",
                alpha.len(),
                n * n
            )));
        }
        if !(lower <= upper) {
            return Err(Error::InvalidParameter(format!("bounds [{lower}, {upper}] are empty")));
        }
        let mut d = Self { n, alpha, lower, upper };
        d.project();
        Ok(d)
    }

    pub fn zeros(n: usize, lower: f64, upper: f64) -> Self {
        Self {
            n,
            alpha: vec![0.0; n * n],
            lower,
            upper,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    pub fn project(&mut self) {
        for a in &mut self.alpha {
            *a = a.clamp(self.lower, self.upper);
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.alpha.iter().all(|&a| a >= self.lower && a <= self.upper)
    }

    /// Plain text: `N` lines of `N` whitespace-separated floats.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for row in self.alpha.chunks(self.n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, lower: f64, upper: f64) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {t:?}: {e}", ln + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("design file must hold an N x N table".into()));
        }
        Self::new(n, rows.concat(), lower, upper)
    }

    pub fn read(path: &Path, lower: f64, upper: f64) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?, lower, upper)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
