//! Target shapes, the polar radius of the free boundary, the tracking cost
//! and the gray-region penalty.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Real};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::rbf::HeavisideSample;
use crate::state::{quad_point, StateProblem, StateVector, GAUSS3};

/// Default number of sample angles.
pub const DEFAULT_SAMPLES: usize = 512;

/// Sample count used for a boundary with `boundary_nodes` nodes: the default
/// or four samples per node, whichever is larger.
pub fn sample_count(boundary_nodes: usize) -> usize {
    DEFAULT_SAMPLES.max(4 * boundary_nodes)
}

/// Star-like target boundary given by its polar radius `g_t(θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetShape {
    Circle { radius: f64 },
    /// Axis-aligned square centered at the origin with rounded corners.
    RoundedSquare { side: f64, corner_radius: f64 },
    /// `0.5 cos θ + 0.8 cos 2θ + 2`.
    CosineKey,
    /// Periodic piecewise-linear table of `(θ, g_t)` pairs, sorted by angle.
    UserTable { theta: Vec<f64>, radius: Vec<f64> },
}

impl TargetShape {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidParameter(m));
        match self {
            Self::Circle { radius } if !(*radius > 0.0) => fail(format!("circle radius must be positive, got {radius}")),
            Self::RoundedSquare { side, corner_radius }
                if !(*side > 0.0 && *corner_radius >= 0.0 && 2.0 * corner_radius <= *side) =>
            {
                fail(format!("invalid rounded square side {side}, corner radius {corner_radius}"))
            }
            Self::UserTable { theta, radius } => {
                if theta.len() != radius.len() || theta.len() < 3 {
                    return fail("user table needs at least 3 (theta, radius) pairs".into());
                }
                if radius.iter().any(|r| !(*r > 0.0)) {
                    return fail("user table radii must be positive".into());
                }
                let ok = theta.windows(2).all(|w| w[1] > w[0])
                    && theta[0] >= 0.0
                    && *theta.last().unwrap() < 2.0 * PI;
                if !ok {
                    return fail("user table angles must increase strictly within [0, 2pi)".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Reads `theta,radius` rows; a header line and `#` comments are skipped.
    pub fn read_table(path: &Path) -> Result<Self> {
        Self::parse_table(&std::fs::read_to_string(path)?)
    }

    pub fn parse_table(text: &str) -> Result<Self> {
        let mut theta = Vec::new();
        let mut radius = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split(',').map(str::trim);
            let (a, b) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(t), Ok(r)) => {
                    theta.push(t);
                    radius.push(r);
                }
                _ if theta.is_empty() && ln == 0 => continue,
                _ => return Err(Error::Parse(format!("target table line {}: {line:?}", ln + 1))),
            }
        }
        let t = Self::UserTable { theta, radius };
        t.validate()?;
        Ok(t)
    }

    /// `g_t(θ)`, 2π-periodic.
    pub fn radius(&self, theta: f64) -> f64 {
        match self {
            Self::Circle { radius } => *radius,
            Self::RoundedSquare { side, corner_radius } => rounded_square_radius(theta, 0.5 * side, *corner_radius),
            Self::CosineKey => 0.5 * theta.cos() + 0.8 * (2.0 * theta).cos() + 2.0,
            Self::UserTable { theta: ts, radius: rs } => {
                let t = theta.rem_euclid(2.0 * PI);
                let n = ts.len();
                let k = ts.partition_point(|&x| x <= t);
                // interval [ts[i0], ts[i1]] containing t, wrapping around 2π
                let (i0, i1, a, b) = if k == 0 {
                    (n - 1, 0, ts[n - 1] - 2.0 * PI, ts[0])
                } else if k == n {
                    (n - 1, 0, ts[n - 1], ts[0] + 2.0 * PI)
                } else {
                    (k - 1, k, ts[k - 1], ts[k])
                };
                let w = (t - a) / (b - a);
                (1.0 - w) * rs[i0] + w * rs[i1]
            }
        }
    }

    pub fn samples(&self, m: usize) -> RadiusSamples {
        let theta = uniform_angles(m);
        let values = theta.iter().map(|&t| self.radius(t)).collect();
        RadiusSamples { theta, values }
    }
}

fn rounded_square_radius(theta: f64, a: f64, rc: f64) -> f64 {
    let (c, s) = (theta.cos().abs(), theta.sin().abs());
    let (c, s) = if c >= s { (c, s) } else { (s, c) };
    // ray (c, s) with c ≥ s ≥ 0 meets the edge x = a or the corner arc
    let r_edge = a / c;
    if r_edge * s <= a - rc {
        return r_edge;
    }
    let m = a - rc;
    let dm = (c + s) * m;
    dm + (dm * dm - 2.0 * m * m + rc * rc).sqrt()
}

pub fn uniform_angles(m: usize) -> Vec<f64> {
    (0..m).map(|k| 2.0 * PI * k as f64 / m as f64).collect()
}

/// A radius function sampled at uniform angles `2πk/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusSamples {
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
}

/// Derivative of one radius sample with respect to the two boundary nodes
/// (loop positions) that bracket its angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStencil {
    pub nodes: [usize; 2],
    pub grad: [[f64; 2]; 2],
}

/// Polar radius of the deformed mesh's boundary at `m` uniform angles.
pub fn boundary_radius(deformed: &Mesh, m: usize) -> Result<RadiusSamples> {
    Ok(polar_samples(&deformed.boundary_points(), m)?.0)
}

/// Radius samples of a closed counter-clockwise polygon around the origin,
/// with derivatives with respect to the polygon vertices.
pub fn polar_samples(points: &[[f64; 2]], m: usize) -> Result<(RadiusSamples, Vec<SampleStencil>)> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateBoundary(format!("{n} boundary points")));
    }
    let mut theta = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for p in points {
        let rr = p[0].hypot(p[1]);
        if !(rr > 0.0) {
            return Err(Error::NotStarLike(0.0, 0.0));
        }
        r.push(rr);
    }
    // unwrap the angle sequence; it must increase through exactly one turn
    theta.push(points[0][1].atan2(points[0][0]));
    for i in 1..n {
        let prev = theta[i - 1];
        let raw = points[i][1].atan2(points[i][0]);
        let d = (raw - prev + PI).rem_euclid(2.0 * PI) - PI;
        if !(d > 0.0) {
            return Err(Error::NotStarLike(prev, raw));
        }
        theta.push(prev + d);
    }
    let close = {
        let raw = theta[0] + 2.0 * PI;
        let d = raw - theta[n - 1];
        if !(d > 0.0) || (theta[n - 1] - theta[0] - 2.0 * PI).abs() > PI {
            return Err(Error::NotStarLike(theta[n - 1], theta[0]));
        }
        d
    };
    debug_assert!(close > 0.0);
    // start the loop at the smallest angle in [0, 2π)
    let start = (0..n)
        .min_by(|&a, &b| theta[a].rem_euclid(2.0 * PI).total_cmp(&theta[b].rem_euclid(2.0 * PI)))
        .unwrap();
    let shift = theta[start].rem_euclid(2.0 * PI) - theta[start];
    let ang: Vec<f64> = (0..=n)
        .map(|k| {
            let i = (start + k) % n;
            let wraps = if start + k >= n { 2.0 * PI } else { 0.0 };
            theta[i] + shift + wraps
        })
        .collect();
    let angles = uniform_angles(m);
    let mut values = Vec::with_capacity(m);
    let mut stencils = Vec::with_capacity(m);
    let mut k = 0usize;
    for &phi in &angles {
        // phi may precede ang[0]; it then lies in the wrap interval
        let (k, target) = if phi < ang[0] {
            (n - 1, phi + 2.0 * PI)
        } else {
            while k + 1 < n && ang[k + 1] <= phi {
                k += 1;
            }
            (k, phi)
        };
        let (a, b) = (ang[k], ang[k + 1]);
        let dlt = b - a;
        let w = (target - a) / dlt;
        let (i0, i1) = ((start + k) % n, (start + k + 1) % n);
        let (r0, r1) = (r[i0], r[i1]);
        values.push((1.0 - w) * r0 + w * r1);
        let dw0 = (w - 1.0) / dlt;
        let dw1 = -w / dlt;
        let node_grad = |i: usize, dw: f64, wr: f64| {
            let p = points[i];
            let rr = r[i];
            let dth = [-p[1] / (rr * rr), p[0] / (rr * rr)];
            let drr = [p[0] / rr, p[1] / rr];
            [
                (r1 - r0) * dw * dth[0] + wr * drr[0],
                (r1 - r0) * dw * dth[1] + wr * drr[1],
            ]
        };
        if w == 0.0 {
            // sample on a vertex: average the one-sided angular slopes
            let prev = if k > 0 { ang[k - 1] } else { ang[n - 1] - 2.0 * PI };
            let rp = r[(start + k + n - 1) % n];
            let slope = 0.5 * ((r0 - rp) / (a - prev) + (r1 - r0) / dlt);
            let p = points[i0];
            let rr = r0 * r0;
            stencils.push(SampleStencil {
                nodes: [i0, i1],
                grad: [
                    [slope * p[1] / rr + p[0] / r0, -slope * p[0] / rr + p[1] / r0],
                    [0.0, 0.0],
                ],
            });
            continue;
        }
        stencils.push(SampleStencil {
            nodes: [i0, i1],
            grad: [node_grad(i0, dw0, 1.0 - w), node_grad(i1, dw1, w)],
        });
    }
    Ok((RadiusSamples { theta: angles, values }, stencils))
}

/// `(2π/M) Σ (g_k − t_k)²`.
pub fn tracking_cost(g: &RadiusSamples, target: &RadiusSamples) -> f64 {
    assert_eq!(g.values.len(), target.values.len(), "sample grids differ");
    let m = g.values.len() as f64;
    let s: f64 = g.values.iter().zip(&target.values).map(|(a, b)| (a - b) * (a - b)).sum();
    2.0 * PI / m * s
}

/// Element integral `Σ_q (A/3) H_q (u_q − 1)²` with moving points lifted as
/// in the state residual.
fn penalty_element<T: Real>(u: [T; 3], x: [[T; 2]; 3], hs: &[HeavisideSample; 3], xq: &[[f64; 2]; 3]) -> T {
    let area = ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1])) * 0.5;
    let mut sum = T::cst(0.0);
    for (q, lam) in GAUSS3.iter().enumerate() {
        let s = &hs[q];
        if s.h == 0.0 && s.dh_dx == [0.0, 0.0] {
            continue;
        }
        let p = quad_point(&x, lam);
        let h = (p[0] - xq[q][0]) * s.dh_dx[0] + (p[1] - xq[q][1]) * s.dh_dx[1] + s.h;
        let d = u[0] * lam[0] + u[1] * lam[1] + u[2] * lam[2] - 1.0;
        sum += h * d * d;
    }
    sum * area * (1.0 / 3.0)
}

fn penalty_samples(pb: &StateProblem, xe: &[[f64; 2]; 3]) -> ([[f64; 2]; 3], [HeavisideSample; 3]) {
    let xq = GAUSS3.map(|lam| quad_point(xe, &lam));
    let hs = xq.map(|p| pb.grid.heaviside(pb.alpha, p, pb.params.delta, 2.0));
    (xq, hs)
}

/// `η ∫_Ω H_{2β}(ψ)(u − 1)² dx` on the deformed mesh.
pub fn gray_penalty(pb: &StateProblem, q: &StateVector, eta: f64) -> Result<f64> {
    if eta == 0.0 {
        return Ok(0.0);
    }
    let x = pb.deformed_nodes(q)?;
    let mut sum = 0.0;
    for tri in &pb.mesh.triangles {
        let xe = tri.map(|i| x[i]);
        let (xq, hs) = penalty_samples(pb, &xe);
        sum += penalty_element(tri.map(|i| q.u[i]), xe, &hs, &xq);
    }
    Ok(eta * sum)
}

/// Gradient of [`gray_penalty`] with respect to the flat state vector.
pub fn gray_penalty_grad_q(pb: &StateProblem, q: &StateVector, eta: f64) -> Result<Vec<f64>> {
    let n = pb.num_nodes();
    let mut g = vec![0.0; pb.dim()];
    if eta == 0.0 {
        return Ok(g);
    }
    let x = pb.deformed_nodes(q)?;
    for tri in &pb.mesh.triangles {
        let xe = tri.map(|i| x[i]);
        let (xq, hs) = penalty_samples(pb, &xe);
        let ud: [Dual<9>; 3] = std::array::from_fn(|a| Dual::var(q.u[tri[a]], a));
        let xd: [[Dual<9>; 2]; 3] =
            std::array::from_fn(|a| [Dual::var(xe[a][0], 3 + 2 * a), Dual::var(xe[a][1], 4 + 2 * a)]);
        let v = penalty_element(ud, xd, &hs, &xq);
        for a in 0..3 {
            g[tri[a]] += eta * v.d[a];
            g[n + 2 * tri[a]] += eta * v.d[3 + 2 * a];
            g[n + 2 * tri[a] + 1] += eta * v.d[4 + 2 * a];
        }
    }
    Ok(g)
}

/// Gradient of [`gray_penalty`] with respect to the design coefficients at
/// fixed state.
pub fn gray_penalty_grad_alpha(pb: &StateProblem, q: &StateVector, eta: f64) -> Result<Vec<f64>> {
    let mut g = vec![0.0; pb.grid.len()];
    if eta == 0.0 {
        return Ok(g);
    }
    let x = pb.deformed_nodes(q)?;
    let (mut idx, mut terms) = (Vec::new(), Vec::new());
    for tri in &pb.mesh.triangles {
        let xe = tri.map(|i| x[i]);
        let area = crate::mesh::signed_area(xe[0], xe[1], xe[2]);
        let (xq, hs) = penalty_samples(pb, &xe);
        for (qi, lam) in GAUSS3.iter().enumerate() {
            let s = &hs[qi];
            if s.dh_dpsi == 0.0 && s.dh_dgrad == [0.0, 0.0] {
                continue;
            }
            let d = lam[0] * q.u[tri[0]] + lam[1] * q.u[tri[1]] + lam[2] * q.u[tri[2]] - 1.0;
            let c = eta * area / 3.0 * d * d;
            pb.grid.basis_terms(xq[qi], &mut idx, &mut terms);
            for &(k, phi, dphi) in &terms {
                g[k] += c * (s.dh_dpsi * phi + s.dh_dgrad[0] * dphi[0] + s.dh_dgrad[1] * dphi[1]);
            }
        }
    }
    Ok(g)
}

/// The optimization objective `𝒥 + 𝒥_η`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub target: TargetShape,
    pub eta: f64,
    /// Number of sample angles; `None` selects [`sample_count`].
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub tracking: f64,
    pub penalty: f64,
}

impl ObjectiveValue {
    pub fn total(&self) -> f64 {
        self.tracking + self.penalty
    }
}

impl Objective {
    pub fn new(target: TargetShape, eta: f64) -> Self {
        Self {
            target,
            eta,
            samples: None,
        }
    }

    pub fn sample_count(&self, boundary_nodes: usize) -> usize {
        self.samples.unwrap_or_else(|| sample_count(boundary_nodes))
    }

    pub fn evaluate(&self, pb: &StateProblem, q: &StateVector) -> Result<ObjectiveValue> {
        let x = pb.deformed_nodes(q)?;
        let pts: Vec<[f64; 2]> = pb.mesh.boundary.iter().map(|&i| x[i]).collect();
        let m = self.sample_count(pts.len());
        let (g, _) = polar_samples(&pts, m)?;
        Ok(ObjectiveValue {
            tracking: tracking_cost(&g, &self.target.samples(m)),
            penalty: gray_penalty(pb, q, self.eta)?,
        })
    }

    /// Gradient of `𝒥 + 𝒥_η` with respect to the flat state vector.
    pub fn grad_q(&self, pb: &StateProblem, q: &StateVector) -> Result<Vec<f64>> {
        let n = pb.num_nodes();
        let x = pb.deformed_nodes(q)?;
        let pts: Vec<[f64; 2]> = pb.mesh.boundary.iter().map(|&i| x[i]).collect();
        let m = self.sample_count(pts.len());
        let (g, stencils) = polar_samples(&pts, m)?;
        let t = self.target.samples(m);
        let mut grad = gray_penalty_grad_q(pb, q, self.eta)?;
        let w = 2.0 * PI / m as f64;
        for (k, st) in stencils.iter().enumerate() {
            let c = 2.0 * w * (g.values[k] - t.values[k]);
            for (s, &pos) in st.nodes.iter().enumerate() {
                let node = pb.mesh.boundary[pos];
                grad[n + 2 * node] += c * st.grad[s][0];
                grad[n + 2 * node + 1] += c * st.grad[s][1];
            }
        }
        Ok(grad)
    }
}
