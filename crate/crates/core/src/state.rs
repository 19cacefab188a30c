//! Discrete coupled state problem: potential, free-boundary constraint and
//! pseudo-solid elasticity on a fixed reference mesh.
//!
//! Unknowns are stacked as `q = [u (n), v (2n, x/y interleaved), p (n_e)]`
//! and residuals as `r = [r1 (n), r2 (n_e), r3 (2n)]`.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Real};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::rbf::{HeavisideSample, RbfGrid};

/// Barycentric coordinates of the 3-point Gauss rule (weights `A/3`).
pub const GAUSS3: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticityParams {
    pub mu: f64,
    pub lambda: f64,
}

impl Default for ElasticityParams {
    fn default() -> Self {
        Self { mu: 0.5, lambda: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateParams {
    /// Prescribed flux on the free boundary, negative.
    pub gamma: f64,
    /// Penalty parameter for `u = 1` in the inclusion.
    pub epsilon: f64,
    /// Gray-region half width.
    pub delta: f64,
    pub elasticity: ElasticityParams,
}

impl StateParams {
    pub fn new(gamma: f64, epsilon: f64, delta: f64) -> Self {
        Self {
            gamma,
            epsilon,
            delta,
            elasticity: ElasticityParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.gamma < 0.0) {
            bad.push(format!("gamma must be negative, got {}", self.gamma));
        }
        if !(self.epsilon > 0.0) {
            bad.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.delta >= 0.0) {
            bad.push(format!("delta must be nonnegative, got {}", self.delta));
        }
        if !(self.elasticity.mu > 0.0 && self.elasticity.lambda >= 0.0) {
            bad.push(format!("invalid Lame parameters {:?}", self.elasticity));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub u: Vec<f64>,
    /// Nodal displacements, `[vx0, vy0, vx1, ...]`.
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

impl StateVector {
    pub fn zeros(n: usize, ne: usize) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; 2 * n],
            p: vec![0.0; ne],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len() + self.v.len() + self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.p);
        out
    }

    pub fn from_flat(flat: &[f64], n: usize, ne: usize) -> Self {
        assert_eq!(flat.len(), 3 * n + ne, "state length");
        Self {
            u: flat[..n].to_vec(),
            v: flat[n..3 * n].to_vec(),
            p: flat[3 * n..].to_vec(),
        }
    }

    pub fn displacement(&self) -> Vec<[f64; 2]> {
        self.v.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).chain(&self.p).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
}

impl Residual {
    pub fn len(&self) -> usize {
        self.r1.len() + self.r2.len() + self.r3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.r1);
        out.extend_from_slice(&self.r2);
        out.extend_from_slice(&self.r3);
        out
    }

    pub fn norm_inf(&self) -> f64 {
        self.block_norms().iter().fold(0.0, |m, &x| m.max(x))
    }

    /// Max norms of `r1`, `r2`, `r3`.
    pub fn block_norms(&self) -> [f64; 3] {
        let f = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        [f(&self.r1), f(&self.r2), f(&self.r3)]
    }

    pub fn norm2(&self) -> f64 {
        self.r1.iter().chain(&self.r2).chain(&self.r3).map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Which derivatives `jacobian` includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Exact,
    /// Drops every dependence of `r1`, `r2` on the displacement; debugging aid.
    FrozenGeometry,
}

/// One Newton iteration: max norms of the residual blocks at the iterate
/// and the number of step halvings used to reach it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonRecord {
    pub iter: usize,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub halvings: usize,
}

pub fn write_newton_log(log: &[NewtonRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "iter,r1,r2,r3,halvings")?;
    for r in log {
        writeln!(w, "{},{:.6e},{:.6e},{:.6e},{}", r.iter, r.r1, r.r2, r.r3, r.halvings)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 25,
            max_halvings: 8,
        }
    }
}

/// The state problem for one reference mesh and one design.
pub struct StateProblem<'a> {
    pub mesh: &'a Mesh,
    pub grid: &'a RbfGrid,
    pub alpha: &'a [f64],
    pub params: StateParams,
    /// Boundary position of each node, if any.
    bpos: Vec<Option<usize>>,
    /// `r3 = A q`: rows local to `r3`, columns global in `q`.
    r3_matrix: Vec<(usize, usize, f64)>,
}

/// Element-level P1 data in generic arithmetic.
#[inline]
fn p1_gradients<T: Real>(x: &[[T; 2]; 3]) -> ([[T; 2]; 3], T) {
    let g = [
        [x[1][1] - x[2][1], x[2][0] - x[1][0]],
        [x[2][1] - x[0][1], x[0][0] - x[2][0]],
        [x[0][1] - x[1][1], x[1][0] - x[0][0]],
    ];
    let area = ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1])) * 0.5;
    (g, area)
}

#[inline]
pub(crate) fn quad_point<T: Real>(x: &[[T; 2]; 3], lam: &[f64; 3]) -> [T; 2] {
    [
        x[0][0] * lam[0] + x[1][0] * lam[1] + x[2][0] * lam[2],
        x[0][1] * lam[0] + x[1][1] * lam[1] + x[2][1] * lam[2],
    ]
}

/// Element contribution to `r1` excluding the boundary flux term. `hs[q]`
/// is the Heaviside sample at the value of quadrature point `q`; `xq[q]`
/// that point, so moving points are handled by a first-order lift.
fn r1_element<T: Real>(u: [T; 3], x: [[T; 2]; 3], hs: &[HeavisideSample; 3], xq: &[[f64; 2]; 3], inv_eps: f64) -> [T; 3] {
    let (g, area) = p1_gradients(&x);
    let k = T::cst(0.25) / area;
    let mut r = [T::cst(0.0); 3];
    for a in 0..3 {
        for b in 0..3 {
            r[a] += (g[a][0] * g[b][0] + g[a][1] * g[b][1]) * k * u[b];
        }
    }
    let w = area * (1.0 / 3.0);
    for (q, lam) in GAUSS3.iter().enumerate() {
        let p = quad_point(&x, lam);
        let s = &hs[q];
        let h = (p[0] - xq[q][0]) * s.dh_dx[0] + (p[1] - xq[q][1]) * s.dh_dx[1] + s.h;
        let uq = u[0] * lam[0] + u[1] * lam[1] + u[2] * lam[2];
        let c = w * h * inv_eps * (uq - 1.0);
        for a in 0..3 {
            r[a] += c * lam[a];
        }
    }
    r
}

impl<'a> StateProblem<'a> {
    pub fn new(mesh: &'a Mesh, grid: &'a RbfGrid, alpha: &'a [f64], params: StateParams) -> Result<Self> {
        params.validate()?;
        if alpha.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "design has {} coefficients, grid has {}",
                alpha.len(),
                grid.len()
            )));
        }
        let mut pb = Self {
            mesh,
            grid,
            alpha,
            params,
            bpos: mesh.boundary_positions(),
            r3_matrix: Vec::new(),
        };
        pb.r3_matrix = pb.build_r3_matrix();
        Ok(pb)
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn num_boundary(&self) -> usize {
        self.mesh.boundary.len()
    }

    /// `3n + n_e`.
    pub fn dim(&self) -> usize {
        3 * self.num_nodes() + self.num_boundary()
    }

    pub fn boundary_position(&self, node: usize) -> Option<usize> {
        self.bpos[node]
    }

    pub fn heaviside(&self, x: [f64; 2]) -> HeavisideSample {
        self.grid.heaviside(self.alpha, x, self.params.delta, 1.0)
    }

    fn build_r3_matrix(&self) -> Vec<(usize, usize, f64)> {
        let n = self.num_nodes();
        let ElasticityParams { mu, lambda } = self.params.elasticity;
        let inv_eps = 1.0 / self.params.epsilon;
        let mut out = Vec::with_capacity(self.mesh.num_triangles() * 48);
        for tri in &self.mesh.triangles {
            let x = tri.map(|i| self.mesh.nodes[i]);
            let (g, area) = p1_gradients(&x);
            // ∇φ_a = g_a / (2A)
            let s = 1.0 / (4.0 * area);
            let mut mass = [[0.0; 3]; 3];
            for lam in &GAUSS3 {
                let hq = self.heaviside(quad_point(&x, lam)).h;
                if hq == 0.0 {
                    continue;
                }
                let c = area / 3.0 * hq * inv_eps;
                for a in 0..3 {
                    for b in 0..3 {
                        mass[a][b] += c * lam[a] * lam[b];
                    }
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut k = lambda * g[a][i] * g[b][j] + mu * g[a][j] * g[b][i];
                            if i == j {
                                k += mu * dot;
                            }
                            let mut val = k * s * area;
                            if i == j {
                                val += mass[a][b];
                            }
                            if val != 0.0 {
                                out.push((2 * tri[a] + i, n + 2 * tri[b] + j, val));
                            }
                        }
                    }
                }
            }
        }
        // −∫ p n·w ds on the reference boundary
        let pcol = 3 * n;
        let nb = self.num_boundary();
        for k in 0..nb {
            let (i, j) = (self.mesh.boundary[k], self.mesh.boundary[(k + 1) % nb]);
            let (a, b) = (self.mesh.nodes[i], self.mesh.nodes[j]);
            // outward normal times edge length
            let nl = [b[1] - a[1], a[0] - b[0]];
            let kj = (k + 1) % nb;
            for c in 0..2 {
                let f = -nl[c] / 6.0;
                out.push((2 * i + c, pcol + k, 2.0 * f));
                out.push((2 * i + c, pcol + kj, f));
                out.push((2 * j + c, pcol + k, f));
                out.push((2 * j + c, pcol + kj, 2.0 * f));
            }
        }
        out
    }

    /// Deformed node positions; errors on the first inverted triangle.
    pub fn deformed_nodes(&self, q: &StateVector) -> Result<Vec<[f64; 2]>> {
        let x: Vec<[f64; 2]> = self
            .mesh
            .nodes
            .iter()
            .enumerate()
            .map(|(i, p)| [p[0] + q.v[2 * i], p[1] + q.v[2 * i + 1]])
            .collect();
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let area = crate::mesh::signed_area(x[tri[0]], x[tri[1]], x[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::InvertedElement { triangle: t, area });
            }
        }
        Ok(x)
    }

    /// `H_β(ψ)` at the deformed nodes.
    pub fn nodal_heaviside(&self, q: &StateVector) -> Result<Vec<f64>> {
        Ok(self.deformed_nodes(q)?.into_iter().map(|x| self.heaviside(x).h).collect())
    }

    fn check_len(&self, q: &StateVector) {
        let (n, ne) = (self.num_nodes(), self.num_boundary());
        assert!(
            q.u.len() == n && q.v.len() == 2 * n && q.p.len() == ne,
            "state vector does not match the mesh"
        );
    }

    pub fn residual(&self, q: &StateVector) -> Result<Residual> {
        self.check_len(q);
        let n = self.num_nodes();
        let ne = self.num_boundary();
        let x = self.deformed_nodes(q)?;
        let inv_eps = 1.0 / self.params.epsilon;
        let mut r1 = vec![0.0; n];
        for tri in &self.mesh.triangles {
            let xe = tri.map(|i| x[i]);
            let xq = GAUSS3.map(|lam| quad_point(&xe, &lam));
            let hs = xq.map(|p| self.heaviside(p));
            let re = r1_element(tri.map(|i| q.u[i]), xe, &hs, &xq, inv_eps);
            for a in 0..3 {
                r1[tri[a]] += re[a];
            }
        }
        let mut r2 = vec![0.0; ne];
        let gamma = self.params.gamma;
        for k in 0..ne {
            let kj = (k + 1) % ne;
            let (i, j) = (self.mesh.boundary[k], self.mesh.boundary[kj]);
            let len = (x[j][0] - x[i][0]).hypot(x[j][1] - x[i][1]);
            r1[i] -= gamma * len * 0.5;
            r1[j] -= gamma * len * 0.5;
            r2[k] += len / 6.0 * (2.0 * q.u[i] + q.u[j]);
            r2[kj] += len / 6.0 * (q.u[i] + 2.0 * q.u[j]);
        }
        let mut r3 = vec![0.0; 2 * n];
        let qf = q.to_flat();
        for &(r, c, val) in &self.r3_matrix {
            r3[r] += val * qf[c];
        }
        Ok(Residual { r1, r2, r3 })
    }

    /// Triplets of `∂r/∂q` in residual-row / state-column numbering.
    pub fn jacobian_triplets(&self, q: &StateVector, mode: JacobianMode) -> Result<Vec<Triplet<usize, usize, f64>>> {
        self.check_len(q);
        let n = self.num_nodes();
        let ne = self.num_boundary();
        let x = self.deformed_nodes(q)?;
        let inv_eps = 1.0 / self.params.epsilon;
        let exact = mode == JacobianMode::Exact;
        let mut t = Vec::with_capacity(self.mesh.num_triangles() * 27 + self.r3_matrix.len() + 12 * ne);
        for tri in &self.mesh.triangles {
            let xe = tri.map(|i| x[i]);
            let xq = GAUSS3.map(|lam| quad_point(&xe, &lam));
            let hs = xq.map(|p| self.heaviside(p));
            let ud: [Dual<9>; 3] = std::array::from_fn(|a| Dual::var(q.u[tri[a]], a));
            let xd: [[Dual<9>; 2]; 3] =
                std::array::from_fn(|a| [Dual::var(xe[a][0], 3 + 2 * a), Dual::var(xe[a][1], 4 + 2 * a)]);
            let re = r1_element(ud, xd, &hs, &xq, inv_eps);
            for a in 0..3 {
                for b in 0..3 {
                    t.push(Triplet::new(tri[a], tri[b], re[a].d[b]));
                    if exact {
                        for c in 0..2 {
                            t.push(Triplet::new(tri[a], n + 2 * tri[b] + c, re[a].d[3 + 2 * b + c]));
                        }
                    }
                }
            }
        }
        let gamma = self.params.gamma;
        for k in 0..ne {
            let kj = (k + 1) % ne;
            let (i, j) = (self.mesh.boundary[k], self.mesh.boundary[kj]);
            let d = [x[j][0] - x[i][0], x[j][1] - x[i][1]];
            let len = d[0].hypot(d[1]);
            let tan = [d[0] / len, d[1] / len];
            let (ri, rj) = (n + k, n + kj);
            t.push(Triplet::new(ri, i, len / 3.0));
            t.push(Triplet::new(ri, j, len / 6.0));
            t.push(Triplet::new(rj, i, len / 6.0));
            t.push(Triplet::new(rj, j, len / 3.0));
            if exact {
                let si = (2.0 * q.u[i] + q.u[j]) / 6.0;
                let sj = (q.u[i] + 2.0 * q.u[j]) / 6.0;
                for c in 0..2 {
                    let (ci, cj) = (n + 2 * i + c, n + 2 * j + c);
                    t.push(Triplet::new(ri, cj, si * tan[c]));
                    t.push(Triplet::new(ri, ci, -si * tan[c]));
                    t.push(Triplet::new(rj, cj, sj * tan[c]));
                    t.push(Triplet::new(rj, ci, -sj * tan[c]));
                    // r1 flux term −γ L/2 at both ends
                    let f = -0.5 * gamma * tan[c];
                    for node in [i, j] {
                        t.push(Triplet::new(node, cj, f));
                        t.push(Triplet::new(node, ci, -f));
                    }
                }
            }
        }
        let off = n + ne;
        t.extend(self.r3_matrix.iter().map(|&(r, c, v)| Triplet::new(off + r, c, v)));
        Ok(t)
    }

    pub fn jacobian(&self, q: &StateVector, mode: JacobianMode) -> Result<SparseColMat<usize, f64>> {
        let m = self.dim();
        let t = self.jacobian_triplets(q, mode)?;
        SparseColMat::try_new_from_triplets(m, m, &t).map_err(|e| Error::LinearSolver(format!("{e:?}")))
    }

    /// Newton iteration from `q0`; appends one record per iterate to `log`.
    pub fn newton_solve(&self, q0: StateVector, opts: NewtonOptions, log: &mut Vec<NewtonRecord>) -> Result<StateVector> {
        let (n, ne) = (self.num_nodes(), self.num_boundary());
        if !q0.is_finite() {
            return Err(Error::InvalidParameter("initial state is not finite".into()));
        }
        let mut q = q0;
        let mut r = self.residual(&q)?;
        let mut halvings = 0;
        for iter in 0.. {
            let [r1, r2, r3] = r.block_norms();
            log.push(NewtonRecord { iter, r1, r2, r3, halvings });
            let rn = r.norm_inf();
            if rn <= opts.tol {
                return Ok(q);
            }
            if iter >= opts.max_iter || !rn.is_finite() {
                return Err(Error::NewtonNonconvergence {
                    iterations: iter,
                    residual: rn,
                });
            }
            let jac = self.jacobian(&q, JacobianMode::Exact)?;
            let lu = jac.sp_lu().map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
            let rhs = Mat::<f64>::from_fn(self.dim(), 1, |i, _| {
                let f = &r;
                if i < n {
                    -f.r1[i]
                } else if i < n + ne {
                    -f.r2[i - n]
                } else {
                    -f.r3[i - n - ne]
                }
            });
            let dq = lu.solve(&rhs);
            let base = q.to_flat();
            let r0 = r.norm2();
            let mut step = 1.0;
            let mut accepted = None;
            let mut last_err = None;
            halvings = 0;
            loop {
                let trial: Vec<f64> = base.iter().enumerate().map(|(i, b)| b + step * dq[(i, 0)]).collect();
                let qt = StateVector::from_flat(&trial, n, ne);
                match self.residual(&qt) {
                    Ok(rt) => {
                        let better = rt.norm2() < r0;
                        if better || halvings == opts.max_halvings {
                            accepted = Some((qt, rt));
                        }
                    }
                    Err(e @ Error::InvertedElement { .. }) => last_err = Some(e),
                    Err(e) => return Err(e),
                }
                if accepted.is_some() || halvings == opts.max_halvings {
                    break;
                }
                halvings += 1;
                step *= 0.5;
            }
            match accepted {
                Some((qn, rn)) => {
                    q = qn;
                    r = rn;
                }
                None => return Err(last_err.expect("no trial was evaluated")),
            }
        }
        unreachable!()
    }
}

/// Annulus warm start: `u` from the exact potential, clamped to 1 inside
/// the inclusion; zero displacement and multiplier.
pub fn annulus_warm_start(mesh: &Mesh, inner_radius: f64, gamma: f64) -> Result<StateVector> {
    let sol = crate::analytic::AnnulusSolution::new(inner_radius, gamma)?;
    let mut q = StateVector::zeros(mesh.num_nodes(), mesh.boundary.len());
    for (i, p) in mesh.nodes.iter().enumerate() {
        q.u[i] = if p[0].hypot(p[1]) <= inner_radius {
            1.0
        } else {
            sol.potential(*p)?.min(1.0)
        };
    }
    Ok(q)
}
