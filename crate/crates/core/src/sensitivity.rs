//! Adjoint design gradient and its finite-difference check.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::objective::{Objective, ObjectiveValue};
use crate::rbf::RbfGrid;
use crate::state::{quad_point, JacobianMode, NewtonOptions, NewtonRecord, StateParams, StateProblem, StateVector, GAUSS3};

/// Solution of `(∂r/∂q)ᵀ ν = rhs`, in residual layout `[r1, r2, r3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointVector {
    pub nu: Vec<f64>,
    /// `‖Jᵀν − rhs‖₂ / ‖rhs‖₂` (zero for a zero right-hand side).
    pub relative_residual: f64,
}

/// `∇_q(𝒥 + 𝒥_η)` at a state.
pub fn grad_q_objective(pb: &StateProblem, q: &StateVector, objective: &Objective) -> Result<Vec<f64>> {
    objective.grad_q(pb, q)
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn transpose_residual(jac: &SparseColMat<usize, f64>, nu: &[f64], rhs: &[f64]) -> f64 {
    // (Jᵀν)_c = Σ_r J_rc ν_r: a dot product per stored column
    let mut worst = 0.0;
    let mut norm = 0.0;
    for c in 0..jac.ncols() {
        let rows = jac.row_idx_of_col_raw(c);
        let vals = jac.val_of_col(c);
        let s: f64 = rows.iter().zip(vals).map(|(&r, &v)| v * nu[r]).sum();
        worst += (s - rhs[c]) * (s - rhs[c]);
        norm += rhs[c] * rhs[c];
    }
    if norm == 0.0 {
        worst.sqrt()
    } else {
        (worst / norm).sqrt()
    }
}

/// Solves `Jᵀν = rhs` by reusing the LU factorization of `J`.
pub fn solve_adjoint(jacobian: &SparseColMat<usize, f64>, rhs: &[f64]) -> Result<AdjointVector> {
    if rhs.iter().all(|&x| x == 0.0) {
        return Ok(AdjointVector {
            nu: vec![0.0; rhs.len()],
            relative_residual: 0.0,
        });
    }
    let lu = jacobian.sp_lu().map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
    let x = lu.solve_transpose(&col(rhs));
    finish(jacobian, (0..rhs.len()).map(|i| x[(i, 0)]).collect(), rhs)
}

/// Solves `Jᵀν = rhs` by factorizing an explicitly assembled transpose.
pub fn solve_adjoint_explicit(jacobian: &SparseColMat<usize, f64>, rhs: &[f64]) -> Result<AdjointVector> {
    let mut t = Vec::with_capacity(jacobian.compute_nnz());
    for c in 0..jacobian.ncols() {
        for (&r, &v) in jacobian.row_idx_of_col_raw(c).iter().zip(jacobian.val_of_col(c)) {
            t.push(Triplet::new(c, r, v));
        }
    }
    let jt = SparseColMat::try_new_from_triplets(jacobian.ncols(), jacobian.nrows(), &t)
        .map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
    let lu = jt.sp_lu().map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
    let x = lu.solve(&col(rhs));
    finish(jacobian, (0..rhs.len()).map(|i| x[(i, 0)]).collect(), rhs)
}

fn finish(jacobian: &SparseColMat<usize, f64>, nu: Vec<f64>, rhs: &[f64]) -> Result<AdjointVector> {
    if nu.iter().any(|x| !x.is_finite()) {
        return Err(Error::LinearSolver("adjoint solution is not finite".into()));
    }
    let relative_residual = transpose_residual(jacobian, &nu, rhs);
    Ok(AdjointVector { nu, relative_residual })
}

/// Per-quadrature-point weights `c` such that `ν·∂r/∂α_k = Σ c·∂H/∂α_k`,
/// together with the point and whether it lies on the deformed mesh.
fn design_weights(pb: &StateProblem, q: &StateVector, nu: &[f64], mut visit: impl FnMut([f64; 2], f64)) -> Result<()> {
    let n = pb.num_nodes();
    let ne = pb.num_boundary();
    let inv_eps = 1.0 / pb.params.epsilon;
    let x = pb.deformed_nodes(q)?;
    let (nu1, nu3) = (&nu[..n], &nu[n + ne..]);
    for tri in &pb.mesh.triangles {
        let xe = tri.map(|i| x[i]);
        let area = crate::mesh::signed_area(xe[0], xe[1], xe[2]);
        let xr = tri.map(|i| pb.mesh.nodes[i]);
        let area_ref = crate::mesh::signed_area(xr[0], xr[1], xr[2]);
        for lam in &GAUSS3 {
            let mut uq = 0.0;
            let mut n1 = 0.0;
            let (mut vq, mut n3) = ([0.0; 2], [0.0; 2]);
            for a in 0..3 {
                let i = tri[a];
                uq += lam[a] * q.u[i];
                n1 += lam[a] * nu1[i];
                for c in 0..2 {
                    vq[c] += lam[a] * q.v[2 * i + c];
                    n3[c] += lam[a] * nu3[2 * i + c];
                }
            }
            let c1 = area / 3.0 * (uq - 1.0) * inv_eps * n1;
            if c1 != 0.0 {
                visit(quad_point(&xe, lam), c1);
            }
            let c3 = area_ref / 3.0 * inv_eps * (vq[0] * n3[0] + vq[1] * n3[1]);
            if c3 != 0.0 {
                visit(quad_point(&xr, lam), c3);
            }
        }
    }
    Ok(())
}

/// `(∂r/∂α)ᵀ ν + ∂𝒥_η/∂α`, assembled without forming `∂r/∂α`.
pub fn design_gradient(pb: &StateProblem, q: &StateVector, nu: &[f64], objective: &Objective) -> Result<Vec<f64>> {
    assert_eq!(nu.len(), pb.dim(), "adjoint length");
    let mut g = crate::objective::gray_penalty_grad_alpha(pb, q, objective.eta)?;
    let (mut idx, mut terms) = (Vec::new(), Vec::new());
    design_weights(pb, q, nu, |x, c| {
        let s = pb.heaviside(x);
        if s.dh_dpsi == 0.0 && s.dh_dgrad == [0.0, 0.0] {
            return;
        }
        pb.grid.basis_terms(x, &mut idx, &mut terms);
        for &(k, phi, dphi) in &terms {
            g[k] += c * (s.dh_dpsi * phi + s.dh_dgrad[0] * dphi[0] + s.dh_dgrad[1] * dphi[1]);
        }
    })?;
    Ok(g)
}

/// Explicit `∂r/∂α`, rows in residual layout, one column per knot.
pub fn design_jacobian(pb: &StateProblem, q: &StateVector) -> Result<SparseColMat<usize, f64>> {
    let n = pb.num_nodes();
    let ne = pb.num_boundary();
    let inv_eps = 1.0 / pb.params.epsilon;
    let x = pb.deformed_nodes(q)?;
    let mut t = Vec::new();
    let (mut idx, mut terms) = (Vec::new(), Vec::new());
    for tri in &pb.mesh.triangles {
        let xe = tri.map(|i| x[i]);
        let xr = tri.map(|i| pb.mesh.nodes[i]);
        let area = crate::mesh::signed_area(xe[0], xe[1], xe[2]);
        let area_ref = crate::mesh::signed_area(xr[0], xr[1], xr[2]);
        for lam in &GAUSS3 {
            let uq: f64 = (0..3).map(|a| lam[a] * q.u[tri[a]]).sum();
            let vq: [f64; 2] = std::array::from_fn(|c| (0..3).map(|a| lam[a] * q.v[2 * tri[a] + c]).sum());
            for (deformed, p) in [(true, quad_point(&xe, lam)), (false, quad_point(&xr, lam))] {
                let s = pb.heaviside(p);
                if s.dh_dpsi == 0.0 && s.dh_dgrad == [0.0, 0.0] {
                    continue;
                }
                pb.grid.basis_terms(p, &mut idx, &mut terms);
                for &(k, phi, dphi) in &terms {
                    let dh = s.dh_dpsi * phi + s.dh_dgrad[0] * dphi[0] + s.dh_dgrad[1] * dphi[1];
                    if dh == 0.0 {
                        continue;
                    }
                    for a in 0..3 {
                        if deformed {
                            t.push(Triplet::new(tri[a], k, area / 3.0 * (uq - 1.0) * inv_eps * lam[a] * dh));
                        } else {
                            for c in 0..2 {
                                let row = n + ne + 2 * tri[a] + c;
                                t.push(Triplet::new(row, k, area_ref / 3.0 * inv_eps * vq[c] * lam[a] * dh));
                            }
                        }
                    }
                }
            }
        }
    }
    SparseColMat::try_new_from_triplets(pb.dim(), pb.grid.len(), &t).map_err(|e| Error::LinearSolver(format!("{e:?}")))
}

/// State solve plus objective and adjoint gradient for one design.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pub mesh: &'a Mesh,
    pub grid: &'a RbfGrid,
    pub params: StateParams,
    pub objective: &'a Objective,
    pub newton: NewtonOptions,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: StateVector,
    pub value: ObjectiveValue,
    pub newton_iterations: usize,
}

impl<'a> Evaluator<'a> {
    pub fn problem<'b>(&'b self, alpha: &'b [f64]) -> Result<StateProblem<'b>> {
        StateProblem::new(self.mesh, self.grid, alpha, self.params)
    }

    /// Newton solve from `q0` and the objective at the solution.
    pub fn evaluate(&self, alpha: &[f64], q0: StateVector, log: &mut Vec<NewtonRecord>) -> Result<Evaluation> {
        let pb = self.problem(alpha)?;
        let start = log.len();
        let state = pb.newton_solve(q0, self.newton, log)?;
        let value = self.objective.evaluate(&pb, &state)?;
        Ok(Evaluation {
            state,
            value,
            newton_iterations: log.len() - start - 1,
        })
    }

    /// Adjoint gradient of `𝒥 + 𝒥_η` at a converged state.
    pub fn gradient(&self, alpha: &[f64], state: &StateVector) -> Result<(Vec<f64>, AdjointVector)> {
        let pb = self.problem(alpha)?;
        let jac = pb.jacobian(state, JacobianMode::Exact)?;
        let rhs: Vec<f64> = grad_q_objective(&pb, state, self.objective)?.iter().map(|g| -g).collect();
        let adj = solve_adjoint(&jac, &rhs)?;
        let g = design_gradient(&pb, state, &adj.nu, self.objective)?;
        Ok((g, adj))
    }
}

/// One row of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckRow {
    pub component: usize,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
    pub newton_solves: usize,
    pub newton_iterations: usize,
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Central finite difference of the full pipeline in component `k`, with
/// step `1e-5·(1 + |α_k|)` and Newton re-converged to `1e-12` from `base`.
pub fn fd_component(ev: &Evaluator, alpha: &[f64], base: &StateVector, k: usize) -> Result<(f64, usize)> {
    let mut probe = ev.clone();
    probe.newton.tol = 1e-12;
    let step = 1e-5 * (1.0 + alpha[k].abs());
    let mut iters = 0;
    let mut val = |sign: f64| -> Result<f64> {
        let mut a = alpha.to_vec();
        a[k] += sign * step;
        let mut log = Vec::new();
        let e = probe.evaluate(&a, base.clone(), &mut log)?;
        iters += e.newton_iterations;
        Ok(e.value.total())
    };
    let fp = val(1.0)?;
    let fm = val(-1.0)?;
    Ok(((fp - fm) / (2.0 * step), iters))
}

/// Compares adjoint and finite-difference gradients on `components`.
pub fn grad_check(ev: &Evaluator, alpha: &[f64], base: &StateVector, components: &[usize]) -> Result<Vec<GradCheckRow>> {
    let (g, _) = ev.gradient(alpha, base)?;
    components
        .iter()
        .map(|&k| {
            let (fd, it) = fd_component(ev, alpha, base, k)?;
            Ok(GradCheckRow {
                component: k,
                adjoint: g[k],
                finite_difference: fd,
                relative_error: relative_error(g[k], fd),
                newton_solves: 2,
                newton_iterations: it,
            })
        })
        .collect()
}

/// Knots whose support disk misses every node of `mesh` and its deformation.
pub fn knots_off_mesh(grid: &RbfGrid, nodes: &[[f64; 2]]) -> Vec<usize> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in nodes {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let rs = grid.support_radius();
    grid.knots()
        .iter()
        .enumerate()
        .filter(|(_, k)| {
            let dx = (lo[0] - k[0]).max(k[0] - hi[0]).max(0.0);
            let dy = (lo[1] - k[1]).max(k[1] - hi[1]).max(0.0);
            dx.hypot(dy) >= rs
        })
        .map(|(i, _)| i)
        .collect()
}
