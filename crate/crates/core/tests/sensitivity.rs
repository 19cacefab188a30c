mod common;

use common::*;
use pseudosolid::objective::{Objective, TargetShape};
use pseudosolid::rbf::{RbfGrid, Rect};
use pseudosolid::sensitivity::*;
use pseudosolid::state::*;
use rand::seq::IndexedRandom;
use rand::Rng;

fn converged(pb: &StateProblem) -> StateVector {
    let q0 = annulus_warm_start(pb.mesh, 1.0, -1.0).unwrap();
    let opts = NewtonOptions {
        tol: 1e-12,
        ..NewtonOptions::default()
    };
    pb.newton_solve(q0, opts, &mut Vec::new()).unwrap()
}

fn square_target() -> TargetShape {
    TargetShape::RoundedSquare {
        side: 3.6,
        corner_radius: 0.8,
    }
}

#[test]
fn grad_q_matches_finite_differences() {
    let mesh = disk(0.25);
    let grid = grid(6);
    let alpha = circle_design(&grid, 1.0);
    let pb = StateProblem::new(&mesh, &grid, &alpha, StateParams::new(-1.0, 1e-3, 0.2)).unwrap();
    let q = converged(&pb);
    for eta in [0.0, 0.1] {
        let obj = Objective::new(square_target(), eta);
        let g = grad_q_objective(&pb, &q, &obj).unwrap();
        let (n, ne) = (pb.num_nodes(), pb.num_boundary());
        if eta == 0.0 {
            assert!(g[3 * n..].iter().all(|&x| x == 0.0), "multiplier components");
            for i in 0..n {
                if pb.boundary_position(i).is_none() {
                    assert_eq!(g[i], 0.0);
                    assert_eq!(g[n + 2 * i], 0.0);
                }
            }
        }
        let gmax = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let nonzero: Vec<usize> = (0..g.len()).filter(|&k| g[k] != 0.0).collect();
        let mut r = rng(eta.to_bits());
        let mut picks: Vec<usize> = nonzero.choose_multiple(&mut r, 5).copied().collect();
        picks.extend((0..5).map(|_| r.random_range(0..g.len())));
        let base = q.to_flat();
        for k in picks {
            let e = 1e-7;
            let val = |s: f64| {
                let mut x = base.clone();
                x[k] += s * e;
                obj.evaluate(&pb, &StateVector::from_flat(&x, n, ne)).unwrap().total()
            };
            let fd = (val(1.0) - val(-1.0)) / (2.0 * e);
            let tol = 1e-6 * g[k].abs().max(fd.abs()) + 1e-9 * gmax;
            assert!((g[k] - fd).abs() <= tol, "eta {eta} dof {k}: {} vs {fd}", g[k]);
        }
    }
}

#[test]
fn adjoint_two_paths_agree() {
    let mesh = disk(0.25);
    let grid = grid(6);
    let alpha = circle_design(&grid, 1.0);
    let pb = StateProblem::new(&mesh, &grid, &alpha, StateParams::new(-1.0, 1e-3, 0.2)).unwrap();
    let q = converged(&pb);
    let obj = Objective::new(square_target(), 0.1);
    let rhs: Vec<f64> = grad_q_objective(&pb, &q, &obj).unwrap().iter().map(|x| -x).collect();
    let j = pb.jacobian(&q, JacobianMode::Exact).unwrap();
    let a = solve_adjoint(&j, &rhs).unwrap();
    let b = solve_adjoint_explicit(&j, &rhs).unwrap();
    assert!(a.relative_residual <= 1e-10, "{}", a.relative_residual);
    assert!(b.relative_residual <= 1e-10, "{}", b.relative_residual);
    let scale = a.nu.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let diff = a.nu.iter().zip(&b.nu).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 1e-12 * scale.max(1.0), "{diff:e} (scale {scale:e})");
    let zero = solve_adjoint(&j, &vec![0.0; rhs.len()]).unwrap();
    assert!(zero.nu.iter().all(|&x| x == 0.0));
}

#[test]
fn matrix_free_product_matches_explicit_design_jacobian() {
    let mesh = disk(0.25);
    let grid = RbfGrid::new(12, Rect::new(-4.0, 4.0, -4.0, 4.0)).unwrap();
    let alpha = circle_design(&grid, 1.0);
    let pb = StateProblem::new(&mesh, &grid, &alpha, StateParams::new(-1.0, 1e-3, 0.2)).unwrap();
    let q = perturbed_state(&mesh, 4, 1.0);
    let mut r = rng(2);
    let nu = random_vec(&mut r, pb.dim());
    let obj = Objective::new(square_target(), 0.0);
    let g = design_gradient(&pb, &q, &nu, &obj).unwrap();
    let dj = design_jacobian(&pb, &q).unwrap();
    let x = pb.deformed_nodes(&q).unwrap();
    let off = knots_off_mesh(&grid, &x);
    assert!(!off.is_empty());
    let rs = grid.support_radius();
    for k in 0..grid.len() {
        let rows = dj.row_idx_of_col_raw(k);
        let vals = dj.val_of_col(k);
        let prod: f64 = rows.iter().zip(vals).map(|(&row, &v)| v * nu[row]).sum();
        assert!((prod - g[k]).abs() <= 1e-10 * (1.0 + g[k].abs()), "knot {k}: {prod} vs {}", g[k]);
        if off.contains(&k) {
            assert!(rows.is_empty());
            assert_eq!(g[k], 0.0);
        }
        // every row belongs to a node of a triangle that meets the support disk
        let c = grid.knots()[k];
        let (n, ne) = (pb.num_nodes(), pb.num_boundary());
        for &row in rows {
            let node = if row < n { row } else { (row - n - ne) / 2 };
            assert!(row < n || row >= n + ne, "design Jacobian touches r2");
            let near = mesh.triangles.iter().filter(|t| t.contains(&node)).any(|t| {
                t.iter().any(|&i| {
                    let ps = [x[i], mesh.nodes[i]];
                    ps.iter().any(|p| (p[0] - c[0]).hypot(p[1] - c[1]) < rs + 2.0 * mesh.h)
                })
            });
            assert!(near, "knot {k} reaches row {row}");
        }
    }
}

#[test]
fn adjoint_gradient_matches_end_to_end_finite_differences() {
    let mesh = disk(0.2);
    assert!((400..=700).contains(&mesh.num_triangles()), "{}", mesh.num_triangles());
    let grid = grid(5);
    let mut alpha = circle_design(&grid, 1.0);
    let mut r = rng(21);
    alpha.iter_mut().for_each(|a| *a += 0.02 * r.random_range(-1.0..1.0));
    let obj = Objective::new(square_target(), 0.1);
    let ev = Evaluator {
        mesh: &mesh,
        grid: &grid,
        params: StateParams::new(-1.0, 1e-3, 0.1),
        objective: &obj,
        newton: NewtonOptions {
            tol: 1e-12,
            ..NewtonOptions::default()
        },
    };
    let e = ev.evaluate(&alpha, annulus_warm_start(&mesh, 1.0, -1.0).unwrap(), &mut Vec::new()).unwrap();
    let comps: Vec<usize> = (0..25).collect::<Vec<_>>().choose_multiple(&mut r, 5).copied().collect();
    let rows = grad_check(&ev, &alpha, &e.state, &comps).unwrap();
    for row in rows {
        assert!(
            row.relative_error <= 1e-4,
            "component {}: adjoint {} fd {} rel {:e}",
            row.component,
            row.adjoint,
            row.finite_difference,
            row.relative_error
        );
    }
}

#[test]
fn mirror_symmetric_configuration_gives_mirrored_gradient() {
    let c = annulus_radius();
    let mesh = mirrored_disk(c, 0.25);
    let n = 7;
    let grid = RbfGrid::new(n, Rect::new(-2.5, 2.5, -2.5, 2.5)).unwrap();
    let mut alpha = circle_design(&grid, 1.0);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (i * n + j, (n - 1 - i) * n + j);
            let s = 0.5 * (alpha[a] + alpha[b]) + 0.01 * (j as f64 - 3.0);
            alpha[a] = s;
            alpha[b] = s;
        }
    }
    let obj = Objective::new(TargetShape::CosineKey, 0.05);
    let ev = Evaluator {
        mesh: &mesh,
        grid: &grid,
        params: StateParams::new(-1.0, 1e-3, 0.2),
        objective: &obj,
        newton: NewtonOptions {
            tol: 1e-12,
            ..NewtonOptions::default()
        },
    };
    let e = ev.evaluate(&alpha, annulus_warm_start(&mesh, 1.0, -1.0).unwrap(), &mut Vec::new()).unwrap();
    let (g, _) = ev.gradient(&alpha, &e.state).unwrap();
    let gmax = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    assert!(gmax > 0.0);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (i * n + j, (n - 1 - i) * n + j);
            assert!((g[a] - g[b]).abs() <= 1e-8 * gmax.max(1.0), "({i},{j}): {} vs {}", g[a], g[b]);
        }
    }
}

#[test]
fn relative_error_definition() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert_eq!(relative_error(1.0, 0.5), 0.5);
    assert_eq!(relative_error(-2.0, -2.0), 0.0);
}
