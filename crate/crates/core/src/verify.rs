//! Fixed-inclusion annulus runs compared against the closed-form radius.

use crate::analytic::{bernoulli_radius, circle_levelset};
use crate::error::Result;
use crate::mesh::mesh_disk;
use crate::rbf::{RbfGrid, Rect};
use crate::state::{annulus_warm_start, NewtonOptions, NewtonRecord, StateParams, StateProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusSetup {
    pub inner_radius: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub grid_size: usize,
    pub domain: Rect,
    pub max_nodes: usize,
    pub newton: NewtonOptions,
}

impl Default for AnnulusSetup {
    fn default() -> Self {
        Self {
            inner_radius: 1.0,
            gamma: -1.0,
            epsilon: 1e-3,
            grid_size: 20,
            domain: Rect::new(-2.5, 2.5, -2.5, 2.5),
            max_nodes: crate::mesh::DEFAULT_MAX_NODES,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnnulusRun {
    pub h: f64,
    pub delta: f64,
    pub nodes: usize,
    pub triangles: usize,
    pub exact_radius: f64,
    /// Mean radius of the deformed boundary nodes.
    pub mean_radius: f64,
    /// Largest `|r_i − C| / C` over boundary nodes.
    pub max_rel_error: f64,
    pub log: Vec<NewtonRecord>,
}

impl AnnulusRun {
    /// Signed relative error of the mean radius.
    pub fn rel_error(&self) -> f64 {
        (self.mean_radius - self.exact_radius) / self.exact_radius
    }
}

/// Solves the state problem for the fixed inclusion `B(0, R)` on the disk
/// `B(0, C(R, γ))` with mesh size `h` and gray half width `delta`.
pub fn annulus_run(setup: &AnnulusSetup, h: f64, delta: f64) -> Result<AnnulusRun> {
    let c = bernoulli_radius(setup.inner_radius, setup.gamma)?;
    let mesh = mesh_disk(c, h, setup.max_nodes)?;
    let grid = RbfGrid::new(setup.grid_size, setup.domain)?;
    let r = setup.inner_radius;
    let alpha = grid.fit(|p| circle_levelset(p, r), -1e20, 1e20)?.alpha;
    let pb = StateProblem::new(&mesh, &grid, &alpha, StateParams::new(setup.gamma, setup.epsilon, delta))?;
    let q0 = annulus_warm_start(&mesh, r, setup.gamma)?;
    let mut log = Vec::new();
    let q = pb.newton_solve(q0, setup.newton, &mut log)?;
    let x = pb.deformed_nodes(&q)?;
    let radii: Vec<f64> = mesh.boundary.iter().map(|&i| x[i][0].hypot(x[i][1])).collect();
    let mean_radius = radii.iter().sum::<f64>() / radii.len() as f64;
    let max_rel_error = radii.iter().map(|r| (r - c).abs() / c).fold(0.0, f64::max);
    Ok(AnnulusRun {
        h,
        delta,
        nodes: mesh.num_nodes(),
        triangles: mesh.num_triangles(),
        exact_radius: c,
        mean_radius,
        max_rel_error,
        log,
    })
}

/// Two-mesh estimate `log2(e_h / e_{h/2})`.
pub fn observed_order(coarse_error: f64, fine_error: f64) -> f64 {
    (coarse_error.abs() / fine_error.abs()).log2()
}
