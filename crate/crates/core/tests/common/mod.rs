#![allow(dead_code)]

use pseudosolid::analytic::{bernoulli_radius, circle_levelset};
use pseudosolid::mesh::{mesh_disk, Mesh};
use pseudosolid::rbf::{RbfGrid, Rect};
use pseudosolid::state::{annulus_warm_start, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn annulus_radius() -> f64 {
    bernoulli_radius(1.0, -1.0).unwrap()
}

/// Reference disk `B(0, C(1, −1))`.
pub fn disk(h: f64) -> Mesh {
    mesh_disk(annulus_radius(), h, 200_000).unwrap()
}

pub fn grid(n: usize) -> RbfGrid {
    RbfGrid::new(n, Rect::new(-2.5, 2.5, -2.5, 2.5)).unwrap()
}

/// Design whose zero level set approximates the circle of radius `r`.
pub fn circle_design(grid: &RbfGrid, r: f64) -> Vec<f64> {
    grid.fit(|p| circle_levelset(p, r), -1e20, 1e20).unwrap().alpha
}

/// Annulus warm start with a random perturbation small enough to keep every
/// triangle positively oriented.
pub fn perturbed_state(mesh: &Mesh, seed: u64, scale: f64) -> StateVector {
    let mut r = rng(seed);
    let mut q = annulus_warm_start(mesh, 1.0, -1.0).unwrap();
    for u in q.u.iter_mut() {
        *u += scale * r.random_range(-0.2..0.2);
    }
    for v in q.v.iter_mut() {
        *v = scale * mesh.h * r.random_range(-0.1..0.1);
    }
    for p in q.p.iter_mut() {
        *p = scale * r.random_range(-0.5..0.5);
    }
    q
}

pub fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Disk mesh symmetric about the x-axis: the upper half is meshed and
/// mirrored.
pub fn mirrored_disk(radius: f64, h: f64) -> Mesh {
    use std::f64::consts::PI;
    let m = ((PI * radius / h).ceil() as usize).max(4);
    let mut half: Vec<[f64; 2]> = (0..=m)
        .map(|k| {
            let t = PI * k as f64 / m as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect();
    half[m][1] = 0.0;
    half[0][1] = 0.0;
    let d = ((2.0 * radius / h).ceil() as usize).max(2);
    for k in 1..d {
        half.push([-radius + 2.0 * radius * k as f64 / d as f64, 0.0]);
    }
    let upper = pseudosolid::mesh::mesh_polygon(&half, h, 200_000).unwrap();
    let mut nodes = upper.nodes.clone();
    let mut mirror = vec![0usize; nodes.len()];
    for (i, p) in upper.nodes.iter().enumerate() {
        if p[1] == 0.0 {
            mirror[i] = i;
        } else {
            mirror[i] = nodes.len();
            nodes.push([p[0], -p[1]]);
        }
    }
    let mut tris = upper.triangles.clone();
    for t in &upper.triangles {
        tris.push([mirror[t[0]], mirror[t[2]], mirror[t[1]]]);
    }
    Mesh::from_parts(nodes, tris, h).unwrap()
}
