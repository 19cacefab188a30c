//! Unstructured triangulation of polygonal domains.
//!
//! Boundary nodes are taken as given; the interior is seeded with a
//! hexagonal lattice of spacing `h`, relaxed by a few Laplacian passes, and
//! finished by constrained Delaunay refinement with a minimum-angle bound.

use std::collections::HashSet;
use std::f64::consts::PI;

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use super::{polygon_area, BoundaryCurve, Mesh};
use crate::error::{Error, Result};

pub const MIN_ANGLE_DEG: f64 = 25.0;
pub const DEFAULT_MAX_NODES: usize = 250_000;

/// Minimum distance of lattice seeds from the boundary, in units of `h`.
const BOUNDARY_CLEARANCE: f64 = 0.65;
const SMOOTHING_PASSES: usize = 4;
/// Fraction of the boundary spacing used to rotate the first disk node off
/// the x-axis, keeping node angles off the uniform polar sampling grid.
const DISK_PHASE: f64 = 0.381_966_011_250_105;

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

/// Triangulation of `B(0, radius)` with boundary spacing close to `h`.
pub fn mesh_disk(radius: f64, h: f64, max_nodes: usize) -> Result<Mesh> {
    if !(radius > 0.0 && h > 0.0 && h < radius) {
        return Err(Error::InvalidParameter(format!(
            "disk mesh needs 0 < h < R, got R = {radius}, h = {h}"
        )));
    }
    let m = ((2.0 * PI * radius / h).ceil() as usize).max(8);
    let step = 2.0 * PI / m as f64;
    let boundary: Vec<[f64; 2]> = (0..m)
        .map(|i| {
            let th = (i as f64 + DISK_PHASE) * step;
            [radius * th.cos(), radius * th.sin()]
        })
        .collect();
    mesh_polygon(&boundary, h, max_nodes)
}

/// Triangulates the simple polygon `boundary` (either orientation) without
/// moving its vertices.
pub fn mesh_polygon(boundary: &[[f64; 2]], h: f64, max_nodes: usize) -> Result<Mesh> {
    if boundary.len() < 3 {
        return Err(Error::DegenerateBoundary("fewer than three boundary points".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("mesh size must be positive, got {h}")));
    }
    check_simple(boundary)?;
    let mut poly = boundary.to_vec();
    if polygon_area(&poly) < 0.0 {
        poly.reverse();
    }
    let nb = poly.len();

    let area = polygon_area(&poly);
    let estimate = nb + (area / (0.5 * 3f64.sqrt() * h * h)) as usize;
    if estimate > max_nodes {
        return Err(Error::NodeBudget {
            requested: estimate,
            cap: max_nodes,
        });
    }

    let mut points = poly.clone();
    points.extend(lattice_seeds(&poly, h));
    let edges: Vec<[usize; 2]> = (0..nb).map(|i| [i, (i + 1) % nb]).collect();

    for _ in 0..SMOOTHING_PASSES {
        let cdt = build_cdt(&points, &edges)?;
        let tris = inner_triangles_by_centroid(&cdt, &poly);
        smooth_interior(&mut points, nb, &tris, &poly);
    }

    let mut cdt = build_cdt(&points, &edges)?;
    let params = RefinementParameters::<f64>::new()
        .with_angle_limit(AngleLimit::from_deg(MIN_ANGLE_DEG))
        .exclude_outer_faces(true)
        .with_max_additional_vertices(max_nodes.saturating_sub(points.len()).max(1));
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(Error::NodeBudget {
            requested: cdt.num_vertices(),
            cap: max_nodes,
        });
    }
    let excluded: HashSet<_> = result.excluded_faces.into_iter().collect();

    let mut used = vec![usize::MAX; cdt.num_vertices()];
    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let tri = face.vertices().map(|v| {
            let k = v.fix().index();
            if used[k] == usize::MAX {
                used[k] = nodes.len();
                let p = v.position();
                nodes.push([p.x, p.y]);
            }
            used[k]
        });
        triangles.push(tri);
    }
    if nodes.len() > max_nodes {
        return Err(Error::NodeBudget {
            requested: nodes.len(),
            cap: max_nodes,
        });
    }
    Mesh::from_parts(nodes, triangles, h)
}

/// New reference mesh from the outer boundary of a deformed mesh: least
/// squares cubic B-spline fit, uniform-arclength boundary nodes at spacing
/// `h`, interior regenerated.
pub fn reinitialize_domain(deformed: &Mesh, h: f64, max_nodes: usize) -> Result<Mesh> {
    deformed.check_orientation()?;
    let curve = BoundaryCurve::fit(&deformed.boundary_points())?;
    let boundary = curve.sample_uniform(h);
    mesh_polygon(&boundary, h, max_nodes)
}

fn build_cdt(points: &[[f64; 2]], edges: &[[usize; 2]]) -> Result<Cdt> {
    let verts: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let cdt = Cdt::bulk_load_cdt(verts, edges.to_vec()).map_err(|e| Error::Mesher(format!("{e:?}")))?;
    if cdt.num_vertices() != points.len() {
        return Err(Error::Mesher("duplicate mesh vertices".into()));
    }
    Ok(cdt)
}

fn inner_triangles_by_centroid(cdt: &Cdt, poly: &[[f64; 2]]) -> Vec<[usize; 3]> {
    cdt.inner_faces()
        .filter_map(|f| {
            let vs = f.vertices();
            let c = vs.iter().fold([0.0, 0.0], |acc, v| {
                let p = v.position();
                [acc[0] + p.x / 3.0, acc[1] + p.y / 3.0]
            });
            point_in_polygon(c, poly).then(|| vs.map(|v| v.fix().index()))
        })
        .collect()
}

fn smooth_interior(points: &mut [[f64; 2]], nb: usize, tris: &[[usize; 3]], poly: &[[f64; 2]]) {
    let n = points.len();
    let mut sum = vec![[0.0, 0.0]; n];
    let mut deg = vec![0usize; n];
    let mut seen = HashSet::new();
    for t in tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if seen.insert((a.min(b), a.max(b))) {
                for (i, j) in [(a, b), (b, a)] {
                    sum[i][0] += points[j][0];
                    sum[i][1] += points[j][1];
                    deg[i] += 1;
                }
            }
        }
    }
    let old = points.to_vec();
    for i in nb..n {
        if deg[i] == 0 {
            continue;
        }
        let p = [sum[i][0] / deg[i] as f64, sum[i][1] / deg[i] as f64];
        if point_in_polygon(p, poly) {
            points[i] = p;
        } else {
            points[i] = old[i];
        }
    }
}

fn lattice_seeds(poly: &[[f64; 2]], h: f64) -> Vec<[f64; 2]> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in poly {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let dy = 0.5 * 3f64.sqrt() * h;
    let clearance2 = (BOUNDARY_CLEARANCE * h).powi(2);
    let mut out = Vec::new();
    let k0 = (lo[1] / dy).floor() as i64;
    let k1 = (hi[1] / dy).ceil() as i64;
    for k in k0..=k1 {
        let y = k as f64 * dy;
        let shift = if k.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
        let j0 = ((lo[0] - shift) / h).floor() as i64;
        let j1 = ((hi[0] - shift) / h).ceil() as i64;
        for j in j0..=j1 {
            let p = [j as f64 * h + shift, y];
            if point_in_polygon(p, poly) && dist2_to_polygon(p, poly) >= clearance2 {
                out.push(p);
            }
        }
    }
    out
}

pub(crate) fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn dist2_to_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let ap = [p[0] - a[0], p[1] - a[1]];
            let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
            let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
            d[0] * d[0] + d[1] * d[1]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Rejects polygons with repeated vertices or crossing edges.
pub(crate) fn check_simple(poly: &[[f64; 2]]) -> Result<()> {
    let n = poly.len();
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a == b {
            return Err(Error::DegenerateBoundary(format!("repeated vertex at {i}")));
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            let (o1, o2) = (orient(a, b, c), orient(a, b, d));
            let (o3, o4) = (orient(c, d, a), orient(c, d, b));
            let collinear = o1 == 0.0 && o2 == 0.0;
            let crosses = if collinear {
                // overlap of the projections onto the common line
                let k = if (b[0] - a[0]).abs() >= (b[1] - a[1]).abs() { 0 } else { 1 };
                a[k].min(b[k]) <= c[k].max(d[k]) && c[k].min(d[k]) <= a[k].max(b[k])
            } else {
                o1 * o2 <= 0.0 && o3 * o4 <= 0.0
            };
            if crosses {
                return Err(Error::DegenerateBoundary(format!(
                    "boundary segments {i} and {j} intersect"
                )));
            }
        }
    }
    Ok(())
}
