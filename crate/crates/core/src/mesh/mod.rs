//! Triangulations of the reference and deformed domains.

mod generate;
mod spline;
pub mod vtk;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use generate::{mesh_disk, mesh_polygon, reinitialize_domain, DEFAULT_MAX_NODES, MIN_ANGLE_DEG};
pub use spline::BoundaryCurve;

/// A P1 triangulation whose outer boundary is a single closed loop.
///
/// The loop is stored counter-clockwise, so the domain lies to the left of
/// each boundary edge `boundary[k] → boundary[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<usize>,
    /// Target edge length used to generate the mesh.
    pub h: f64,
}

#[inline]
pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    /// Builds a mesh from raw connectivity, orienting every triangle
    /// counter-clockwise and extracting the boundary loop.
    pub fn from_parts(nodes: Vec<[f64; 2]>, mut triangles: Vec<[usize; 3]>, h: f64) -> Result<Self> {
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::Mesher(format!("triangle {t} references a missing node")));
            }
            let a = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if a == 0.0 {
                return Err(Error::InvertedElement { triangle: t, area: a });
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }
        let boundary = boundary_loop(nodes.len(), &triangles)?;
        Ok(Self {
            nodes,
            triangles,
            boundary,
            h,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Same connectivity with nodes moved to `X̂ + v(X̂)`.
    pub fn deform(&self, displacement: &[[f64; 2]]) -> Mesh {
        assert_eq!(displacement.len(), self.nodes.len(), "one displacement per node");
        let nodes = self
            .nodes
            .iter()
            .zip(displacement)
            .map(|(x, v)| [x[0] + v[0], x[1] + v[1]])
            .collect();
        Mesh {
            nodes,
            triangles: self.triangles.clone(),
            boundary: self.boundary.clone(),
            h: self.h,
        }
    }

    /// Triangles whose signed area is not positive.
    pub fn inverted(&self) -> Vec<usize> {
        (0..self.triangles.len()).filter(|&t| !(self.signed_area(t) > 0.0)).collect()
    }

    pub fn check_orientation(&self) -> Result<()> {
        match self.inverted().first() {
            Some(&t) => Err(Error::InvertedElement {
                triangle: t,
                area: self.signed_area(t),
            }),
            None => Ok(()),
        }
    }

    /// Boundary edges in loop order.
    pub fn boundary_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.boundary.len();
        (0..m).map(move |k| (self.boundary[k], self.boundary[(k + 1) % m]))
    }

    pub fn boundary_points(&self) -> Vec<[f64; 2]> {
        self.boundary.iter().map(|&i| self.nodes[i]).collect()
    }

    /// `position[node]` in the boundary loop, if on the boundary.
    pub fn boundary_positions(&self) -> Vec<Option<usize>> {
        let mut pos = vec![None; self.nodes.len()];
        for (k, &i) in self.boundary.iter().enumerate() {
            pos[i] = Some(k);
        }
        pos
    }

    pub fn num_edges(&self) -> usize {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// `V − E + F`; 1 for a disk-like domain.
    pub fn euler_characteristic(&self) -> i64 {
        self.nodes.len() as i64 - self.num_edges() as i64 + self.triangles.len() as i64
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_min_angle([self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]))
            .fold(180.0, f64::min)
    }

    /// Area enclosed by the boundary polygon.
    pub fn boundary_polygon_area(&self) -> f64 {
        polygon_area(&self.boundary_points())
    }

    /// Number of connected components of the nodes selected by `mask`,
    /// connected through mesh edges.
    pub fn node_components(&self, mask: &[bool]) -> usize {
        assert_eq!(mask.len(), self.num_nodes());
        let mut parent: Vec<usize> = (0..self.num_nodes()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if mask[a] && mask[b] {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        (0..self.num_nodes()).filter(|&i| mask[i] && find(&mut parent, i) == i).count()
    }

    /// Barycentric locator over this mesh.
    pub fn locator(&self) -> Locator<'_> {
        Locator::new(self)
    }
}

/// Uniform bucket grid over triangle bounding boxes.
pub struct Locator<'a> {
    mesh: &'a Mesh,
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> Locator<'a> {
    fn new(mesh: &'a Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let side = ((mesh.triangles.len().max(1)) as f64).sqrt().ceil().max(1.0);
        let cell = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / side).max(1e-12);
        let dims = [
            ((hi[0] - lo[0]) / cell) as usize + 1,
            ((hi[1] - lo[1]) / cell) as usize + 1,
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let pts = tri.map(|i| mesh.nodes[i]);
            let bx0 = ((pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min) - lo[0]) / cell) as usize;
            let bx1 = ((pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) - lo[0]) / cell) as usize;
            let by0 = ((pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min) - lo[1]) / cell) as usize;
            let by1 = ((pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max) - lo[1]) / cell) as usize;
            for by in by0..=by1.min(dims[1] - 1) {
                for bx in bx0..=bx1.min(dims[0] - 1) {
                    buckets[by * dims[0] + bx].push(t);
                }
            }
        }
        Self {
            mesh,
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    fn bary(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.mesh.triangles[t].map(|i| self.mesh.nodes[i]);
        let area = signed_area(a, b, c);
        let l0 = signed_area(x, b, c) / area;
        let l1 = signed_area(a, x, c) / area;
        [l0, l1, 1.0 - l0 - l1]
    }

    /// Triangle containing `x` and its barycentric coordinates; points
    /// outside the mesh snap to the least-violating nearby triangle with
    /// clamped coordinates.
    pub fn locate(&self, x: [f64; 2]) -> (usize, [f64; 3]) {
        let fx = ((x[0] - self.origin[0]) / self.cell).floor();
        let fy = ((x[1] - self.origin[1]) / self.cell).floor();
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for ring in 0..=self.dims[0].max(self.dims[1]) as i64 {
            for by in (fy as i64 - ring)..=(fy as i64 + ring) {
                for bx in (fx as i64 - ring)..=(fx as i64 + ring) {
                    let on_ring = (by - fy as i64).abs() == ring || (bx - fx as i64).abs() == ring;
                    if !on_ring || bx < 0 || by < 0 || bx as usize >= self.dims[0] || by as usize >= self.dims[1] {
                        continue;
                    }
                    for &t in &self.buckets[by as usize * self.dims[0] + bx as usize] {
                        let l = self.bary(t, x);
                        let outside = (-l[0]).max(-l[1]).max(-l[2]).max(0.0);
                        if outside == 0.0 {
                            return (t, l);
                        }
                        if best.map_or(true, |b| outside < b.2) {
                            best = Some((t, l, outside));
                        }
                    }
                }
            }
            if best.is_some() && ring >= 1 {
                break;
            }
        }
        let (t, l, _) = best.expect("mesh has triangles");
        let mut c = [l[0].max(0.0), l[1].max(0.0), l[2].max(0.0)];
        let s: f64 = c.iter().sum();
        c.iter_mut().for_each(|v| *v /= s);
        (t, c)
    }

    /// Linear interpolation of a nodal field at `x`.
    pub fn interpolate(&self, field: &[f64], x: [f64; 2]) -> f64 {
        let (t, l) = self.locate(x);
        let tri = self.mesh.triangles[t];
        l[0] * field[tri[0]] + l[1] * field[tri[1]] + l[2] * field[tri[2]]
    }
}

pub(crate) fn triangle_min_angle(p: [[f64; 2]; 3]) -> f64 {
    let mut min = 180.0_f64;
    for k in 0..3 {
        let a = p[k];
        let b = p[(k + 1) % 3];
        let c = p[(k + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        min = min.min(cross.abs().atan2(dot).to_degrees());
    }
    min
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn boundary_loop(num_nodes: usize, triangles: &[[usize; 3]]) -> Result<Vec<usize>> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    if count.values().any(|&c| c > 2) {
        return Err(Error::Mesher("edge shared by more than two triangles".into()));
    }
    let mut next = vec![usize::MAX; num_nodes];
    let mut edges = 0;
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if count[&(a.min(b), a.max(b))] == 1 {
                if next[a] != usize::MAX {
                    return Err(Error::Mesher(format!("boundary pinches at node {a}")));
                }
                next[a] = b;
                edges += 1;
            }
        }
    }
    let start = match next.iter().position(|&n| n != usize::MAX) {
        Some(s) => s,
        None => return Err(Error::Mesher("mesh has no boundary".into())),
    };
    let mut ring = vec![start];
    let mut cur = next[start];
    while cur != start {
        if cur == usize::MAX || ring.len() > edges {
            return Err(Error::Mesher("boundary is not a closed loop".into()));
        }
        ring.push(cur);
        cur = next[cur];
    }
    if ring.len() != edges {
        return Err(Error::Mesher(format!(
            "boundary has {} loops' worth of edges; expected exactly one loop",
            edges as f64 / ring.len() as f64
        )));
    }
    Ok(ring)
}
