//! Point quadtree over RBF knot centres with disk queries.

const LEAF_CAPACITY: usize = 8;
const MAX_DEPTH: usize = 12;

#[derive(Debug, Clone)]
struct Node {
    min: [f64; 2],
    max: [f64; 2],
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Leaf(Vec<usize>),
    Inner([usize; 4]),
}

#[derive(Debug, Clone)]
pub struct Quadtree {
    nodes: Vec<Node>,
    points: Vec<[f64; 2]>,
}

impl Quadtree {
    pub fn new(points: &[[f64; 2]]) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        if points.is_empty() {
            min = [0.0; 2];
            max = [0.0; 2];
        }
        let mut tree = Self {
            nodes: Vec::new(),
            points: points.to_vec(),
        };
        tree.nodes.push(Node {
            min,
            max,
            kind: Kind::Leaf((0..points.len()).collect()),
        });
        tree.split(0, 0);
        tree
    }

    fn split(&mut self, id: usize, depth: usize) {
        let items = match &self.nodes[id].kind {
            Kind::Leaf(items) if items.len() > LEAF_CAPACITY && depth < MAX_DEPTH => items.clone(),
            _ => return,
        };
        let Node { min, max, .. } = self.nodes[id];
        let mid = [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])];
        let mut buckets: [Vec<usize>; 4] = Default::default();
        for k in items {
            let p = self.points[k];
            let q = usize::from(p[0] > mid[0]) + 2 * usize::from(p[1] > mid[1]);
            buckets[q].push(k);
        }
        let mut children = [0; 4];
        for (q, bucket) in buckets.into_iter().enumerate() {
            let (lx, hx) = if q & 1 == 0 { (min[0], mid[0]) } else { (mid[0], max[0]) };
            let (ly, hy) = if q & 2 == 0 { (min[1], mid[1]) } else { (mid[1], max[1]) };
            children[q] = self.nodes.len();
            self.nodes.push(Node {
                min: [lx, ly],
                max: [hx, hy],
                kind: Kind::Leaf(bucket),
            });
        }
        self.nodes[id].kind = Kind::Inner(children);
        for c in children {
            self.split(c, depth + 1);
        }
    }

    /// Indices (ascending) of all points within `radius` of `x`, padded by a
    /// relative `1e-12` so that no point on the rounding edge is dropped.
    pub fn query(&self, x: [f64; 2], radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let r2 = radius * radius * (1.0 + 1e-12);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let dx = (node.min[0] - x[0]).max(0.0).max(x[0] - node.max[0]);
            let dy = (node.min[1] - x[1]).max(0.0).max(x[1] - node.max[1]);
            if dx * dx + dy * dy > r2 {
                continue;
            }
            match &node.kind {
                Kind::Leaf(items) => {
                    for &k in items {
                        let p = self.points[k];
                        let (ex, ey) = (p[0] - x[0], p[1] - x[1]);
                        if ex * ex + ey * ey <= r2 {
                            out.push(k);
                        }
                    }
                }
                Kind::Inner(children) => stack.extend_from_slice(children),
            }
        }
        out.sort_unstable();
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Quadtree, id: usize) -> usize {
            match &t.nodes[id].kind {
                Kind::Leaf(_) => 0,
                Kind::Inner(c) => 1 + c.iter().map(|&i| walk(t, i)).max().unwrap_or(0),
            }
        }
        walk(self, 0)
    }
}
