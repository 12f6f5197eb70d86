//! Bounding volume hierarchy over labeled triangles.
//!
//! Traversal reproduces the linear-scan nearest-hit rule exactly: the closest
//! positive-distance intersection wins, with ties closer than 1e-9 broken by
//! the lower triangle index. Box pruning keeps the same 1e-9 slack so that
//! coincident surfaces in different subtrees stay reachable.

use crate::math::Vec3;
use crate::raster::SemClass;

/// Distance window treated as a tie between two intersections.
pub const HIT_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub v0: Vec3,
    pub v1: Vec3,
    pub v2: Vec3,
    pub class: SemClass,
}

impl Triangle {
    pub fn area(&self) -> f64 {
        (self.v1 - self.v0).cross(self.v2 - self.v0).norm() / 2.0
    }

    /// Unit geometric normal from the stored winding.
    pub fn normal(&self) -> Vec3 {
        (self.v1 - self.v0).cross(self.v2 - self.v0).normalized()
    }

    pub fn centroid(&self) -> Vec3 {
        (self.v0 + self.v1 + self.v2) / 3.0
    }
}

/// Möller–Trumbore intersection of a ray with one (two-sided) triangle;
/// returns the ray distance for hits farther than [`HIT_TIE_EPS`].
pub fn intersect_triangle(tri: &Triangle, origin: Vec3, dir: Vec3) -> Option<f64> {
    let e1 = tri.v1 - tri.v0;
    let e2 = tri.v2 - tri.v0;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri.v0;
    let u = s.dot(p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > HIT_TIE_EPS).then_some(t)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    pub(crate) fn empty() -> Self {
        Self {
            lo: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub(crate) fn with_point(mut self, p: Vec3) -> Self {
        self.grow(p);
        self
    }

    fn grow(&mut self, p: Vec3) {
        self.lo = Vec3::new(self.lo.x.min(p.x), self.lo.y.min(p.y), self.lo.z.min(p.z));
        self.hi = Vec3::new(self.hi.x.max(p.x), self.hi.y.max(p.y), self.hi.z.max(p.z));
    }

    fn grow_tri(&mut self, t: &Triangle) {
        self.grow(t.v0);
        self.grow(t.v1);
        self.grow(t.v2);
    }

    pub(crate) fn contains(&self, p: Vec3, slack: f64) -> bool {
        p.x >= self.lo.x - slack
            && p.x <= self.hi.x + slack
            && p.y >= self.lo.y - slack
            && p.y <= self.hi.y + slack
            && p.z >= self.lo.z - slack
            && p.z <= self.hi.z + slack
    }

    /// Entry distance of a ray, or `None` if the box is missed entirely.
    fn ray_entry(&self, origin: Vec3, inv_dir: Vec3) -> Option<f64> {
        let mut t_near = 0.0f64;
        let mut t_far = f64::INFINITY;
        for a in 0..3 {
            let (lo, hi, o, inv) = match a {
                0 => (self.lo.x, self.hi.x, origin.x, inv_dir.x),
                1 => (self.lo.y, self.hi.y, origin.y, inv_dir.y),
                _ => (self.lo.z, self.hi.z, origin.z, inv_dir.z),
            };
            let t0 = (lo - o) * inv;
            let t1 = (hi - o) * inv;
            let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
        Some(t_near)
    }
}

#[derive(Debug, Clone)]
struct Node {
    aabb: Aabb,
    /// Leaf: first slot in `order`. Internal: index of the left child,
    /// right child at `index + 1`.
    index: u32,
    /// Number of triangles for a leaf, 0 for internal nodes.
    count: u32,
}

/// Static median-split BVH. Construction is deterministic.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(triangles: &[Triangle]) -> Self {
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::new();
        if triangles.is_empty() {
            nodes.push(Node {
                aabb: Aabb::empty(),
                index: 0,
                count: 0,
            });
            return Self { nodes, order };
        }
        let mut bvh = Self {
            nodes: Vec::new(),
            order: Vec::new(),
        };
        bvh.nodes.push(Node {
            aabb: Aabb::empty(),
            index: 0,
            count: 0,
        });
        bvh.split(0, &mut order, 0, triangles.len(), triangles);
        bvh.order = order;
        bvh
    }

    fn split(
        &mut self,
        node: usize,
        order: &mut [u32],
        start: usize,
        end: usize,
        tris: &[Triangle],
    ) {
        let mut aabb = Aabb::empty();
        for &t in &order[start..end] {
            aabb.grow_tri(&tris[t as usize]);
        }
        self.nodes[node].aabb = aabb;
        let count = end - start;
        if count <= LEAF_SIZE {
            self.nodes[node].index = start as u32;
            self.nodes[node].count = count as u32;
            return;
        }
        let extent = aabb.hi - aabb.lo;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let key = |t: u32| -> f64 {
            let c = tris[t as usize].centroid();
            match axis {
                0 => c.x,
                1 => c.y,
                _ => c.z,
            }
        };
        order[start..end].sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap().then(a.cmp(&b)));
        let mid = start + count / 2;
        let left = self.nodes.len();
        self.nodes.push(Node {
            aabb: Aabb::empty(),
            index: 0,
            count: 0,
        });
        self.nodes.push(Node {
            aabb: Aabb::empty(),
            index: 0,
            count: 0,
        });
        self.nodes[node].index = left as u32;
        self.nodes[node].count = 0;
        self.split(left, order, start, mid, tris);
        self.split(left + 1, order, mid, end, tris);
    }

    /// Nearest hit as `(distance, triangle index)` under the tie rule.
    pub fn intersect(&self, tris: &[Triangle], origin: Vec3, dir: Vec3) -> Option<(f64, u32)> {
        if tris.is_empty() {
            return None;
        }
        let inv_dir = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<(f64, u32)> = None;
        let mut stack: Vec<u32> = vec![0];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            let Some(entry) = node.aabb.ray_entry(origin, inv_dir) else {
                continue;
            };
            if let Some((bd, _)) = best {
                if entry > bd + HIT_TIE_EPS {
                    continue;
                }
            }
            if node.count > 0 {
                for &ti in &self.order[node.index as usize..(node.index + node.count) as usize] {
                    if let Some(t) = intersect_triangle(&tris[ti as usize], origin, dir) {
                        best = match best {
                            None => Some((t, ti)),
                            Some((bd, bi)) => {
                                if t < bd - HIT_TIE_EPS || ((t - bd).abs() <= HIT_TIE_EPS && ti < bi)
                                {
                                    Some((t, ti))
                                } else {
                                    Some((bd, bi))
                                }
                            }
                        };
                    }
                }
            } else {
                // Push the farther child first so the nearer pops first.
                let l = node.index;
                let le = self.nodes[l as usize].aabb.ray_entry(origin, inv_dir);
                let re = self.nodes[l as usize + 1].aabb.ray_entry(origin, inv_dir);
                match (le, re) {
                    (Some(a), Some(b)) if a <= b => {
                        stack.push(l + 1);
                        stack.push(l);
                    }
                    (Some(_), Some(_)) => {
                        stack.push(l);
                        stack.push(l + 1);
                    }
                    (Some(_), None) => stack.push(l),
                    (None, Some(_)) => stack.push(l + 1),
                    (None, None) => {}
                }
            }
        }
        best
    }
}
