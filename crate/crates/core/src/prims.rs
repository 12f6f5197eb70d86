//! Tessellation of a validated scene into labeled world-space triangles.
//!
//! Floors and ceilings become triangulated polygon caps. Every wall edge is
//! partitioned by the cut lines of its items into an axis-aligned rectangle
//! grid in (along-edge, z) space; wall cells emit wall quads, door/window
//! cells emit quads of their own class, opening cells emit nothing. Cells
//! are emitted left-to-right, bottom-to-top, so output order is
//! deterministic. Wall quads are wound so their geometric normal points into
//! the owning room.

use crate::bvh::{Aabb, Bvh, Triangle};
use crate::math::Vec3;
use crate::raster::SemClass;
use crate::scene::{edge_endpoints, edge_length, Scene, WallItemClass};

/// Triangles of a scene plus the acceleration index over them.
#[derive(Debug, Clone)]
pub struct PrimitiveSet {
    triangles: Vec<Triangle>,
    bvh: Bvh,
    bounds: Aabb,
}

impl PrimitiveSet {
    pub fn from_triangles(triangles: Vec<Triangle>) -> Self {
        let bvh = Bvh::build(&triangles);
        let mut bounds = Aabb::empty();
        for t in &triangles {
            bounds = bounds.with_point(t.v0).with_point(t.v1).with_point(t.v2);
        }
        Self {
            triangles,
            bvh,
            bounds,
        }
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub(crate) fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    /// Whether a point lies inside the scene bounding box (with slack).
    pub fn contains(&self, p: Vec3, slack: f64) -> bool {
        self.bounds.contains(p, slack)
    }
}

const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Tessellates a validated scene. Panics on invalid input geometry
/// (callers run [`crate::scene::validate_scene`] first).
pub fn scene_to_primitives(scene: &Scene) -> PrimitiveSet {
    let mut tris: Vec<Triangle> = Vec::new();
    for room in &scene.rooms {
        // Floor cap (normal up) and ceiling cap (normal down).
        let cap = triangulate_polygon(&room.polygon);
        for &(a, b, c) in &cap {
            push_tri(
                &mut tris,
                Vec3::new(a[0], a[1], room.floor_z),
                Vec3::new(b[0], b[1], room.floor_z),
                Vec3::new(c[0], c[1], room.floor_z),
                SemClass::Floor,
            );
            push_tri(
                &mut tris,
                Vec3::new(a[0], a[1], room.ceiling_z),
                Vec3::new(c[0], c[1], room.ceiling_z),
                Vec3::new(b[0], b[1], room.ceiling_z),
                SemClass::Ceiling,
            );
        }
        for edge in 0..room.polygon.len() {
            let (p0, p1) = edge_endpoints(room, edge);
            let len = edge_length(room, edge);
            let dir = [(p1[0] - p0[0]) / len, (p1[1] - p0[1]) / len];
            // Interior of a CCW polygon lies left of the directed edge.
            let inward = Vec3::new(-dir[1], dir[0], 0.0);
            let items: Vec<_> = scene
                .wall_items
                .iter()
                .filter(|it| it.room == room.id && it.edge == edge)
                .collect();
            let mut s_cuts = vec![0.0, len];
            let mut z_cuts = vec![room.floor_z, room.ceiling_z];
            for it in &items {
                s_cuts.push(it.offset);
                s_cuts.push(it.offset + it.width);
                z_cuts.push(it.bottom_z);
                z_cuts.push(it.top_z);
            }
            for cuts in [&mut s_cuts, &mut z_cuts] {
                cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            }
            let at = |s: f64, z: f64| Vec3::new(p0[0] + dir[0] * s, p0[1] + dir[1] * s, z);
            for si in 0..s_cuts.len() - 1 {
                let (s0, s1) = (s_cuts[si], s_cuts[si + 1]);
                let sc = (s0 + s1) / 2.0;
                for zi in 0..z_cuts.len() - 1 {
                    let (z0, z1) = (z_cuts[zi], z_cuts[zi + 1]);
                    let zc = (z0 + z1) / 2.0;
                    let covering = items.iter().find(|it| {
                        sc >= it.offset
                            && sc <= it.offset + it.width
                            && zc >= it.bottom_z
                            && zc <= it.top_z
                    });
                    let class = match covering.map(|it| it.class) {
                        None => SemClass::Wall,
                        Some(WallItemClass::Door) => SemClass::Door,
                        Some(WallItemClass::Window) => SemClass::Window,
                        Some(WallItemClass::Opening) => continue, // hole
                    };
                    push_quad(
                        &mut tris,
                        at(s0, z0),
                        at(s1, z0),
                        at(s1, z1),
                        at(s0, z1),
                        inward,
                        class,
                    );
                }
            }
        }
    }
    PrimitiveSet::from_triangles(tris)
}

fn push_tri(out: &mut Vec<Triangle>, v0: Vec3, v1: Vec3, v2: Vec3, class: SemClass) {
    let tri = Triangle { v0, v1, v2, class };
    if tri.area() > MIN_TRIANGLE_AREA {
        out.push(tri);
    }
}

/// Emits a planar quad as two triangles wound so the normal matches `facing`.
fn push_quad(out: &mut Vec<Triangle>, bl: Vec3, br: Vec3, tr: Vec3, tl: Vec3, facing: Vec3, class: SemClass) {
    let n = (br - bl).cross(tl - bl);
    if n.dot(facing) >= 0.0 {
        push_tri(out, bl, br, tr, class);
        push_tri(out, bl, tr, tl, class);
    } else {
        push_tri(out, bl, tr, br, class);
        push_tri(out, bl, tl, tr, class);
    }
}

/// Ear-clipping triangulation of a simple CCW polygon. Returns vertex
/// triples; deterministic (always clips the first available ear).
fn triangulate_polygon(poly: &[[f64; 2]]) -> Vec<([f64; 2], [f64; 2], [f64; 2])> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::with_capacity(poly.len().saturating_sub(2));
    let cross = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| -> f64 {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    // Blocking test: vertices on the ear boundary block too, so that a
    // reflex vertex collinear with the diagonal cannot end up inside a
    // clipped ear. A strict-interior fallback avoids deadlocks on polygons
    // with collinear runs.
    let inside_tri = |a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2], boundary_blocks: bool| {
        let d0 = cross(a, b, p);
        let d1 = cross(b, c, p);
        let d2 = cross(c, a, p);
        let eps = if boundary_blocks { -1e-12 } else { 1e-12 };
        d0 > eps && d1 > eps && d2 > eps
    };
    while idx.len() > 3 {
        let n = idx.len();
        let mut clipped = false;
        'pass: for boundary_blocks in [true, false] {
            for i in 0..n {
                let (pa, pb, pc) = (
                    poly[idx[(i + n - 1) % n]],
                    poly[idx[i]],
                    poly[idx[(i + 1) % n]],
                );
                if cross(pa, pb, pc) <= 1e-12 {
                    continue; // reflex or degenerate corner
                }
                let blocked = idx
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != (i + n - 1) % n && j != i && j != (i + 1) % n)
                    .any(|(_, &v)| inside_tri(pa, pb, pc, poly[v], boundary_blocks));
                if blocked {
                    continue;
                }
                out.push((pa, pb, pc));
                idx.remove(i);
                clipped = true;
                break 'pass;
            }
        }
        assert!(clipped, "polygon could not be triangulated (not simple?)");
    }
    out.push((poly[idx[0]], poly[idx[1]], poly[idx[2]]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_synthetic_scene, parse_scene, GenParams, Room, WallItem};

    fn unit_box_scene() -> Scene {
        Scene {
            version: 1,
            rooms: vec![Room {
                id: 0,
                floor_z: 0.0,
                ceiling_z: 1.0,
                polygon: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            }],
            wall_items: vec![],
        }
    }

    #[test]
    fn empty_unit_box_has_twelve_triangles() {
        let prims = scene_to_primitives(&unit_box_scene());
        assert_eq!(prims.triangles().len(), 12);
        let by_class = |c: SemClass| {
            prims
                .triangles()
                .iter()
                .filter(|t| t.class == c)
                .map(|t| t.area())
                .sum::<f64>()
        };
        // Triangulation-area oracle: areas sum to the analytic surfaces.
        assert!((by_class(SemClass::Floor) - 1.0).abs() < 1e-12);
        assert!((by_class(SemClass::Ceiling) - 1.0).abs() < 1e-12);
        assert!((by_class(SemClass::Wall) - 4.0).abs() < 1e-12);
    }

    /// Sum of triangle areas attributed to one room edge, matched through
    /// the inward normal so coincident walls of adjacent rooms stay apart.
    fn edge_area(prims: &PrimitiveSet, room: &Room, edge: usize) -> f64 {
        let (p0, p1) = edge_endpoints(room, edge);
        let len = edge_length(room, edge);
        let dir = [(p1[0] - p0[0]) / len, (p1[1] - p0[1]) / len];
        let inward = Vec3::new(-dir[1], dir[0], 0.0);
        prims
            .triangles()
            .iter()
            .filter(|t| {
                matches!(t.class, SemClass::Wall | SemClass::Door | SemClass::Window)
                    && t.normal().dot(inward) > 0.999
                    && on_edge_plane(t, p0, dir, len, room)
            })
            .map(|t| t.area())
            .sum()
    }

    fn on_edge_plane(t: &Triangle, p0: [f64; 2], dir: [f64; 2], len: f64, room: &Room) -> bool {
        [t.v0, t.v1, t.v2].iter().all(|v| {
            let rel = [v.x - p0[0], v.y - p0[1]];
            let along = rel[0] * dir[0] + rel[1] * dir[1];
            let across = -rel[0] * dir[1] + rel[1] * dir[0];
            across.abs() < 1e-9
                && along > -1e-9
                && along < len + 1e-9
                && v.z >= room.floor_z - 1e-9
                && v.z <= room.ceiling_z + 1e-9
        })
    }

    #[test]
    fn door_preserves_edge_area_and_adds_two_triangles() {
        let mut scene = unit_box_scene();
        scene.rooms[0].ceiling_z = 2.5;
        scene.wall_items.push(WallItem {
            room: 0,
            edge: 0,
            class: crate::scene::WallItemClass::Door,
            offset: 0.2,
            width: 0.5,
            bottom_z: 0.0,
            top_z: 2.0,
        });
        let prims = scene_to_primitives(&scene);
        let door_tris: Vec<_> = prims
            .triangles()
            .iter()
            .filter(|t| t.class == SemClass::Door)
            .collect();
        assert_eq!(door_tris.len(), 2);
        let wall_tris = prims
            .triangles()
            .iter()
            .filter(|t| t.class == SemClass::Wall)
            .count();
        assert!(wall_tris > 8, "hole framing should add wall triangles");
        let area = edge_area(&prims, &scene.rooms[0], 0);
        assert!((area - 1.0 * 2.5).abs() < 1e-9, "area {area}");
    }

    #[test]
    fn full_edge_opening_leaves_only_framing() {
        let mut scene = unit_box_scene();
        scene.rooms[0].ceiling_z = 2.5;
        scene.wall_items.push(WallItem {
            room: 0,
            edge: 0,
            class: crate::scene::WallItemClass::Opening,
            offset: 0.0,
            width: 1.0,
            bottom_z: 0.3,
            top_z: 2.0,
        });
        let prims = scene_to_primitives(&scene);
        let area = edge_area(&prims, &scene.rooms[0], 0);
        let expected = 1.0 * 2.5 - 1.0 * (2.0 - 0.3);
        assert!((area - expected).abs() < 1e-9, "area {area} vs {expected}");
    }

    #[test]
    fn area_conservation_on_generated_scenes() {
        for seed in 0..50 {
            let scene = generate_synthetic_scene(seed, &GenParams::default()).unwrap();
            let prims = scene_to_primitives(&scene);
            for room in &scene.rooms {
                for edge in 0..room.polygon.len() {
                    let solid = edge_area(&prims, room, edge);
                    let holes: f64 = scene
                        .wall_items
                        .iter()
                        .filter(|it| {
                            it.room == room.id
                                && it.edge == edge
                                && it.class == crate::scene::WallItemClass::Opening
                        })
                        .map(|it| it.width * (it.top_z - it.bottom_z))
                        .sum();
                    let expected = edge_length(room, edge) * (room.ceiling_z - room.floor_z);
                    let rel = ((solid + holes) - expected).abs() / expected;
                    assert!(rel < 1e-9, "seed {seed} room {} edge {edge}: rel {rel}", room.id);
                }
            }
        }
    }

    #[test]
    fn deterministic_output() {
        let scene = parse_scene(&crate::scene::serialize_scene(
            &generate_synthetic_scene(3, &GenParams::default()).unwrap(),
        ))
        .unwrap();
        let a = scene_to_primitives(&scene);
        let b = scene_to_primitives(&scene);
        assert_eq!(a.triangles().len(), b.triangles().len());
        for (x, y) in a.triangles().iter().zip(b.triangles()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn l_shaped_polygon_triangulates() {
        let poly = vec![
            [0.0, 0.0],
            [2.0, 0.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 2.0],
            [0.0, 2.0],
        ];
        let tris = triangulate_polygon(&poly);
        assert_eq!(tris.len(), 4);
        let total: f64 = tris
            .iter()
            .map(|(a, b, c)| {
                ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs() / 2.0
            })
            .sum();
        assert!((total - 3.0).abs() < 1e-12);
    }
}
