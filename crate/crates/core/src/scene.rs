//! The minimal semantic building model: rooms as vertical prisms over simple
//! polygons, with doors, windows, and openings mounted on wall edges.
//!
//! Scene documents are UTF-8 JSON:
//! `{"version":1, "rooms":[{"id":..,"floor_z":..,"ceiling_z":..,"polygon":[[x,y],..]}],
//!   "wall_items":[{"room":..,"edge":..,"class":"door"|"window"|"opening",
//!   "offset":..,"width":..,"bottom_z":..,"top_z":..}]}` with all lengths in
//! meters. Parsing is strictly structural; semantic rules live in
//! [`validate_scene`].

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub version: u32,
    pub rooms: Vec<Room>,
    pub wall_items: Vec<WallItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub id: u32,
    pub floor_z: f64,
    pub ceiling_z: f64,
    /// Counter-clockwise simple polygon in the xy plane, meters.
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallItemClass {
    Door,
    Window,
    Opening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallItem {
    pub room: u32,
    /// Index of the wall segment `polygon[edge] -> polygon[(edge+1) % n]`.
    pub edge: usize,
    pub class: WallItemClass,
    /// Start of the item interval, meters along the edge from its first vertex.
    pub offset: f64,
    pub width: f64,
    pub bottom_z: f64,
    pub top_z: f64,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene document is not valid JSON or violates the schema: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scene version {0} (expected 1)")]
    Version(u32),
}

/// Parses a scene document. Structural problems (syntax, missing fields,
/// wrong types) error here with position information; semantic rules are
/// deferred to [`validate_scene`].
pub fn parse_scene(text: &str) -> Result<Scene, SceneError> {
    let scene: Scene = serde_json::from_str(text)?;
    if scene.version != 1 {
        return Err(SceneError::Version(scene.version));
    }
    Ok(scene)
}

/// Serializes a scene document; `parse_scene(serialize_scene(s)) == s`.
pub fn serialize_scene(scene: &Scene) -> String {
    serde_json::to_string_pretty(scene).expect("scene serialization cannot fail")
}

/// One semantic-invariant violation, naming the offending entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

fn violation(entity: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation {
        entity: entity.into(),
        message: message.into(),
    }
}

/// Checks every scene invariant; an empty result means the scene is valid.
pub fn validate_scene(scene: &Scene) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    for room in &scene.rooms {
        let entity = format!("room {}", room.id);
        if !seen_ids.insert(room.id) {
            out.push(violation(&entity, "duplicate room id"));
        }
        if room.polygon.len() < 3 {
            out.push(violation(&entity, "polygon has fewer than 3 vertices"));
            continue;
        }
        let area = polygon_signed_area(&room.polygon);
        if area.abs() <= 1e-12 {
            out.push(violation(&entity, "polygon area is zero"));
        } else if area < 0.0 {
            out.push(violation(&entity, "polygon is not counter-clockwise"));
        }
        if !polygon_is_simple(&room.polygon) {
            out.push(violation(&entity, "polygon is self-intersecting"));
        }
        if room.floor_z >= room.ceiling_z {
            out.push(violation(&entity, "floor_z must be below ceiling_z"));
        }
    }
    // Per-edge intervals for the overlap check.
    let mut intervals: Vec<((u32, usize), (f64, f64), usize)> = Vec::new();
    for (idx, item) in scene.wall_items.iter().enumerate() {
        let entity = format!("wall_item {idx}");
        let Some(room) = scene.rooms.iter().find(|r| r.id == item.room) else {
            out.push(violation(&entity, format!("references unknown room {}", item.room)));
            continue;
        };
        if item.edge >= room.polygon.len() {
            out.push(violation(
                &entity,
                format!("edge index {} out of range for room {}", item.edge, item.room),
            ));
            continue;
        }
        if item.width <= 0.0 {
            out.push(violation(&entity, "width must be positive"));
        }
        if item.bottom_z < room.floor_z {
            out.push(violation(&entity, "bottom_z below the room floor"));
        }
        if item.top_z > room.ceiling_z {
            out.push(violation(&entity, "top_z above the room ceiling"));
        }
        if item.bottom_z >= item.top_z {
            out.push(violation(&entity, "bottom_z must be below top_z"));
        }
        let len = edge_length(room, item.edge);
        if item.offset < 0.0 || item.offset + item.width > len + 1e-9 {
            out.push(violation(
                &entity,
                format!("interval [{:.3}, {:.3}] exceeds edge length {len:.3}", item.offset, item.offset + item.width),
            ));
        }
        intervals.push(((item.room, item.edge), (item.offset, item.offset + item.width), idx));
    }
    intervals.sort_by(|a, b| (a.0, a.1 .0).partial_cmp(&(b.0, b.1 .0)).unwrap());
    for pair in intervals.windows(2) {
        let (key_a, (_, hi_a), idx_a) = &pair[0];
        let (key_b, (lo_b, _), idx_b) = &pair[1];
        if key_a == key_b && *lo_b < hi_a - 1e-12 {
            out.push(violation(
                format!("wall_item {idx_b}"),
                format!("overlaps wall_item {idx_a} on the same edge"),
            ));
        }
    }
    out
}

/// Id of the room containing `p` (polygon boundary counts as inside,
/// `floor_z <= z <= ceiling_z`). Overlapping rooms resolve to the lowest id.
pub fn point_room_lookup(scene: &Scene, p: Vec3) -> Option<u32> {
    let mut order: Vec<&Room> = scene.rooms.iter().collect();
    order.sort_by_key(|r| r.id);
    order
        .into_iter()
        .find(|room| {
            p.z >= room.floor_z
                && p.z <= room.ceiling_z
                && point_in_polygon_inclusive(&room.polygon, p.x, p.y)
        })
        .map(|room| room.id)
}

// ---- polygon helpers -------------------------------------------------------

/// Shoelace signed area; positive for counter-clockwise polygons.
pub fn polygon_signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

/// Axis-aligned bounds of a polygon as `(min, max)`.
pub fn polygon_bbox(poly: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in poly {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

pub fn edge_length(room: &Room, edge: usize) -> f64 {
    let (a, b) = edge_endpoints(room, edge);
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

pub fn edge_endpoints(room: &Room, edge: usize) -> ([f64; 2], [f64; 2]) {
    let n = room.polygon.len();
    (room.polygon[edge], room.polygon[(edge + 1) % n])
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    orient(a, b, p).abs() < 1e-12
        && p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(c, d, a) || on_segment(c, d, b) || on_segment(a, b, c) || on_segment(a, b, d)
}

/// True when no two non-adjacent edges intersect and adjacent edges meet
/// only at their shared vertex.
pub(crate) fn polygon_is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 1)..n {
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Edges share one vertex; the other endpoints must not fold
                // back onto the neighboring edge.
                let (shared, far1, far2) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if (on_segment(c, d, far1) && far1 != shared)
                    || (on_segment(a, b, far2) && far2 != shared)
                {
                    return false;
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Even-odd point-in-polygon with boundary points counting as inside.
pub fn point_in_polygon_inclusive(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let n = poly.len();
    let p = [x, y];
    for i in 0..n {
        if on_segment(poly[i], poly[(i + 1) % n], p) {
            return true;
        }
    }
    let mut inside = false;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        if (y0 > y) != (y1 > y) {
            let t = (y - y0) / (y1 - y0);
            if x < x0 + t * (x1 - x0) {
                inside = !inside;
            }
        }
    }
    inside
}

// ---- synthetic scene generation --------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Inclusive range of room counts.
    pub rooms: (u32, u32),
    /// Inclusive range of room side lengths in meters.
    pub room_size: (f64, f64),
    /// Fraction of room connectors that are doors rather than openings.
    pub door_density: f64,
    /// Probability of a window on each exterior wall.
    pub window_density: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            rooms: (4, 8),
            room_size: (3.0, 6.0),
            door_density: 0.6,
            window_density: 0.7,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),
}

/// Generates a connected apartment: axis-aligned rectangular rooms on a grid
/// with shared walls, every adjacent pair on the spanning tree connected by a
/// door or opening (mirrored on both rooms so openings are true holes), and
/// windows on exterior walls. Deterministic in `seed`.
pub fn generate_synthetic_scene(seed: u64, params: &GenParams) -> Result<Scene, GenError> {
    if params.rooms.0 == 0 || params.rooms.0 > params.rooms.1 {
        return Err(GenError::Infeasible(format!(
            "room count range {:?}",
            params.rooms
        )));
    }
    if !(params.room_size.0 > 0.5 && params.room_size.0 <= params.room_size.1) {
        return Err(GenError::Infeasible(format!(
            "room size range {:?}",
            params.room_size
        )));
    }
    for d in [params.door_density, params.window_density] {
        if !(0.0..=1.0).contains(&d) {
            return Err(GenError::Infeasible(format!("density {d} outside [0,1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_rooms = rng.random_range(params.rooms.0..=params.rooms.1) as usize;
    let grid_w = (n_rooms as f64).sqrt().ceil() as i32;
    let grid_h = (n_rooms as i32 + grid_w - 1) / grid_w;

    // Grow a connected set of cells, remembering the tree edge each new cell
    // attached through.
    let start = (rng.random_range(0..grid_w), rng.random_range(0..grid_h));
    let mut cells: Vec<(i32, i32)> = vec![start];
    let mut tree: Vec<((i32, i32), (i32, i32))> = Vec::new();
    while cells.len() < n_rooms {
        // Deterministic frontier: neighbors of chosen cells, sorted.
        let mut frontier: Vec<((i32, i32), (i32, i32))> = Vec::new();
        for &c in &cells {
            for d in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let nb = (c.0 + d.0, c.1 + d.1);
                if nb.0 >= 0
                    && nb.0 < grid_w
                    && nb.1 >= 0
                    && nb.1 < grid_h
                    && !cells.contains(&nb)
                {
                    frontier.push((nb, c));
                }
            }
        }
        frontier.sort();
        frontier.dedup_by_key(|e| e.0);
        let pick = frontier[rng.random_range(0..frontier.len())];
        cells.push(pick.0);
        tree.push((pick.1, pick.0));
    }
    cells.sort_by_key(|&(x, y)| (y, x));

    // Shared column widths / row depths keep neighboring walls coincident.
    let col_w: Vec<f64> = (0..grid_w)
        .map(|_| rng.random_range(params.room_size.0..=params.room_size.1))
        .collect();
    let row_d: Vec<f64> = (0..grid_h)
        .map(|_| rng.random_range(params.room_size.0..=params.room_size.1))
        .collect();
    let x_of = |gx: i32| -> f64 { col_w[..gx as usize].iter().sum() };
    let y_of = |gy: i32| -> f64 { row_d[..gy as usize].iter().sum() };
    let ceiling = rng.random_range(2.5..=2.9);

    let room_id = |cell: (i32, i32)| -> u32 {
        cells.iter().position(|&c| c == cell).unwrap() as u32
    };
    let mut rooms = Vec::with_capacity(cells.len());
    for (id, &(gx, gy)) in cells.iter().enumerate() {
        let (x0, y0) = (x_of(gx), y_of(gy));
        let (x1, y1) = (x0 + col_w[gx as usize], y0 + row_d[gy as usize]);
        rooms.push(Room {
            id: id as u32,
            floor_z: 0.0,
            ceiling_z: ceiling,
            polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        });
    }

    // All adjacencies between chosen cells; tree edges always get a
    // connector, the rest with some probability to create cycles.
    let mut adjacencies: Vec<((i32, i32), (i32, i32))> = Vec::new();
    for &c in &cells {
        for d in [(1, 0), (0, 1)] {
            let nb = (c.0 + d.0, c.1 + d.1);
            if cells.contains(&nb) {
                adjacencies.push((c, nb));
            }
        }
    }
    adjacencies.sort();
    let is_tree_edge = |a: (i32, i32), b: (i32, i32)| -> bool {
        tree.iter().any(|&(t0, t1)| (t0, t1) == (a, b) || (t0, t1) == (b, a))
    };

    let mut items: Vec<WallItem> = Vec::new();
    let mut connected_edges: Vec<(u32, usize)> = Vec::new();
    for &(a, b) in &adjacencies {
        let keep = is_tree_edge(a, b) || rng.random_bool(0.35);
        // Edge of room `a` facing `b` and vice versa; cells are row-major so
        // `b` is east (d=(1,0)) or north (d=(0,1)) of `a`.
        let horizontal = b.0 == a.0 + 1;
        let (edge_a, edge_b) = if horizontal { (1, 3) } else { (2, 0) };
        let id_a = room_id(a);
        let id_b = room_id(b);
        connected_edges.push((id_a, edge_a));
        connected_edges.push((id_b, edge_b));
        if !keep {
            continue;
        }
        let len = if horizontal {
            row_d[a.1 as usize]
        } else {
            col_w[a.0 as usize]
        };
        let is_door = rng.random_bool(params.door_density);
        let (class, width, bottom, top) = if is_door {
            let w = rng.random_range(0.8..=1.1f64).min(len - 0.3);
            (WallItemClass::Door, w, 0.0, 2.0f64.min(ceiling - 0.2))
        } else {
            let max_w = (len - 0.3).min(2.6);
            let w = if max_w <= 1.2 {
                max_w
            } else {
                rng.random_range(1.2..=max_w)
            };
            (WallItemClass::Opening, w, 0.0, ceiling - 0.4)
        };
        let margin = 0.15;
        let start = rng.random_range(margin..=(len - width - margin));
        // The shared interval in the world coordinate running along the wall.
        let along0 = if horizontal { y_of(a.1) } else { x_of(a.0) };
        let (w_lo, w_hi) = (along0 + start, along0 + start + width);
        for (rid, edge) in [(id_a, edge_a), (id_b, edge_b)] {
            let room = &rooms[rid as usize];
            let (p0, p1) = edge_endpoints(room, edge);
            let elen = edge_length(room, edge);
            let dir = [(p1[0] - p0[0]) / elen, (p1[1] - p0[1]) / elen];
            let proj = |w: f64| -> f64 {
                let q = if horizontal { [p0[0], w] } else { [w, p0[1]] };
                (q[0] - p0[0]) * dir[0] + (q[1] - p0[1]) * dir[1]
            };
            let (s0, s1) = (proj(w_lo), proj(w_hi));
            items.push(WallItem {
                room: rid,
                edge,
                class,
                offset: s0.min(s1),
                width: (s1 - s0).abs(),
                bottom_z: bottom,
                top_z: top,
            });
        }
    }

    // Windows on exterior walls.
    for room in &rooms {
        for edge in 0..4 {
            if connected_edges.contains(&(room.id, edge)) {
                continue;
            }
            if !rng.random_bool(params.window_density) {
                continue;
            }
            let len = edge_length(room, edge);
            let width = rng.random_range(0.6..=1.4f64).min(len - 0.3);
            if width <= 0.0 {
                continue;
            }
            let offset = rng.random_range(0.15..=(len - width - 0.15));
            items.push(WallItem {
                room: room.id,
                edge,
                class: WallItemClass::Window,
                offset,
                width,
                bottom_z: 0.9,
                top_z: 2.1f64.min(ceiling - 0.2),
            });
        }
    }

    items.sort_by(|a, b| {
        (a.room, a.edge)
            .cmp(&(b.room, b.edge))
            .then(a.offset.partial_cmp(&b.offset).unwrap())
    });
    let scene = Scene {
        version: 1,
        rooms,
        wall_items: items,
    };
    debug_assert!(validate_scene(&scene).is_empty());
    Ok(scene)
}
