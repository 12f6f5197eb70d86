//! End-to-end localization: reference sampling, precomputation (with an
//! on-disk cache), per-reference matching, candidate refinement, and
//! selection.
//!
//! Cache layout: `<cache>/<scene-hash>/<index>.{sem,depth,norm}.png` plus a
//! `meta.json` recording positions, dimensions, and the grid config. The
//! semantic PNGs are lossless, so encodings rebuilt from cache are identical
//! to freshly rendered ones; depth is quantized to millimeters and normals
//! to 8 bits, which the localization path never consumes.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, Pose};
use crate::matcher::{
    encode_panorama, encode_query, match_viewport_with, rank_references, HypothesisConfig,
    MatchContext, MatchResult, MatcherError, PanoEncoding,
};
use crate::math::Vec3;
use crate::prims::{scene_to_primitives, PrimitiveSet};
use crate::raster::{DepthImage, NormalImage, RasterError, SemanticImage};
use crate::refine::{
    iterate_refinement, refine_pose, RefineConfig, RefineError, RefinementContext,
};
use crate::render::{render_panorama, RenderBundle, RenderCamera};
use crate::scene::{point_room_lookup, serialize_scene, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// One grid over the whole floor plan, anchored at its bounding box.
    Global,
    /// Per-room centered grid plus one camera per door/opening midpoint.
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Grid spacing in meters.
    pub spacing: f64,
    pub mode: GridMode,
    /// Camera height of the reference panoramas, meters.
    pub h_pano: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            spacing: 1.2,
            mode: GridMode::Local,
            h_pano: 1.5,
        }
    }
}

/// Reference panorama positions for a scene.
///
/// Global mode anchors the grid at the scene bounding-box minimum with
/// offsets `spacing/2 + k*spacing` and keeps points inside rooms. Local mode
/// applies the same rule per room, centered so the margins are symmetric,
/// and adds one point at each door/opening midpoint pushed 10 cm into the
/// item's room. Duplicates within 1 cm are removed (first wins). Ordering is
/// deterministic: room id, then row-major.
pub fn sample_reference_positions(scene: &Scene, grid: &GridConfig) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::new();
    let push_dedup = |p: Vec3, out: &mut Vec<Vec3>| {
        if !out.iter().any(|q| (*q - p).norm() < 0.01) {
            out.push(p);
        }
    };
    match grid.mode {
        GridMode::Global => {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for room in &scene.rooms {
                let (l, h) = crate::scene::polygon_bbox(&room.polygon);
                for a in 0..2 {
                    lo[a] = lo[a].min(l[a]);
                    hi[a] = hi[a].max(h[a]);
                }
            }
            if !lo[0].is_finite() {
                return out;
            }
            let coords = |a: usize| -> Vec<f64> {
                let mut v = Vec::new();
                let mut c = lo[a] + grid.spacing / 2.0;
                while c < hi[a] {
                    v.push(c);
                    c += grid.spacing;
                }
                v
            };
            for &y in &coords(1) {
                for &x in &coords(0) {
                    let p = Vec3::new(x, y, grid.h_pano);
                    if point_room_lookup(scene, p).is_some() {
                        push_dedup(p, &mut out);
                    }
                }
            }
        }
        GridMode::Local => {
            let mut rooms: Vec<_> = scene.rooms.iter().collect();
            rooms.sort_by_key(|r| r.id);
            for room in rooms {
                let (lo, hi) = crate::scene::polygon_bbox(&room.polygon);
                let axis_coords = |a: usize| -> Vec<f64> {
                    let extent = hi[a] - lo[a];
                    let n = ((extent / grid.spacing).floor() as usize).max(1);
                    let margin = (extent - n as f64 * grid.spacing) / 2.0;
                    (0..n)
                        .map(|i| lo[a] + margin + grid.spacing / 2.0 + i as f64 * grid.spacing)
                        .collect()
                };
                for &y in &axis_coords(1) {
                    for &x in &axis_coords(0) {
                        let p = Vec3::new(x, y, grid.h_pano);
                        if point_room_lookup(scene, p).is_some() {
                            push_dedup(p, &mut out);
                        }
                    }
                }
                for item in &scene.wall_items {
                    if item.room != room.id
                        || item.class == crate::scene::WallItemClass::Window
                    {
                        continue;
                    }
                    let (p0, p1) = crate::scene::edge_endpoints(room, item.edge);
                    let len = crate::scene::edge_length(room, item.edge);
                    let dir = [(p1[0] - p0[0]) / len, (p1[1] - p0[1]) / len];
                    let inward = [-dir[1], dir[0]];
                    let mid = item.offset + item.width / 2.0;
                    let p = Vec3::new(
                        p0[0] + dir[0] * mid + inward[0] * 0.1,
                        p0[1] + dir[1] * mid + inward[1] * 0.1,
                        grid.h_pano,
                    );
                    if point_room_lookup(scene, p).is_some() {
                        push_dedup(p, &mut out);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSetConfig {
    pub pano_width: u32,
    pub pano_height: u32,
    /// Encoding grid of the reference panoramas (2:1 aspect).
    pub enc_width: u32,
    pub enc_height: u32,
    pub grid: GridConfig,
}

impl Default for ReferenceSetConfig {
    fn default() -> Self {
        Self {
            pano_width: 256,
            pano_height: 128,
            enc_width: 128,
            enc_height: 64,
            grid: GridConfig::default(),
        }
    }
}

pub struct ReferenceEntry {
    pub position: Vec3,
    pub bundle: RenderBundle,
    pub encoding: PanoEncoding,
}

/// Precomputed reference panoramas plus the scene they were rendered from.
pub struct ReferenceSet {
    pub scene: Scene,
    pub prims: PrimitiveSet,
    pub config: ReferenceSetConfig,
    pub scene_hash: String,
    pub entries: Vec<ReferenceEntry>,
}

impl ReferenceSet {
    pub fn positions(&self) -> Vec<Vec3> {
        self.entries.iter().map(|e| e.position).collect()
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct BuildStats {
    pub rendered: usize,
    pub loaded_from_cache: usize,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("reference position {0:?} lies outside every room")]
    PositionOutsideRooms(Vec3),
    #[error("reference set is empty")]
    EmptyReferenceSet,
    #[error("query image contains no non-void pixels")]
    AllVoidQuery,
    #[error(transparent)]
    Matcher(#[from] MatcherError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error("cache I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("cache metadata is corrupt: {0}")]
    CacheMeta(#[from] serde_json::Error),
}

/// FNV-1a hash of the canonical scene serialization, as hex.
pub fn scene_hash(scene: &Scene) -> String {
    let bytes = serialize_scene(scene);
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct CacheMeta {
    scene_hash: String,
    pano_width: u32,
    pano_height: u32,
    enc_width: u32,
    enc_height: u32,
    grid: GridConfig,
    positions: Vec<[f64; 3]>,
}

/// Renders and encodes every reference panorama, or loads them from the
/// cache directory when its metadata matches exactly.
pub fn build_reference_set(
    scene: &Scene,
    positions: &[Vec3],
    config: &ReferenceSetConfig,
    cache_dir: Option<&Path>,
) -> Result<(ReferenceSet, BuildStats), PipelineError> {
    for &p in positions {
        if point_room_lookup(scene, p).is_none() {
            return Err(PipelineError::PositionOutsideRooms(p));
        }
    }
    let prims = scene_to_primitives(scene);
    let hash = scene_hash(scene);
    let meta = CacheMeta {
        scene_hash: hash.clone(),
        pano_width: config.pano_width,
        pano_height: config.pano_height,
        enc_width: config.enc_width,
        enc_height: config.enc_height,
        grid: config.grid.clone(),
        positions: positions.iter().map(|p| p.to_array()).collect(),
    };
    let cache_path = cache_dir.map(|d| d.join(&hash));

    if let Some(dir) = &cache_path {
        if let Some(entries) = try_load_cache(dir, &meta, config)? {
            let stats = BuildStats {
                rendered: 0,
                loaded_from_cache: entries.len(),
            };
            return Ok((
                ReferenceSet {
                    scene: scene.clone(),
                    prims,
                    config: config.clone(),
                    scene_hash: hash,
                    entries,
                },
                stats,
            ));
        }
    }

    let entries: Vec<ReferenceEntry> = positions
        .par_iter()
        .map(|&p| {
            let bundle = render_panorama(&prims, p, config.pano_width, config.pano_height);
            let encoding = encode_panorama(&bundle.semantic, p, config.enc_width, config.enc_height);
            ReferenceEntry {
                position: p,
                bundle,
                encoding,
            }
        })
        .collect();

    if let Some(dir) = &cache_path {
        fs::create_dir_all(dir)?;
        for (i, e) in entries.iter().enumerate() {
            e.bundle.semantic.save_png(&dir.join(format!("{i}.sem.png")))?;
            e.bundle.depth.save_png(&dir.join(format!("{i}.depth.png")))?;
            e.bundle.normal.save_png(&dir.join(format!("{i}.norm.png")))?;
        }
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    }
    let stats = BuildStats {
        rendered: entries.len(),
        loaded_from_cache: 0,
    };
    Ok((
        ReferenceSet {
            scene: scene.clone(),
            prims,
            config: config.clone(),
            scene_hash: hash,
            entries,
        },
        stats,
    ))
}

fn try_load_cache(
    dir: &PathBuf,
    expected: &CacheMeta,
    config: &ReferenceSetConfig,
) -> Result<Option<Vec<ReferenceEntry>>, PipelineError> {
    let meta_path = dir.join("meta.json");
    if !meta_path.exists() {
        return Ok(None);
    }
    let found: CacheMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    if &found != expected {
        return Ok(None);
    }
    let mut entries = Vec::with_capacity(expected.positions.len());
    for (i, p) in expected.positions.iter().enumerate() {
        let position = Vec3::from_array(*p);
        let semantic = SemanticImage::load_png(&dir.join(format!("{i}.sem.png")))?;
        let depth = DepthImage::load_png(&dir.join(format!("{i}.depth.png")))?;
        let normal = NormalImage::load_png(&dir.join(format!("{i}.norm.png")))?;
        let encoding = encode_panorama(&semantic, position, config.enc_width, config.enc_height);
        entries.push(ReferenceEntry {
            position,
            bundle: RenderBundle {
                semantic,
                depth,
                normal,
                camera: RenderCamera::Panorama { position },
            },
            encoding,
        });
    }
    Ok(Some(entries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeConfig {
    pub top_n: usize,
    pub refine_rounds: u32,
    /// Side length of the hypothesis sampling grid.
    pub warp_grid: u32,
    pub hypotheses: HypothesisConfig,
    pub refine: RefineConfig,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            top_n: 3,
            refine_rounds: 1,
            warp_grid: 32,
            hypotheses: HypothesisConfig::default(),
            refine: RefineConfig::default(),
        }
    }
}

/// One ranked localization candidate.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub reference: usize,
    pub match_result: MatchResult,
    pub pose: Pose,
    pub score: f64,
}

/// Ranked candidates and the selected absolute pose.
#[derive(Debug, Clone)]
pub struct LocalizationResult {
    /// Sorted by refined objective score, best first.
    pub candidates: Vec<Candidate>,
    pub selected: Pose,
    pub selected_score: f64,
    pub refine_rounds: u32,
}

fn pose_json(p: &Pose) -> serde_json::Value {
    serde_json::json!({
        "q": p.rotation.to_array(),
        "t": p.translation.to_array(),
    })
}

impl LocalizationResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "selected": pose_json(&self.selected),
            "selected_score": self.selected_score,
            "refine_rounds": self.refine_rounds,
            "candidates": self.candidates.iter().map(|c| {
                serde_json::json!({
                    "reference": c.reference,
                    "score": c.match_result.score,
                    "rotation": c.match_result.rotation.to_array(),
                    "bbox": {
                        "u_min": c.match_result.bbox.u_min,
                        "v_min": c.match_result.bbox.v_min,
                        "width": c.match_result.bbox.width,
                        "height": c.match_result.bbox.height,
                    },
                    "refined_pose": pose_json(&c.pose),
                    "refined_score": c.score,
                })
            }).collect::<Vec<_>>(),
        })
    }
}

/// Matches the query against every reference, refines the top-n candidates
/// from their reference positions, applies the refinement rounds to the
/// best, and selects the highest refined objective score (ties to the lower
/// reference index). Deterministic and independent of the thread count.
pub fn localize(
    refs: &ReferenceSet,
    query_sem: &SemanticImage,
    k: &CameraIntrinsics,
    cfg: &LocalizeConfig,
) -> Result<LocalizationResult, PipelineError> {
    if refs.entries.is_empty() {
        return Err(PipelineError::EmptyReferenceSet);
    }
    if query_sem.pixels().iter().all(|&p| p == 0) {
        return Err(PipelineError::AllVoidQuery);
    }
    let q = encode_query(query_sem, k.hfov, cfg.warp_grid);
    let ctx = MatchContext::new(
        &q,
        &cfg.hypotheses,
        refs.config.enc_width,
        refs.config.enc_height,
        refs.config.pano_width,
        refs.config.pano_height,
    )?;
    let matches: Vec<MatchResult> = refs
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| match_viewport_with(&ctx, &e.encoding, &q, i))
        .collect();
    let order = rank_references(&matches);
    let top: Vec<usize> = order.into_iter().take(cfg.top_n.max(1)).collect();
    let mut candidates: Vec<Candidate> = top
        .par_iter()
        .map(|&r| {
            let init = Pose::new(matches[r].rotation, refs.entries[r].position);
            let refined = refine_pose(&refs.prims, query_sem, k, &init, &cfg.refine)?;
            Ok(Candidate {
                reference: r,
                match_result: matches[r].clone(),
                pose: refined.pose,
                score: refined.score,
            })
        })
        .collect::<Result<_, PipelineError>>()?;
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.reference.cmp(&b.reference))
    });
    if cfg.refine_rounds > 0 {
        let rctx = RefinementContext {
            scene: &refs.scene,
            pano_width: refs.config.pano_width,
            pano_height: refs.config.pano_height,
            enc_width: refs.config.enc_width,
            enc_height: refs.config.enc_height,
            warp_grid: cfg.warp_grid,
            hypotheses: cfg.hypotheses.clone(),
        };
        let best = &candidates[0];
        let (pose, score) = iterate_refinement(
            &refs.prims,
            query_sem,
            k,
            &best.pose,
            &rctx,
            cfg.refine_rounds,
            &cfg.refine,
        );
        candidates[0].pose = pose;
        candidates[0].score = score;
    }
    Ok(LocalizationResult {
        selected: candidates[0].pose,
        selected_score: candidates[0].score,
        refine_rounds: cfg.refine_rounds,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::rotation_error_deg;
    use crate::render::render_perspective;
    use crate::scene::{generate_synthetic_scene, parse_scene, GenParams};

    fn rect_room_doc(w: f64, d: f64) -> String {
        format!(
            r#"{{"version":1,"rooms":[{{"id":0,"floor_z":0.0,"ceiling_z":2.5,
              "polygon":[[0.0,0.0],[{w},0.0],[{w},{d}],[0.0,{d}]]}}],"wall_items":[]}}"#
        )
    }

    #[test]
    fn global_grid_on_6x4_room_with_spacing_1_2() {
        let scene = parse_scene(&rect_room_doc(6.0, 4.0)).unwrap();
        let grid = GridConfig {
            spacing: 1.2,
            mode: GridMode::Global,
            h_pano: 1.5,
        };
        let pts = sample_reference_positions(&scene, &grid);
        assert_eq!(pts.len(), 15);
        let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
        for expected in [0.6, 1.8, 3.0, 4.2, 5.4] {
            assert!(xs.iter().any(|x| (x - expected).abs() < 1e-9), "{expected}");
        }
        for expected in [0.6, 1.8, 3.0] {
            assert!(ys.iter().any(|y| (y - expected).abs() < 1e-9), "{expected}");
        }
        // Row-major: first row y=0.6 with ascending x.
        assert!((pts[0].x, pts[0].y) == (0.6, 0.6));
        assert!((pts[1].x - 1.8).abs() < 1e-9 && (pts[1].y - 0.6).abs() < 1e-9);
    }

    #[test]
    fn local_grid_with_oversized_spacing_centers_one_point() {
        let mut scene = parse_scene(&rect_room_doc(3.0, 2.0)).unwrap();
        scene.wall_items.push(crate::scene::WallItem {
            room: 0,
            edge: 0,
            class: crate::scene::WallItemClass::Door,
            offset: 1.0,
            width: 1.0,
            bottom_z: 0.0,
            top_z: 2.0,
        });
        let grid = GridConfig {
            spacing: 5.0,
            mode: GridMode::Local,
            h_pano: 1.5,
        };
        let pts = sample_reference_positions(&scene, &grid);
        assert_eq!(pts.len(), 2, "{pts:?}");
        assert!((pts[0].x - 1.5).abs() < 1e-9 && (pts[0].y - 1.0).abs() < 1e-9);
        // Door midpoint (1.5, 0) pushed 10 cm inward (edge 0 runs +x, inward +y).
        assert!((pts[1].x - 1.5).abs() < 1e-9 && (pts[1].y - 0.1).abs() < 1e-9);
    }

    #[test]
    fn halving_spacing_quadruples_counts_on_large_rooms() {
        let scene = parse_scene(&rect_room_doc(9.0, 8.0)).unwrap();
        let count = |spacing: f64| {
            sample_reference_positions(
                &scene,
                &GridConfig {
                    spacing,
                    mode: GridMode::Global,
                    h_pano: 1.5,
                },
            )
            .len() as f64
        };
        let ratio = count(1.2) / count(2.4);
        assert!((ratio - 4.0).abs() <= 0.8, "ratio {ratio}");
    }

    #[test]
    fn local_grid_covers_every_room() {
        for seed in 0..20 {
            let scene = generate_synthetic_scene(seed, &GenParams::default()).unwrap();
            let pts = sample_reference_positions(&scene, &GridConfig::default());
            for room in &scene.rooms {
                let covered = pts.iter().any(|p| {
                    point_room_lookup(&scene, *p) == Some(room.id)
                });
                assert!(covered, "seed {seed} room {} uncovered", room.id);
            }
        }
    }

    #[test]
    fn build_renders_all_and_then_hits_cache() {
        let scene = parse_scene(&rect_room_doc(6.0, 4.0)).unwrap();
        let grid = GridConfig {
            spacing: 1.2,
            mode: GridMode::Global,
            h_pano: 1.5,
        };
        let positions = sample_reference_positions(&scene, &grid);
        let config = ReferenceSetConfig {
            grid,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let (refs, stats) =
            build_reference_set(&scene, &positions, &config, Some(dir.path())).unwrap();
        assert_eq!(stats.rendered, 15);
        assert_eq!(stats.loaded_from_cache, 0);
        for e in &refs.entries {
            let f = e.bundle.semantic.class_fractions();
            assert_eq!(f[0], 0.0, "void pixels in closed room");
        }
        let (refs2, stats2) =
            build_reference_set(&scene, &positions, &config, Some(dir.path())).unwrap();
        assert_eq!(stats2.rendered, 0);
        assert_eq!(stats2.loaded_from_cache, 15);
        // Encodings from cache equal independently recomputed ones.
        for (a, b) in refs.entries.iter().zip(&refs2.entries) {
            let fresh = encode_panorama(
                &a.bundle.semantic,
                a.position,
                config.enc_width,
                config.enc_height,
            );
            for &c in &crate::raster::SemClass::NON_VOID {
                assert_eq!(b.encoding.channel(c), fresh.channel(c));
            }
        }
    }

    #[test]
    fn build_rejects_positions_outside_rooms() {
        let scene = parse_scene(&rect_room_doc(6.0, 4.0)).unwrap();
        let err = build_reference_set(
            &scene,
            &[Vec3::new(50.0, 0.0, 1.5)],
            &ReferenceSetConfig::default(),
            None,
        );
        assert!(matches!(err, Err(PipelineError::PositionOutsideRooms(_))));
    }

    fn build_fixture(seed: u64) -> (ReferenceSet, Scene) {
        let scene = generate_synthetic_scene(seed, &GenParams::default()).unwrap();
        let positions = sample_reference_positions(&scene, &GridConfig::default());
        let (refs, _) =
            build_reference_set(&scene, &positions, &ReferenceSetConfig::default(), None).unwrap();
        (refs, scene)
    }

    #[test]
    fn self_localization_is_centimeter_exact() {
        let (refs, _) = build_fixture(101);
        let k = CameraIntrinsics::new(90f64.to_radians(), 128, 128);
        let gt = Pose::from_yaw_pitch_roll(
            25f64.to_radians(),
            0.0,
            0.0,
            refs.entries[refs.entries.len() / 2].position,
        );
        let query = render_perspective(&refs.prims, &gt, &k).semantic;
        let result = localize(&refs, &query, &k, &LocalizeConfig::default()).unwrap();
        let terr = (result.selected.translation - gt.translation).norm() * 100.0;
        let rerr = rotation_error_deg(result.selected.rotation, gt.rotation);
        assert!(terr < 2.0, "terr {terr} cm");
        assert!(rerr < 0.5, "rerr {rerr} deg");
    }

    #[test]
    fn top_n_one_without_rounds_returns_single_candidate() {
        let (refs, _) = build_fixture(103);
        let k = CameraIntrinsics::new(90f64.to_radians(), 128, 128);
        let gt = Pose::from_yaw_pitch_roll(1.0, 0.05, 0.0, refs.entries[0].position);
        let query = render_perspective(&refs.prims, &gt, &k).semantic;
        let cfg = LocalizeConfig {
            top_n: 1,
            refine_rounds: 0,
            ..Default::default()
        };
        let result = localize(&refs, &query, &k, &cfg).unwrap();
        assert_eq!(result.candidates.len(), 1);
        assert_eq!(result.selected, result.candidates[0].pose);
        assert_eq!(result.refine_rounds, 0);
    }

    #[test]
    fn localize_is_deterministic() {
        let (refs, _) = build_fixture(107);
        let k = CameraIntrinsics::new(90f64.to_radians(), 128, 128);
        let gt = Pose::from_yaw_pitch_roll(2.0, -0.1, 0.05, refs.entries[1].position + Vec3::new(0.3, 0.2, -0.1));
        let query = render_perspective(&refs.prims, &gt, &k).semantic;
        let a = localize(&refs, &query, &k, &LocalizeConfig::default()).unwrap();
        let b = localize(&refs, &query, &k, &LocalizeConfig::default()).unwrap();
        assert_eq!(a.to_json().to_string(), b.to_json().to_string());
    }

    #[test]
    fn errors_on_empty_refs_and_void_query() {
        let (refs, _) = build_fixture(109);
        let k = CameraIntrinsics::new(90f64.to_radians(), 64, 64);
        let void = SemanticImage::new(64, 64);
        assert!(matches!(
            localize(&refs, &void, &k, &LocalizeConfig::default()),
            Err(PipelineError::AllVoidQuery)
        ));
        let empty = ReferenceSet {
            scene: refs.scene.clone(),
            prims: scene_to_primitives(&refs.scene),
            config: refs.config.clone(),
            scene_hash: refs.scene_hash.clone(),
            entries: vec![],
        };
        let mut q = SemanticImage::new(64, 64);
        q.pixels_mut().fill(1);
        assert!(matches!(
            localize(&empty, &q, &k, &LocalizeConfig::default()),
            Err(PipelineError::EmptyReferenceSet)
        ));
    }

    #[test]
    fn refined_selection_stays_within_bounds_of_a_top_reference() {
        let (refs, _) = build_fixture(113);
        let k = CameraIntrinsics::new(90f64.to_radians(), 128, 128);
        let room = &refs.scene.rooms[0];
        let c = Vec3::new(
            room.polygon.iter().map(|p| p[0]).sum::<f64>() / 4.0,
            room.polygon.iter().map(|p| p[1]).sum::<f64>() / 4.0,
            1.45,
        );
        let gt = Pose::from_yaw_pitch_roll(0.8, 0.05, -0.03, c);
        let query = render_perspective(&refs.prims, &gt, &k).semantic;
        let cfg = LocalizeConfig {
            refine_rounds: 0,
            ..Default::default()
        };
        let result = localize(&refs, &query, &k, &cfg).unwrap();
        let bound_ok = result.candidates.iter().any(|cand| {
            let rp = refs.entries[cand.reference].position;
            let d = result.selected.translation - rp;
            d.x.abs() <= cfg.refine.bound_xy + 1e-9
                && d.y.abs() <= cfg.refine.bound_xy + 1e-9
                && d.z.abs() <= cfg.refine.bound_z + 1e-9
        });
        assert!(bound_ok);
    }
}
