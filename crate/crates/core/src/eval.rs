//! Query-pose sampling, localization error metrics, and report emission.
//!
//! Sampled query poses must show at least three semantic classes (each
//! covering 1% of pixels), face into the room (center-ray distance of at
//! least 1 m), and keep 10 cm of wall clearance. Metrics follow the usual
//! recall-at-threshold structure with medians computed over the sub-meter
//! subset, in either 2D (xy translation, yaw rotation) or 3D (xyz, geodesic
//! rotation) mode.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{rotation_error_deg, yaw_error_deg, CameraIntrinsics, CircularBBox, Pose};
use crate::math::Vec3;
use crate::prims::PrimitiveSet;
use crate::raster::{RasterError, SemClass, SemanticImage};
use crate::render::{intersect_ray, render_perspective};
use crate::scene::{edge_endpoints, point_room_lookup, polygon_bbox, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySampleParams {
    pub count: usize,
    /// Horizontal field of view, radians.
    pub hfov: f64,
    /// Pitch and roll are drawn uniformly from +-this many degrees.
    pub tilt_max_deg: f64,
    /// Camera height range, meters.
    pub height_range: (f64, f64),
    /// Square render resolution of the query images.
    pub resolution: u32,
    pub min_classes: usize,
    pub min_class_fraction: f64,
    /// Minimum center-ray hit distance, meters.
    pub min_center_distance: f64,
    /// Minimum 2D distance to the containing room's walls, meters.
    pub min_wall_distance: f64,
}

impl Default for QuerySampleParams {
    fn default() -> Self {
        Self {
            count: 50,
            hfov: 90f64.to_radians(),
            tilt_max_deg: 10.0,
            height_range: (1.2, 1.8),
            resolution: 128,
            min_classes: 3,
            min_class_fraction: 0.01,
            min_center_distance: 1.0,
            min_wall_distance: 0.1,
        }
    }
}

/// A sampled query pose with its validity diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub pose: Pose,
    pub hfov: f64,
    pub seed: u64,
    pub class_count: usize,
    pub center_distance: f64,
}

/// Why a candidate query pose was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryRejection {
    OutsideRooms,
    TooCloseToWall,
    CenterRayTooClose,
    TooFewClasses,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("could not sample {want} valid query poses within {attempts} attempts")]
    SamplingFailed { want: usize, attempts: usize },
    #[error("metrics need at least one error entry")]
    EmptyInput,
    #[error("top-k error list length {topk} does not match {n} entries")]
    TopkMismatch { n: usize, topk: usize },
    #[error("report I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Distance from a point to the containing room's boundary in the xy plane.
fn wall_distance(scene: &Scene, room_id: u32, x: f64, y: f64) -> f64 {
    let room = scene.rooms.iter().find(|r| r.id == room_id).expect("room");
    let mut best = f64::INFINITY;
    for e in 0..room.polygon.len() {
        let (a, b) = edge_endpoints(room, e);
        let ab = [b[0] - a[0], b[1] - a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let t = (((x - a[0]) * ab[0] + (y - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
        let d = ((x - a[0] - t * ab[0]).powi(2) + (y - a[1] - t * ab[1]).powi(2)).sqrt();
        best = best.min(d);
    }
    best
}

/// Re-checkable acceptance test for one query pose. `Ok` carries
/// (class count, center-ray distance).
pub fn check_query_pose(
    scene: &Scene,
    prims: &PrimitiveSet,
    pose: &Pose,
    params: &QuerySampleParams,
) -> Result<(usize, f64), QueryRejection> {
    let t = pose.translation;
    let Some(room) = point_room_lookup(scene, t) else {
        return Err(QueryRejection::OutsideRooms);
    };
    if wall_distance(scene, room, t.x, t.y) < params.min_wall_distance {
        return Err(QueryRejection::TooCloseToWall);
    }
    let center_distance = intersect_ray(prims, t, pose.forward())
        .map(|h| h.distance)
        .unwrap_or(f64::INFINITY);
    if center_distance < params.min_center_distance {
        return Err(QueryRejection::CenterRayTooClose);
    }
    let k = CameraIntrinsics::new(params.hfov, params.resolution, params.resolution);
    let sem = render_perspective(prims, pose, &k).semantic;
    let classes = sem.present_class_count(params.min_class_fraction);
    if classes < params.min_classes {
        return Err(QueryRejection::TooFewClasses);
    }
    Ok((classes, center_distance))
}

/// Rejection-samples valid query poses: position uniform over room
/// interiors, height uniform in range, yaw uniform, pitch and roll uniform
/// within the tilt bound. Deterministic in `seed`; fails after
/// `1000 * count` rejections.
pub fn sample_query_poses(
    scene: &Scene,
    prims: &PrimitiveSet,
    params: &QuerySampleParams,
    seed: u64,
) -> Result<Vec<QuerySpec>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let areas: Vec<f64> = scene
        .rooms
        .iter()
        .map(|r| crate::scene::polygon_signed_area(&r.polygon).abs())
        .collect();
    let total_area: f64 = areas.iter().sum();
    let max_attempts = 1000 * params.count.max(1);
    let mut out = Vec::with_capacity(params.count);
    let mut attempts = 0;
    while out.len() < params.count {
        if attempts >= max_attempts {
            return Err(EvalError::SamplingFailed {
                want: params.count,
                attempts,
            });
        }
        attempts += 1;
        // Area-weighted room, then uniform point in its polygon.
        let mut pick = rng.random_range(0.0..total_area);
        let mut room_idx = 0;
        for (i, a) in areas.iter().enumerate() {
            if pick < *a {
                room_idx = i;
                break;
            }
            pick -= a;
        }
        let room = &scene.rooms[room_idx];
        let (lo, hi) = polygon_bbox(&room.polygon);
        let (mut x, mut y);
        loop {
            x = rng.random_range(lo[0]..hi[0]);
            y = rng.random_range(lo[1]..hi[1]);
            if crate::scene::point_in_polygon_inclusive(&room.polygon, x, y) {
                break;
            }
        }
        let z = rng.random_range(params.height_range.0..=params.height_range.1);
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let tilt = params.tilt_max_deg.to_radians();
        let pitch = rng.random_range(-tilt..=tilt);
        let roll = rng.random_range(-tilt..=tilt);
        let pose = Pose::from_yaw_pitch_roll(yaw, pitch, roll, Vec3::new(x, y, z));
        if let Ok((class_count, center_distance)) = check_query_pose(scene, prims, &pose, params) {
            out.push(QuerySpec {
                pose,
                hfov: params.hfov,
                seed,
                class_count,
                center_distance,
            });
        }
    }
    Ok(out)
}

/// Translation and rotation errors between a ground-truth and an estimated
/// pose, in both 2D and 3D flavors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub terr_xyz_cm: f64,
    pub terr_xy_cm: f64,
    pub rerr_3d_deg: f64,
    pub rerr_yaw_deg: f64,
}

pub fn pose_error(gt: &Pose, est: &Pose) -> PoseError {
    let d = gt.translation - est.translation;
    PoseError {
        terr_xyz_cm: d.norm() * 100.0,
        terr_xy_cm: (d.x * d.x + d.y * d.y).sqrt() * 100.0,
        rerr_3d_deg: rotation_error_deg(gt.rotation, est.rotation),
        rerr_yaw_deg: yaw_error_deg(gt.rotation, est.rotation),
    }
}

/// Which error pair metrics are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricsMode {
    /// xy translation error and yaw rotation error.
    #[serde(rename = "2d")]
    TwoD,
    /// xyz translation error and geodesic rotation error.
    #[serde(rename = "3d")]
    ThreeD,
}

impl MetricsMode {
    fn terr(&self, e: &PoseError) -> f64 {
        match self {
            Self::TwoD => e.terr_xy_cm,
            Self::ThreeD => e.terr_xyz_cm,
        }
    }

    fn rerr(&self, e: &PoseError) -> f64 {
        match self {
            Self::TwoD => e.rerr_yaw_deg,
            Self::ThreeD => e.rerr_3d_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: MetricsMode,
    pub n: usize,
    pub thresholds_cm: [f64; 3],
    pub angle_threshold_deg: f64,
    /// Median translation error among sub-meter localizations, cm.
    pub median_terr_cm: Option<f64>,
    /// Median rotation error over the same sub-meter subset, degrees.
    pub median_rerr_deg: Option<f64>,
    pub recall_10cm_pct: f64,
    pub recall_50cm_pct: f64,
    pub recall_1m_pct: f64,
    /// Recall under both the 1 m and the angle threshold.
    pub inlier_pct: f64,
    /// Recall at 1 m of the best among the top-k candidates.
    pub topk_recall_1m_pct: f64,
}

fn median(sorted: &[f64]) -> Option<f64> {
    match sorted.len() {
        0 => None,
        n if n % 2 == 1 => Some(sorted[n / 2]),
        n => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

/// Aggregates per-query errors. `topk_errors[i]` is the best-of-k error for
/// the same query as `errors[i]`.
pub fn compute_metrics(
    errors: &[PoseError],
    topk_errors: &[PoseError],
    mode: MetricsMode,
) -> Result<Metrics, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if errors.len() != topk_errors.len() {
        return Err(EvalError::TopkMismatch {
            n: errors.len(),
            topk: topk_errors.len(),
        });
    }
    let n = errors.len();
    let thresholds_cm = [10.0, 50.0, 100.0];
    let angle_threshold_deg = 30.0;
    let pct = |count: usize| count as f64 / n as f64 * 100.0;
    let recall = |tau: f64| pct(errors.iter().filter(|e| mode.terr(e) < tau).count());
    let mut sub_terr: Vec<f64> = Vec::new();
    let mut sub_rerr: Vec<f64> = Vec::new();
    for e in errors {
        if mode.terr(e) < 100.0 {
            sub_terr.push(mode.terr(e));
            sub_rerr.push(mode.rerr(e));
        }
    }
    sub_terr.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sub_rerr.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let inliers = errors
        .iter()
        .filter(|e| mode.terr(e) < 100.0 && mode.rerr(e) < angle_threshold_deg)
        .count();
    let topk = topk_errors.iter().filter(|e| mode.terr(e) < 100.0).count();
    let metrics = Metrics {
        mode,
        n,
        thresholds_cm,
        angle_threshold_deg,
        median_terr_cm: median(&sub_terr),
        median_rerr_deg: median(&sub_rerr),
        recall_10cm_pct: recall(10.0),
        recall_50cm_pct: recall(50.0),
        recall_1m_pct: recall(100.0),
        inlier_pct: pct(inliers),
        topk_recall_1m_pct: pct(topk),
    };
    debug_assert!(metrics.recall_10cm_pct <= metrics.recall_50cm_pct);
    debug_assert!(metrics.recall_50cm_pct <= metrics.recall_1m_pct);
    debug_assert!(metrics.inlier_pct <= metrics.recall_1m_pct);
    debug_assert!(metrics.topk_recall_1m_pct >= metrics.recall_1m_pct);
    Ok(metrics)
}

impl Metrics {
    /// The `metrics.json` document, with the caller's config echoed in.
    pub fn to_json(&self, config_echo: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "mode": self.mode,
            "thresholds_cm": self.thresholds_cm,
            "angle_threshold_deg": self.angle_threshold_deg,
            "n": self.n,
            "median_terr_cm": self.median_terr_cm,
            "median_rerr_deg": self.median_rerr_deg,
            "recall": {
                "10cm_pct": self.recall_10cm_pct,
                "50cm_pct": self.recall_50cm_pct,
                "1m_pct": self.recall_1m_pct,
            },
            "inlier_pct": self.inlier_pct,
            "topk_recall_1m_pct": self.topk_recall_1m_pct,
            "config": config_echo,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Option<Metrics> {
        Some(Metrics {
            mode: serde_json::from_value(v.get("mode")?.clone()).ok()?,
            n: v.get("n")?.as_u64()? as usize,
            thresholds_cm: serde_json::from_value(v.get("thresholds_cm")?.clone()).ok()?,
            angle_threshold_deg: v.get("angle_threshold_deg")?.as_f64()?,
            median_terr_cm: v.get("median_terr_cm")?.as_f64(),
            median_rerr_deg: v.get("median_rerr_deg")?.as_f64(),
            recall_10cm_pct: v.pointer("/recall/10cm_pct")?.as_f64()?,
            recall_50cm_pct: v.pointer("/recall/50cm_pct")?.as_f64()?,
            recall_1m_pct: v.pointer("/recall/1m_pct")?.as_f64()?,
            inlier_pct: v.get("inlier_pct")?.as_f64()?,
            topk_recall_1m_pct: v.get("topk_recall_1m_pct")?.as_f64()?,
        })
    }
}

/// One per-query line of `results.csv`.
#[derive(Debug, Clone)]
pub struct QueryRecord {
    pub index: usize,
    pub scene: String,
    pub gt: Pose,
    pub est: Pose,
    pub error: PoseError,
    pub topk_error: PoseError,
}

pub const RESULTS_CSV_HEADER: &str = "query,scene,gt_qw,gt_qx,gt_qy,gt_qz,gt_tx,gt_ty,gt_tz,\
est_qw,est_qx,est_qy,est_qz,est_tx,est_ty,est_tz,terr_xy_cm,terr_xyz_cm,rerr_yaw_deg,rerr_3d_deg,\
top1_within_1m,topk_within_1m";

/// Writes `metrics.json` and `results.csv` into `dir`.
pub fn write_report(
    metrics: &Metrics,
    records: &[QueryRecord],
    config_echo: serde_json::Value,
    dir: &Path,
) -> Result<(), EvalError> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics.to_json(config_echo))?.as_bytes(),
    )?;
    let mut csv = String::from(RESULTS_CSV_HEADER);
    csv.push('\n');
    for r in records {
        let gq = r.gt.rotation.to_array();
        let gt = r.gt.translation.to_array();
        let eq = r.est.rotation.to_array();
        let et = r.est.translation.to_array();
        let terr = match metrics.mode {
            MetricsMode::TwoD => (r.error.terr_xy_cm, r.topk_error.terr_xy_cm),
            MetricsMode::ThreeD => (r.error.terr_xyz_cm, r.topk_error.terr_xyz_cm),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.index,
            r.scene,
            gq[0], gq[1], gq[2], gq[3], gt[0], gt[1], gt[2],
            eq[0], eq[1], eq[2], eq[3], et[0], et[1], et[2],
            r.error.terr_xy_cm,
            r.error.terr_xyz_cm,
            r.error.rerr_yaw_deg,
            r.error.rerr_3d_deg,
            (terr.0 < 100.0) as u8,
            (terr.1 < 100.0) as u8,
        ));
    }
    fs::write(dir.join("results.csv"), csv)?;
    Ok(())
}

impl From<serde_json::Error> for EvalError {
    fn from(e: serde_json::Error) -> Self {
        EvalError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Color used for bounding-box overlays in debug panels.
pub const OVERLAY_COLOR: [u8; 3] = [255, 0, 0];

/// Composes `query | top-1 render | panorama (with bbox overlay)` into one
/// RGB image using the debug palette, panels separated by 2px gutters.
pub fn debug_panel(
    query: &SemanticImage,
    top1: &SemanticImage,
    pano: &SemanticImage,
    bbox: &CircularBBox,
) -> (u32, u32, Vec<u8>) {
    let gutter = 2u32;
    let width = query.width() + top1.width() + pano.width() + 2 * gutter;
    let height = query.height().max(top1.height()).max(pano.height());
    let mut rgb = vec![0u8; (width * height * 3) as usize];
    let mut blit = |img: &SemanticImage, x0: u32| {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let c = SemClass::from_index(img.get(x, y))
                    .unwrap_or(SemClass::Void)
                    .debug_color();
                let o = (((y * width) + x0 + x) * 3) as usize;
                rgb[o..o + 3].copy_from_slice(&c);
            }
        }
    };
    blit(query, 0);
    blit(top1, query.width() + gutter);
    let pano_x0 = query.width() + top1.width() + 2 * gutter;
    blit(pano, pano_x0);
    // Box outline, wrapping-aware.
    let (pw, ph) = (pano.width(), pano.height());
    let v0 = bbox.v_min.round().clamp(0.0, ph as f64 - 1.0) as u32;
    let v1 = (bbox.v_min + bbox.height - 1.0).round().clamp(0.0, ph as f64 - 1.0) as u32;
    let bw = (bbox.width.round() as u32).clamp(1, pw);
    let mut put = |x: u32, y: u32| {
        let o = (((y * width) + pano_x0 + x) * 3) as usize;
        rgb[o..o + 3].copy_from_slice(&OVERLAY_COLOR);
    };
    for i in 0..bw {
        let x = ((bbox.u_min as u32) + i) % pw;
        put(x, v0);
        put(x, v1);
    }
    let left = (bbox.u_min as u32) % pw;
    let right = ((bbox.u_min as u32) + bw - 1) % pw;
    for y in v0..=v1 {
        put(left, y);
        put(right, y);
    }
    (width, height, rgb)
}

/// Saves a debug panel PNG.
pub fn save_debug_panel(
    path: &Path,
    query: &SemanticImage,
    top1: &SemanticImage,
    pano: &SemanticImage,
    bbox: &CircularBBox,
) -> Result<(), EvalError> {
    let (w, h, rgb) = debug_panel(query, top1, pano, bbox);
    let img: image::RgbImage = image::ImageBuffer::from_raw(w, h, rgb).expect("size");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(RasterError::Image)?;
    Ok(())
}
