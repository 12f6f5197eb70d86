//! Derivative-free 6D pose recovery by render-and-compare.
//!
//! The objective renders the candidate pose at a low resolution and scores
//! class-balanced soft IoU against the (downsampled) query. A compass
//! search walks translation and local yaw/pitch/roll increments, moving to
//! the best improving neighbor and shrinking all steps when none improves.
//! The rasterized objective is piecewise constant at fine scales, which is
//! why the search is derivative-free.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{rotation_from_yaw_pitch_roll, CameraIntrinsics, Pose};
use crate::matcher::{
    agreement, encode_panorama, encode_query, match_viewport_with, HypothesisConfig,
    MatchContext, QueryEncoding,
};
use crate::math::Vec3;
use crate::prims::PrimitiveSet;
use crate::raster::{SemClass, SemanticImage};
use crate::render::{render_panorama, render_perspective};
use crate::scene::{point_room_lookup, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Initial translation step, meters.
    pub translation_step: f64,
    /// Initial rotation step, degrees.
    pub rotation_step_deg: f64,
    /// Multiplier applied to both steps when no neighbor improves.
    pub shrink: f64,
    /// Stop once the translation step falls below this, meters.
    pub translation_stop: f64,
    /// Stop once the rotation step falls below this, degrees.
    pub rotation_stop_deg: f64,
    /// Budget of objective evaluations for the search (the initial pose is
    /// scored separately).
    pub max_evaluations: u32,
    /// Square render resolution of the objective.
    pub objective_resolution: u32,
    /// Search bounds around the initial translation, meters.
    pub bound_xy: f64,
    pub bound_z: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            translation_step: 0.4,
            rotation_step_deg: 5.0,
            shrink: 0.5,
            translation_stop: 0.01,
            rotation_stop_deg: 0.1,
            max_evaluations: 400,
            objective_resolution: 64,
            bound_xy: 1.4,
            bound_z: 0.3,
        }
    }
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("initial pose translation {0:?} lies outside the scene bounds")]
    InitOutsideScene(Vec3),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub pose: Pose,
    /// Objective score of the returned pose; never below the initial score.
    pub score: f64,
    /// Objective evaluations spent by the search.
    pub evaluations: u32,
    /// True when the step thresholds were reached within budget.
    pub converged: bool,
}

/// Radius of the box blur applied to both class grids before the IoU, in
/// cells. The blur lets near-miss overlaps score partial credit, so cell-
/// scale pose changes register in the score instead of plateauing.
const OBJECTIVE_BLUR_RADIUS: usize = 2;

/// Separable box blur with edge renormalization.
fn box_blur(ch: &mut Vec<f64>, n: usize, r: usize) {
    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(n - 1);
            let mut acc = 0.0;
            for xi in lo..=hi {
                acc += ch[y * n + xi];
            }
            tmp[y * n + x] = acc / (hi - lo + 1) as f64;
        }
    }
    for x in 0..n {
        for y in 0..n {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(n - 1);
            let mut acc = 0.0;
            for yi in lo..=hi {
                acc += tmp[yi * n + x];
            }
            ch[y * n + x] = acc / (hi - lo + 1) as f64;
        }
    }
}

/// Pre-blurred per-class target grids for the objective.
struct ObjectiveTarget {
    n: u32,
    present: Vec<SemClass>,
    channels: Vec<Vec<f64>>,
}

impl ObjectiveTarget {
    fn new(query_sem: &SemanticImage, hfov: f64, resolution: u32) -> Self {
        let enc = encode_query(query_sem, hfov, resolution);
        let channels = enc
            .present
            .iter()
            .map(|&c| {
                let mut ch = enc.channel(c).to_vec();
                box_blur(&mut ch, resolution as usize, OBJECTIVE_BLUR_RADIUS);
                ch
            })
            .collect();
        Self {
            n: resolution,
            present: enc.present,
            channels,
        }
    }
}

/// Render-and-compare agreement of a pose against a query image, in [0,1].
pub fn objective(
    prims: &PrimitiveSet,
    query_sem: &SemanticImage,
    k: &CameraIntrinsics,
    pose: &Pose,
    resolution: u32,
) -> f64 {
    let target = ObjectiveTarget::new(query_sem, k.hfov, resolution);
    objective_against(prims, &target, k, pose)
}

/// Objective against a pre-encoded target (avoids re-encoding per call).
fn objective_against(
    prims: &PrimitiveSet,
    target: &ObjectiveTarget,
    k: &CameraIntrinsics,
    pose: &Pose,
) -> f64 {
    if target.present.is_empty() {
        return 0.0;
    }
    let res = target.n;
    let kr = k.with_resolution(res, res);
    let bundle = render_perspective(prims, pose, &kr);
    let n = res as usize;
    let mut total = 0.0;
    let mut rendered = vec![0.0; n * n];
    for (ci, &class) in target.present.iter().enumerate() {
        rendered.fill(0.0);
        let idx = class.index();
        for (i, &p) in bundle.semantic.pixels().iter().enumerate() {
            if p == idx {
                rendered[i] = 1.0;
            }
        }
        box_blur(&mut rendered, n, OBJECTIVE_BLUR_RADIUS);
        let q = &target.channels[ci];
        let mut num = 0.0;
        let mut den = 0.0;
        for (&r, &qv) in rendered.iter().zip(q) {
            num += r.min(qv);
            den += r.max(qv);
        }
        total += if den > 0.0 { num / den } else { 1.0 };
    }
    total / target.present.len() as f64
}

/// Probe directions per compass round: +-step translations along the
/// camera's horizontal forward and right axes and the vertical, +-step
/// local yaw/pitch/roll increments, and +-yaw-orbit/+-pitch-orbit around
/// the fixation point. Camera-frame translations align the probes with the
/// objective's conditioning (forward motion changes scale, lateral motion
/// couples with rotation), and the orbit probes traverse the
/// translation/rotation ambiguity valley where no single-axis move
/// improves.
const PROBES: usize = 8;

fn neighbor(prims: &PrimitiveSet, pose: &Pose, axis: usize, delta_t: f64, delta_r: f64) -> Pose {
    match axis {
        0 | 1 => {
            let f = pose.forward();
            let horiz = Vec3::new(f.x, f.y, 0.0);
            let dir = if horiz.norm() < 1e-9 {
                // Looking straight up/down: fall back to world axes.
                if axis == 0 {
                    Vec3::new(0.0, 1.0, 0.0)
                } else {
                    Vec3::new(1.0, 0.0, 0.0)
                }
            } else {
                let fw = horiz.normalized();
                if axis == 0 {
                    fw
                } else {
                    Vec3::new(fw.y, -fw.x, 0.0) // horizontal right
                }
            };
            Pose::new(pose.rotation, pose.translation + dir * delta_t)
        }
        2 => Pose::new(pose.rotation, pose.translation + Vec3::new(0.0, 0.0, delta_t)),
        3 | 4 | 5 => {
            let (y, p, r) = match axis {
                3 => (delta_r, 0.0, 0.0),
                4 => (0.0, delta_r, 0.0),
                _ => (0.0, 0.0, delta_r),
            };
            // Local (right-multiplied) rotation increment.
            Pose::new(
                pose.rotation.mul(rotation_from_yaw_pitch_roll(y, p, r)),
                pose.translation,
            )
        }
        6 | 7 => orbit_neighbor(prims, pose, axis == 6, delta_r),
        _ => unreachable!(),
    }
}

/// Rigidly rotates the pose about an axis through the center-ray hit point:
/// vertical axis (yaw orbit) or the camera's right axis (pitch orbit).
fn orbit_neighbor(prims: &PrimitiveSet, pose: &Pose, vertical: bool, angle: f64) -> Pose {
    let fwd = pose.forward();
    let d = crate::render::intersect_ray(prims, pose.translation, fwd)
        .map(|h| h.distance)
        .unwrap_or(2.0);
    let fix = pose.translation + fwd * d;
    let axis = if vertical {
        Vec3::new(0.0, 0.0, 1.0)
    } else {
        pose.rotation.rotate(Vec3::new(1.0, 0.0, 0.0))
    };
    let rot = crate::math::Quat::from_axis_angle(axis, angle);
    Pose::new(
        rot.mul(pose.rotation),
        rot.rotate(pose.translation - fix) + fix,
    )
}

fn within_bounds(t: Vec3, init: Vec3, cfg: &RefineConfig) -> bool {
    (t.x - init.x).abs() <= cfg.bound_xy + 1e-12
        && (t.y - init.y).abs() <= cfg.bound_xy + 1e-12
        && (t.z - init.z).abs() <= cfg.bound_z + 1e-12
}

/// Compass search over (tx, ty, tz, yaw, pitch, roll) from `init`.
///
/// Neighbors at the current step are evaluated in a fixed axis order; the
/// search moves to the best strictly-improving one and shrinks both steps
/// when none improves. The returned score is never below the initial
/// pose's, evaluations never exceed the budget, and identical inputs give
/// bitwise-identical results.
pub fn refine_pose(
    prims: &PrimitiveSet,
    query_sem: &SemanticImage,
    k: &CameraIntrinsics,
    init: &Pose,
    cfg: &RefineConfig,
) -> Result<RefineResult, RefineError> {
    if !prims.contains(init.translation, 1e-6) {
        return Err(RefineError::InitOutsideScene(init.translation));
    }
    let target = ObjectiveTarget::new(query_sem, k.hfov, cfg.objective_resolution);
    let mut pose = *init;
    let mut score = objective_against(prims, &target, k, &pose);
    let mut evaluations = 0u32;
    let mut converged = false;
    // Steps reset to full size after each convergence; the search ends when
    // a whole restart pass yields no improvement (or on budget).
    'restart: loop {
        let score_at_restart = score;
        let mut t_step = cfg.translation_step;
        let mut r_step = cfg.rotation_step_deg;
        loop {
            if t_step < cfg.translation_stop && r_step < cfg.rotation_stop_deg {
                converged = true;
                break;
            }
            let mut best: Option<(f64, Pose, usize, f64)> = None;
            for axis in 0..PROBES {
                for sign in [1.0, -1.0] {
                    let cand = if axis < 3 {
                        neighbor(prims, &pose, axis, sign * t_step, 0.0)
                    } else {
                        neighbor(prims, &pose, axis, 0.0, sign * r_step.to_radians())
                    };
                    if axis != 3 && axis != 4 && axis != 5
                        && !within_bounds(cand.translation, init.translation, cfg)
                    {
                        continue;
                    }
                    if evaluations >= cfg.max_evaluations {
                        break 'restart;
                    }
                    let s = objective_against(prims, &target, k, &cand);
                    evaluations += 1;
                    if s > score && best.as_ref().map_or(true, |(bs, ..)| s > *bs) {
                        best = Some((s, cand, axis, sign));
                    }
                }
            }
            match best {
                Some((s, p, axis, sign)) => {
                    score = s;
                    pose = p;
                    // Extension: keep repeating the winning move while it
                    // improves.
                    loop {
                        if evaluations >= cfg.max_evaluations {
                            break 'restart;
                        }
                        let cand = if axis < 3 {
                            neighbor(prims, &pose, axis, sign * t_step, 0.0)
                        } else {
                            neighbor(prims, &pose, axis, 0.0, sign * r_step.to_radians())
                        };
                        if axis != 3
                            && axis != 4
                            && axis != 5
                            && !within_bounds(cand.translation, init.translation, cfg)
                        {
                            break;
                        }
                        let s = objective_against(prims, &target, k, &cand);
                        evaluations += 1;
                        if s > score {
                            score = s;
                            pose = cand;
                        } else {
                            break;
                        }
                    }
                }
                None => {
                    t_step *= cfg.shrink;
                    r_step *= cfg.shrink;
                }
            }
        }
        if score <= score_at_restart {
            break;
        }
    }
    Ok(RefineResult {
        pose,
        score,
        evaluations,
        converged,
    })
}

/// Everything iterative refinement needs to re-render and re-match a fresh
/// reference panorama at the current estimate.
pub struct RefinementContext<'a> {
    pub scene: &'a Scene,
    pub pano_width: u32,
    pub pano_height: u32,
    pub enc_width: u32,
    pub enc_height: u32,
    pub warp_grid: u32,
    pub hypotheses: HypothesisConfig,
}

/// Repeatedly re-renders a panorama at the estimated position, re-seeds the
/// rotation by matching against only that panorama, and re-runs the compass
/// search; a new pose is kept only when its objective score improves. If
/// the estimate leaves every room the current estimate is returned as-is.
pub fn iterate_refinement(
    prims: &PrimitiveSet,
    query_sem: &SemanticImage,
    k: &CameraIntrinsics,
    estimate: &Pose,
    ctx: &RefinementContext,
    rounds: u32,
    cfg: &RefineConfig,
) -> (Pose, f64) {
    let target = ObjectiveTarget::new(query_sem, k.hfov, cfg.objective_resolution);
    let mut pose = *estimate;
    let mut score = objective_against(prims, &target, k, &pose);
    for _ in 0..rounds {
        let pos = pose.translation;
        if point_room_lookup(ctx.scene, pos).is_none() {
            return (pose, score);
        }
        let pano = render_panorama(prims, pos, ctx.pano_width, ctx.pano_height);
        let enc = encode_panorama(&pano.semantic, pos, ctx.enc_width, ctx.enc_height);
        let q = encode_query(query_sem, k.hfov, ctx.warp_grid);
        let Ok(mctx) = MatchContext::new(
            &q,
            &ctx.hypotheses,
            ctx.enc_width,
            ctx.enc_height,
            ctx.pano_width,
            ctx.pano_height,
        ) else {
            return (pose, score);
        };
        let m = match_viewport_with(&mctx, &enc, &q, 0);
        let init = Pose::new(m.rotation, pos);
        let Ok(refined) = refine_pose(prims, query_sem, k, &init, cfg) else {
            return (pose, score);
        };
        if refined.score > score {
            score = refined.score;
            pose = refined.pose;
        }
    }
    (pose, score)
}

/// Re-exported for tests that score grids directly.
pub fn grid_agreement(a: &[Vec<f64>], b: &[Vec<f64>], present: &[SemClass]) -> f64 {
    agreement(a, b, present)
}
