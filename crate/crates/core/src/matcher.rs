//! Deterministic image-to-panorama viewport matching.
//!
//! Reference panoramas and queries are reduced to soft class-occupancy
//! grids. Every rotation hypothesis warps the panorama encoding into the
//! query's perspective (pure rotation, bilinear with azimuthal wrap) and is
//! scored by class-balanced soft IoU over the classes present in the query.
//! The best hypothesis yields the confidence score, the rotation estimate,
//! and the circular bounding box of the corresponding frustum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{
    dir_to_equirect_pixel, frustum_circular_bbox, persp_pixel_to_ray, cam_to_world_dir,
    rotation_from_yaw_pitch_roll, CameraIntrinsics, CircularBBox,
};
use crate::math::{Quat, Vec3};
use crate::raster::{SemClass, SemanticImage};

/// Soft one-hot class-occupancy grid of a reference panorama, one channel
/// per non-void class, plus the panorama camera position.
#[derive(Debug, Clone)]
pub struct PanoEncoding {
    pub grid_w: u32,
    pub grid_h: u32,
    /// Channel per [`SemClass::NON_VOID`] entry, row-major `grid_w * grid_h`.
    channels: Vec<Vec<f64>>,
    pub position: Vec3,
}

impl PanoEncoding {
    pub fn channel(&self, class: SemClass) -> &[f64] {
        &self.channels[class.index() as usize - 1]
    }
}

/// Soft one-hot class grid of a query image at the hypothesis sampling
/// resolution, with its field of view and the set of present classes.
#[derive(Debug, Clone)]
pub struct QueryEncoding {
    pub n: u32,
    pub hfov: f64,
    channels: Vec<Vec<f64>>,
    /// Non-void classes covering at least 1% of the full-resolution query.
    pub present: Vec<SemClass>,
}

impl QueryEncoding {
    pub fn channel(&self, class: SemClass) -> &[f64] {
        &self.channels[class.index() as usize - 1]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }
}

/// Fraction threshold above which a class counts as present in the query.
pub const PRESENT_CLASS_MIN_FRACTION: f64 = 0.01;

fn box_downsample(sem: &SemanticImage, grid_w: u32, grid_h: u32) -> Vec<Vec<f64>> {
    assert!(
        sem.width() % grid_w == 0 && sem.height() % grid_h == 0,
        "grid {grid_w}x{grid_h} must divide raster {}x{}",
        sem.width(),
        sem.height()
    );
    let (bw, bh) = (sem.width() / grid_w, sem.height() / grid_h);
    let norm = 1.0 / (bw * bh) as f64;
    let mut channels = vec![vec![0.0; (grid_w * grid_h) as usize]; SemClass::NON_VOID.len()];
    for gy in 0..grid_h {
        for gx in 0..grid_w {
            let cell = (gy * grid_w + gx) as usize;
            for py in gy * bh..(gy + 1) * bh {
                for px in gx * bw..(gx + 1) * bw {
                    let c = sem.get(px, py);
                    if c >= 1 && (c as usize) <= SemClass::NON_VOID.len() {
                        channels[c as usize - 1][cell] += norm;
                    }
                }
            }
        }
    }
    channels
}

/// Box-filter downsample of a semantic panorama into class fractions.
/// Panics when the raster is not 2:1 panoramic or not divisible by the grid.
pub fn encode_panorama(sem: &SemanticImage, position: Vec3, grid_w: u32, grid_h: u32) -> PanoEncoding {
    assert_eq!(sem.width(), 2 * sem.height(), "non-panoramic aspect");
    assert_eq!(grid_w, 2 * grid_h, "encoding grid must keep the 2:1 aspect");
    PanoEncoding {
        grid_w,
        grid_h,
        channels: box_downsample(sem, grid_w, grid_h),
        position,
    }
}

/// Encodes a square semantic query at the hypothesis sampling resolution.
pub fn encode_query(sem: &SemanticImage, hfov: f64, n: u32) -> QueryEncoding {
    assert_eq!(sem.width(), sem.height(), "queries are square");
    let channels = box_downsample(sem, n, n);
    let fractions = sem.class_fractions();
    let present = SemClass::NON_VOID
        .iter()
        .copied()
        .filter(|c| fractions[c.index() as usize] >= PRESENT_CLASS_MIN_FRACTION)
        .collect();
    QueryEncoding {
        n,
        hfov,
        channels,
        present,
    }
}

/// Rotation hypothesis grid: full yaw circle at a fixed step crossed with
/// small pitch and roll sets (degrees).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConfig {
    pub yaw_step_deg: f64,
    pub pitch_deg: Vec<f64>,
    pub roll_deg: Vec<f64>,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self {
            yaw_step_deg: 5.0,
            pitch_deg: vec![-10.0, 0.0, 10.0],
            roll_deg: vec![0.0],
        }
    }
}

#[derive(Debug, Error)]
pub enum MatcherError {
    #[error("yaw step {0} does not divide 360 evenly")]
    InvalidYawStep(f64),
    #[error("hypothesis pitch/roll sets must be non-empty")]
    EmptyAngleSet,
}

impl HypothesisConfig {
    pub fn yaw_count(&self) -> Result<usize, MatcherError> {
        if !(self.yaw_step_deg > 0.0) {
            return Err(MatcherError::InvalidYawStep(self.yaw_step_deg));
        }
        let n = 360.0 / self.yaw_step_deg;
        if (n - n.round()).abs() > 1e-9 {
            return Err(MatcherError::InvalidYawStep(self.yaw_step_deg));
        }
        Ok(n.round() as usize)
    }
}

/// Full Cartesian product of the hypothesis grid in yaw-major order
/// (yaw, then pitch, then roll).
pub fn enumerate_hypotheses(cfg: &HypothesisConfig) -> Result<Vec<Quat>, MatcherError> {
    let yaws = cfg.yaw_count()?;
    if cfg.pitch_deg.is_empty() || cfg.roll_deg.is_empty() {
        return Err(MatcherError::EmptyAngleSet);
    }
    let mut out = Vec::with_capacity(yaws * cfg.pitch_deg.len() * cfg.roll_deg.len());
    for yi in 0..yaws {
        let yaw = (yi as f64 * cfg.yaw_step_deg).to_radians();
        for &pitch in &cfg.pitch_deg {
            for &roll in &cfg.roll_deg {
                out.push(rotation_from_yaw_pitch_roll(
                    yaw,
                    pitch.to_radians(),
                    roll.to_radians(),
                ));
            }
        }
    }
    Ok(out)
}

/// Bilinear sample of one channel with azimuthal wrap and vertical clamp.
#[inline]
fn sample_channel(ch: &[f64], w: u32, h: u32, u: f64, v: f64) -> f64 {
    let (wf, hf) = (w as f64, h as f64);
    let x = (u - 0.5).rem_euclid(wf);
    let x0 = x.floor();
    let fx = x - x0;
    let ix0 = x0 as usize % w as usize;
    let ix1 = (ix0 + 1) % w as usize;
    let y = (v - 0.5).clamp(0.0, hf - 1.0);
    let y0 = y.floor().min(hf - 2.0).max(0.0);
    let fy = y - y0;
    let iy0 = y0 as usize;
    let iy1 = iy0 + 1;
    let row0 = iy0 * w as usize;
    let row1 = iy1 * w as usize;
    let a = ch[row0 + ix0] * (1.0 - fx) + ch[row0 + ix1] * fx;
    let b = ch[row1 + ix0] * (1.0 - fx) + ch[row1 + ix1] * fx;
    a * (1.0 - fy) + b * fy
}

/// Warps a panorama encoding into the view of a co-located perspective
/// camera (pure rotation): one soft class grid cell per n x n sample ray.
pub fn warp_pano_to_view(enc: &PanoEncoding, rotation: Quat, hfov: f64, n: u32) -> Vec<Vec<f64>> {
    let k = CameraIntrinsics::new(hfov, n, n);
    let mut out = vec![vec![0.0; (n * n) as usize]; SemClass::NON_VOID.len()];
    for j in 0..n {
        for i in 0..n {
            let ray = persp_pixel_to_ray(&k, i as f64 + 0.5, j as f64 + 0.5);
            let dir = rotation.rotate(cam_to_world_dir(ray));
            let (u, v) = dir_to_equirect_pixel(dir, enc.grid_w, enc.grid_h);
            let cell = (j * n + i) as usize;
            for (c, ch) in out.iter_mut().enumerate() {
                ch[cell] = sample_channel(&enc.channels[c], enc.grid_w, enc.grid_h, u, v);
            }
        }
    }
    out
}

/// Class-balanced soft IoU between two class grids over `present` classes:
/// mean over classes of `sum(min) / sum(max)` with 0/0 := 1. Empty class
/// set scores 0.
pub fn agreement(a: &[Vec<f64>], b: &[Vec<f64>], present: &[SemClass]) -> f64 {
    assert_eq!(a.len(), b.len(), "channel count mismatch");
    if present.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &class in present {
        let (ca, cb) = (&a[class.index() as usize - 1], &b[class.index() as usize - 1]);
        assert_eq!(ca.len(), cb.len(), "grid shape mismatch");
        let mut num = 0.0;
        let mut den = 0.0;
        for (&x, &y) in ca.iter().zip(cb) {
            num += x.min(y);
            den += x.max(y);
        }
        total += if den > 0.0 { num / den } else { 1.0 };
    }
    total / present.len() as f64
}

/// Best-hypothesis match of one reference against a query.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Confidence score in [0,1] of the best hypothesis.
    pub score: f64,
    /// Best rotation hypothesis (ties go to the earliest enumeration entry).
    pub rotation: Quat,
    /// Circular bbox of the matched frustum on the full panorama raster.
    pub bbox: CircularBBox,
    /// Index of the reference this match was computed against.
    pub reference: usize,
}

struct PitchRollGroup {
    /// Per sample: (azimuth pixel at yaw 0, base row index, row fraction).
    base: Vec<(f64, usize, f64)>,
    /// (enumeration index, azimuth pixel shift) per yaw step.
    yaws: Vec<(usize, f64)>,
}

/// Precomputed sampling plan shared across all references of one query.
pub struct MatchContext {
    hypotheses: Vec<Quat>,
    groups: Vec<PitchRollGroup>,
    enc_w: u32,
    enc_h: u32,
    pano_w: u32,
    pano_h: u32,
}

impl MatchContext {
    pub fn new(
        q: &QueryEncoding,
        cfg: &HypothesisConfig,
        enc_w: u32,
        enc_h: u32,
        pano_w: u32,
        pano_h: u32,
    ) -> Result<Self, MatcherError> {
        let hypotheses = enumerate_hypotheses(cfg)?;
        let yaw_count = cfg.yaw_count()?;
        let pr_count = cfg.pitch_deg.len() * cfg.roll_deg.len();
        let k = CameraIntrinsics::new(q.hfov, q.n, q.n);
        let mut groups = Vec::with_capacity(pr_count);
        for (pi, &pitch) in cfg.pitch_deg.iter().enumerate() {
            for (ri, &roll) in cfg.roll_deg.iter().enumerate() {
                let rot = rotation_from_yaw_pitch_roll(0.0, pitch.to_radians(), roll.to_radians());
                let mut base = Vec::with_capacity((q.n * q.n) as usize);
                for j in 0..q.n {
                    for i in 0..q.n {
                        let ray = persp_pixel_to_ray(&k, i as f64 + 0.5, j as f64 + 0.5);
                        let dir = rot.rotate(cam_to_world_dir(ray));
                        let (u, v) = dir_to_equirect_pixel(dir, enc_w, enc_h);
                        let y = (v - 0.5).clamp(0.0, enc_h as f64 - 1.0);
                        let y0 = y.floor().min(enc_h as f64 - 2.0).max(0.0);
                        base.push((u, y0 as usize, y - y0));
                    }
                }
                let pr_idx = pi * cfg.roll_deg.len() + ri;
                let yaws = (0..yaw_count)
                    .map(|yi| {
                        let enum_idx = yi * pr_count + pr_idx;
                        let du = yi as f64 * cfg.yaw_step_deg / 360.0 * enc_w as f64;
                        (enum_idx, du)
                    })
                    .collect();
                groups.push(PitchRollGroup { base, yaws });
            }
        }
        Ok(Self {
            hypotheses,
            groups,
            enc_w,
            enc_h,
            pano_w,
            pano_h,
        })
    }

    pub fn hypotheses(&self) -> &[Quat] {
        &self.hypotheses
    }
}

/// Scores every rotation hypothesis of `ctx` and returns the best match.
pub fn match_viewport_with(
    ctx: &MatchContext,
    enc: &PanoEncoding,
    q: &QueryEncoding,
    reference: usize,
) -> MatchResult {
    assert_eq!(
        (enc.grid_w, enc.grid_h),
        (ctx.enc_w, ctx.enc_h),
        "encoding grid mismatch"
    );
    let w = ctx.enc_w as usize;
    let present: Vec<usize> = q.present.iter().map(|c| c.index() as usize - 1).collect();
    let qch: Vec<&[f64]> = q.channels.iter().map(|c| c.as_slice()).collect();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_idx = usize::MAX;
    let mut num = vec![0.0f64; present.len()];
    let mut den = vec![0.0f64; present.len()];
    for group in &ctx.groups {
        for &(enum_idx, du) in &group.yaws {
            num.fill(0.0);
            den.fill(0.0);
            for (cell, &(u0, y0, fy)) in group.base.iter().enumerate() {
                let x = (u0 + du - 0.5).rem_euclid(ctx.enc_w as f64);
                let x0 = x.floor();
                let fx = x - x0;
                let ix0 = x0 as usize % w;
                let ix1 = (ix0 + 1) % w;
                let r0 = y0 * w;
                let r1 = r0 + w;
                let w00 = (1.0 - fx) * (1.0 - fy);
                let w10 = fx * (1.0 - fy);
                let w01 = (1.0 - fx) * fy;
                let w11 = fx * fy;
                for (p, &ci) in present.iter().enumerate() {
                    let ch = &enc.channels[ci];
                    let val = ch[r0 + ix0] * w00
                        + ch[r0 + ix1] * w10
                        + ch[r1 + ix0] * w01
                        + ch[r1 + ix1] * w11;
                    let qv = qch[ci][cell];
                    num[p] += val.min(qv);
                    den[p] += val.max(qv);
                }
            }
            let score = if present.is_empty() {
                0.0
            } else {
                let mut total = 0.0;
                for p in 0..present.len() {
                    total += if den[p] > 0.0 { num[p] / den[p] } else { 1.0 };
                }
                total / present.len() as f64
            };
            if score > best_score || (score == best_score && enum_idx < best_idx) {
                best_score = score;
                best_idx = enum_idx;
            }
        }
    }
    let rotation = ctx.hypotheses[best_idx];
    MatchResult {
        score: best_score.max(0.0),
        rotation,
        bbox: frustum_circular_bbox(rotation, q.hfov, 1.0, ctx.pano_w, ctx.pano_h),
        reference,
    }
}

/// Convenience form that builds the sampling plan on the fly. The bbox is
/// reported on a full-resolution panorama twice the encoding size.
pub fn match_viewport(
    enc: &PanoEncoding,
    q: &QueryEncoding,
    cfg: &HypothesisConfig,
) -> Result<MatchResult, MatcherError> {
    let ctx = MatchContext::new(q, cfg, enc.grid_w, enc.grid_h, enc.grid_w * 2, enc.grid_h * 2)?;
    Ok(match_viewport_with(&ctx, enc, q, 0))
}

/// Reference indices ordered by descending score, ties by ascending index.
pub fn rank_references(results: &[MatchResult]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| {
        results[b]
            .score
            .partial_cmp(&results[a].score)
            .unwrap()
            .then(results[a].reference.cmp(&results[b].reference))
    });
    order.into_iter().map(|i| results[i].reference).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rotation_angle;
    use crate::prims::scene_to_primitives;
    use crate::render::{render_panorama, render_perspective};
    use crate::scene::{generate_synthetic_scene, GenParams, Room, Scene};
    use crate::Pose;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_image(w: u32, h: u32, class: u8) -> SemanticImage {
        let mut img = SemanticImage::new(w, h);
        img.pixels_mut().fill(class);
        img
    }

    #[test]
    fn all_wall_panorama_encodes_to_unit_wall_channel() {
        let sem = constant_image(64, 32, SemClass::Wall.index());
        let enc = encode_panorama(&sem, Vec3::ZERO, 32, 16);
        assert!(enc.channel(SemClass::Wall).iter().all(|&v| v == 1.0));
        assert!(enc.channel(SemClass::Floor).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_split_panorama_encodes_indicators() {
        let mut sem = SemanticImage::new(64, 32);
        for y in 0..32 {
            for x in 0..64 {
                sem.set(x, y, if x < 32 { SemClass::Floor } else { SemClass::Ceiling }.index());
            }
        }
        let enc = encode_panorama(&sem, Vec3::ZERO, 16, 8);
        for cell in 0..16 * 8 {
            let col = cell % 16;
            let floor = enc.channel(SemClass::Floor)[cell];
            let ceil = enc.channel(SemClass::Ceiling)[cell];
            if col < 8 {
                assert_eq!((floor, ceil), (1.0, 0.0));
            } else {
                assert_eq!((floor, ceil), (0.0, 1.0));
            }
        }
    }

    #[test]
    fn cell_sums_equal_non_void_fraction_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut sem = SemanticImage::new(64, 32);
        for p in sem.pixels_mut() {
            *p = rng.random_range(0..7);
        }
        let enc = encode_panorama(&sem, Vec3::ZERO, 16, 8);
        for gy in 0..8u32 {
            for gx in 0..16u32 {
                let cell = (gy * 16 + gx) as usize;
                let sum: f64 = SemClass::NON_VOID
                    .iter()
                    .map(|&c| enc.channel(c)[cell])
                    .sum();
                let mut non_void = 0;
                for py in gy * 4..(gy + 1) * 4 {
                    for px in gx * 4..(gx + 1) * 4 {
                        non_void += (sem.get(px, py) != 0) as usize;
                    }
                }
                assert!((sum - non_void as f64 / 16.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hypothesis_enumeration_counts_and_spacing() {
        let cfg = HypothesisConfig::default();
        assert_eq!(enumerate_hypotheses(&cfg).unwrap().len(), 72 * 3);
        let coarse = HypothesisConfig {
            yaw_step_deg: 90.0,
            pitch_deg: vec![0.0],
            roll_deg: vec![0.0],
        };
        let hyps = enumerate_hypotheses(&coarse).unwrap();
        assert_eq!(hyps.len(), 4);
        for i in 0..4 {
            for j in i + 1..4 {
                let d = rotation_angle(hyps[i], hyps[j]).to_degrees();
                assert!((d - 90.0).abs() < 1e-9 || (d - 180.0).abs() < 1e-9);
            }
        }
        // No duplicates in a denser grid.
        let dense = HypothesisConfig {
            yaw_step_deg: 30.0,
            pitch_deg: vec![-10.0, 0.0, 10.0],
            roll_deg: vec![-5.0, 0.0],
        };
        let hyps = enumerate_hypotheses(&dense).unwrap();
        for i in 0..hyps.len() {
            for j in i + 1..hyps.len() {
                assert!(rotation_angle(hyps[i], hyps[j]) > 1e-6);
            }
        }
        assert!(enumerate_hypotheses(&HypothesisConfig {
            yaw_step_deg: 7.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn agreement_examples() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]];
        let all = [SemClass::Wall, SemClass::Floor];
        assert_eq!(agreement(&a, &a, &all), 1.0);
        let b = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]];
        assert_eq!(agreement(&a, &b, &all), 0.0);
        // One class scaled by 0.5: IoU for it is exactly 0.5.
        let mut c = a.clone();
        for v in &mut c[0] {
            *v *= 0.5;
        }
        let s = agreement(&a, &c, &all);
        assert!((s - 0.75).abs() < 1e-12, "{s}");
        assert_eq!(agreement(&a, &a, &[]), 0.0);
    }

    #[test]
    fn warp_of_north_door_quadrant_is_door() {
        // Panorama whose north-facing quadrant (u around W/2) is all door.
        let mut sem = SemanticImage::new(128, 64);
        for y in 0..64 {
            for x in 0..128 {
                let north = (48..80).contains(&x) && (16..48).contains(&y);
                sem.set(x, y, if north { SemClass::Door } else { SemClass::Wall }.index());
            }
        }
        let enc = encode_panorama(&sem, Vec3::ZERO, 128, 64);
        let grid = warp_pano_to_view(&enc, Quat::IDENTITY, 80f64.to_radians(), 16);
        let door = &grid[SemClass::Door.index() as usize - 1];
        let mean: f64 = door.iter().sum::<f64>() / door.len() as f64;
        assert!(mean >= 0.98, "door mean {mean}");
    }

    #[test]
    fn yaw_180_equals_half_width_rolled_panorama() {
        let scene = generate_synthetic_scene(23, &GenParams::default()).unwrap();
        let prims = scene_to_primitives(&scene);
        let room = &scene.rooms[0];
        let c = Vec3::new(
            room.polygon.iter().map(|p| p[0]).sum::<f64>() / 4.0,
            room.polygon.iter().map(|p| p[1]).sum::<f64>() / 4.0,
            1.5,
        );
        let pano = render_panorama(&prims, c, 128, 64).semantic;
        let mut rolled = SemanticImage::new(128, 64);
        for y in 0..64 {
            for x in 0..128 {
                rolled.set(x, y, pano.get((x + 64) % 128, y));
            }
        }
        let enc = encode_panorama(&pano, c, 128, 64);
        let enc_rolled = encode_panorama(&rolled, c, 128, 64);
        let a = warp_pano_to_view(&enc, rotation_from_yaw_pitch_roll(std::f64::consts::PI, 0.0, 0.0), 1.4, 12);
        let b = warp_pano_to_view(&enc_rolled, Quat::IDENTITY, 1.4, 12);
        for (ca, cb) in a.iter().zip(&b) {
            for (x, y) in ca.iter().zip(cb) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tiny_fov_converges_to_forward_cell() {
        let mut sem = constant_image(128, 64, SemClass::Wall.index());
        // Paint the exact forward pixel block with floor.
        for y in 31..33 {
            for x in 63..65 {
                sem.set(x, y, SemClass::Floor.index());
            }
        }
        let enc = encode_panorama(&sem, Vec3::ZERO, 128, 64);
        let grid = warp_pano_to_view(&enc, Quat::IDENTITY, 0.01, 8);
        let floor = &grid[SemClass::Floor.index() as usize - 1];
        assert!(floor.iter().all(|&v| v > 0.99), "{floor:?}");
    }

    #[test]
    fn uniform_inputs_tie_break_to_first_hypothesis() {
        let sem = constant_image(128, 64, SemClass::Wall.index());
        let enc = encode_panorama(&sem, Vec3::ZERO, 128, 64);
        let q = encode_query(&constant_image(32, 32, SemClass::Wall.index()), 1.5, 32);
        let cfg = HypothesisConfig::default();
        let m = match_viewport(&enc, &q, &cfg).unwrap();
        assert_eq!(m.score, 1.0);
        let first = enumerate_hypotheses(&cfg).unwrap()[0];
        assert!(rotation_angle(m.rotation, first) < 1e-12);
    }

    #[test]
    fn fused_score_matches_warp_plus_agreement() {
        let scene = generate_synthetic_scene(37, &GenParams::default()).unwrap();
        let prims = scene_to_primitives(&scene);
        let room = &scene.rooms[1];
        let c = Vec3::new(
            room.polygon.iter().map(|p| p[0]).sum::<f64>() / 4.0,
            room.polygon.iter().map(|p| p[1]).sum::<f64>() / 4.0,
            1.5,
        );
        let pano = render_panorama(&prims, c, 256, 128);
        let enc = encode_panorama(&pano.semantic, c, 128, 64);
        let k = CameraIntrinsics::new(90f64.to_radians(), 128, 128);
        let pose = Pose::from_yaw_pitch_roll(0.6, 0.1, 0.0, c);
        let query = render_perspective(&prims, &pose, &k);
        let q = encode_query(&query.semantic, k.hfov, 32);
        let cfg = HypothesisConfig {
            yaw_step_deg: 45.0,
            pitch_deg: vec![0.0, 5.0],
            roll_deg: vec![0.0],
        };
        let ctx = MatchContext::new(&q, &cfg, 128, 64, 256, 128).unwrap();
        let fused = match_viewport_with(&ctx, &enc, &q, 3);
        assert_eq!(fused.reference, 3);
        let mut best = f64::NEG_INFINITY;
        for rot in enumerate_hypotheses(&cfg).unwrap() {
            let grid = warp_pano_to_view(&enc, rot, q.hfov, 32);
            best = best.max(agreement(&grid, q.channels(), &q.present));
        }
        assert!((fused.score - best).abs() < 1e-12, "{} vs {best}", fused.score);
    }

    #[test]
    fn self_consistent_match_recovers_yaw_and_ranks_colocated_first() {
        let scene = generate_synthetic_scene(41, &GenParams::default()).unwrap();
        let prims = scene_to_primitives(&scene);
        let centers: Vec<Vec3> = scene
            .rooms
            .iter()
            .map(|r| {
                Vec3::new(
                    r.polygon.iter().map(|p| p[0]).sum::<f64>() / 4.0,
                    r.polygon.iter().map(|p| p[1]).sum::<f64>() / 4.0,
                    1.5,
                )
            })
            .collect();
        let encs: Vec<PanoEncoding> = centers
            .iter()
            .map(|&c| {
                encode_panorama(&render_panorama(&prims, c, 256, 128).semantic, c, 128, 64)
            })
            .collect();
        let k = CameraIntrinsics::new(90f64.to_radians(), 128, 128);
        let yaw = 35f64.to_radians();
        let pose = Pose::from_yaw_pitch_roll(yaw, 0.0, 0.0, centers[0]);
        let query = render_perspective(&prims, &pose, &k);
        let q = encode_query(&query.semantic, k.hfov, 32);
        let cfg = HypothesisConfig::default();
        let ctx = MatchContext::new(&q, &cfg, 128, 64, 256, 128).unwrap();
        let results: Vec<MatchResult> = encs
            .iter()
            .enumerate()
            .map(|(i, e)| match_viewport_with(&ctx, e, &q, i))
            .collect();
        let order = rank_references(&results);
        assert_eq!(order[0], 0, "co-located reference must rank first: {results:?}");
        let m = &results[0];
        assert!(m.score >= 0.9, "score {}", m.score);
        let yaw_err = (Pose::new(m.rotation, Vec3::ZERO).yaw() - yaw)
            .to_degrees()
            .abs();
        assert!(yaw_err <= 2.5, "yaw error {yaw_err}");
        // The matched bbox contains the frustum center direction.
        let (cu, cv) = dir_to_equirect_pixel(pose.forward(), 256, 128);
        assert!(m.bbox.contains(cu, cv, 256), "{:?} vs ({cu},{cv})", m.bbox);
    }

    #[test]
    fn rank_references_orders_by_score_then_index() {
        let mk = |score: f64, reference: usize| MatchResult {
            score,
            rotation: Quat::IDENTITY,
            bbox: CircularBBox {
                u_min: 0.0,
                v_min: 0.0,
                width: 1.0,
                height: 1.0,
            },
            reference,
        };
        let results = vec![mk(0.2, 0), mk(0.9, 1), mk(0.5, 2)];
        assert_eq!(rank_references(&results), vec![1, 2, 0]);
        let ties = vec![mk(0.4, 0), mk(0.4, 1), mk(0.4, 2)];
        assert_eq!(rank_references(&ties), vec![0, 1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let results: Vec<MatchResult> =
            (0..50).map(|i| mk(rng.random_range(0.0..1.0), i)).collect();
        let order = rank_references(&results);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        for pair in order.windows(2) {
            assert!(results[pair[0]].score >= results[pair[1]].score);
        }
    }
}
