//! Projection and pose math for equirectangular panoramas and pinhole
//! perspective cameras.
//!
//! Conventions, fixed for the whole crate:
//! - World frame is right-handed, z up, +y north.
//! - Azimuth `phi = atan2(x, y)` in (-pi, pi], elevation
//!   `theta = atan2(z, hypot(x, y))` in [-pi/2, pi/2].
//! - Equirectangular pixels: `u = (0.5 + phi/2pi) * W  (mod W)`,
//!   `v = (0.5 - theta/pi) * H`; pixel centers at half-integers.
//! - Perspective camera frame: +z forward, +x right, +y down. The fixed
//!   basis change [`cam_to_world_dir`] maps camera (+x,+y,+z) to world
//!   (+x,-z,+y), so a camera with identity rotation looks north, level.
//! - Panorama cameras always have identity rotation.

use std::f64::consts::{PI, TAU};

use crate::math::{Quat, Vec3};
use crate::raster::DepthImage;

/// Rigid 6D transform: `p_world = R * (B * p_cam) + t` with `B` the fixed
/// camera-to-world basis change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Quat,
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Self = Self {
        rotation: Quat::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Quat, translation: Vec3) -> Self {
        Self {
            rotation: rotation.normalized().canonicalized(),
            translation,
        }
    }

    /// Pose from compass yaw (azimuth of the view direction), pitch
    /// (elevation, positive up) and roll, all in radians.
    pub fn from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64, translation: Vec3) -> Self {
        Self::new(rotation_from_yaw_pitch_roll(yaw, pitch, roll), translation)
    }

    /// Concatenates a relative pose onto this one:
    /// `R = R_self * R_rel`, `t = R_self * t_rel + t_self`.
    pub fn compose(&self, relative: &Pose) -> Pose {
        Pose::new(
            self.rotation.mul(relative.rotation),
            self.rotation.rotate(relative.translation) + self.translation,
        )
    }

    /// World-frame view direction (camera +z axis).
    pub fn forward(&self) -> Vec3 {
        self.rotation.rotate(Vec3::new(0.0, 1.0, 0.0))
    }

    /// Azimuth of the view direction in radians.
    pub fn yaw(&self) -> f64 {
        let f = self.forward();
        f.x.atan2(f.y)
    }

    /// Elevation of the view direction in radians.
    pub fn pitch(&self) -> f64 {
        let f = self.forward();
        f.z.atan2((f.x * f.x + f.y * f.y).sqrt())
    }
}

/// Rotation part of [`Pose::from_yaw_pitch_roll`].
pub fn rotation_from_yaw_pitch_roll(yaw: f64, pitch: f64, roll: f64) -> Quat {
    let qz = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), -yaw);
    let qx = Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), pitch);
    let qy = Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), roll);
    qz.mul(qx).mul(qy).canonicalized()
}

/// Geodesic rotation difference in degrees.
pub fn rotation_error_deg(a: Quat, b: Quat) -> f64 {
    crate::math::rotation_angle(a, b).to_degrees()
}

/// Wrapped absolute yaw difference in degrees, in [0, 180].
pub fn yaw_error_deg(a: Quat, b: Quat) -> f64 {
    let pa = Pose::new(a, Vec3::ZERO);
    let pb = Pose::new(b, Vec3::ZERO);
    let d = (pa.yaw() - pb.yaw()).to_degrees().rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Pinhole camera with centered principal point and square pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    /// Horizontal field of view in radians.
    pub hfov: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(hfov: f64, width: u32, height: u32) -> Self {
        assert!(hfov > 0.0 && hfov < PI, "hfov out of range: {hfov}");
        assert!(width >= 2 && height >= 2, "image too small");
        Self {
            hfov,
            width,
            height,
        }
    }

    pub fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.hfov / 2.0).tan()
    }

    /// Same field of view at a different resolution.
    pub fn with_resolution(&self, width: u32, height: u32) -> Self {
        Self::new(self.hfov, width, height)
    }
}

/// Fixed basis change B: camera (+x,+y,+z) -> world (+x,-z,+y).
#[inline]
pub fn cam_to_world_dir(v: Vec3) -> Vec3 {
    Vec3::new(v.x, v.z, -v.y)
}

/// Inverse of [`cam_to_world_dir`].
#[inline]
pub fn world_to_cam_dir(v: Vec3) -> Vec3 {
    Vec3::new(v.x, -v.z, v.y)
}

/// Unit direction through a continuous equirectangular pixel coordinate.
#[inline]
pub fn equirect_pixel_to_dir(u: f64, v: f64, width: u32, height: u32) -> Vec3 {
    let phi = (u / width as f64 - 0.5) * TAU;
    let theta = (0.5 - v / height as f64) * PI;
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Vec3::new(sp * ct, cp * ct, st)
}

/// Continuous equirectangular pixel coordinate of a direction; `u` in
/// [0, W), `v` in [0, H]. At the poles `u` is W/2 by the atan2(0,0) := 0
/// convention.
#[inline]
pub fn dir_to_equirect_pixel(d: Vec3, width: u32, height: u32) -> (f64, f64) {
    let phi = d.x.atan2(d.y);
    let theta = d.z.atan2((d.x * d.x + d.y * d.y).sqrt());
    let u = ((0.5 + phi / TAU) * width as f64).rem_euclid(width as f64);
    let v = (0.5 - theta / PI) * height as f64;
    (u, v)
}

/// Unit camera-frame direction through a continuous perspective pixel
/// coordinate (+x right, +y down, +z forward).
#[inline]
pub fn persp_pixel_to_ray(k: &CameraIntrinsics, u: f64, v: f64) -> Vec3 {
    let f = k.focal();
    Vec3::new(
        (u - k.width as f64 / 2.0) / f,
        (v - k.height as f64 / 2.0) / f,
        1.0,
    )
    .normalized()
}

/// World-frame ray direction through a perspective pixel of a posed camera.
#[inline]
pub fn world_ray(pose: &Pose, k: &CameraIntrinsics, u: f64, v: f64) -> Vec3 {
    pose.rotation.rotate(cam_to_world_dir(persp_pixel_to_ray(k, u, v)))
}

/// A world point projected into a perspective camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub u: f64,
    pub v: f64,
    /// Euclidean distance from the camera center in meters.
    pub distance: f64,
}

impl ProjectedPoint {
    pub fn inside(&self, k: &CameraIntrinsics) -> bool {
        self.u >= 0.0 && self.u < k.width as f64 && self.v >= 0.0 && self.v < k.height as f64
    }
}

/// Projects a world point; `None` when the point is not strictly in front of
/// the camera. The returned pixel may lie outside the image.
pub fn project_point(pose: &Pose, k: &CameraIntrinsics, p_world: Vec3) -> Option<ProjectedPoint> {
    let rel = p_world - pose.translation;
    let cam = world_to_cam_dir(pose.rotation.rotate_inv(rel));
    if cam.z <= 0.0 {
        return None;
    }
    let f = k.focal();
    Some(ProjectedPoint {
        u: k.width as f64 / 2.0 + f * cam.x / cam.z,
        v: k.height as f64 / 2.0 + f * cam.y / cam.z,
        distance: rel.norm(),
    })
}

/// Binary visibility raster aligned to a reference panorama.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewportMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl ViewportMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[(y * self.width + x) as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Solid-angle-weighted fraction of set pixels: sum of cos(elevation)
    /// over set pixel centers divided by the sum over all pixels.
    pub fn solid_angle_fraction(&self) -> f64 {
        let mut set = 0.0;
        let mut total = 0.0;
        for y in 0..self.height {
            let theta = (0.5 - (y as f64 + 0.5) / self.height as f64) * PI;
            let w = theta.cos();
            for x in 0..self.width {
                total += w;
                if self.get(x, y) {
                    set += w;
                }
            }
        }
        set / total
    }
}

/// Computes which panorama pixels are visible to a perspective camera.
///
/// A pixel is set iff its 3D point (panorama position plus depth times pixel
/// direction) projects inside the perspective image with positive forward
/// depth and the projected distance agrees with the perspective depth at the
/// nearest pixel within `max(2 cm, 1%)`. No-hit panorama pixels stay unset.
pub fn compute_viewport_mask(
    pano_depth: &DepthImage,
    pano_pos: Vec3,
    persp_depth: &DepthImage,
    persp_pose: &Pose,
    k: &CameraIntrinsics,
) -> ViewportMask {
    assert_eq!(
        (persp_depth.width(), persp_depth.height()),
        (k.width, k.height),
        "perspective depth raster does not match intrinsics"
    );
    let (w, h) = (pano_depth.width(), pano_depth.height());
    let mut mask = ViewportMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let d = pano_depth.get(x, y);
            if d <= 0.0 {
                continue;
            }
            let dir = equirect_pixel_to_dir(x as f64 + 0.5, y as f64 + 0.5, w, h);
            let p = pano_pos + dir * d;
            let Some(proj) = project_point(persp_pose, k, p) else {
                continue;
            };
            if !proj.inside(k) {
                continue;
            }
            let px = (proj.u.floor() as u32).min(k.width - 1);
            let py = (proj.v.floor() as u32).min(k.height - 1);
            let dq = persp_depth.get(px, py);
            let tol = (0.01 * proj.distance).max(0.02);
            if (proj.distance - dq).abs() <= tol {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Axis-aligned box on the equirectangular grid whose azimuth interval may
/// wrap past the right edge. Continuous pixel units; the covered interval is
/// `[u_min, u_min + width)` taken mod W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularBBox {
    pub u_min: f64,
    pub v_min: f64,
    pub width: f64,
    pub height: f64,
}

impl CircularBBox {
    pub fn wraps(&self, pano_width: u32) -> bool {
        self.u_min + self.width > pano_width as f64
    }

    /// Whether a continuous pano coordinate falls inside the box.
    pub fn contains(&self, u: f64, v: f64, pano_width: u32) -> bool {
        if v < self.v_min || v >= self.v_min + self.height {
            return false;
        }
        let du = (u - self.u_min).rem_euclid(pano_width as f64);
        du < self.width
    }
}

/// Minimal circular bounding box around the set pixels of a mask.
///
/// Rows are the min/max set rows. The azimuth interval is the complement of
/// the largest cyclic run of empty columns (earliest such run when tied); if
/// every column is occupied the box spans the full width.
pub fn mask_to_circular_bbox(mask: &ViewportMask) -> Option<CircularBBox> {
    let (w, h) = (mask.width(), mask.height());
    let mut v_min = None;
    let mut v_max = 0;
    let mut occupied = vec![false; w as usize];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                occupied[x as usize] = true;
                if v_min.is_none() {
                    v_min = Some(y);
                }
                v_max = y;
            }
        }
    }
    let v_min = v_min?;
    let (u_min, width) = match largest_cyclic_gap(&occupied) {
        None => (0.0, w as f64),
        Some((gap_start, gap_len)) => {
            let start = (gap_start + gap_len) % w as usize;
            (start as f64, (w as usize - gap_len) as f64)
        }
    };
    Some(CircularBBox {
        u_min,
        v_min: v_min as f64,
        width,
        height: (v_max - v_min + 1) as f64,
    })
}

/// Largest cyclic run of `false` entries as (start, len); `None` if all true.
fn largest_cyclic_gap(occupied: &[bool]) -> Option<(usize, usize)> {
    let n = occupied.len();
    if occupied.iter().all(|&o| o) {
        return None;
    }
    if occupied.iter().all(|&o| !o) {
        return Some((0, n));
    }
    // Linear runs of empty columns.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if !occupied[i] {
            let start = i;
            while i < n && !occupied[i] {
                i += 1;
            }
            runs.push((start, i - start));
        } else {
            i += 1;
        }
    }
    // Merge a run touching the right edge into one starting at column 0.
    if runs.len() >= 2 {
        let first = runs[0];
        let last = *runs.last().unwrap();
        if first.0 == 0 && last.0 + last.1 == n {
            runs.pop();
            runs[0] = (last.0, last.1 + first.1);
        }
    }
    runs.into_iter().max_by_key(|&(start, len)| (len, std::cmp::Reverse(start)))
}

/// Overlap length of `[0, a_len)` and the cyclic interval starting at
/// `b_start` with length `b_len`, both mod `period`. Counts both components
/// when the intersection splits across the seam.
fn cyclic_overlap(a_len: f64, b_start: f64, b_len: f64, period: f64) -> f64 {
    let b0 = b_start.rem_euclid(period);
    let seg = |s: f64| -> f64 {
        let lo = s.max(0.0);
        let hi = (s + b_len).min(a_len);
        (hi - lo).max(0.0)
    };
    seg(b0) + seg(b0 - period)
}

/// Intersection-over-union of two circular boxes on a W x H panorama.
pub fn circular_iou(a: &CircularBBox, b: &CircularBBox, pano_width: u32, _pano_height: u32) -> f64 {
    let w = pano_width as f64;
    let u_olap = cyclic_overlap(a.width, b.u_min - a.u_min, b.width, w);
    let v_lo = a.v_min.max(b.v_min);
    let v_hi = (a.v_min + a.height).min(b.v_min + b.height);
    let v_olap = (v_hi - v_lo).max(0.0);
    let inter = u_olap * v_olap;
    let union = a.width * a.height + b.width * b.height - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Circular bounding box of the frustum of a co-located perspective camera
/// (pure rotation) on a panorama grid, in continuous pixel units.
///
/// The image border is sampled densely; a pole inside the frustum forces a
/// full-width box reaching the corresponding panorama edge.
pub fn frustum_circular_bbox(
    rotation: Quat,
    hfov: f64,
    aspect: f64,
    pano_width: u32,
    pano_height: u32,
) -> CircularBBox {
    let k = CameraIntrinsics::new(hfov, 256, (256.0 / aspect).round().max(2.0) as u32);
    let pose = Pose::new(rotation, Vec3::ZERO);
    let samples_per_edge = 4 * pano_width as usize;
    let mut us: Vec<f64> = Vec::with_capacity(4 * samples_per_edge);
    let mut v_lo = f64::INFINITY;
    let mut v_hi = f64::NEG_INFINITY;
    let (wf, hf) = (k.width as f64, k.height as f64);
    for i in 0..samples_per_edge {
        let t = i as f64 / (samples_per_edge - 1) as f64;
        for (u, v) in [
            (t * wf, 0.0),
            (t * wf, hf),
            (0.0, t * hf),
            (wf, t * hf),
        ] {
            let dir = world_ray(&pose, &k, u, v);
            let (pu, pv) = dir_to_equirect_pixel(dir, pano_width, pano_height);
            us.push(pu);
            v_lo = v_lo.min(pv);
            v_hi = v_hi.max(pv);
        }
    }
    let mut full_width = false;
    for (pole, top) in [(Vec3::new(0.0, 0.0, 1.0), true), (Vec3::new(0.0, 0.0, -1.0), false)] {
        let cam = world_to_cam_dir(rotation.rotate_inv(pole));
        if cam.z > 0.0 {
            let f = k.focal();
            let (u, v) = (wf / 2.0 + f * cam.x / cam.z, hf / 2.0 + f * cam.y / cam.z);
            if u >= 0.0 && u < wf && v >= 0.0 && v < hf {
                full_width = true;
                if top {
                    v_lo = 0.0;
                } else {
                    v_hi = pano_height as f64;
                }
            }
        }
    }
    if full_width {
        return CircularBBox {
            u_min: 0.0,
            v_min: v_lo,
            width: pano_width as f64,
            height: v_hi - v_lo,
        };
    }
    // Tightest cyclic azimuth interval containing every border sample.
    us.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let w = pano_width as f64;
    let mut best_gap = us[0] + w - us[us.len() - 1];
    let mut gap_end = us[0];
    for i in 1..us.len() {
        let gap = us[i] - us[i - 1];
        if gap > best_gap {
            best_gap = gap;
            gap_end = us[i];
        }
    }
    CircularBBox {
        u_min: gap_end,
        v_min: v_lo,
        width: w - best_gap,
        height: v_hi - v_lo,
    }
}
