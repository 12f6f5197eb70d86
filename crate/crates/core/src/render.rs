//! CPU ray casting of semantic, depth (ray distance), and normal images for
//! equirectangular panorama cameras and perspective cameras.
//!
//! Rendering is pure per pixel and parallelized across rows; output is
//! deterministic and independent of the thread count. Pixel centers sit at
//! half-integer coordinates, labels are point-sampled (no anti-aliasing),
//! and triangles are two-sided: stored normals are flipped at shade time so
//! they always face the camera.

use rayon::prelude::*;

use crate::bvh::Triangle;
use crate::camera::{equirect_pixel_to_dir, world_ray, CameraIntrinsics, Pose};
use crate::math::Vec3;
use crate::prims::PrimitiveSet;
use crate::raster::{DepthImage, NormalImage, SemClass, SemanticImage};

/// Nearest surface intersected by a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Euclidean distance along the unit ray direction, meters.
    pub distance: f64,
    pub class: SemClass,
    /// Geometric normal of the hit triangle (stored orientation).
    pub normal: Vec3,
    /// Index of the hit triangle (ties resolve to the lowest index).
    pub triangle: usize,
}

/// Nearest positive-distance intersection, or `None` for a miss.
/// `dir` must be unit length.
pub fn intersect_ray(prims: &PrimitiveSet, origin: Vec3, dir: Vec3) -> Option<Hit> {
    prims.bvh().intersect(prims.triangles(), origin, dir).map(|(distance, idx)| {
        let tri: &Triangle = &prims.triangles()[idx as usize];
        Hit {
            distance,
            class: tri.class,
            normal: tri.normal(),
            triangle: idx as usize,
        }
    })
}

/// The camera a [`RenderBundle`] was produced with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RenderCamera {
    /// Equirectangular camera; panoramas always render with identity
    /// rotation (horizontal, facing north).
    Panorama { position: Vec3 },
    Perspective { pose: Pose, intrinsics: CameraIntrinsics },
}

/// Semantic + depth + normal rasters of one rendering.
#[derive(Debug, Clone)]
pub struct RenderBundle {
    pub semantic: SemanticImage,
    pub depth: DepthImage,
    pub normal: NormalImage,
    pub camera: RenderCamera,
}

fn render_rows(
    prims: &PrimitiveSet,
    width: u32,
    height: u32,
    origin_and_dir: impl Fn(u32, u32) -> (Vec3, Vec3) + Sync,
) -> (SemanticImage, DepthImage, NormalImage) {
    let rows: Vec<Vec<(u8, f64, [f64; 3])>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| {
                    let (origin, dir) = origin_and_dir(x, y);
                    match intersect_ray(prims, origin, dir) {
                        None => (SemClass::Void.index(), 0.0, [0.0; 3]),
                        Some(hit) => {
                            let n = if hit.normal.dot(dir) > 0.0 {
                                -hit.normal
                            } else {
                                hit.normal
                            };
                            (hit.class.index(), hit.distance, n.to_array())
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut sem = SemanticImage::new(width, height);
    let mut depth = DepthImage::new(width, height);
    let mut normal = NormalImage::new(width, height);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (c, d, n)) in row.into_iter().enumerate() {
            sem.set(x as u32, y as u32, c);
            depth.set(x as u32, y as u32, d);
            normal.set(x as u32, y as u32, n);
        }
    }
    (sem, depth, normal)
}

/// Renders an equirectangular panorama at `position` with identity rotation.
pub fn render_panorama(prims: &PrimitiveSet, position: Vec3, width: u32, height: u32) -> RenderBundle {
    let (semantic, depth, normal) = render_rows(prims, width, height, |x, y| {
        (
            position,
            equirect_pixel_to_dir(x as f64 + 0.5, y as f64 + 0.5, width, height),
        )
    });
    RenderBundle {
        semantic,
        depth,
        normal,
        camera: RenderCamera::Panorama { position },
    }
}

/// Renders a perspective view for a posed pinhole camera.
pub fn render_perspective(prims: &PrimitiveSet, pose: &Pose, k: &CameraIntrinsics) -> RenderBundle {
    let (semantic, depth, normal) = render_rows(prims, k.width, k.height, |x, y| {
        (
            pose.translation,
            world_ray(pose, k, x as f64 + 0.5, y as f64 + 0.5),
        )
    });
    RenderBundle {
        semantic,
        depth,
        normal,
        camera: RenderCamera::Perspective {
            pose: *pose,
            intrinsics: *k,
        },
    }
}
