//! Scene-independent 6D indoor camera localization against semantic layout
//! panoramas.
//!
//! A minimal 3D building model (rooms as vertical prisms plus door, window,
//! and opening annotations) is ray-cast into equirectangular semantic
//! reference panoramas on a floor-plan grid. A perspective semantic query is
//! matched against each reference by exhaustive rotation-hypothesis scoring,
//! references are ranked by the match score, and the full 6D pose is
//! recovered by derivative-free render-and-compare refinement from the best
//! candidates.

pub mod bvh;
pub mod camera;
pub mod eval;
pub mod matcher;
pub mod math;
pub mod pipeline;
pub mod prims;
pub mod raster;
pub mod refine;
pub mod render;
pub mod scene;

pub use camera::{
    circular_iou, compute_viewport_mask, dir_to_equirect_pixel, equirect_pixel_to_dir,
    frustum_circular_bbox, mask_to_circular_bbox, persp_pixel_to_ray, project_point,
    CameraIntrinsics, CircularBBox, Pose, ViewportMask,
};
pub use math::{quat_exp, quat_log, Quat, Vec3};
pub use prims::{scene_to_primitives, PrimitiveSet};
pub use raster::{DepthImage, NormalImage, SemClass, SemanticImage};
pub use render::{intersect_ray, render_panorama, render_perspective, RenderBundle};
pub use scene::{
    generate_synthetic_scene, parse_scene, point_room_lookup, serialize_scene, validate_scene,
    GenParams, Room, Scene, WallItem, WallItemClass,
};

/// Configures the global thread pool; 0 keeps the default (one thread per
/// core). Call once, before any parallel work.
pub fn init_threads(threads: usize) -> Result<(), rayon::ThreadPoolBuildError> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
}
