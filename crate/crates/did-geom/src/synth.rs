//! Deterministic synthetic scenes: ground-truth boxes placed BEV-disjoint
//! and fully in-image, camera-frame surface clouds sampled on the
//! camera-facing box faces, and noise-injected instance patches for
//! verifying the fusion path.
//!
//! The scene yaw is the heading measured from the camera z-axis: yaw 0
//! points the object's length axis at the camera, so the visible front face
//! sits at `center_z - l/2`. KITTI's `ry` is derived as `wrap(yaw + pi/2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth_labels::{build_depth_grid, build_sparse_depth, complete_depth, DepthGrid};
use crate::fusion::{DepthBelief, InstancePatch, U_MIN};
use crate::geometry::{bev_intersection_area, backproject, project_point, ry_to_alpha, wrap_angle, Box3D, Point3D};
use crate::kitti::{CameraCalib, ObjectLabel, PointCloud};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("could not place object {0} after {1} attempts")]
    PlacementFailure(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    pub num_objects: usize,
    /// z range of the volumetric center, meters.
    pub depth_range: (f64, f64),
    pub height_range: (f64, f64),
    pub width_range: (f64, f64),
    pub length_range: (f64, f64),
    /// Heading from the camera z-axis; 0 faces the camera.
    pub yaw_range: (f64, f64),
    pub image_width: u32,
    pub image_height: u32,
    pub calib: CameraCalib,
    /// Surface sample density, points per square meter.
    pub point_density: f64,
    /// Camera height above the ground plane the boxes sit on.
    pub ground_y: f64,
    pub category: String,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_objects: 5,
            depth_range: (8.0, 40.0),
            height_range: (1.4, 1.7),
            width_range: (1.5, 1.8),
            length_range: (3.6, 4.2),
            yaw_range: (-std::f64::consts::PI, std::f64::consts::PI),
            image_width: 1242,
            image_height: 375,
            calib: CameraCalib::pinhole(721.5377, 621.0, 187.5),
            point_density: 400.0,
            ground_y: 1.65,
            category: "Car".into(),
        }
    }
}

impl SceneConfig {
    /// Small-image config used by fast verification runs.
    pub fn compact(seed: u64, num_objects: usize) -> Self {
        Self {
            seed,
            num_objects,
            image_width: 384,
            image_height: 128,
            calib: CameraCalib::pinhole(200.0, 192.0, 64.0),
            depth_range: (10.0, 30.0),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub calib: CameraCalib,
    pub width: u32,
    pub height: u32,
    pub labels: Vec<ObjectLabel>,
    pub cloud: PointCloud,
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

const PLACEMENT_ATTEMPTS: usize = 1000;

fn corners_in_image(b: &Box3D, calib: &CameraCalib, w: u32, h: u32) -> bool {
    let Ok(corners) = b.corners_3d() else {
        return false;
    };
    corners.iter().all(|c| {
        project_point(calib, *c).is_ok_and(|(u, v, _)| {
            u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64
        })
    })
}

fn box2d_of(b: &Box3D, calib: &CameraCalib) -> [f64; 4] {
    let corners = b.corners_3d().expect("validated box");
    let mut bx = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for c in corners {
        let (u, v, _) = project_point(calib, c).expect("z > 0 by placement");
        bx[0] = bx[0].min(u);
        bx[1] = bx[1].min(v);
        bx[2] = bx[2].max(u);
        bx[3] = bx[3].max(v);
    }
    bx
}

// Uniform surface samples on every face whose outward normal points toward
// the camera (negative z component).
fn sample_surface(b: &Box3D, density: f64, rng: &mut ChaCha8Rng) -> Vec<[f32; 4]> {
    let (s, c) = b.ry.sin_cos();
    let rot = |p: [f64; 3]| -> [f64; 3] {
        [p[0] * c + p[2] * s, p[1], -p[0] * s + p[2] * c]
    };
    let center = b.center();
    let (h2, w2, l2) = (b.h / 2.0, b.w / 2.0, b.l / 2.0);
    // faces: (local normal, local in-plane axes with half-extents)
    let faces: [([f64; 3], [f64; 3], f64, [f64; 3], f64); 4] = [
        ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], h2, [0.0, 0.0, 1.0], w2),
        ([-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], h2, [0.0, 0.0, 1.0], w2),
        ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], l2, [0.0, 1.0, 0.0], h2),
        ([0.0, 0.0, -1.0], [1.0, 0.0, 0.0], l2, [0.0, 1.0, 0.0], h2),
    ];
    let mut out = Vec::new();
    for (normal, axis_a, ext_a, axis_b, ext_b) in faces {
        let n_world = rot(normal);
        // strictly camera-facing; edge-on faces contribute no visible area
        if n_world[2] >= -1e-9 {
            continue;
        }
        let offset = match normal {
            [x, _, _] if x != 0.0 => [x * l2, 0.0, 0.0],
            [_, _, z] => [0.0, 0.0, z * w2],
        };
        let area = 4.0 * ext_a * ext_b;
        let count = (density * area).ceil() as usize;
        for _ in 0..count {
            let a = rng.gen_range(-ext_a..ext_a);
            let bb = rng.gen_range(-ext_b..ext_b);
            let local = [
                offset[0] + axis_a[0] * a + axis_b[0] * bb,
                offset[1] + axis_a[1] * a + axis_b[1] * bb,
                offset[2] + axis_a[2] * a + axis_b[2] * bb,
            ];
            let world = rot(local);
            out.push([
                (center.x + world[0]) as f32,
                (center.y + world[1]) as f32,
                (center.z + world[2]) as f32,
                1.0,
            ]);
        }
    }
    out
}

/// Deterministic scene generation from the config seed.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut boxes: Vec<Box3D> = Vec::new();
    let mut labels = Vec::new();
    for obj_idx in 0..cfg.num_objects {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let h = uniform(&mut rng, cfg.height_range);
            let w = uniform(&mut rng, cfg.width_range);
            let l = uniform(&mut rng, cfg.length_range);
            let yaw = uniform(&mut rng, cfg.yaw_range);
            let ry = wrap_angle(yaw + std::f64::consts::FRAC_PI_2);
            let z = uniform(&mut rng, cfg.depth_range);
            // pick the center's image column, then solve for x at that depth
            let margin = cfg.image_width as f64 * 0.15;
            let u = rng.gen_range(margin..cfg.image_width as f64 - margin);
            let center_v_guess = cfg.image_height as f64 / 2.0;
            let center = backproject(&cfg.calib, u, center_v_guess, z).expect("z > 0");
            let bottom_y = cfg.ground_y;
            let b = Box3D {
                bottom_center: Point3D::new(center.x, bottom_y, z),
                h,
                w,
                l,
                ry,
            };
            if !corners_in_image(&b, &cfg.calib, cfg.image_width, cfg.image_height) {
                continue;
            }
            let disjoint = boxes
                .iter()
                .all(|other| bev_intersection_area(&b, other).unwrap_or(f64::MAX) == 0.0);
            if !disjoint {
                continue;
            }
            let box2d = box2d_of(&b, &cfg.calib);
            labels.push(ObjectLabel {
                category: cfg.category.clone(),
                truncation: 0.0,
                occlusion: 0,
                alpha: ry_to_alpha(ry, b.bottom_center.x, z).expect("z > 0"),
                box2d,
                dims: [h, w, l],
                location: [b.bottom_center.x, bottom_y, z],
                ry,
                score: None,
            });
            boxes.push(b);
            placed = true;
            break;
        }
        if !placed {
            return Err(SynthError::PlacementFailure(obj_idx, PLACEMENT_ATTEMPTS));
        }
    }
    let mut points = Vec::new();
    for b in &boxes {
        points.extend(sample_surface(b, cfg.point_density, &mut rng));
    }
    Ok(Scene {
        calib: cfg.calib.clone(),
        width: cfg.image_width,
        height: cfg.image_height,
        labels,
        cloud: PointCloud { points },
    })
}

/// Ground truth copied with score 1.0.
pub fn perfect_detections(scene: &Scene) -> Vec<ObjectLabel> {
    scene
        .labels
        .iter()
        .map(|l| {
            let mut d = l.clone();
            d.score = Some(1.0);
            d
        })
        .collect()
}

/// Run the label-generation path on a scene: sparse projection, completion,
/// then one m x n grid per object against its volumetric-center depth.
pub fn scene_depth_grids(scene: &Scene, m: usize, n: usize, r_max: f64) -> Vec<DepthGrid> {
    let sparse = build_sparse_depth(&scene.cloud, &scene.calib, scene.width, scene.height);
    let dense = complete_depth(&sparse, r_max);
    scene
        .labels
        .iter()
        .map(|l| {
            let instance_depth = Box3D::from_label(l).center().z;
            build_depth_grid(&dense, l.box2d, instance_depth, m, n)
                .expect("in-image boxes have positive area")
        })
        .collect()
}

fn laplace_sample(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let p: f64 = rng.gen::<f64>() - 0.5;
    let sign = if p >= 0.0 { 1.0 } else { -1.0 };
    -scale * sign * (1.0 - 2.0 * p.abs()).ln()
}

/// Oracle-calibrated noisy patches for a scene, using default 7x7 grids.
pub fn noisy_patches(scene: &Scene, noise: (f64, f64), seed: u64) -> Vec<InstancePatch> {
    let grids = scene_depth_grids(scene, 7, 7, 50.0);
    noisy_patches_from_grids(&grids, noise, seed)
}

/// Same noise model over precomputed grids; repeated trials reuse the grids.
pub fn noisy_patches_from_grids(
    grids: &[DepthGrid],
    noise: (f64, f64),
    seed: u64,
) -> Vec<InstancePatch> {
    let (b_vis, b_att) = noise;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    grids
        .iter()
        .map(|g| {
            let cells = g.visual.len();
            let mut vis = Vec::with_capacity(cells);
            let mut att = Vec::with_capacity(cells);
            for i in 0..cells {
                vis.push(DepthBelief {
                    d: g.visual[i] + laplace_sample(&mut rng, b_vis),
                    u: b_vis.max(U_MIN),
                });
                att.push(DepthBelief {
                    d: g.attribute[i] + laplace_sample(&mut rng, b_att),
                    u: b_att.max(U_MIN),
                });
            }
            InstancePatch {
                m: g.m,
                n: g.n,
                vis,
                att,
                valid: g.valid.clone(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::aggregate_depth;
    use crate::geometry::iou_bev;

    #[test]
    fn deterministic_from_seed() {
        let cfg = SceneConfig::compact(7, 4);
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_scene() {
        let cfg = SceneConfig::compact(1, 0);
        let s = generate_scene(&cfg).unwrap();
        assert!(s.labels.is_empty());
        assert!(s.cloud.points.is_empty());
    }

    #[test]
    fn front_face_plane_at_half_length() {
        let mut cfg = SceneConfig::compact(3, 1);
        cfg.yaw_range = (0.0, 0.0);
        let s = generate_scene(&cfg).unwrap();
        let l = s.labels[0].dims[2];
        let cz = s.labels[0].location[2];
        for p in &s.cloud.points {
            assert!((p[2] as f64 - (cz - l / 2.0)).abs() < 1e-5);
        }
    }

    #[test]
    fn objects_bev_disjoint_and_in_image() {
        let cfg = SceneConfig::compact(11, 5);
        let s = generate_scene(&cfg).unwrap();
        assert_eq!(s.labels.len(), 5);
        for (i, a) in s.labels.iter().enumerate() {
            let ba = Box3D::from_label(a);
            let (u, v, _) =
                project_point(&s.calib, ba.center()).unwrap();
            assert!(u >= 0.0 && u < s.width as f64 && v >= 0.0 && v < s.height as f64);
            for b in &s.labels[i + 1..] {
                assert_eq!(iou_bev(&ba, &Box3D::from_label(b)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn perfect_detections_copy_gt() {
        let s = generate_scene(&SceneConfig::compact(5, 3)).unwrap();
        let dets = perfect_detections(&s);
        assert_eq!(dets.len(), 3);
        for (d, g) in dets.iter().zip(&s.labels) {
            assert_eq!(d.score, Some(1.0));
            assert_eq!(d.location, g.location);
        }
        let empty = generate_scene(&SceneConfig::compact(5, 0)).unwrap();
        assert!(perfect_detections(&empty).is_empty());
    }

    #[test]
    fn grids_reconstruct_instance_depth() {
        let s = generate_scene(&SceneConfig::compact(13, 3)).unwrap();
        let grids = scene_depth_grids(&s, 7, 7, 50.0);
        for (g, l) in grids.iter().zip(&s.labels) {
            let d_ins = Box3D::from_label(l).center().z;
            for i in 0..g.visual.len() {
                if g.valid[i] {
                    assert!((g.visual[i] + g.attribute[i] - d_ins).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_noise_recovers_instance_depth() {
        let s = generate_scene(&SceneConfig::compact(17, 2)).unwrap();
        let grids = scene_depth_grids(&s, 7, 7, 50.0);
        let patches = noisy_patches_from_grids(&grids, (0.0, 0.0), 99);
        for (p, l) in patches.iter().zip(&s.labels) {
            let d_ins = Box3D::from_label(l).center().z;
            assert!((aggregate_depth(p).unwrap() - d_ins).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_scales_passed_through() {
        let s = generate_scene(&SceneConfig::compact(19, 1)).unwrap();
        let grids = scene_depth_grids(&s, 7, 7, 50.0);
        let patches = noisy_patches_from_grids(&grids, (0.5, 0.3), 1);
        for b in &patches[0].vis {
            assert_eq!(b.u, 0.5);
        }
        for b in &patches[0].att {
            assert_eq!(b.u, 0.3);
        }
    }

    #[test]
    fn laplace_sample_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = 0.7;
        let n = 200_000;
        let mean_abs: f64 = (0..n).map(|_| laplace_sample(&mut rng, b).abs()).sum::<f64>() / n as f64;
        // E|X| = b for Laplace(0, b)
        assert!((mean_abs - b).abs() < 0.01);
    }
}
