//! Affine-consistent augmentation.
//!
//! Image crop/scale/flip transforms move 2D boxes and the 3D-center
//! projection, and divide visual depths by the y-axis scale factor (from
//! d = f * h3d / h2d: enlarging the image grows h2d, so depth shrinks).
//! Attribute depths, dimensions, and the observation angle are inherent to
//! the object and stay untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::depth_labels::DepthGrid;
use crate::geometry::{ry_to_alpha, wrap_angle, GeomError};
use crate::kitti::ObjectLabel;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("bad scale range [{0}, {1}]")]
    BadRange(f64, f64),
    #[error("visual depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("object culled: visible fraction {0:.3} below threshold {1:.3}")]
    ObjectCulled(f64, f64),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Default crop/scale parameters; configurable at the call sites.
pub const DEFAULT_SCALE_RANGE: (f64, f64) = (0.6, 1.4);
pub const DEFAULT_SHIFT: f64 = 0.1;
pub const DEFAULT_MIN_VISIBLE: f64 = 0.3;

/// 2D affine pixel map with per-axis scale factors derived from the linear
/// part's column norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform2D {
    /// Row-major 2x3 matrix: (u, v) -> (m00 u + m01 v + m02, m10 u + m11 v + m12).
    pub m: [[f64; 3]; 2],
    pub flip: bool,
}

impl AffineTransform2D {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            flip: false,
        }
    }

    pub fn s_x(&self) -> f64 {
        (self.m[0][0] * self.m[0][0] + self.m[1][0] * self.m[1][0]).sqrt()
    }

    pub fn s_y(&self) -> f64 {
        (self.m[0][1] * self.m[0][1] + self.m[1][1] * self.m[1][1]).sqrt()
    }

    pub fn apply(&self, u: f64, v: f64) -> (f64, f64) {
        (
            self.m[0][0] * u + self.m[0][1] * v + self.m[0][2],
            self.m[1][0] * u + self.m[1][1] * v + self.m[1][2],
        )
    }

    /// `self` after `first`.
    pub fn compose_after(&self, first: &AffineTransform2D) -> Self {
        let a = &self.m;
        let b = &first.m;
        Self {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                    a[0][0] * b[0][2] + a[0][1] * b[1][2] + a[0][2],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                    a[1][0] * b[0][2] + a[1][1] * b[1][2] + a[1][2],
                ],
            ],
            flip: self.flip != first.flip,
        }
    }
}

/// Deterministic crop/scale draw: uniform scale in `scale_range` about the
/// image center, composed with a uniform center shift of up to
/// `shift_range` of each image extent.
pub fn make_crop_scale(
    seed: u64,
    width: u32,
    height: u32,
    scale_range: (f64, f64),
    shift_range: f64,
) -> Result<AffineTransform2D, AugmentError> {
    let (lo, hi) = scale_range;
    if lo <= 0.0 || lo > hi || shift_range < 0.0 {
        return Err(AugmentError::BadRange(lo, hi));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = if lo == hi { lo } else { rng.gen_range(lo..hi) };
    let (du, dv) = if shift_range == 0.0 {
        (0.0, 0.0)
    } else {
        (
            rng.gen_range(-shift_range..shift_range) * width as f64,
            rng.gen_range(-shift_range..shift_range) * height as f64,
        )
    };
    let (cu, cv) = (width as f64 / 2.0, height as f64 / 2.0);
    Ok(AffineTransform2D {
        m: [
            [s, 0.0, cu * (1.0 - s) + du],
            [0.0, s, cv * (1.0 - s) + dv],
        ],
        flip: false,
    })
}

pub fn transform_point(t: &AffineTransform2D, u: f64, v: f64) -> (f64, f64) {
    t.apply(u, v)
}

/// d' = d / s_y.
pub fn transform_visual_depth(d_vis: f64, t: &AffineTransform2D) -> Result<f64, AugmentError> {
    if d_vis <= 0.0 {
        return Err(AugmentError::NonPositiveDepth(d_vis));
    }
    Ok(d_vis / t.s_y())
}

/// One object of a frame bundle: KITTI label, its depth grid, and the
/// projection of the volumetric 3D center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub label: ObjectLabel,
    pub grid: DepthGrid,
    pub center_uv: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformMeta {
    pub m: [[f64; 3]; 2],
    pub s_x: f64,
    pub s_y: f64,
    pub flip: bool,
}

impl From<&AffineTransform2D> for TransformMeta {
    fn from(t: &AffineTransform2D) -> Self {
        Self {
            m: t.m,
            s_x: t.s_x(),
            s_y: t.s_y(),
            flip: t.flip,
        }
    }
}

/// Frame bundle moved between `gen-labels`, `augment`, and `fuse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformMeta>,
}

fn transform_box(t: &AffineTransform2D, b: [f64; 4]) -> [f64; 4] {
    let (u0, v0) = t.apply(b[0], b[1]);
    let (u1, v1) = t.apply(b[2], b[3]);
    [u0.min(u1), v0.min(v1), u0.max(u1), v0.max(v1)]
}

fn visible_fraction(b: [f64; 4], width: u32, height: u32) -> f64 {
    let area = (b[2] - b[0]) * (b[3] - b[1]);
    if area <= 0.0 {
        return 0.0;
    }
    let cw = (b[2].min(width as f64) - b[0].max(0.0)).max(0.0);
    let ch = (b[3].min(height as f64) - b[1].max(0.0)).max(0.0);
    cw * ch / area
}

/// Apply a crop/scale (optionally flip) transform to one object.
///
/// The visual grid divides by s_y; the attribute grid, dimensions, and
/// observation angle are copied bit-for-bit. Objects whose transformed box
/// keeps less than `min_visible` of its area inside the target image are
/// culled.
pub fn transform_object(
    obj: &ObjectRecord,
    t: &AffineTransform2D,
    width: u32,
    height: u32,
    min_visible: f64,
) -> Result<ObjectRecord, AugmentError> {
    let s_y = t.s_y();
    if (t.s_x() - s_y).abs() > 1e-9 {
        log::warn!(
            "anisotropic transform (s_x={}, s_y={}); visual depth keys on s_y",
            t.s_x(),
            s_y
        );
    }
    let box2d = transform_box(t, obj.label.box2d);
    let frac = visible_fraction(box2d, width, height);
    if frac < min_visible {
        return Err(AugmentError::ObjectCulled(frac, min_visible));
    }
    let (cu, cv) = t.apply(obj.center_uv[0], obj.center_uv[1]);
    let mut grid = obj.grid.clone();
    for (idx, ok) in grid.valid.iter().enumerate() {
        if *ok {
            grid.visual[idx] /= s_y;
        }
    }
    let mut label = obj.label.clone();
    label.box2d = box2d;
    if t.flip {
        let x = -label.location[0];
        label.location[0] = x;
        label.ry = wrap_angle(std::f64::consts::PI - label.ry);
        label.alpha = ry_to_alpha(label.ry, x, label.location[2])?;
        mirror_grid_columns(&mut grid);
    }
    Ok(ObjectRecord {
        label,
        grid,
        center_uv: [cu, cv],
    })
}

fn mirror_grid_columns(grid: &mut DepthGrid) {
    for i in 0..grid.m {
        let row = i * grid.n;
        grid.visual[row..row + grid.n].reverse();
        grid.attribute[row..row + grid.n].reverse();
        grid.valid[row..row + grid.n].reverse();
    }
}

/// Mirror a whole frame about the vertical image axis. Depths of both kinds
/// are unchanged; yaw maps to pi - ry and alpha is recomputed from the
/// mirrored pose.
pub fn horizontal_flip(frame: &FrameRecord) -> Result<FrameRecord, AugmentError> {
    let w = frame.width as f64;
    let mut objects = Vec::with_capacity(frame.objects.len());
    for obj in &frame.objects {
        let mut label = obj.label.clone();
        label.box2d = [
            w - obj.label.box2d[2],
            obj.label.box2d[1],
            w - obj.label.box2d[0],
            obj.label.box2d[3],
        ];
        let x = -label.location[0];
        label.location[0] = x;
        label.ry = wrap_angle(std::f64::consts::PI - label.ry);
        label.alpha = ry_to_alpha(label.ry, x, label.location[2])?;
        let mut grid = obj.grid.clone();
        mirror_grid_columns(&mut grid);
        objects.push(ObjectRecord {
            label,
            grid,
            center_uv: [w - obj.center_uv[0], obj.center_uv[1]],
        });
    }
    Ok(FrameRecord {
        frame_id: frame.frame_id.clone(),
        width: frame.width,
        height: frame.height,
        objects,
        transform: frame.transform.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_object() -> ObjectRecord {
        let label = ObjectLabel {
            category: "Car".into(),
            truncation: 0.0,
            occlusion: 0,
            alpha: ry_to_alpha(-0.7, 2.0, 20.0).unwrap(),
            box2d: [300.0, 150.0, 420.0, 240.0],
            dims: [1.5, 1.6, 3.9],
            location: [2.0, 1.5, 20.0],
            ry: -0.7,
            score: None,
        };
        let grid = DepthGrid {
            m: 2,
            n: 3,
            visual: vec![18.0, 19.0, 20.0, 18.5, 19.5, 20.5],
            attribute: vec![1.0, 0.5, -0.5, 0.9, 0.4, -0.6],
            valid: vec![true, true, true, true, true, false],
        };
        ObjectRecord {
            label,
            grid,
            center_uv: [360.0, 195.0],
        }
    }

    #[test]
    fn degenerate_range_is_identity() {
        let t = make_crop_scale(3, 1000, 400, (1.0, 1.0), 0.0).unwrap();
        assert_eq!(t, AffineTransform2D::identity());
    }

    #[test]
    fn same_seed_same_transform() {
        let a = make_crop_scale(42, 1000, 400, (0.6, 1.4), 0.1).unwrap();
        let b = make_crop_scale(42, 1000, 400, (0.6, 1.4), 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn derived_scale_consistent() {
        let t = AffineTransform2D {
            m: [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            flip: false,
        };
        assert_eq!(t.s_y(), 2.0);
        assert_eq!(t.s_x(), 2.0);
    }

    #[test]
    fn bad_range_rejected() {
        assert!(make_crop_scale(0, 10, 10, (0.0, 1.0), 0.0).is_err());
        assert!(make_crop_scale(0, 10, 10, (1.5, 1.0), 0.0).is_err());
    }

    #[test]
    fn transform_point_cases() {
        let id = AffineTransform2D::identity();
        assert_eq!(transform_point(&id, 7.0, 9.0), (7.0, 9.0));
        let scale2 = AffineTransform2D {
            m: [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            flip: false,
        };
        assert_eq!(transform_point(&scale2, 100.0, 50.0), (200.0, 100.0));
        let flip_w = AffineTransform2D {
            m: [[-1.0, 0.0, 640.0], [0.0, 1.0, 0.0]],
            flip: true,
        };
        assert_eq!(transform_point(&flip_w, 100.0, 50.0), (540.0, 50.0));
    }

    #[test]
    fn visual_depth_scaling() {
        let scale2 = AffineTransform2D {
            m: [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            flip: false,
        };
        assert_eq!(transform_visual_depth(20.0, &scale2).unwrap(), 10.0);
        assert_eq!(
            transform_visual_depth(20.0, &AffineTransform2D::identity()).unwrap(),
            20.0
        );
        assert!(transform_visual_depth(-1.0, &scale2).is_err());
    }

    #[test]
    fn visual_depth_multiplicative() {
        let s2 = AffineTransform2D {
            m: [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            flip: false,
        };
        let s3 = AffineTransform2D {
            m: [[3.0, 0.0, 0.0], [0.0, 3.0, 0.0]],
            flip: false,
        };
        let both = s3.compose_after(&s2);
        assert!((transform_visual_depth(18.0, &both).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_transform_is_noop() {
        let obj = sample_object();
        let out = transform_object(&obj, &AffineTransform2D::identity(), 1000, 400, 0.3).unwrap();
        assert_eq!(out, obj);
    }

    #[test]
    fn attribute_dims_alpha_unchanged() {
        let obj = sample_object();
        let t = make_crop_scale(9, 1000, 400, (0.6, 1.4), 0.1).unwrap();
        let out = transform_object(&obj, &t, 1000, 400, 0.0).unwrap();
        assert_eq!(out.grid.attribute, obj.grid.attribute);
        assert_eq!(out.label.dims, obj.label.dims);
        assert_eq!(out.label.alpha, obj.label.alpha);
    }

    #[test]
    fn visual_scaled_by_sy() {
        let obj = sample_object();
        let t = AffineTransform2D {
            m: [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            flip: false,
        };
        let out = transform_object(&obj, &t, 2000, 800, 0.0).unwrap();
        for (idx, &ok) in obj.grid.valid.iter().enumerate() {
            if ok {
                assert!((out.grid.visual[idx] * 2.0 - obj.grid.visual[idx]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn culling_below_threshold() {
        let obj = sample_object();
        // shift the object far off-image
        let t = AffineTransform2D {
            m: [[1.0, 0.0, 5000.0], [0.0, 1.0, 0.0]],
            flip: false,
        };
        assert!(matches!(
            transform_object(&obj, &t, 1000, 400, 0.3),
            Err(AugmentError::ObjectCulled(..))
        ));
    }

    #[test]
    fn composition_law() {
        let obj = sample_object();
        let t1 = make_crop_scale(5, 1000, 400, (0.8, 1.2), 0.05).unwrap();
        let t2 = make_crop_scale(6, 1000, 400, (0.8, 1.2), 0.05).unwrap();
        let seq = transform_object(
            &transform_object(&obj, &t1, 1000, 400, 0.0).unwrap(),
            &t2,
            1000,
            400,
            0.0,
        )
        .unwrap();
        let combined = transform_object(&obj, &t2.compose_after(&t1), 1000, 400, 0.0).unwrap();
        assert_eq!(seq.label.dims, combined.label.dims);
        assert_eq!(seq.grid.attribute, combined.grid.attribute);
        for i in 0..seq.grid.visual.len() {
            assert!((seq.grid.visual[i] - combined.grid.visual[i]).abs() < 1e-9);
        }
        for i in 0..4 {
            assert!((seq.label.box2d[i] - combined.label.box2d[i]).abs() < 1e-9);
        }
    }

    fn sample_frame() -> FrameRecord {
        FrameRecord {
            frame_id: "000000".into(),
            width: 1000,
            height: 400,
            objects: vec![sample_object()],
            transform: None,
        }
    }

    #[test]
    fn flip_is_involution() {
        let frame = sample_frame();
        let back = horizontal_flip(&horizontal_flip(&frame).unwrap()).unwrap();
        let (a, b) = (&frame.objects[0], &back.objects[0]);
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.label.box2d, b.label.box2d);
        assert_eq!(a.label.location, b.label.location);
        assert!((a.label.ry - b.label.ry).abs() < 1e-12);
        assert!((a.label.alpha - b.label.alpha).abs() < 1e-12);
        assert_eq!(a.center_uv, b.center_uv);
    }

    #[test]
    fn flip_fixed_point_ry() {
        let mut frame = sample_frame();
        frame.objects[0].label.location[0] = 0.0;
        frame.objects[0].label.ry = std::f64::consts::FRAC_PI_2;
        let flipped = horizontal_flip(&frame).unwrap();
        assert!((flipped.objects[0].label.ry - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn flip_preserves_depth_values() {
        let frame = sample_frame();
        let flipped = horizontal_flip(&frame).unwrap();
        let mut g = flipped.objects[0].grid.clone();
        mirror_grid_columns(&mut g);
        assert_eq!(g.visual, frame.objects[0].grid.visual);
        assert_eq!(g.attribute, frame.objects[0].grid.attribute);
    }
}
