//! Camera projection, 3D box geometry, multi-bin orientation codec, and
//! rotated IoU in BEV and 3D.
//!
//! Conventions: camera frame has x right, y down, z forward. Yaw rotates
//! about the camera y-axis; `ry = 0` puts the object's length axis parallel
//! to camera x. All angles are normalized to `[-pi, pi)` with the tie at pi
//! mapping to `-pi`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::kitti::{CameraCalib, ObjectLabel};

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("point behind camera: z = {0}")]
    BehindCamera(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("multi-bin count must be >= 2, got {0}")]
    InvalidBinCount(usize),
    #[error("degenerate box: dims (h={0}, w={1}, l={2}) must be positive")]
    DegenerateBox(f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Normalize an angle to `[-pi, pi)`; exactly `pi` maps to `-pi`.
pub fn wrap_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// u = (f_u x + c_u z + t_x) / z, v = (f_v y + c_v z + t_y) / z.
pub fn project_point(calib: &CameraCalib, p: Point3D) -> Result<(f64, f64, f64), GeomError> {
    if p.z <= 0.0 {
        return Err(GeomError::BehindCamera(p.z));
    }
    let u = (calib.fu * p.x + calib.cu * p.z + calib.tx) / p.z;
    let v = (calib.fv * p.y + calib.cv * p.z + calib.ty) / p.z;
    Ok((u, v, p.z))
}

/// Exact inverse of [`project_point`] at the given depth.
pub fn backproject(calib: &CameraCalib, u: f64, v: f64, depth: f64) -> Result<Point3D, GeomError> {
    if depth <= 0.0 {
        return Err(GeomError::NonPositiveDepth(depth));
    }
    Ok(Point3D {
        x: (u * depth - calib.cu * depth - calib.tx) / calib.fu,
        y: (v * depth - calib.cv * depth - calib.ty) / calib.fv,
        z: depth,
    })
}

/// Multi-bin encoding of a yaw angle: bin centers sit at `2*pi*i/k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiBinAngle {
    pub bin_index: usize,
    pub residual: f64,
    pub k: usize,
}

pub fn encode_orientation(theta: f64, k: usize) -> Result<MultiBinAngle, GeomError> {
    if k < 2 {
        return Err(GeomError::InvalidBinCount(k));
    }
    let step = 2.0 * PI / k as f64;
    let t = theta.rem_euclid(2.0 * PI);
    let lo = (t / step).floor() as i64;
    // candidate bins below and above; exact tie goes to the lower index
    let mut best: Option<(usize, f64)> = None;
    for cand in [lo, lo + 1] {
        let idx = cand.rem_euclid(k as i64) as usize;
        let residual = wrap_angle(theta - step * cand as f64);
        let better = match best {
            None => true,
            Some((bi, br)) => {
                residual.abs() < br.abs() || (residual.abs() == br.abs() && idx < bi)
            }
        };
        if better {
            best = Some((idx, residual));
        }
    }
    let (bin_index, residual) = best.unwrap();
    Ok(MultiBinAngle {
        bin_index,
        residual,
        k,
    })
}

pub fn decode_orientation(m: &MultiBinAngle) -> Result<f64, GeomError> {
    if m.k < 2 {
        return Err(GeomError::InvalidBinCount(m.k));
    }
    let center = 2.0 * PI * m.bin_index as f64 / m.k as f64;
    Ok(wrap_angle(center + m.residual))
}

/// Observation angle: alpha = wrap(ry - atan2(x, z)).
pub fn ry_to_alpha(ry: f64, x: f64, z: f64) -> Result<f64, GeomError> {
    if z <= 0.0 {
        return Err(GeomError::NonPositiveDepth(z));
    }
    Ok(wrap_angle(ry - x.atan2(z)))
}

pub fn alpha_to_ry(alpha: f64, x: f64, z: f64) -> Result<f64, GeomError> {
    if z <= 0.0 {
        return Err(GeomError::NonPositiveDepth(z));
    }
    Ok(wrap_angle(alpha + x.atan2(z)))
}

/// 3D bounding box in the camera frame. `bottom_center` follows the KITTI
/// label convention; the volumetric center sits `h/2` above it (y down, so
/// `y_center = y_bottom - h/2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub bottom_center: Point3D,
    pub h: f64,
    pub w: f64,
    pub l: f64,
    pub ry: f64,
}

impl Box3D {
    pub fn from_label(label: &ObjectLabel) -> Self {
        Self {
            bottom_center: Point3D::new(label.location[0], label.location[1], label.location[2]),
            h: label.dims[0],
            w: label.dims[1],
            l: label.dims[2],
            ry: label.ry,
        }
    }

    /// Volumetric center; the instance-depth target is its z.
    pub fn center(&self) -> Point3D {
        Point3D::new(
            self.bottom_center.x,
            self.bottom_center.y - self.h / 2.0,
            self.bottom_center.z,
        )
    }

    fn check(&self) -> Result<(), GeomError> {
        if self.h <= 0.0 || self.w <= 0.0 || self.l <= 0.0 {
            return Err(GeomError::DegenerateBox(self.h, self.w, self.l));
        }
        Ok(())
    }

    /// The 8 corners: yaw rotation of the axis-aligned box (l along x, w
    /// along z, h along y before rotation), translated to `bottom_center`.
    /// Corners 0..4 are the bottom face, 4..8 the top face.
    pub fn corners_3d(&self) -> Result<[Point3D; 8], GeomError> {
        self.check()?;
        let (s, c) = self.ry.sin_cos();
        let (l2, w2) = (self.l / 2.0, self.w / 2.0);
        let footprint = [(l2, w2), (-l2, w2), (-l2, -w2), (l2, -w2)];
        let mut out = [Point3D::new(0.0, 0.0, 0.0); 8];
        for (i, (fx, fz)) in footprint.iter().enumerate() {
            let x = self.bottom_center.x + fx * c + fz * s;
            let z = self.bottom_center.z - fx * s + fz * c;
            out[i] = Point3D::new(x, self.bottom_center.y, z);
            out[i + 4] = Point3D::new(x, self.bottom_center.y - self.h, z);
        }
        Ok(out)
    }

    pub fn bev_polygon(&self) -> Result<BevPolygon, GeomError> {
        let corners = self.corners_3d()?;
        Ok(BevPolygon {
            vertices: [
                (corners[0].x, corners[0].z),
                (corners[1].x, corners[1].z),
                (corners[2].x, corners[2].z),
                (corners[3].x, corners[3].z),
            ],
        })
    }
}

/// Convex quad footprint on the (x, z) plane, counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevPolygon {
    pub vertices: [(f64, f64); 4],
}

impl BevPolygon {
    pub fn area(&self) -> f64 {
        shoelace(&self.vertices).abs()
    }
}

fn shoelace(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, z0) = poly[i];
        let (x1, z1) = poly[(i + 1) % n];
        acc += x0 * z1 - x1 * z0;
    }
    acc / 2.0
}

/// Sutherland-Hodgman clip of `subject` against convex CCW `clip`.
pub fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut poly: Vec<(f64, f64)> = subject.to_vec();
    for i in 0..clip.len() {
        if poly.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let inside = |p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0;
        let intersect = |p: (f64, f64), q: (f64, f64)| {
            // line a-b with segment p-q
            let d1 = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            let d2 = (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0);
            let t = d1 / (d1 - d2);
            (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
        };
        let mut out = Vec::with_capacity(poly.len() + 1);
        let mut prev = *poly.last().unwrap();
        let mut prev_in = inside(prev);
        for &p in &poly {
            let p_in = inside(p);
            if p_in != prev_in {
                out.push(intersect(prev, p));
            }
            if p_in {
                out.push(p);
            }
            prev = p;
            prev_in = p_in;
        }
        poly = out;
    }
    poly
}

/// Footprint intersection area of two boxes on the (x, z) plane.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> Result<f64, GeomError> {
    let pa = a.bev_polygon()?;
    let pb = b.bev_polygon()?;
    let inter = clip_convex(&pa.vertices, &pb.vertices);
    if inter.len() < 3 {
        return Ok(0.0);
    }
    Ok(shoelace(&inter).abs())
}

pub fn iou_bev(a: &Box3D, b: &Box3D) -> Result<f64, GeomError> {
    let inter = bev_intersection_area(a, b)?;
    let union = a.bev_polygon()?.area() + b.bev_polygon()?.area() - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

pub fn iou_3d(a: &Box3D, b: &Box3D) -> Result<f64, GeomError> {
    let inter_area = bev_intersection_area(a, b)?;
    // y down: box spans [y_bottom - h, y_bottom]
    let y_lo = (a.bottom_center.y - a.h).max(b.bottom_center.y - b.h);
    let y_hi = a.bottom_center.y.min(b.bottom_center.y);
    let y_overlap = (y_hi - y_lo).max(0.0);
    let inter = inter_area * y_overlap;
    let vol_a = a.bev_polygon()?.area() * a.h;
    let vol_b = b.bev_polygon()?.area() * b.h;
    let union = vol_a + vol_b - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn calib() -> CameraCalib {
        CameraCalib::pinhole(1000.0, 500.0, 200.0)
    }

    #[test]
    fn project_principal_ray() {
        let (u, v, d) = project_point(&calib(), Point3D::new(0.0, 0.0, 10.0)).unwrap();
        assert_eq!((u, v, d), (500.0, 200.0, 10.0));
    }

    #[test]
    fn project_off_axis() {
        let (u, v, _) = project_point(&calib(), Point3D::new(1.0, 0.0, 10.0)).unwrap();
        assert_eq!((u, v), (600.0, 200.0));
    }

    #[test]
    fn project_behind_camera() {
        assert!(matches!(
            project_point(&calib(), Point3D::new(0.0, 0.0, -1.0)),
            Err(GeomError::BehindCamera(_))
        ));
    }

    #[test]
    fn backproject_principal_ray() {
        let p = backproject(&calib(), 500.0, 200.0, 7.0).unwrap();
        assert_eq!(p, Point3D::new(0.0, 0.0, 7.0));
    }

    #[test]
    fn backproject_zero_depth() {
        assert!(matches!(
            backproject(&calib(), 0.0, 0.0, 0.0),
            Err(GeomError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn project_backproject_inverse() {
        let c = calib();
        for p in [
            Point3D::new(1.3, -0.7, 12.0),
            Point3D::new(-4.0, 2.0, 55.5),
            Point3D::new(0.0, 0.0, 0.1),
        ] {
            let (u, v, d) = project_point(&c, p).unwrap();
            let q = backproject(&c, u, v, d).unwrap();
            assert!((q.x - p.x).abs() <= 1e-9 * p.x.abs().max(1.0));
            assert!((q.y - p.y).abs() <= 1e-9 * p.y.abs().max(1.0));
            assert_eq!(q.z, p.z);
        }
    }

    #[test]
    fn orientation_bin_center() {
        let m = encode_orientation(0.0, 12).unwrap();
        assert_eq!(m.bin_index, 0);
        assert_eq!(m.residual, 0.0);
        assert_eq!(decode_orientation(&m).unwrap(), 0.0);
    }

    #[test]
    fn orientation_roundtrip_sweep() {
        for k in 2..=24 {
            for i in 0..10_000 {
                let theta = -PI + 2.0 * PI * (i as f64) / 10_000.0;
                let m = encode_orientation(theta, k).unwrap();
                assert!(m.residual.abs() <= PI / k as f64 + 1e-12);
                let back = decode_orientation(&m).unwrap();
                let diff = wrap_angle(back - theta).abs();
                assert!(diff < 1e-12, "k={k} theta={theta} back={back}");
            }
        }
    }

    #[test]
    fn orientation_tie_breaks_lower() {
        // exactly between centers 0 and 1 for k=12
        let m = encode_orientation(PI / 12.0, 12).unwrap();
        assert_eq!(m.bin_index, 0);
    }

    #[test]
    fn orientation_invalid_k() {
        assert!(matches!(
            encode_orientation(0.0, 1),
            Err(GeomError::InvalidBinCount(1))
        ));
    }

    #[test]
    fn alpha_on_axis() {
        assert_eq!(ry_to_alpha(0.7, 0.0, 10.0).unwrap(), 0.7);
    }

    #[test]
    fn alpha_quarter_turn() {
        let a = ry_to_alpha(0.0, 5.0, 5.0).unwrap();
        assert!((a - (-PI / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn alpha_ry_roundtrip() {
        for (ry, x, z) in [(0.3, 1.0, 10.0), (-2.9, -7.0, 3.0), (3.0, 0.5, 0.5)] {
            let a = ry_to_alpha(ry, x, z).unwrap();
            let back = alpha_to_ry(a, x, z).unwrap();
            assert!((back - wrap_angle(ry)).abs() < 1e-12);
        }
    }

    fn boxed(x: f64, y: f64, z: f64, h: f64, w: f64, l: f64, ry: f64) -> Box3D {
        Box3D {
            bottom_center: Point3D::new(x, y, z),
            h,
            w,
            l,
            ry,
        }
    }

    #[test]
    fn bev_axis_aligned_footprint() {
        let b = boxed(0.0, 1.0, 10.0, 2.0, 2.0, 4.0, 0.0);
        let poly = b.bev_polygon().unwrap();
        let mut vs: Vec<(i64, i64)> = poly
            .vertices
            .iter()
            .map(|(x, z)| (x.round() as i64, z.round() as i64))
            .collect();
        vs.sort_unstable();
        assert_eq!(vs, vec![(-2, 9), (-2, 11), (2, 9), (2, 11)]);
        assert!((poly.area() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn bev_pi_rotation_symmetry() {
        let b = boxed(1.0, 0.0, 20.0, 1.5, 1.6, 3.9, 0.4);
        let r = boxed(1.0, 0.0, 20.0, 1.5, 1.6, 3.9, 0.4 + PI);
        assert!((iou_bev(&b, &r).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bev_square_quarter_turn() {
        let b = boxed(0.0, 0.0, 10.0, 1.0, 2.0, 2.0, 0.0);
        let r = boxed(0.0, 0.0, 10.0, 1.0, 2.0, 2.0, PI / 2.0);
        assert!((iou_bev(&b, &r).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iou_identical() {
        let b = boxed(2.0, 1.5, 30.0, 1.5, 1.6, 3.9, -0.9);
        assert!((iou_bev(&b, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((iou_3d(&b, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_disjoint() {
        let a = boxed(0.0, 0.0, 10.0, 1.5, 1.6, 3.9, 0.3);
        let b = boxed(100.0, 0.0, 10.0, 1.5, 1.6, 3.9, 0.3);
        assert_eq!(iou_bev(&a, &b).unwrap(), 0.0);
        assert_eq!(iou_3d(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn iou_half_offset_third() {
        // unit footprint (w=l=1), offset by half the length along x
        let a = boxed(0.0, 0.0, 10.0, 1.0, 1.0, 1.0, 0.0);
        let b = boxed(0.5, 0.0, 10.0, 1.0, 1.0, 1.0, 0.0);
        assert!((iou_bev(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou_3d(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_3d_equals_bev_for_equal_y_extent() {
        let a = boxed(0.0, 1.0, 10.0, 2.0, 1.5, 4.0, 0.2);
        let b = boxed(0.7, 1.0, 10.5, 2.0, 1.7, 3.5, -0.4);
        let bev = iou_bev(&a, &b).unwrap();
        let full = iou_3d(&a, &b).unwrap();
        assert!((bev - full).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_rejected() {
        let b = boxed(0.0, 0.0, 10.0, 0.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            b.corners_3d(),
            Err(GeomError::DegenerateBox(..))
        ));
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(
            ax in -10.0..10.0f64, az in 5.0..40.0f64, ar in -PI..PI,
            bx in -10.0..10.0f64, bz in 5.0..40.0f64, br in -PI..PI,
        ) {
            let a = boxed(ax, 1.0, az, 1.5, 1.6, 3.9, ar);
            let b = boxed(bx, 1.2, bz, 1.4, 1.7, 4.1, br);
            let ab = iou_bev(&a, &b).unwrap();
            let ba = iou_bev(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
            let v = iou_3d(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn clip_area_bounded_by_min(
            ax in -5.0..5.0f64, az in 5.0..20.0f64, ar in -PI..PI,
            bx in -5.0..5.0f64, bz in 5.0..20.0f64, br in -PI..PI,
        ) {
            let a = boxed(ax, 1.0, az, 1.5, 1.6, 3.9, ar);
            let b = boxed(bx, 1.0, bz, 1.5, 2.0, 3.0, br);
            let inter = bev_intersection_area(&a, &b).unwrap();
            let min_area = a.bev_polygon().unwrap().area().min(b.bev_polygon().unwrap().area());
            prop_assert!(inter <= min_area + 1e-12);
        }

        #[test]
        fn wrap_angle_in_range(theta in -100.0..100.0f64) {
            let w = wrap_angle(theta);
            prop_assert!((-PI..PI).contains(&w));
        }
    }
}
