//! Per-object depth label generation: project a camera-frame point cloud into
//! a sparse depth map, fill it with a deterministic nearest-observation
//! completion, then average per grid cell to get visual depths and derive
//! attribute depths against the instance depth.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::geometry::{project_point, Point3D};
use crate::kitti::{CameraCalib, PointCloud};

#[derive(Debug, Error, PartialEq)]
pub enum DepthLabelError {
    #[error("2D box has zero area after clipping to the image")]
    EmptyBox,
    #[error("instance depth must be positive, got {0}")]
    NonPositiveInstanceDepth(f64),
}

/// Sparse pixel -> depth map; collisions keep the nearest surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    pub width: u32,
    pub height: u32,
    pub entries: HashMap<(u32, u32), f64>,
}

/// Dense per-pixel depth with validity flags, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDepthMap {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DenseDepthMap {
    pub fn at(&self, u: u32, v: u32) -> Option<f64> {
        let idx = (v * self.width + u) as usize;
        if self.valid[idx] {
            Some(self.depth[idx])
        } else {
            None
        }
    }
}

/// Project every cloud point with z > 0 into the image; pixel collisions keep
/// the smaller depth.
pub fn build_sparse_depth(
    cloud: &PointCloud,
    calib: &CameraCalib,
    width: u32,
    height: u32,
) -> SparseDepthMap {
    let mut entries: HashMap<(u32, u32), f64> = HashMap::new();
    for p in &cloud.points {
        let pt = Point3D::new(p[0] as f64, p[1] as f64, p[2] as f64);
        let Ok((u, v, depth)) = project_point(calib, pt) else {
            continue;
        };
        let (ui, vi) = (u.floor(), v.floor());
        if ui < 0.0 || vi < 0.0 || ui >= width as f64 || vi >= height as f64 {
            continue;
        }
        let key = (ui as u32, vi as u32);
        entries
            .entry(key)
            .and_modify(|d| {
                if depth < *d {
                    *d = depth;
                }
            })
            .or_insert(depth);
    }
    SparseDepthMap {
        width,
        height,
        entries,
    }
}

const EDT_INF: f64 = 1e12;

// 1D squared distance transform (Felzenszwalb-Huttenlocher lower envelope).
fn dt1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

// Exact squared Euclidean distance to the nearest observed pixel.
fn squared_edt(width: usize, height: usize, observed: &[bool]) -> Vec<f64> {
    let mut grid = vec![EDT_INF; width * height];
    for (i, &o) in observed.iter().enumerate() {
        if o {
            grid[i] = 0.0;
        }
    }
    let nmax = width.max(height);
    let mut f = vec![0.0; nmax];
    let mut d = vec![0.0; nmax];
    let mut v = vec![0usize; nmax];
    let mut z = vec![0.0; nmax + 1];
    // columns first
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        dt1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = d[y];
        }
    }
    // then rows
    for y in 0..height {
        f[..width].copy_from_slice(&grid[y * width..(y + 1) * width]);
        dt1d(&f[..width], &mut d[..width], &mut v, &mut z);
        grid[y * width..(y + 1) * width].copy_from_slice(&d[..width]);
    }
    grid
}

/// Nearest-observation fill: each pixel within `r_max` px of an observation
/// takes the depth of its nearest observed pixel; equidistant ties take the
/// smaller depth. Pixels farther than `r_max` stay invalid.
pub fn complete_depth(sparse: &SparseDepthMap, r_max: f64) -> DenseDepthMap {
    let (w, h) = (sparse.width as usize, sparse.height as usize);
    let mut obs_depth = vec![0.0f64; w * h];
    let mut observed = vec![false; w * h];
    for (&(u, v), &d) in &sparse.entries {
        let idx = v as usize * w + u as usize;
        observed[idx] = true;
        obs_depth[idx] = d;
    }
    let mut dense = DenseDepthMap {
        width: sparse.width,
        height: sparse.height,
        depth: vec![0.0; w * h],
        valid: vec![false; w * h],
    };
    if sparse.entries.is_empty() {
        return dense;
    }
    let dist2 = squared_edt(w, h, &observed);
    let r_max2 = r_max * r_max;
    // perfect-square lookup for tie enumeration on the distance circle
    let max_d2 = r_max2.floor() as usize;
    let mut isqrt = vec![-1i64; max_d2 + 1];
    {
        let mut r = 0usize;
        while r * r <= max_d2 {
            isqrt[r * r] = r as i64;
            r += 1;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let d2 = dist2[y * w + x];
            if d2 > r_max2 {
                continue;
            }
            // all nearest sites sit on the circle of squared radius d2;
            // enumerate its lattice points and take the smallest depth
            let d2i = d2 as usize;
            let r = (d2.sqrt()).floor() as i64;
            let mut best = f64::INFINITY;
            for dx in -r..=r {
                let rem = d2i as i64 - dx * dx;
                if rem < 0 {
                    continue;
                }
                let dy = isqrt[rem as usize];
                if dy < 0 {
                    continue;
                }
                let xx = x as i64 + dx;
                if xx < 0 || xx >= w as i64 {
                    continue;
                }
                for sy in [dy, -dy] {
                    let yy = y as i64 + sy;
                    if yy < 0 || yy >= h as i64 {
                        continue;
                    }
                    let idx = yy as usize * w + xx as usize;
                    if observed[idx] && obs_depth[idx] < best {
                        best = obs_depth[idx];
                    }
                    if dy == 0 {
                        break;
                    }
                }
            }
            debug_assert!(best.is_finite());
            dense.depth[y * w + x] = best;
            dense.valid[y * w + x] = true;
        }
    }
    dense
}

/// Per-object m x n depth grid, row-major (`m` rows along v, `n` columns
/// along u). For every valid cell, `visual + attribute` equals the object's
/// instance depth by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    pub m: usize,
    pub n: usize,
    pub visual: Vec<f64>,
    pub attribute: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthGrid {
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }
}

/// JSON record emitted per object by `gen-labels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub frame_id: String,
    pub object_index: usize,
    pub m: usize,
    pub n: usize,
    pub visual: Vec<f64>,
    pub attribute: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Partition `box2d` into m x n equal half-open cells and average the valid
/// dense depths whose pixel centers fall in each cell.
pub fn grid_visual_depth(
    dense: &DenseDepthMap,
    box2d: [f64; 4],
    m: usize,
    n: usize,
) -> Result<(Vec<f64>, Vec<bool>), DepthLabelError> {
    let u_min = box2d[0].max(0.0);
    let v_min = box2d[1].max(0.0);
    let u_max = box2d[2].min(dense.width as f64);
    let v_max = box2d[3].min(dense.height as f64);
    if u_max <= u_min || v_max <= v_min || m == 0 || n == 0 {
        return Err(DepthLabelError::EmptyBox);
    }
    let du = (u_max - u_min) / n as f64;
    let dv = (v_max - v_min) / m as f64;
    let mut sum = vec![0.0f64; m * n];
    let mut count = vec![0usize; m * n];
    let px_lo = u_min.floor().max(0.0) as u32;
    let px_hi = (u_max.ceil() as u32).min(dense.width);
    let py_lo = v_min.floor().max(0.0) as u32;
    let py_hi = (v_max.ceil() as u32).min(dense.height);
    for py in py_lo..py_hi {
        let vc = py as f64 + 0.5;
        if vc < v_min || vc >= v_max {
            continue;
        }
        let i = (((vc - v_min) / dv) as usize).min(m - 1);
        for px in px_lo..px_hi {
            let uc = px as f64 + 0.5;
            if uc < u_min || uc >= u_max {
                continue;
            }
            let j = (((uc - u_min) / du) as usize).min(n - 1);
            if let Some(d) = dense.at(px, py) {
                sum[i * n + j] += d;
                count[i * n + j] += 1;
            }
        }
    }
    let visual: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let valid: Vec<bool> = count.iter().map(|&c| c > 0).collect();
    Ok((visual, valid))
}

/// attribute[i][j] = instance_depth - visual[i][j] on valid cells.
pub fn attribute_depth_labels(
    visual: &[f64],
    valid: &[bool],
    instance_depth: f64,
) -> Result<Vec<f64>, DepthLabelError> {
    if instance_depth <= 0.0 {
        return Err(DepthLabelError::NonPositiveInstanceDepth(instance_depth));
    }
    Ok(visual
        .iter()
        .zip(valid)
        .map(|(&d, &ok)| if ok { instance_depth - d } else { 0.0 })
        .collect())
}

/// Full per-object grid: visual from the dense map, attribute against the
/// instance depth (volumetric-center z of the ground-truth box).
pub fn build_depth_grid(
    dense: &DenseDepthMap,
    box2d: [f64; 4],
    instance_depth: f64,
    m: usize,
    n: usize,
) -> Result<DepthGrid, DepthLabelError> {
    let (visual, valid) = grid_visual_depth(dense, box2d, m, n)?;
    let attribute = attribute_depth_labels(&visual, &valid, instance_depth)?;
    Ok(DepthGrid {
        m,
        n,
        visual,
        attribute,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitti::CameraCalib;

    fn calib() -> CameraCalib {
        CameraCalib::pinhole(1000.0, 500.0, 200.0)
    }

    fn sparse_from(width: u32, height: u32, pts: &[(u32, u32, f64)]) -> SparseDepthMap {
        let mut entries = HashMap::new();
        for &(u, v, d) in pts {
            entries.insert((u, v), d);
        }
        SparseDepthMap {
            width,
            height,
            entries,
        }
    }

    #[test]
    fn sparse_single_projection() {
        let cloud = PointCloud {
            points: vec![[0.0, 0.0, 10.0, 0.0]],
        };
        let s = build_sparse_depth(&cloud, &calib(), 1000, 400);
        assert_eq!(s.entries.len(), 1);
        assert_eq!(s.entries[&(500, 200)], 10.0);
    }

    #[test]
    fn sparse_nearest_wins() {
        let cloud = PointCloud {
            points: vec![[0.0, 0.0, 10.0, 0.0], [0.0, 0.0, 8.0, 0.0]],
        };
        let s = build_sparse_depth(&cloud, &calib(), 1000, 400);
        assert_eq!(s.entries[&(500, 200)], 8.0);
    }

    #[test]
    fn sparse_culls_behind_camera() {
        let cloud = PointCloud {
            points: vec![[0.0, 0.0, -1.0, 0.0]],
        };
        let s = build_sparse_depth(&cloud, &calib(), 1000, 400);
        assert!(s.entries.is_empty());
    }

    #[test]
    fn complete_dense_is_fixed_point() {
        let mut pts = Vec::new();
        for v in 0..8u32 {
            for u in 0..8u32 {
                pts.push((u, v, 5.0 + (u + v) as f64));
            }
        }
        let s = sparse_from(8, 8, &pts);
        let d = complete_depth(&s, 50.0);
        for v in 0..8 {
            for u in 0..8 {
                assert_eq!(d.at(u, v), Some(5.0 + (u + v) as f64));
            }
        }
    }

    #[test]
    fn complete_single_source_fill() {
        let s = sparse_from(20, 20, &[(10, 10, 7.5)]);
        let d = complete_depth(&s, 5.0);
        assert_eq!(d.at(10, 10), Some(7.5));
        assert_eq!(d.at(13, 14), Some(7.5)); // dist 5 exactly
        assert_eq!(d.at(10, 16), None); // dist 6 > r_max
    }

    #[test]
    fn complete_tie_takes_smaller_depth() {
        // observations at x=2 and x=6, pixel x=4 is equidistant
        let s = sparse_from(9, 1, &[(2, 0, 12.0), (6, 0, 9.0)]);
        let d = complete_depth(&s, 50.0);
        assert_eq!(d.at(4, 0), Some(9.0));
        assert_eq!(d.at(3, 0), Some(12.0));
        assert_eq!(d.at(5, 0), Some(9.0));
    }

    #[test]
    fn complete_diagonal_tie() {
        // pixel (1,1) is sqrt(2) from both corners
        let s = sparse_from(3, 3, &[(0, 0, 20.0), (2, 2, 15.0)]);
        let d = complete_depth(&s, 50.0);
        assert_eq!(d.at(1, 1), Some(15.0));
    }

    #[test]
    fn complete_matches_brute_force() {
        let s = sparse_from(
            17,
            13,
            &[(1, 2, 8.0), (9, 4, 6.0), (15, 11, 10.0), (4, 10, 7.0)],
        );
        let r_max = 6.0;
        let d = complete_depth(&s, r_max);
        for y in 0..13u32 {
            for x in 0..17u32 {
                let mut best: Option<(f64, f64)> = None;
                for (&(u, v), &depth) in &s.entries {
                    let dd = ((x as f64 - u as f64).powi(2) + (y as f64 - v as f64).powi(2),
                        depth);
                    best = match best {
                        None => Some(dd),
                        Some(b) if dd.0 < b.0 || (dd.0 == b.0 && dd.1 < b.1) => Some(dd),
                        Some(b) => Some(b),
                    };
                }
                let expect = match best {
                    Some((d2, depth)) if d2 <= r_max * r_max => Some(depth),
                    _ => None,
                };
                assert_eq!(d.at(x, y), expect, "pixel ({x},{y})");
            }
        }
    }

    fn constant_dense(w: u32, h: u32, depth: f64) -> DenseDepthMap {
        DenseDepthMap {
            width: w,
            height: h,
            depth: vec![depth; (w * h) as usize],
            valid: vec![true; (w * h) as usize],
        }
    }

    #[test]
    fn grid_constant_field() {
        let dense = constant_dense(100, 100, 15.0);
        let (vis, valid) = grid_visual_depth(&dense, [10.0, 20.0, 80.0, 90.0], 7, 7).unwrap();
        assert!(valid.iter().all(|&v| v));
        assert!(vis.iter().all(|&d| d == 15.0));
    }

    #[test]
    fn grid_cell_outside_valid_region_invalid() {
        let mut dense = constant_dense(70, 70, 10.0);
        // invalidate left half
        for y in 0..70u32 {
            for x in 0..35u32 {
                dense.valid[(y * 70 + x) as usize] = false;
            }
        }
        let (_, valid) = grid_visual_depth(&dense, [0.0, 0.0, 70.0, 70.0], 7, 7).unwrap();
        assert!(!valid[0]); // leftmost column cells empty
        assert!(valid[6]); // rightmost fine
    }

    #[test]
    fn grid_linear_ramp_matches_direct_average() {
        let (w, h) = (64u32, 64u32);
        let mut dense = constant_dense(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                dense.depth[(y * w + x) as usize] = y as f64 + 1.0; // d(u,v) = v + 1
            }
        }
        let bx = [3.0, 5.0, 61.0, 59.0];
        let (m, n) = (7, 7);
        let (vis, valid) = grid_visual_depth(&dense, bx, m, n).unwrap();
        // independent averaging oracle over enumerated pixels
        let dv = (bx[3] - bx[1]) / m as f64;
        for i in 0..m {
            for j in 0..n {
                let (mut s, mut c) = (0.0, 0usize);
                for py in 0..h {
                    let vc = py as f64 + 0.5;
                    if vc < bx[1] + i as f64 * dv || vc >= bx[1] + (i + 1) as f64 * dv {
                        continue;
                    }
                    let du = (bx[2] - bx[0]) / n as f64;
                    for px in 0..w {
                        let uc = px as f64 + 0.5;
                        if uc >= bx[0] + j as f64 * du && uc < bx[0] + (j + 1) as f64 * du {
                            s += py as f64 + 1.0;
                            c += 1;
                        }
                    }
                }
                assert!(valid[i * n + j]);
                assert!((vis[i * n + j] - s / c as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_empty_box() {
        let dense = constant_dense(10, 10, 5.0);
        assert_eq!(
            grid_visual_depth(&dense, [5.0, 5.0, 5.0, 8.0], 7, 7),
            Err(DepthLabelError::EmptyBox)
        );
    }

    #[test]
    fn attribute_definition() {
        let att = attribute_depth_labels(&[18.0], &[true], 20.0).unwrap();
        assert_eq!(att, vec![2.0]);
    }

    #[test]
    fn attribute_zero_when_visual_equals_instance() {
        let vis = vec![20.0; 49];
        let valid = vec![true; 49];
        let att = attribute_depth_labels(&vis, &valid, 20.0).unwrap();
        assert!(att.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn attribute_rejects_non_positive_instance() {
        assert!(matches!(
            attribute_depth_labels(&[1.0], &[true], 0.0),
            Err(DepthLabelError::NonPositiveInstanceDepth(_))
        ));
    }

    #[test]
    fn reconstruction_identity() {
        let dense = constant_dense(70, 70, 18.5);
        let grid = build_depth_grid(&dense, [0.0, 0.0, 70.0, 70.0], 21.25, 7, 7).unwrap();
        for idx in 0..49 {
            if grid.valid[idx] {
                assert!((grid.visual[idx] + grid.attribute[idx] - 21.25).abs() < 1e-12);
            }
        }
    }
}
