//! Decoupled instance-depth pipeline for monocular 3D detection, built around
//! splitting an object's instance depth into a visual part (what the camera
//! sees of the surface) and an attribute part (the offset from that surface to
//! the object's 3D center).
//!
//! Modules:
//! - [`kitti`]: KITTI calibration / label / velodyne file formats.
//! - [`geometry`]: projection, box corners, multi-bin orientation, rotated IoU.
//! - [`depth_labels`]: sparse depth maps, completion, per-object depth grids.
//! - [`fusion`]: Laplace-uncertainty fusion, adaptive aggregation, depth losses.
//! - [`augment`]: affine augmentation keeping attribute depth invariant.
//! - [`eval`]: difficulty stratification and AP|R40 for BEV / 3D detection.
//! - [`synth`]: deterministic synthetic scenes for end-to-end verification.
//! - [`cli`]: the `did-geom` command-line front end.

pub mod augment;
pub mod cli;
pub mod depth_labels;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod kitti;
pub mod synth;
