//! Pinhole cameras and depth-based pixel warping.
//!
//! Camera frame: +X right, +Y up, looking along −Z. Pixel `(u, v)` has `u`
//! growing with the column and `v` with the row; pixel centers sit at integer
//! coordinates. Depth is measured along the optical axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;

pub const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fl_x: f64,
    pub fl_y: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world transform, row-major.
    pub cam_to_world: [[f64; 4]; 4],
}

/// A pixel position expressed in a destination camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Warped {
    pub u: f64,
    pub v: f64,
    /// Depth of the point along the destination camera's axis.
    pub depth: f64,
}

impl Warped {
    /// Nearest pixel index if it falls inside a `width × height` image.
    pub fn pixel(&self, width: usize, height: usize) -> Option<usize> {
        let (c, r) = (self.u.round(), self.v.round());
        if c < 0.0 || r < 0.0 || c >= width as f64 || r >= height as f64 {
            return None;
        }
        Some(r as usize * width + c as usize)
    }
}

impl CameraModel {
    pub fn new(fl_x: f64, fl_y: f64, cx: f64, cy: f64, width: usize, height: usize, cam_to_world: [[f64; 4]; 4]) -> Result<Self> {
        let cam = CameraModel {
            fl_x,
            fl_y,
            cx,
            cy,
            width,
            height,
            cam_to_world,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fl_x > 0.0 && self.fl_y > 0.0) {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got ({}, {})",
                self.fl_x, self.fl_y
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera resolution must be positive"));
        }
        let m = &self.cam_to_world;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite camera transform"));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > ORTHONORMAL_TOL {
                    return Err(Error::invalid(format!(
                        "camera rotation is not orthonormal (column {i}·{j} = {dot})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    fn rotation(&self, r: usize, c: usize) -> f64 {
        self.cam_to_world[r][c]
    }

    fn translation(&self) -> [f64; 3] {
        [self.cam_to_world[0][3], self.cam_to_world[1][3], self.cam_to_world[2][3]]
    }

    /// World point seen at `(u, v)` with axial depth `depth`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        let pc = [
            (u - self.cx) * depth / self.fl_x,
            -(v - self.cy) * depth / self.fl_y,
            -depth,
        ];
        let t = self.translation();
        std::array::from_fn(|r| (0..3).map(|c| self.rotation(r, c) * pc[c]).sum::<f64>() + t[r])
    }

    /// Projects a world point; `None` when it is not in front of the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<Warped> {
        let t = self.translation();
        let d = [p[0] - t[0], p[1] - t[1], p[2] - t[2]];
        // R^T (p - t)
        let pc: [f64; 3] = std::array::from_fn(|c| (0..3).map(|r| self.rotation(r, c) * d[r]).sum());
        let depth = -pc[2];
        if depth.is_nan() || depth <= 0.0 {
            return None;
        }
        Some(Warped {
            u: self.fl_x * pc[0] / depth + self.cx,
            v: -self.fl_y * pc[1] / depth + self.cy,
            depth,
        })
    }

    /// Row-major pixel index to `(u, v)`.
    pub fn pixel_uv(&self, pixel: usize) -> (f64, f64) {
        ((pixel % self.width) as f64, (pixel / self.width) as f64)
    }
}

/// Moves pixel `(u, v)` with depth `depth` from `src` into `dst`.
/// `None` when the point lands behind `dst`.
pub fn warp_pixel(u: f64, v: f64, depth: f64, src: &CameraModel, dst: &CameraModel) -> Result<Option<Warped>> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::invalid(format!("warp needs positive depth, got {depth}")));
    }
    Ok(dst.project(src.back_project(u, v, depth)))
}

/// Depth map paired with its camera.
#[derive(Clone, Debug)]
pub struct DepthView<'a> {
    pub camera: &'a CameraModel,
    pub depth: &'a [f64],
}

impl DepthView<'_> {
    fn valid(&self, pixel: usize) -> bool {
        let d = self.depth[pixel];
        d > 0.0 && d.is_finite()
    }

    /// Warp of `pixel` into `dst` using this view's depth.
    pub fn warp(&self, pixel: usize, dst: &CameraModel) -> Option<Warped> {
        if !self.valid(pixel) {
            return None;
        }
        let (u, v) = self.camera.pixel_uv(pixel);
        dst.project(self.camera.back_project(u, v, self.depth[pixel]))
    }
}

/// Pixels of `src` whose surface point is also seen by `dst`: the warp lands
/// inside `dst` and agrees with `dst`'s depth within relative `tol`.
pub fn visibility_mask(src: &DepthView, dst: &DepthView, tol: f64) -> Result<Mask> {
    for v in [src, dst] {
        if v.depth.len() != v.camera.pixel_count() {
            return Err(Error::invalid(format!(
                "depth map has {} pixels, camera expects {}",
                v.depth.len(),
                v.camera.pixel_count()
            )));
        }
    }
    let (w, h) = (src.camera.width, src.camera.height);
    let bits = (0..w * h)
        .map(|p| {
            let Some(warped) = src.warp(p, dst.camera) else {
                return false;
            };
            let Some(q) = warped.pixel(dst.camera.width, dst.camera.height) else {
                return false;
            };
            dst.valid(q) && (warped.depth - dst.depth[q]).abs() <= tol * dst.depth[q]
        })
        .collect();
    Mask::from_bits(h, w, bits)
}
