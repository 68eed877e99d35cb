//! Pinhole cameras, rays and the forward-facing NDC warp.
//!
//! Camera space looks down `-z` with `x` right and `y` up. Pixel `(row,
//! col)` has its center at `(col + 0.5, row + 0.5)`, rows growing downward.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm3(a: Vec3) -> f64 {
    math::sqrt(dot3(a, a))
}

pub fn normalize3(a: Vec3) -> Vec3 {
    scale3(a, 1.0 / norm3(a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// World-from-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Row-major rotation; its columns are the camera axes in world space.
    pub rotation: [[f64; 3]; 3],
    /// Camera center in world space.
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose {
            translation: t,
            ..Pose::identity()
        }
    }

    /// Camera at `eye` looking at `target`, with `up` roughly upward.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let back = normalize3(sub3(eye, target));
        let right = normalize3(cross3(up, back));
        let up = cross3(back, right);
        Pose {
            rotation: [
                [right[0], up[0], back[0]],
                [right[1], up[1], back[1]],
                [right[2], up[2], back[2]],
            ],
            translation: eye,
        }
    }

    /// Row-major `[R | t]`.
    pub fn to_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1],
            r[2][2], t[2],
        ]
    }

    pub fn from_3x4(m: &[f64; 12]) -> Result<Self> {
        let pose = Pose {
            rotation: [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]],
            translation: [m[3], m[7], m[11]],
        };
        if !pose.is_rigid(1e-6) {
            return Err(Error::invalid("pose rotation is not orthonormal"));
        }
        Ok(pose)
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (d - want).abs() > tol {
                    return false;
                }
            }
        }
        let det = dot3(
            [r[0][0], r[1][0], r[2][0]],
            cross3([r[0][1], r[1][1], r[2][1]], [r[0][2], r[1][2], r[2][2]]),
        );
        (det - 1.0).abs() < tol
    }

    pub fn apply(&self, p_cam: Vec3) -> Vec3 {
        let r = &self.rotation;
        let mut out = self.translation;
        for (i, o) in out.iter_mut().enumerate() {
            *o += r[i][0] * p_cam[0] + r[i][1] * p_cam[1] + r[i][2] * p_cam[2];
        }
        out
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        [dot3(r[0], v), dot3(r[1], v), dot3(r[2], v)]
    }

    /// World point into camera coordinates.
    pub fn inverse_apply(&self, p_world: Vec3) -> Vec3 {
        let d = sub3(p_world, self.translation);
        let r = &self.rotation;
        [
            r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
            r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
            r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
        ]
    }

    /// Linear interpolation of translation and (re-orthonormalized) rotation.
    pub fn lerp(&self, other: &Pose, s: f64) -> Pose {
        let mut rot = [[0.0; 3]; 3];
        for (i, row) in rot.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.rotation[i][j] * (1.0 - s) + other.rotation[i][j] * s;
            }
        }
        let fwd = normalize3([-rot[0][2], -rot[1][2], -rot[2][2]]);
        let up = [rot[0][1], rot[1][1], rot[2][1]];
        let t = add3(
            scale3(self.translation, 1.0 - s),
            scale3(other.translation, s),
        );
        Pose::look_at(t, add3(t, fwd), up)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Pose, near: f64, far: f64) -> Result<Self> {
        let k = &intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if !(near > 0.0 && far > near) {
            return Err(Error::invalid(format!(
                "need 0 < near < far, got {near}, {far}"
            )));
        }
        if k.width == 0 || k.height == 0 {
            return Err(Error::invalid("empty image"));
        }
        Ok(Camera {
            intrinsics,
            pose,
            near,
            far,
        })
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// Camera-space direction (not normalized, `z = -1`) through a subpixel
    /// position.
    pub fn camera_dir(&self, u: f64, v: f64) -> Vec3 {
        let k = &self.intrinsics;
        [(u - k.cx) / k.fx, -(v - k.cy) / k.fy, -1.0]
    }

    /// World-space origin and unit direction through a pixel center.
    pub fn pixel_ray(&self, row: usize, col: usize) -> (Vec3, Vec3) {
        let d = self.camera_dir(col as f64 + 0.5, row as f64 + 0.5);
        (self.pose.translation, normalize3(self.pose.rotate(d)))
    }

    /// Pixel coordinates `(u, v)` and positive depth along the optical axis.
    pub fn project(&self, p_world: Vec3) -> Option<(f64, f64, f64)> {
        let pc = self.pose.inverse_apply(p_world);
        let depth = -pc[2];
        if depth <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        Some((
            k.cx + k.fx * pc[0] / depth,
            k.cy - k.fy * pc[1] / depth,
            depth,
        ))
    }
}

/// Forward-facing normalized device coordinates anchored at the world frame.
///
/// World `z = -near` maps to NDC `z = -1` and infinity to `z = 1`. Ray
/// parameters `ξ ∈ [0, 1]` are scaled so that `ξ = 1` lands on `far`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdcSpace {
    pub scale_x: f64,
    pub scale_y: f64,
    pub near: f64,
    pub far: f64,
}

impl NdcSpace {
    /// NDC for a reference camera sitting at the world origin. `margin < 1`
    /// widens the box so that other frames' rays stay inside it.
    pub fn new(reference: &Intrinsics, near: f64, far: f64, margin: f64) -> Self {
        NdcSpace {
            scale_x: margin * 2.0 * reference.fx / reference.width as f64,
            scale_y: margin * 2.0 * reference.fy / reference.height as f64,
            near,
            far,
        }
    }

    pub fn to_ndc(&self, p: Vec3) -> Vec3 {
        [
            -self.scale_x * p[0] / p[2],
            -self.scale_y * p[1] / p[2],
            1.0 + 2.0 * self.near / p[2],
        ]
    }

    pub fn to_world(&self, q: Vec3) -> Vec3 {
        let z = 2.0 * self.near / (q[2] - 1.0);
        [-q[0] * z / self.scale_x, -q[1] * z / self.scale_y, z]
    }

    /// Ratio between the ray parameter and its unscaled NDC counterpart.
    pub fn xi_scale(&self) -> f64 {
        1.0 - self.near / self.far
    }

    /// World depth (`-z`) reached at ray parameter `xi`.
    pub fn depth_at(&self, xi: f64) -> f64 {
        self.near / (1.0 - self.xi_scale() * xi)
    }

    /// Ray parameter of world depth `depth` (inverse of [`Self::depth_at`]).
    pub fn xi_at(&self, depth: f64) -> f64 {
        (1.0 - self.near / depth) / self.xi_scale()
    }

    /// Maps a world ray to an NDC origin and direction. `None` if the ray
    /// does not travel toward `-z`.
    pub fn ray(&self, origin: Vec3, dir: Vec3) -> Option<(Vec3, Vec3)> {
        if dir[2] >= 0.0 {
            return None;
        }
        let t = -(self.near + origin[2]) / dir[2];
        let o = add3(origin, scale3(dir, t));
        let s = self.xi_scale();
        let o_ndc = [
            -self.scale_x * o[0] / o[2],
            -self.scale_y * o[1] / o[2],
            1.0 + 2.0 * self.near / o[2],
        ];
        let d_ndc = [
            -self.scale_x * (dir[0] / dir[2] - o[0] / o[2]) * s,
            -self.scale_y * (dir[1] / dir[2] - o[1] / o[2]) * s,
            -2.0 * self.near / o[2] * s,
        ];
        Some((o_ndc, d_ndc))
    }
}

/// One camera ray in NDC, tagged with its pixel and frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    /// Unit world-space viewing direction (color-head input).
    pub view_dir: Vec3,
    pub pixel: (usize, usize),
    pub time: usize,
}

impl Ray {
    pub fn at(&self, xi: f64) -> Vec3 {
        add3(self.origin, scale3(self.direction, xi))
    }
}

/// Rays through pixel centers of `cam` at frame `t0`, expressed in `ndc`.
pub fn generate_rays(
    cam: &Camera,
    ndc: &NdcSpace,
    pixels: &[(usize, usize)],
    t0: usize,
) -> Result<Vec<Ray>> {
    let mut rays = Vec::with_capacity(pixels.len());
    for &(row, col) in pixels {
        if row >= cam.height() || col >= cam.width() {
            return Err(Error::invalid(format!(
                "pixel ({row}, {col}) outside {}x{} image",
                cam.height(),
                cam.width()
            )));
        }
        let (o, d) = cam.pixel_ray(row, col);
        let Some((origin, direction)) = ndc.ray(o, d) else {
            return Err(Error::invalid(format!(
                "pixel ({row}, {col}) looks away from the NDC volume"
            )));
        };
        rays.push(Ray {
            origin,
            direction,
            view_dir: d,
            pixel: (row, col),
            time: t0,
        });
    }
    Ok(rays)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cam() -> Camera {
        let k = Intrinsics {
            fx: 80.0,
            fy: 80.0,
            cx: 48.0,
            cy: 32.0,
            width: 96,
            height: 64,
        };
        Camera::new(k, Pose::identity(), 1.0, 6.0).unwrap()
    }

    #[test]
    fn camera_validation() {
        let c = cam();
        assert!(Camera::new(c.intrinsics, c.pose, 0.0, 1.0).is_err());
        assert!(Camera::new(c.intrinsics, c.pose, 2.0, 1.0).is_err());
        let mut k = c.intrinsics;
        k.fx = -1.0;
        assert!(Camera::new(k, c.pose, 1.0, 2.0).is_err());
    }

    #[test]
    fn principal_ray_has_no_slope() {
        let c = cam();
        let ndc = NdcSpace::new(&c.intrinsics, c.near, c.far, 1.0);
        // pixel (31, 47) has its center half a pixel off the principal point
        let mut c2 = c;
        c2.intrinsics.cx = 47.5;
        c2.intrinsics.cy = 31.5;
        let r = generate_rays(&c2, &ndc, &[(31, 47)], 0).unwrap()[0];
        assert!(r.direction[0].abs() < 1e-15 && r.direction[1].abs() < 1e-15);
        assert!(r.origin[0].abs() < 1e-15 && r.origin[1].abs() < 1e-15);
    }

    #[test]
    fn rays_share_origin_before_warp() {
        let c = cam();
        let a = c.pixel_ray(0, 0).0;
        let b = c.pixel_ray(63, 95).0;
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_bounds_pixel() {
        let c = cam();
        let ndc = NdcSpace::new(&c.intrinsics, c.near, c.far, 1.0);
        assert!(generate_rays(&c, &ndc, &[(64, 0)], 0).is_err());
    }

    #[test]
    fn xi_spans_near_to_far() {
        let c = cam();
        let ndc = NdcSpace::new(&c.intrinsics, c.near, c.far, 1.0);
        for &(row, col) in &[(0, 0), (10, 70), (63, 95)] {
            let r = generate_rays(&c, &ndc, &[(row, col)], 0).unwrap()[0];
            let (o, d) = c.pixel_ray(row, col);
            for &xi in &[0.0, 0.3, 1.0] {
                let q = r.at(xi);
                let w = ndc.to_world(q);
                // the NDC point lies on the world ray at the expected depth
                assert!((-w[2] - ndc.depth_at(xi)).abs() < 1e-9);
                let along = sub3(w, o);
                let cr = cross3(along, d);
                assert!(norm3(cr) < 1e-9);
            }
            assert!((ndc.depth_at(0.0) - 1.0).abs() < 1e-12);
            assert!((ndc.depth_at(1.0) - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ndc_box_roundtrip() {
        let c = cam();
        let ndc = NdcSpace::new(&c.intrinsics, c.near, c.far, 1.0);
        let pts = vec![[0.2, -0.1, -1.5], [-0.5, 0.3, -3.0], [1.0, 0.6, -5.9]];
        for p in pts {
            let (u, v, _) = c.project(p).unwrap();
            assert!((0.0..=96.0).contains(&u) && (0.0..=64.0).contains(&v));
            let q = ndc.to_ndc(p);
            assert!(q[0].abs() <= 1.0 && q[1].abs() <= 1.0 && (-1.0..=1.0).contains(&q[2]));
            let xi = ndc.xi_at(-p[2]);
            assert!((0.0..=1.0).contains(&xi));
            let back = ndc.to_world(q);
            for i in 0..3 {
                assert!((back[i] - p[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn look_at_is_rigid_and_projects_target_to_center() {
        let pose = Pose::look_at([0.3, 0.2, 0.5], [0.0, 0.0, -3.0], [0.0, 1.0, 0.0]);
        assert!(pose.is_rigid(1e-12));
        let c = Camera::new(cam().intrinsics, pose, 1.0, 6.0).unwrap();
        let (u, v, _) = c.project([0.0, 0.0, -3.0]).unwrap();
        assert!((u - 48.0).abs() < 1e-9 && (v - 32.0).abs() < 1e-9);
        let m = pose.to_3x4();
        assert_eq!(Pose::from_3x4(&m).unwrap(), pose);
    }
}
