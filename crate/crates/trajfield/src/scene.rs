//! Analytic dynamic scenes: textured primitives with closed-form motion,
//! ray traced with exact depth, optical flow, motion masks and tracks.

use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trajfield_core::camera::{
    add3, dot3, normalize3, scale3, sub3, Camera, Intrinsics, Pose, Vec3,
};

use crate::dataset::{HeldoutView, Probe, SceneDataset};
use crate::error::{Error, Result};
use crate::image::Image;

pub type Rgb = [f64; 3];

/// Hits closer than this along a ray are ignored.
const HIT_EPS: f64 = 1e-9;
/// Scene-flow magnitude above which a pixel counts as moving.
const MOTION_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    Cuboid {
        half: Vec3,
    },
    /// Infinite plane through the object center.
    Plane {
        normal: Vec3,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Static,
    /// `velocity * t`
    Linear {
        velocity: Vec3,
    },
    /// Per axis `a (sin(2πt/P + φ) - sin φ)`.
    Sinusoid {
        amplitude: Vec3,
        period: Vec3,
        phase: Vec3,
    },
    /// Explicit offsets per frame, linearly interpolated and clamped.
    Track {
        offsets: Vec<Vec3>,
    },
}

impl Motion {
    /// Offset from the rest position at time `t`; zero at `t = 0` for the
    /// closed-form kinds.
    pub fn offset(&self, t: f64) -> Vec3 {
        match self {
            Motion::Static => [0.0; 3],
            Motion::Linear { velocity } => scale3(*velocity, t),
            Motion::Sinusoid {
                amplitude,
                period,
                phase,
            } => {
                let mut o = [0.0; 3];
                for i in 0..3 {
                    if period[i] != 0.0 {
                        o[i] = amplitude[i]
                            * ((2.0 * PI * t / period[i] + phase[i]).sin() - phase[i].sin());
                    }
                }
                o
            }
            Motion::Track { offsets } => {
                if offsets.is_empty() {
                    return [0.0; 3];
                }
                let last = (offsets.len() - 1) as f64;
                let t = t.clamp(0.0, last);
                let i = (t.floor() as usize).min(offsets.len() - 1);
                let j = (i + 1).min(offsets.len() - 1);
                let s = t - i as f64;
                add3(scale3(offsets[i], 1.0 - s), scale3(offsets[j], s))
            }
        }
    }

    pub fn is_static(&self) -> bool {
        match self {
            Motion::Static => true,
            Motion::Linear { velocity } => *velocity == [0.0; 3],
            Motion::Sinusoid { amplitude, .. } => *amplitude == [0.0; 3],
            Motion::Track { offsets } => offsets.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Solid {
        color: Rgb,
    },
    /// 3D checkerboard in object coordinates.
    Checker {
        a: Rgb,
        b: Rgb,
        size: f64,
    },
    /// Smooth color waves in object coordinates.
    Waves {
        base: Rgb,
        amplitude: Rgb,
        frequency: Vec3,
        phase: f64,
    },
}

impl Texture {
    pub fn at(&self, p: Vec3) -> Rgb {
        match self {
            Texture::Solid { color } => *color,
            Texture::Checker { a, b, size } => {
                let s: i64 = p.iter().map(|v| (v / size).floor() as i64).sum();
                if s.rem_euclid(2) == 0 {
                    *a
                } else {
                    *b
                }
            }
            Texture::Waves {
                base,
                amplitude,
                frequency,
                phase,
            } => {
                let u = dot3(p, *frequency);
                let mut c = [0.0; 3];
                for i in 0..3 {
                    let wave = (2.0 * PI * u + phase + 2.1 * i as f64).sin()
                        * (0.5 * PI * (p[0] - p[1]) + 0.7 * i as f64).cos();
                    c[i] = (base[i] + amplitude[i] * wave).clamp(0.0, 1.0);
                }
                c
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub shape: Shape,
    /// Rest position at `t = 0`.
    pub center: Vec3,
    pub motion: Motion,
    pub texture: Texture,
    /// Blinn-Phong highlight strength; 0 for purely diffuse.
    pub specular: f64,
    pub shininess: f64,
}

impl SceneObject {
    pub fn center_at(&self, t: f64) -> Vec3 {
        add3(self.center, self.motion.offset(t))
    }

    /// Nearest hit distance along a unit ray and the local hit point.
    fn intersect(&self, origin: Vec3, dir: Vec3, t: f64) -> Option<(f64, Vec3, Vec3)> {
        let o = sub3(origin, self.center_at(t));
        match &self.shape {
            Shape::Sphere { radius } => {
                let b = dot3(o, dir);
                let c = dot3(o, o) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let s = if -b - sq > HIT_EPS { -b - sq } else { -b + sq };
                if s <= HIT_EPS {
                    return None;
                }
                let local = add3(o, scale3(dir, s));
                Some((s, local, normalize3(local)))
            }
            Shape::Cuboid { half } => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut axis = 0;
                for i in 0..3 {
                    if dir[i].abs() < 1e-15 {
                        if o[i].abs() > half[i] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-half[i] - o[i]) / dir[i];
                    let b = (half[i] - o[i]) / dir[i];
                    let (near, far) = if a < b { (a, b) } else { (b, a) };
                    if near > lo {
                        lo = near;
                        axis = i;
                    }
                    hi = hi.min(far);
                }
                if lo > hi || lo <= HIT_EPS {
                    return None;
                }
                let local = add3(o, scale3(dir, lo));
                let mut n = [0.0; 3];
                n[axis] = local[axis].signum();
                Some((lo, local, n))
            }
            Shape::Plane { normal } => {
                let n = normalize3(*normal);
                let den = dot3(n, dir);
                if den.abs() < 1e-15 {
                    return None;
                }
                let s = -dot3(n, o) / den;
                if s <= HIT_EPS {
                    return None;
                }
                let local = add3(o, scale3(dir, s));
                Some((s, local, if den < 0.0 { n } else { scale3(n, -1.0) }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraPath {
    Static {
        eye: Vec3,
    },
    /// Straight slide looking down `-z`.
    Slide {
        from: Vec3,
        to: Vec3,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub preset: String,
    pub num_frames: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub near: f64,
    pub far: f64,
    pub camera: CameraPath,
    pub objects: Vec<SceneObject>,
    /// Direction toward the light at the first and last frame.
    pub light_from: Vec3,
    pub light_to: Vec3,
    pub ambient: f64,
    /// Every this many frames a held-out view is rendered.
    pub holdout_every: usize,
    /// Offset of a held-out camera from the midpoint of its neighbors.
    pub holdout_offset: Vec3,
    /// Pixel stride of the probe grid on the first frame.
    pub probe_stride: usize,
}

pub const PRESETS: [&str; 4] = [
    "static-plane",
    "moving-sphere",
    "occluder",
    "specular-sphere",
];

fn backdrop(z: f64, normal: Vec3, phase: f64) -> SceneObject {
    SceneObject {
        name: "backdrop".into(),
        shape: Shape::Plane { normal },
        center: [0.0, 0.0, z],
        motion: Motion::Static,
        texture: Texture::Waves {
            base: [0.55, 0.5, 0.45],
            amplitude: [0.3, 0.3, 0.3],
            frequency: [0.2, 0.12, 0.0],
            phase,
        },
        specular: 0.0,
        shininess: 1.0,
    }
}

impl SceneSpec {
    /// One of [`PRESETS`] at the given length and size.
    pub fn preset(name: &str, num_frames: usize, width: usize, height: usize) -> Result<Self> {
        if num_frames < 2 {
            return Err(Error::Invalid("a scene needs at least two frames".into()));
        }
        let span = (num_frames - 1) as f64;
        let mut spec = SceneSpec {
            preset: name.to_string(),
            num_frames,
            width,
            height,
            focal: 0.85 * width as f64,
            near: 2.0,
            far: 7.0,
            camera: CameraPath::Slide {
                from: [-0.15, 0.0, 0.0],
                to: [0.15, 0.0, 0.0],
            },
            objects: vec![backdrop(-6.0, [0.0, 0.0, 1.0], 0.0)],
            light_from: [0.4, 0.6, 1.0],
            light_to: [0.4, 0.6, 1.0],
            ambient: 0.35,
            holdout_every: 4,
            holdout_offset: [0.0, 0.06, 0.0],
            probe_stride: 4,
        };
        match name {
            "static-plane" => {
                spec.camera = CameraPath::Static { eye: [0.0; 3] };
                spec.objects = vec![backdrop(-5.0, [0.0, 0.25, 1.0], 0.0)];
            }
            "moving-sphere" => spec.objects.push(SceneObject {
                name: "sphere".into(),
                shape: Shape::Sphere { radius: 0.6 },
                center: [-0.55, -0.1, -3.6],
                motion: Motion::Sinusoid {
                    amplitude: [1.1, 0.3, 0.0],
                    period: [4.0 * span, 2.0 * span, 0.0],
                    phase: [0.0; 3],
                },
                texture: Texture::Checker {
                    a: [0.9, 0.25, 0.15],
                    b: [0.95, 0.85, 0.3],
                    size: 0.3,
                },
                specular: 0.0,
                shininess: 1.0,
            }),
            "occluder" => {
                let (start, end) = ((num_frames / 4) as f64, (3 * num_frames / 4) as f64);
                let offsets = (0..num_frames)
                    .map(|t| {
                        let s = ((t as f64 - start) / (end - start).max(1.0)).clamp(0.0, 1.0);
                        [6.0 * s, 0.0, 0.0]
                    })
                    .collect();
                spec.camera = CameraPath::Slide {
                    from: [-0.08, 0.0, 0.0],
                    to: [0.08, 0.0, 0.0],
                };
                spec.objects.push(SceneObject {
                    name: "box".into(),
                    shape: Shape::Cuboid {
                        half: [0.35, 0.55, 0.25],
                    },
                    center: [-3.0, 0.0, -3.2],
                    motion: Motion::Track { offsets },
                    texture: Texture::Checker {
                        a: [0.15, 0.3, 0.85],
                        b: [0.1, 0.75, 0.35],
                        size: 0.25,
                    },
                    specular: 0.0,
                    shininess: 1.0,
                });
            }
            "specular-sphere" => {
                spec.camera = CameraPath::Static { eye: [0.0; 3] };
                spec.light_from = [-1.0, 0.5, 0.8];
                spec.light_to = [1.0, 0.5, 0.8];
                spec.objects.push(SceneObject {
                    name: "sphere".into(),
                    shape: Shape::Sphere { radius: 0.8 },
                    center: [0.0, 0.0, -3.5],
                    motion: Motion::Static,
                    texture: Texture::Solid {
                        color: [0.3, 0.4, 0.75],
                    },
                    specular: 0.7,
                    shininess: 40.0,
                });
            }
            other => {
                return Err(Error::Invalid(format!(
                    "unknown preset {other:?}; available: {}",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 2 || self.width == 0 || self.height == 0 {
            return Err(Error::Invalid(
                "scene needs two frames and a nonempty image".into(),
            ));
        }
        if !(self.focal > 0.0 && self.near > 0.0 && self.far > self.near) {
            return Err(Error::Invalid("need focal > 0 and 0 < near < far".into()));
        }
        if self.holdout_every == 0 || self.probe_stride == 0 {
            return Err(Error::Invalid(
                "holdout and probe spacing must be positive".into(),
            ));
        }
        for o in &self.objects {
            for t in 0..self.num_frames {
                if !o.center_at(t as f64).iter().all(|v| v.is_finite()) {
                    return Err(Error::Invalid(format!(
                        "object {} leaves finite space",
                        o.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
            width: self.width,
            height: self.height,
        }
    }

    pub fn pose(&self, t: f64) -> Pose {
        let s = t / (self.num_frames - 1) as f64;
        match &self.camera {
            CameraPath::Static { eye } => Pose::from_translation(*eye),
            CameraPath::Slide { from, to } => {
                Pose::from_translation(add3(scale3(*from, 1.0 - s), scale3(*to, s)))
            }
        }
    }

    pub fn camera(&self, pose: Pose) -> Camera {
        Camera::new(self.intrinsics(), pose, self.near, self.far).expect("validated spec")
    }

    fn light(&self, t: f64) -> Vec3 {
        let s = t / (self.num_frames - 1) as f64;
        normalize3(add3(
            scale3(self.light_from, 1.0 - s),
            scale3(self.light_to, s),
        ))
    }
}

/// First surface along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub object: usize,
    pub distance: f64,
    pub point: Vec3,
    pub local: Vec3,
    pub normal: Vec3,
}

/// Geometry and shading of a spec at one time, with per-scene texture
/// phases.
pub struct Scene {
    pub spec: SceneSpec,
}

impl Scene {
    pub fn new(mut spec: SceneSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for o in &mut spec.objects {
            if let Texture::Waves { phase, .. } = &mut o.texture {
                *phase += rng.gen_range(0.0..2.0 * PI);
            }
        }
        Ok(Scene { spec })
    }

    pub fn trace(&self, origin: Vec3, dir: Vec3, t: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, o) in self.spec.objects.iter().enumerate() {
            if let Some((d, local, normal)) = o.intersect(origin, dir, t) {
                if best.is_none_or(|b| d < b.distance) {
                    best = Some(Hit {
                        object: i,
                        distance: d,
                        point: add3(origin, scale3(dir, d)),
                        local,
                        normal,
                    });
                }
            }
        }
        best
    }

    /// Shaded color of a hit seen from direction `dir`; `light_time` moves
    /// the light independently of the geometry.
    pub fn shade(&self, hit: &Hit, dir: Vec3, light_time: f64) -> Rgb {
        let o = &self.spec.objects[hit.object];
        let albedo = o.texture.at(hit.local);
        let l = self.spec.light(light_time);
        let diffuse = self.spec.ambient + (1.0 - self.spec.ambient) * dot3(hit.normal, l).max(0.0);
        let mut c = [0.0; 3];
        let highlight = if o.specular > 0.0 {
            let h = normalize3(sub3(l, dir));
            o.specular * dot3(hit.normal, h).max(0.0).powf(o.shininess)
        } else {
            0.0
        };
        for i in 0..3 {
            c[i] = (albedo[i] * diffuse + highlight).clamp(0.0, 1.0);
        }
        c
    }

    /// Where the material point `hit` sits at time `t1`.
    pub fn move_point(&self, hit: &Hit, t0: f64, t1: f64) -> Vec3 {
        let o = &self.spec.objects[hit.object];
        add3(hit.point, sub3(o.center_at(t1), o.center_at(t0)))
    }

    /// Whether `p` (on object `object` at time `t`) is the first surface
    /// seen by `cam`.
    pub fn visible(&self, cam: &Camera, p: Vec3, object: usize, t: f64) -> bool {
        let Some((u, v, _)) = cam.project(p) else {
            return false;
        };
        let (origin, dir) = (
            cam.pose.translation,
            normalize3(cam.pose.rotate(cam.camera_dir(u, v))),
        );
        let dist = trajfield_core::camera::norm3(sub3(p, origin));
        match self.trace(origin, dir, t) {
            Some(h) => h.object == object && (h.distance - dist).abs() <= 1e-6 * dist.max(1.0),
            None => false,
        }
    }

    /// Renders an image, z-depth and hit map for `pose` at time `t`.
    pub fn render(
        &self,
        pose: Pose,
        t: f64,
        light_time: f64,
    ) -> (Image, Vec<f64>, Vec<Option<Hit>>) {
        let cam = self.spec.camera(pose);
        let (w, h) = (self.spec.width, self.spec.height);
        let mut img = Image::new(w, h);
        let mut depth = vec![0.0; w * h];
        let mut hits = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                let (o, d) = cam.pixel_ray(row, col);
                let hit = self.trace(o, d, t);
                if let Some(hit) = &hit {
                    img.set(row, col, self.shade(hit, d, light_time));
                    depth[row * w + col] = -pose.inverse_apply(hit.point)[2];
                }
                hits.push(hit);
            }
        }
        (img, depth, hits)
    }

    /// Pixel flow from frame `t` to frame `t1` for every pixel of frame `t`.
    fn flow(&self, hits: &[Option<Hit>], t: usize, t1: usize) -> Vec<f32> {
        let (w, h) = (self.spec.width, self.spec.height);
        let cam1 = self.spec.camera(self.spec.pose(t1 as f64));
        let mut out = vec![0.0f32; 2 * w * h];
        for row in 0..h {
            for col in 0..w {
                let Some(hit) = &hits[row * w + col] else {
                    continue;
                };
                let p1 = self.move_point(hit, t as f64, t1 as f64);
                if let Some((u, v, _)) = cam1.project(p1) {
                    let i = 2 * (row * w + col);
                    out[i] = (u - (col as f64 + 0.5)) as f32;
                    out[i + 1] = (v - (row as f64 + 0.5)) as f32;
                }
            }
        }
        out
    }
}

/// Renders every frame with exact depth, flow, masks, probe tracks and the
/// held-out views.
pub fn make_scene(spec: &SceneSpec, seed: u64) -> Result<SceneDataset> {
    let scene = Scene::new(spec.clone(), seed)?;
    let spec = &scene.spec;
    let n = spec.num_frames;
    let (w, h) = (spec.width, spec.height);
    let mut rgb = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    let mut all_hits = Vec::with_capacity(n);
    let mut poses = Vec::with_capacity(n);
    for t in 0..n {
        let pose = spec.pose(t as f64);
        let (img, d, hits) = scene.render(pose, t as f64, t as f64);
        rgb.push(img.quantized());
        depth.push(d.iter().map(|&v| v as f32).collect::<Vec<f32>>());
        all_hits.push(hits);
        poses.push(pose);
    }
    let mut flow_fwd = Vec::with_capacity(n);
    let mut flow_bwd = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for (t, hits) in all_hits.iter().enumerate() {
        flow_fwd.push(if t + 1 < n {
            scene.flow(hits, t, t + 1)
        } else {
            vec![0.0; 2 * w * h]
        });
        flow_bwd.push(if t > 0 {
            scene.flow(hits, t, t - 1)
        } else {
            vec![0.0; 2 * w * h]
        });
        let other = if t + 1 < n { t + 1 } else { t - 1 };
        masks.push(
            hits.iter()
                .map(|hit| {
                    hit.as_ref().is_some_and(|hit| {
                        let moved = sub3(scene.move_point(hit, t as f64, other as f64), hit.point);
                        trajfield_core::camera::norm3(moved) > MOTION_EPS
                    })
                })
                .collect::<Vec<bool>>(),
        );
    }
    for (i, o) in spec.objects.iter().enumerate() {
        let seen = all_hits
            .iter()
            .any(|hits| hits.iter().flatten().any(|hit| hit.object == i));
        if !seen {
            warn!("object {} is outside the view in every frame", o.name);
        }
    }

    let mut probes = Vec::new();
    for row in (spec.probe_stride / 2..h).step_by(spec.probe_stride) {
        for col in (spec.probe_stride / 2..w).step_by(spec.probe_stride) {
            let Some(hit) = &all_hits[0][row * w + col] else {
                continue;
            };
            let obj = &spec.objects[hit.object];
            probes.push(Probe {
                pixel: (row, col),
                frame: 0,
                object: obj.name.clone(),
                moving: !obj.motion.is_static(),
                track: (0..n)
                    .map(|t| scene.move_point(hit, 0.0, t as f64))
                    .collect(),
            });
        }
    }

    let mut heldout = Vec::new();
    for t in (0..n).step_by(spec.holdout_every) {
        let other = if t + 1 < n { t + 1 } else { t - 1 };
        let mid = spec.pose(t as f64).lerp(&spec.pose(other as f64), 0.5);
        let pose = Pose::from_3x4(&{
            let mut m = mid.to_3x4();
            for i in 0..3 {
                m[4 * i + 3] += spec.holdout_offset[i];
            }
            m
        })?;
        let (img, _, hits) = scene.render(pose, t as f64, t as f64);
        let mask = hits
            .iter()
            .map(|hit| {
                hit.as_ref().is_some_and(|hit| {
                    let moved = sub3(scene.move_point(hit, t as f64, other as f64), hit.point);
                    trajfield_core::camera::norm3(moved) > MOTION_EPS
                })
            })
            .collect();
        heldout.push(HeldoutView {
            frame: t,
            pose,
            rgb: img.quantized(),
            mask,
        });
    }

    Ok(SceneDataset {
        preset: spec.preset.clone(),
        seed,
        num_frames: n,
        intrinsics: spec.intrinsics(),
        near: spec.near,
        far: spec.far,
        poses,
        rgb,
        depth,
        flow_fwd: Some(flow_fwd),
        flow_bwd: Some(flow_bwd),
        masks,
        probes,
        heldout,
    })
}
