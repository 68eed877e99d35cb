//! On-disk scene datasets.
//!
//! ```text
//! manifest.json          version, sizes, intrinsics, near/far
//! poses.json             one row-major 3x4 camera-to-world matrix per frame
//! rgb/0000.png           8-bit RGB
//! depth/0000.bin         f32 little-endian z-depth, row-major
//! flow_fwd/0000.bin      f32 little-endian (du, dv) per pixel toward t + 1
//! flow_bwd/0000.bin      same toward t - 1
//! mask/0000.png          motion mask
//! tracks.json            probe trajectories in world space
//! heldout.json           held-out poses
//! heldout/0000.png       held-out images (index into heldout.json)
//! heldout_mask/0000.png  held-out motion masks
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use trajfield_core::camera::{Camera, Intrinsics, Pose, Vec3};

use crate::error::{Error, Result};
use crate::image::{read_mask_png, write_mask_png, Image};

pub const DATASET_VERSION: &str = "1";

/// A world-space trajectory of the material point seen at `pixel` in
/// `frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub pixel: (usize, usize),
    pub frame: usize,
    pub object: String,
    pub moving: bool,
    pub track: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeldoutView {
    /// Scene time of the view.
    pub frame: usize,
    pub pose: Pose,
    pub rgb: Image,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDataset {
    pub preset: String,
    pub seed: u64,
    pub num_frames: usize,
    pub intrinsics: Intrinsics,
    pub near: f64,
    pub far: f64,
    pub poses: Vec<Pose>,
    pub rgb: Vec<Image>,
    pub depth: Vec<Vec<f32>>,
    pub flow_fwd: Option<Vec<Vec<f32>>>,
    pub flow_bwd: Option<Vec<Vec<f32>>>,
    pub masks: Vec<Vec<bool>>,
    pub probes: Vec<Probe>,
    pub heldout: Vec<HeldoutView>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    preset: String,
    seed: u64,
    num_frames: usize,
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    near: f64,
    far: f64,
    has_flow: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeldoutEntry {
    frame: usize,
    pose: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Tracks {
    probes: Vec<Probe>,
}

fn frame_name(dir: &str, t: usize, ext: &str) -> PathBuf {
    Path::new(dir).join(format!("{t:04}.{ext}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * expected {
        return Err(Error::format(
            path,
            format!("expected {} bytes, found {}", 4 * expected, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_mask(path: &Path, width: usize, height: usize) -> Result<Vec<bool>> {
    let (w, h, mask) = read_mask_png(path)?;
    if (w, h) != (width, height) {
        return Err(Error::format(
            path,
            format!("expected {width}x{height} mask, found {w}x{h}"),
        ));
    }
    Ok(mask)
}

fn pose_from(path: &Path, row: &[f64]) -> Result<Pose> {
    let m: [f64; 12] = row
        .try_into()
        .map_err(|_| Error::format(path, format!("pose needs 12 numbers, found {}", row.len())))?;
    let pose = Pose::from_3x4(&m)?;
    if !pose.is_rigid(1e-6) {
        return Err(Error::format(path, "pose rotation is not orthonormal"));
    }
    Ok(pose)
}

impl SceneDataset {
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn num_pixels(&self) -> usize {
        self.width() * self.height()
    }

    pub fn camera(&self, t: usize) -> Camera {
        self.camera_at(self.poses[t])
    }

    pub fn camera_at(&self, pose: Pose) -> Camera {
        Camera::new(self.intrinsics, pose, self.near, self.far)
            .expect("dataset intrinsics are valid")
    }

    /// Forward (`+1`) or backward (`-1`) flow of a pixel, if flow exists.
    pub fn flow(&self, t: usize, forward: bool, row: usize, col: usize) -> Option<[f64; 2]> {
        let f = if forward {
            &self.flow_fwd
        } else {
            &self.flow_bwd
        };
        let i = 2 * (row * self.width() + col);
        f.as_ref().map(|f| [f[t][i] as f64, f[t][i + 1] as f64])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_frames;
        let px = self.num_pixels();
        let bad = |what: &str| {
            Err(Error::Invalid(format!(
                "dataset {what} does not match {n} frames of {px} pixels"
            )))
        };
        if n < 2 {
            return Err(Error::Invalid("dataset needs at least two frames".into()));
        }
        if self.poses.len() != n
            || self.rgb.len() != n
            || self.depth.len() != n
            || self.masks.len() != n
        {
            return bad("frame count");
        }
        if self
            .rgb
            .iter()
            .any(|i| i.width != self.width() || i.height != self.height())
        {
            return bad("image size");
        }
        if self.depth.iter().any(|d| d.len() != px) || self.masks.iter().any(|m| m.len() != px) {
            return bad("depth or mask size");
        }
        for f in [&self.flow_fwd, &self.flow_bwd].into_iter().flatten() {
            if f.len() != n || f.iter().any(|f| f.len() != 2 * px) {
                return bad("flow size");
            }
        }
        Ok(())
    }

    pub fn export(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        let has_flow = self.flow_fwd.is_some() && self.flow_bwd.is_some();
        let mut subdirs = vec!["rgb", "depth", "mask", "heldout", "heldout_mask"];
        if has_flow {
            subdirs.extend(["flow_fwd", "flow_bwd"]);
        }
        for sub in subdirs {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let k = &self.intrinsics;
        write_json(
            &dir.join("manifest.json"),
            &Manifest {
                version: DATASET_VERSION.into(),
                preset: self.preset.clone(),
                seed: self.seed,
                num_frames: self.num_frames,
                width: k.width,
                height: k.height,
                fx: k.fx,
                fy: k.fy,
                cx: k.cx,
                cy: k.cy,
                near: self.near,
                far: self.far,
                has_flow,
            },
        )?;
        let poses: Vec<Vec<f64>> = self.poses.iter().map(|p| p.to_3x4().to_vec()).collect();
        write_json(&dir.join("poses.json"), &poses)?;
        for t in 0..self.num_frames {
            self.rgb[t].write_png(&dir.join(frame_name("rgb", t, "png")))?;
            write_f32(&dir.join(frame_name("depth", t, "bin")), &self.depth[t])?;
            write_mask_png(
                &dir.join(frame_name("mask", t, "png")),
                self.width(),
                self.height(),
                &self.masks[t],
            )?;
            if let (Some(fwd), Some(bwd)) = (&self.flow_fwd, &self.flow_bwd) {
                write_f32(&dir.join(frame_name("flow_fwd", t, "bin")), &fwd[t])?;
                write_f32(&dir.join(frame_name("flow_bwd", t, "bin")), &bwd[t])?;
            }
        }
        write_json(
            &dir.join("tracks.json"),
            &Tracks {
                probes: self.probes.clone(),
            },
        )?;
        let entries: Vec<HeldoutEntry> = self
            .heldout
            .iter()
            .map(|h| HeldoutEntry {
                frame: h.frame,
                pose: h.pose.to_3x4().to_vec(),
            })
            .collect();
        write_json(&dir.join("heldout.json"), &entries)?;
        for (i, h) in self.heldout.iter().enumerate() {
            h.rgb
                .write_png(&dir.join(frame_name("heldout", i, "png")))?;
            write_mask_png(
                &dir.join(frame_name("heldout_mask", i, "png")),
                self.width(),
                self.height(),
                &h.mask,
            )?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let m: Manifest = read_json(&manifest_path)?;
        if m.version != DATASET_VERSION {
            return Err(Error::Version {
                found: m.version,
                expected: DATASET_VERSION.into(),
            });
        }
        let intrinsics = Intrinsics {
            fx: m.fx,
            fy: m.fy,
            cx: m.cx,
            cy: m.cy,
            width: m.width,
            height: m.height,
        };
        Camera::new(intrinsics, Pose::identity(), m.near, m.far)
            .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
        let n = m.num_frames;
        let px = m.width * m.height;

        let poses_path = dir.join("poses.json");
        let rows: Vec<Vec<f64>> = read_json(&poses_path)?;
        if rows.len() != n {
            return Err(Error::format(
                &poses_path,
                format!("expected {n} poses, found {}", rows.len()),
            ));
        }
        let poses = rows
            .iter()
            .map(|r| pose_from(&poses_path, r))
            .collect::<Result<Vec<_>>>()?;

        let mut rgb = Vec::with_capacity(n);
        let mut depth = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        for t in 0..n {
            let p = dir.join(frame_name("rgb", t, "png"));
            let img = Image::read_png(&p)?;
            if img.width != m.width || img.height != m.height {
                return Err(Error::format(
                    &p,
                    format!("expected {}x{} image", m.width, m.height),
                ));
            }
            rgb.push(img);
            depth.push(read_f32(&dir.join(frame_name("depth", t, "bin")), px)?);
            let p = dir.join(frame_name("mask", t, "png"));
            masks.push(if p.exists() {
                read_mask(&p, m.width, m.height)?
            } else {
                vec![false; px]
            });
        }

        let (mut flow_fwd, mut flow_bwd) = (None, None);
        let flow_present = dir.join("flow_fwd").is_dir() && dir.join("flow_bwd").is_dir();
        if flow_present {
            let mut fwd = Vec::with_capacity(n);
            let mut bwd = Vec::with_capacity(n);
            for t in 0..n {
                fwd.push(read_f32(
                    &dir.join(frame_name("flow_fwd", t, "bin")),
                    2 * px,
                )?);
                bwd.push(read_f32(
                    &dir.join(frame_name("flow_bwd", t, "bin")),
                    2 * px,
                )?);
            }
            flow_fwd = Some(fwd);
            flow_bwd = Some(bwd);
        } else if m.has_flow {
            warn!(
                "{}: flow listed in manifest but missing; continuing without it",
                dir.display()
            );
        }

        let tracks_path = dir.join("tracks.json");
        let probes = if tracks_path.exists() {
            read_json::<Tracks>(&tracks_path)?.probes
        } else {
            Vec::new()
        };

        let heldout_path = dir.join("heldout.json");
        let mut heldout = Vec::new();
        if heldout_path.exists() {
            let entries: Vec<HeldoutEntry> = read_json(&heldout_path)?;
            for (i, e) in entries.into_iter().enumerate() {
                if e.frame >= n {
                    return Err(Error::format(
                        &heldout_path,
                        format!("held-out frame {} out of range", e.frame),
                    ));
                }
                let p = dir.join(frame_name("heldout", i, "png"));
                let img = Image::read_png(&p)?;
                if img.width != m.width || img.height != m.height {
                    return Err(Error::format(
                        &p,
                        format!("expected {}x{} image", m.width, m.height),
                    ));
                }
                let mp = dir.join(frame_name("heldout_mask", i, "png"));
                let mask = if mp.exists() {
                    read_mask(&mp, m.width, m.height)?
                } else {
                    vec![false; px]
                };
                heldout.push(HeldoutView {
                    frame: e.frame,
                    pose: pose_from(&heldout_path, &e.pose)?,
                    rgb: img,
                    mask,
                });
            }
        }

        let ds = SceneDataset {
            preset: m.preset,
            seed: m.seed,
            num_frames: n,
            intrinsics,
            near: m.near,
            far: m.far,
            poses,
            rgb,
            depth,
            flow_fwd,
            flow_bwd,
            masks,
            probes,
            heldout,
        };
        ds.validate()?;
        Ok(ds)
    }
}
