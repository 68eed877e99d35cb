//! Checkpoint files.
//!
//! ```text
//! 8 bytes   magic "TRAJCKPT"
//! 8 bytes   header length (u64 LE)
//! header    JSON: version, config, scene, counters, rng state, tensor table
//! blocks    f64 LE values; the table lists (name, shape, offset in values)
//! ```

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trajfield_core::camera::{Camera, Intrinsics, NdcSpace, Pose};
use trajfield_core::field::{FieldConfig, NetworkParams};
use trajfield_core::optim::{Adam, AdamConfig};
use trajfield_core::Tensor;

use crate::dataset::SceneDataset;
use crate::error::{Error, Result};
use crate::train::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TRAJCKPT";

/// Cameras and bounds a model was trained against; enough to render
/// without the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub num_frames: usize,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
    pub ndc_margin: f64,
    /// Row-major 3x4 camera-to-world matrices.
    pub poses: Vec<Vec<f64>>,
}

impl SceneInfo {
    pub fn from_dataset(ds: &SceneDataset, ndc_margin: f64) -> Self {
        let k = &ds.intrinsics;
        SceneInfo {
            num_frames: ds.num_frames,
            width: k.width,
            height: k.height,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            near: ds.near,
            far: ds.far,
            ndc_margin,
            poses: ds.poses.iter().map(|p| p.to_3x4().to_vec()).collect(),
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
        }
    }

    /// NDC anchored at the world frame with the first camera's intrinsics.
    pub fn ndc(&self) -> NdcSpace {
        NdcSpace::new(&self.intrinsics(), self.near, self.far, self.ndc_margin)
    }

    pub fn pose(&self, t: usize) -> Result<Pose> {
        let row = self.poses.get(t).ok_or_else(|| {
            Error::Invalid(format!(
                "pose index {t} outside {} frames",
                self.poses.len()
            ))
        })?;
        let m: [f64; 12] = row
            .as_slice()
            .try_into()
            .map_err(|_| Error::Invalid("pose rows need 12 numbers".into()))?;
        Ok(Pose::from_3x4(&m)?)
    }

    /// Camera with intrinsics rescaled to a `width x height` image.
    pub fn camera(&self, pose: Pose, width: usize, height: usize) -> Result<Camera> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let k = Intrinsics {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        };
        Ok(Camera::new(k, pose, self.near, self.far)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngState {
    seed: Vec<u8>,
    stream: u64,
    /// Decimal string; JSON numbers cannot hold a u128.
    word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    config: TrainConfig,
    scene: SceneInfo,
    num_coeffs: usize,
    epoch: usize,
    step_in_epoch: usize,
    global_step: u64,
    rng: RngState,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_eps: f64,
    adam_step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub scene: SceneInfo,
    pub params: NetworkParams,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub step_in_epoch: usize,
    pub global_step: u64,
}

fn rng_state(rng: &ChaCha8Rng) -> RngState {
    RngState {
        seed: rng.get_seed().to_vec(),
        stream: rng.get_stream(),
        word_pos: rng.get_word_pos().to_string(),
    }
}

fn restore_rng(path: &Path, s: &RngState) -> Result<ChaCha8Rng> {
    use rand::SeedableRng;
    let seed: [u8; 32] = s
        .seed
        .as_slice()
        .try_into()
        .map_err(|_| Error::format(path, "rng seed must be 32 bytes"))?;
    let pos: u128 = s
        .word_pos
        .parse()
        .map_err(|_| Error::format(path, "rng word position is not an integer"))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(s.stream);
    rng.set_word_pos(pos);
    Ok(rng)
}

impl Checkpoint {
    pub fn field_config(&self) -> &FieldConfig {
        self.params.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut table = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let names = self.params.names();
        let groups = [
            ("param", self.params.tensors()),
            ("adam_m", self.adam.m.as_slice()),
            ("adam_v", self.adam.v.as_slice()),
        ];
        for (prefix, tensors) in groups {
            for (name, t) in names.iter().zip(tensors) {
                table.push(TensorEntry {
                    name: format!("{prefix}/{name}"),
                    shape: t.shape().to_vec(),
                    offset: values.len(),
                });
                values.extend_from_slice(t.data());
            }
        }
        let header = Header {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            scene: self.scene.clone(),
            num_coeffs: self.params.config().num_coeffs,
            epoch: self.epoch,
            step_in_epoch: self.step_in_epoch,
            global_step: self.global_step,
            rng: rng_state(&self.rng),
            adam_beta1: self.adam.config.beta1,
            adam_beta2: self.adam.config.beta2,
            adam_eps: self.adam.config.eps,
            adam_step: self.adam.step,
            tensors: table,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 8 * values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }

    /// Parses checkpoint bytes; `path` only labels errors.
    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::format(path, "not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16usize.saturating_add(hlen))
            .ok_or_else(|| Error::format(path, "truncated header"))?;
        let value: serde_json::Value = serde_json::from_slice(body)
            .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Version {
                found: version.map_or_else(|| "none".into(), |v| v.to_string()),
                expected: CHECKPOINT_VERSION.to_string(),
            });
        }
        let h: Header = serde_json::from_value(value)
            .map_err(|e| Error::format(path, format!("bad header: {e}")))?;
        let data = &bytes[16 + hlen..];
        if !data.len().is_multiple_of(8) {
            return Err(Error::format(path, "truncated tensor data"));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut tensors = Vec::with_capacity(h.tensors.len());
        for e in &h.tensors {
            let n: usize = e.shape.iter().product();
            let slice = values
                .get(e.offset..e.offset.saturating_add(n))
                .ok_or_else(|| {
                    Error::format(path, format!("truncated: tensor {} missing data", e.name))
                })?;
            tensors.push((
                e.name.clone(),
                Tensor::new(e.shape.clone(), slice.to_vec())?,
            ));
        }
        let expected: usize = h
            .tensors
            .iter()
            .map(|e| e.shape.iter().product::<usize>())
            .sum();
        if expected != values.len() {
            return Err(Error::format(
                path,
                format!("expected {expected} values, found {}", values.len()),
            ));
        }
        let take = |prefix: &str| -> Vec<(String, Tensor)> {
            tensors
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(prefix).map(|n| (n.to_string(), t.clone())))
                .collect()
        };
        let field = h
            .config
            .network
            .field_config(h.scene.num_frames, h.num_coeffs);
        let params = NetworkParams::from_tensors(field.clone(), take("param/"))
            .map_err(|e| Error::format(path, e.to_string()))?;
        let check = |group: &str| -> Result<Vec<Tensor>> {
            let p = NetworkParams::from_tensors(field.clone(), take(group))
                .map_err(|e| Error::format(path, format!("{group}: {e}")))?;
            Ok(p.tensors().to_vec())
        };
        let adam = Adam {
            config: AdamConfig {
                beta1: h.adam_beta1,
                beta2: h.adam_beta2,
                eps: h.adam_eps,
            },
            step: h.adam_step,
            m: check("adam_m/")?,
            v: check("adam_v/")?,
        };
        Ok(Checkpoint {
            rng: restore_rng(path, &h.rng)?,
            config: h.config,
            scene: h.scene,
            params,
            adam,
            epoch: h.epoch,
            step_in_epoch: h.step_in_epoch,
            global_step: h.global_step,
        })
    }

    /// Checks that the stored network matches `expected`, naming the first
    /// offending tensor.
    pub fn ensure_field(&self, expected: &FieldConfig) -> Result<()> {
        let named = self
            .params
            .names()
            .iter()
            .cloned()
            .zip(self.params.tensors().iter().cloned())
            .collect();
        NetworkParams::from_tensors(expected.clone(), named)?;
        Ok(())
    }
}
