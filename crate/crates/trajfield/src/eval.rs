//! Held-out view evaluation.

use serde::Serialize;
use serde_json::{json, Value};
use trajfield_core::field::NetworkParams;

use crate::checkpoint::SceneInfo;
use crate::dataset::SceneDataset;
use crate::error::Result;
use crate::export::render_image;
use crate::image::Image;
use crate::metrics::{psnr, psnr_masked, ssim, ssim_masked};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewScore {
    pub view: usize,
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// `None` when the view has no moving pixels.
    pub psnr_dynamic: Option<f64>,
    pub ssim_dynamic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub views: Vec<ViewScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_psnr_dynamic: Option<f64>,
    pub mean_ssim_dynamic: Option<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Infinite values become the string `"inf"`.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

impl EvalReport {
    /// Scores `renders[i]` against held-out view `i`.
    pub fn score(ds: &SceneDataset, renders: &[Image]) -> Result<Self> {
        let mut views = Vec::with_capacity(renders.len());
        for (i, (h, img)) in ds.heldout.iter().zip(renders).enumerate() {
            views.push(ViewScore {
                view: i,
                frame: h.frame,
                psnr: psnr(img, &h.rgb)?,
                ssim: ssim(img, &h.rgb)?,
                psnr_dynamic: psnr_masked(img, &h.rgb, &h.mask)?,
                ssim_dynamic: ssim_masked(img, &h.rgb, &h.mask)?,
            });
        }
        Ok(EvalReport {
            mean_psnr: mean(views.iter().map(|v| v.psnr)).unwrap_or(f64::NAN),
            mean_ssim: mean(views.iter().map(|v| v.ssim)).unwrap_or(f64::NAN),
            mean_psnr_dynamic: mean(views.iter().filter_map(|v| v.psnr_dynamic)),
            mean_ssim_dynamic: mean(views.iter().filter_map(|v| v.ssim_dynamic)),
            views,
        })
    }

    pub fn to_json(&self) -> Value {
        let views: Vec<Value> = self
            .views
            .iter()
            .map(|v| {
                json!({
                    "view": v.view,
                    "frame": v.frame,
                    "psnr": num(v.psnr),
                    "ssim": num(v.ssim),
                    "psnr_dynamic": opt(v.psnr_dynamic),
                    "ssim_dynamic": opt(v.ssim_dynamic),
                })
            })
            .collect();
        json!({
            "views": views,
            "mean": {
                "psnr": num(self.mean_psnr),
                "ssim": num(self.mean_ssim),
                "psnr_dynamic": opt(self.mean_psnr_dynamic),
                "ssim_dynamic": opt(self.mean_ssim_dynamic),
            }
        })
    }
}

/// Renders every held-out view of `ds` at its own time.
pub fn render_heldout(
    params: &NetworkParams,
    scene: &SceneInfo,
    ds: &SceneDataset,
    samples: usize,
) -> Result<Vec<Image>> {
    let ndc = scene.ndc();
    ds.heldout
        .iter()
        .map(|h| {
            let cam = ds.camera_at(h.pose);
            render_image(params, &ndc, &cam, h.frame as f64, h.frame as f64, samples)
        })
        .collect()
}

pub fn evaluate(
    params: &NetworkParams,
    scene: &SceneInfo,
    ds: &SceneDataset,
    samples: usize,
) -> Result<EvalReport> {
    let renders = render_heldout(params, scene, ds, samples)?;
    EvalReport::score(ds, &renders)
}
