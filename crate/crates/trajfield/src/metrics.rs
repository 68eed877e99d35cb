//! PSNR and SSIM on unit-range images.

use crate::error::{Error, Result};
use crate::image::Image;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Mean squared error over all channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.data.len().max(1) as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in dB; identical images give `+inf`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// PSNR over the pixels where `mask` is set; `None` for an empty mask.
pub fn psnr_masked(a: &Image, b: &Image, mask: &[bool]) -> Result<Option<f64>> {
    check_dims(a, b)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        for c in 0..3 {
            let d = a.data[3 * i + c] - b.data[3 * i + c];
            sum += d * d;
        }
        count += 3;
    }
    Ok((count > 0).then(|| psnr_from_mse(sum / count as f64)))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.iter().map(|v| v / s).collect()
}

/// Per-window SSIM of the luma channels, indexed by window center, over
/// the region where the window fits.
pub fn ssim_map(a: &Image, b: &Image) -> Result<(usize, usize, Vec<f64>)> {
    check_dims(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Invalid(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}"
        )));
    }
    let (ya, yb) = (a.luma(), b.luma());
    let g = gaussian_window();
    let (w, h) = (a.width - SSIM_WINDOW + 1, a.height - SSIM_WINDOW + 1);
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let k = g[i] * g[j];
                    let idx = (r + i) * a.width + c + j;
                    let (x, y) = (ya[idx], yb[idx]);
                    ma += k * x;
                    mb += k * y;
                    saa += k * x * x;
                    sbb += k * y * y;
                    sab += k * x * y;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            out.push(
                ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                    / ((ma * ma + mb * mb + C1) * (va + vb + C2)),
            );
        }
    }
    Ok((w, h, out))
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    let (_, _, m) = ssim_map(a, b)?;
    Ok(m.iter().sum::<f64>() / m.len() as f64)
}

/// Mean SSIM over windows centered on masked pixels; `None` if no window
/// qualifies.
pub fn ssim_masked(a: &Image, b: &Image, mask: &[bool]) -> Result<Option<f64>> {
    let (w, h, m) = ssim_map(a, b)?;
    let half = SSIM_WINDOW / 2;
    let (mut sum, mut count) = (0.0, 0usize);
    for r in 0..h {
        for c in 0..w {
            if mask[(r + half) * a.width + c + half] {
                sum += m[r * w + c];
                count += 1;
            }
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..32 * 24 * 3).map(|_| rng.gen::<f64>()).collect();
        Image::from_data(32, 24, data).unwrap()
    }

    #[test]
    fn identical_images() {
        let a = noise(1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_is_twenty_db() {
        let a = Image::from_data(16, 16, vec![0.3; 16 * 16 * 3]).unwrap();
        let b = Image::from_data(16, 16, vec![0.4; 16 * 16 * 3]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let mask = vec![true; 256];
        assert!((psnr_masked(&a, &b, &mask).unwrap().unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr_masked(&a, &b, &[false; 256]).unwrap(), None);
    }

    #[test]
    fn independent_noise_is_uncorrelated() {
        for s in 0..10 {
            let v = ssim(&noise(2 * s), &noise(2 * s + 1)).unwrap();
            assert!(v.abs() < 0.1, "{v}");
        }
    }

    #[test]
    fn size_errors() {
        assert!(psnr(&Image::new(4, 4), &Image::new(4, 5)).is_err());
        assert!(ssim(&Image::new(8, 8), &Image::new(8, 8)).is_err());
    }
}
