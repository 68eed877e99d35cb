//! Linear RGB images in `[0, 1]` with 8-bit PNG and ASCII PPM IO.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB.
    pub data: Vec<f64>,
}

/// `clamp(round(255 v))`.
pub fn to_byte(v: f64) -> u8 {
    (255.0 * v).round().clamp(0.0, 255.0) as u8
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Invalid(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_byte(v)).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Image::from_data(
            width,
            height,
            bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        )
    }

    /// Snaps every value to the nearest 8-bit level.
    pub fn quantized(&self) -> Self {
        Image::from_bytes(self.width, self.height, &self.to_bytes()).expect("same size")
    }

    /// Rec. 601 luma.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_png(
            path,
            self.width,
            self.height,
            png::ColorType::Rgb,
            &self.to_bytes(),
        )
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let (w, h, bytes) = read_png(path, png::ColorType::Rgb)?;
        Image::from_bytes(w, h, &bytes)
    }

    /// ASCII `P3`.
    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut text = format!("P3\n{} {}\n255\n", self.width, self.height);
        for row in self.to_bytes().chunks(3 * self.width) {
            let line: Vec<String> = row.iter().map(|b| b.to_string()).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        out.write_all(text.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes PNG or PPM depending on the extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => self.write_ppm(path),
            _ => self.write_png(path),
        }
    }
}

/// Boolean mask as a black/white grayscale PNG.
pub fn write_mask_png(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_png(path, width, height, png::ColorType::Grayscale, &bytes)
}

pub fn read_mask_png(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let (w, h, bytes) = read_png(path, png::ColorType::Grayscale)?;
    Ok((w, h, bytes.iter().map(|&b| b >= 128).collect()))
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    bytes: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::format(path, e))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| Error::format(path, e))?;
    writer.finish().map_err(|e| Error::format(path, e))
}

fn read_png(path: &Path, want: png::ColorType) -> Result<(usize, usize, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| Error::format(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e))?;
    if info.color_type != want || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(
            path,
            format!(
                "expected 8-bit {want:?}, found {:?} {:?}",
                info.bit_depth, info.color_type
            ),
        ));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_conversion_rounds_and_clamps() {
        assert_eq!(to_byte(-0.2), 0);
        assert_eq!(to_byte(1.7), 255);
        assert_eq!(to_byte(0.5), 128);
        assert_eq!(to_byte(100.0 / 255.0), 100);
    }

    #[test]
    fn png_and_ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(5, 3);
        img.set(1, 2, [1.0, 0.25, 0.0]);
        img.set(2, 4, [0.1, 0.9, 0.5]);
        let img = img.quantized();
        let p = dir.path().join("a.png");
        img.save(&p).unwrap();
        assert_eq!(Image::read_png(&p).unwrap(), img);
        let q = dir.path().join("a.ppm");
        img.save(&q).unwrap();
        let text = std::fs::read_to_string(&q).unwrap();
        assert!(text.starts_with("P3\n5 3\n255\n"));
        assert!(text.contains("255 64 0"));
        let m = dir.path().join("m.png");
        write_mask_png(&m, 2, 2, &[true, false, false, true]).unwrap();
        assert_eq!(
            read_mask_png(&m).unwrap(),
            (2, 2, vec![true, false, false, true])
        );
        assert!(Image::read_png(&m).is_err());
    }
}
