//! Multi-light image stacks and normal maps.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::brdf::Vec3;
use crate::error::{format_err, invalid, Error, Result};
use crate::io::{load_pfm, load_png, save_pfm, save_png16, save_png8, Raster};

use super::rig::LightingRig;

/// `Q` registered images under the lights of `rig`. Each pixel's profile is
/// stored channel-major: `C` blocks of `Q` intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    width: usize,
    height: usize,
    channels: usize,
    rig: LightingRig,
    data: Vec<f64>,
    mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pfm,
    Png16,
}

impl ImageStack {
    pub fn new(width: usize, height: usize, channels: usize, rig: LightingRig, data: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return invalid("stacks have 1 or 3 channels");
        }
        if data.len() != width * height * channels * rig.q() || mask.len() != width * height {
            return invalid("stack data or mask size does not match dimensions");
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("intensities must be finite and non-negative");
        }
        Ok(Self { width, height, channels, rig, data, mask })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn q(&self) -> usize {
        self.rig.q()
    }

    pub fn rig(&self) -> &LightingRig {
        &self.rig
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn profile_len(&self) -> usize {
        self.channels * self.q()
    }

    /// Intensity profile of pixel `p = y·width + x`.
    pub fn profile(&self, p: usize) -> &[f64] {
        let k = self.profile_len();
        &self.data[p * k..(p + 1) * k]
    }

    /// Indices of masked-in pixels in raster order.
    pub fn valid_pixels(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&p| self.mask[p]).collect()
    }

    /// Rounds every intensity to the nearest `f32`, the precision of PFM files.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    /// Image `i` as a raster.
    pub fn image(&self, i: usize) -> Raster {
        let (q, c) = (self.q(), self.channels);
        let mut data = Vec::with_capacity(self.width * self.height * c);
        for p in 0..self.width * self.height {
            let prof = self.profile(p);
            for ch in 0..c {
                data.push(prof[ch * q + i] as f32);
            }
        }
        Raster { width: self.width, height: self.height, channels: c, data }
    }

    pub fn from_images(images: &[Raster], mask: Option<Vec<bool>>, rig: LightingRig) -> Result<Self> {
        if images.len() != rig.q() {
            return format_err(format!("{} images but {} lights", images.len(), rig.q()));
        }
        let first = &images[0];
        let (w, h, c) = (first.width, first.height, first.channels);
        if images.iter().any(|im| im.width != w || im.height != h || im.channels != c) {
            return format_err("images differ in size or channel count");
        }
        let q = rig.q();
        let mut data = vec![0.0; w * h * c * q];
        for (i, im) in images.iter().enumerate() {
            for p in 0..w * h {
                for ch in 0..c {
                    data[p * c * q + ch * q + i] = im.data[p * c + ch] as f64;
                }
            }
        }
        let mask = mask.unwrap_or_else(|| vec![true; w * h]);
        Self::new(w, h, c, rig, data, mask).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes `lights.txt`, `img_NNNN.{pfm,png}` and `mask.png`.
    pub fn write_dir(&self, dir: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.rig.save(dir.join("lights.txt"))?;
        for i in 0..self.q() {
            let img = self.image(i);
            match format {
                ImageFormat::Pfm => save_pfm(dir.join(format!("img_{i:04}.pfm")), &img)?,
                ImageFormat::Png16 => save_png16(dir.join(format!("img_{i:04}.png")), &img)?,
            }
        }
        let mask = Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        };
        save_png8(dir.join("mask.png"), &mask)
    }

    /// Reads a directory with a light file (`lights.txt`), images in
    /// lexicographic order (`.pfm` or `.png`) and an optional `mask.png`.
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let rig = LightingRig::load(dir.join("lights.txt"))?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let ext = p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
                let is_mask = p.file_stem().and_then(|s| s.to_str()) == Some("mask");
                !is_mask && matches!(ext.as_deref(), Some("pfm") | Some("png"))
            })
            .collect();
        files.sort();
        let images = files
            .iter()
            .map(|p| match p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
                Some("pfm") => load_pfm(p),
                _ => load_png(p),
            })
            .collect::<Result<Vec<_>>>()?;
        if images.is_empty() {
            return format_err("no images found");
        }
        let mask_path = dir.join("mask.png");
        let mask = if mask_path.exists() {
            let m = load_png(&mask_path)?;
            if m.channels != 1 {
                return format_err("mask must be single-channel");
            }
            Some(m.data.iter().map(|&v| v > 0.0).collect())
        } else {
            None
        };
        Self::from_images(&images, mask, rig)
    }
}

/// Per-pixel unit normals; `None` where the pixel is masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Option<Vec3>>,
}

impl NormalMap {
    pub fn new(width: usize, height: usize, normals: Vec<Option<Vec3>>) -> Result<Self> {
        if normals.len() != width * height {
            return invalid("normal map size mismatch");
        }
        Ok(Self { width, height, normals })
    }

    pub fn mask(&self) -> Vec<bool> {
        self.normals.iter().map(|n| n.is_some()).collect()
    }

    /// Masked pixels are written as zero vectors.
    pub fn to_raster(&self) -> Raster {
        let data = self
            .normals
            .iter()
            .flat_map(|n| n.map_or([0.0; 3], |n| [n.x as f32, n.y as f32, n.z as f32]))
            .collect();
        Raster { width: self.width, height: self.height, channels: 3, data }
    }

    pub fn from_raster(r: &Raster) -> Result<Self> {
        if r.channels != 3 {
            return format_err("normal maps have 3 channels");
        }
        let normals = r
            .data
            .chunks_exact(3)
            .map(|c| {
                let n = Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64);
                (n.norm() > 0.0).then(|| n.normalize())
            })
            .collect();
        Self::new(r.width, r.height, normals)
    }

    /// `(n + 1) / 2` colour coding; masked pixels black.
    pub fn false_color(&self) -> Raster {
        let data = self
            .normals
            .iter()
            .flat_map(|n| n.map_or([0.0; 3], |n| [n.x, n.y, n.z].map(|v| ((v + 1.0) * 0.5) as f32)))
            .collect();
        Raster { width: self.width, height: self.height, channels: 3, data }
    }

    pub fn save_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        save_pfm(path, &self.to_raster())
    }

    pub fn load_pfm(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_raster(&load_pfm(path)?)
    }

    pub fn save_false_color(&self, path: impl AsRef<Path>) -> Result<()> {
        save_png8(path, &self.false_color())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack() -> ImageStack {
        let rig = LightingRig::hemisphere(4).unwrap();
        let (w, h, c) = (3, 2, 3);
        let data = (0..w * h * c * 4).map(|i| ((i as f64) * 0.731).sin().abs()).collect();
        ImageStack::new(w, h, c, rig, data, vec![true, false, true, true, true, false]).unwrap()
    }

    #[test]
    fn pfm_directory_round_trip() {
        let mut s = stack();
        s.quantize_f32();
        let dir = tempfile::tempdir().unwrap();
        s.write_dir(dir.path(), ImageFormat::Pfm).unwrap();
        let back = ImageStack::read_dir(dir.path()).unwrap();
        assert_eq!(back.mask(), s.mask());
        assert_eq!(back.data, s.data);
    }

    #[test]
    fn count_mismatch_rejected() {
        let s = stack();
        let dir = tempfile::tempdir().unwrap();
        s.write_dir(dir.path(), ImageFormat::Pfm).unwrap();
        std::fs::write(dir.path().join("lights.txt"), "0 0 1\n1 0 1\n0 1 1\n").unwrap();
        assert!(ImageStack::read_dir(dir.path()).is_err());
    }

    #[test]
    fn normal_map_round_trip() {
        let n = Vector3::new(0.25f32 as f64, 0.5, 1.0).normalize();
        let n = Vector3::new(n.x as f32 as f64, n.y as f32 as f64, n.z as f32 as f64);
        let map = NormalMap::new(2, 1, vec![Some(n), None]).unwrap();
        let back = NormalMap::from_raster(&map.to_raster()).unwrap();
        assert!(back.normals[1].is_none());
        assert!((back.normals[0].unwrap() - n).norm() < 1e-7);
    }
}
