//! Calibrated point-light rigs and the plain-text light file.

use std::path::Path;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::brdf::Vec3;
use crate::error::{format_err, invalid, Result};
use crate::geometry::spiral_hemisphere;

const UNIT_TOL: f64 = 1e-6;

/// `Q` distant point lights with intensities, seen from a fixed view direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LightingRig {
    lights: Vec<Vec3>,
    intensities: Vec<f64>,
    view: Vec3,
}

impl LightingRig {
    pub fn new(lights: Vec<Vec3>, intensities: Vec<f64>, view: Vec3) -> Result<Self> {
        if lights.len() < 3 {
            return invalid(format!("a rig needs at least 3 lights, got {}", lights.len()));
        }
        if intensities.len() != lights.len() {
            return invalid("one intensity per light required");
        }
        if lights.iter().chain(std::iter::once(&view)).any(|l| (l.norm() - 1.0).abs() > UNIT_TOL) {
            return invalid("light and view directions must be unit vectors");
        }
        if intensities.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return invalid("light intensities must be positive");
        }
        Ok(Self { lights, intensities, view })
    }

    /// Unit intensities, view along +z.
    pub fn from_directions(lights: Vec<Vec3>) -> Result<Self> {
        let q = lights.len();
        Self::new(lights, vec![1.0; q], Vector3::z())
    }

    /// `q` lights on the upper hemisphere spiral.
    pub fn hemisphere(q: usize) -> Result<Self> {
        Self::from_directions(spiral_hemisphere(q, &Vector3::z()))
    }

    pub fn q(&self) -> usize {
        self.lights.len()
    }

    pub fn lights(&self) -> &[Vec3] {
        &self.lights
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn view(&self) -> &Vec3 {
        &self.view
    }

    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        if keep.iter().any(|&i| i >= self.q()) {
            return invalid("light index out of range");
        }
        Self::new(
            keep.iter().map(|&i| self.lights[i]).collect(),
            keep.iter().map(|&i| self.intensities[i]).collect(),
            self.view,
        )
    }

    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (l, e) in self.lights.iter().zip(&self.intensities) {
            for v in l.iter().chain(std::iter::once(e)) {
                h.update(v.to_le_bytes());
            }
        }
        for v in self.view.iter() {
            h.update(v.to_le_bytes());
        }
        h.finalize().into()
    }

    /// `lx ly lz intensity` per line; `Display` of `f64` round-trips exactly.
    pub fn to_light_file(&self) -> String {
        self.lights
            .iter()
            .zip(&self.intensities)
            .map(|(l, e)| format!("{} {} {} {}\n", l.x, l.y, l.z, e))
            .collect()
    }

    /// Parses `lx ly lz [intensity]` lines; `#` starts a comment. Directions
    /// are normalized.
    pub fn parse_light_file(text: &str) -> Result<Self> {
        let mut lights = Vec::new();
        let mut intensities = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .or_else(|_| format_err(format!("light file line {}: not a number", no + 1)))?;
            if vals.len() != 3 && vals.len() != 4 {
                return format_err(format!("light file line {}: expected 3 or 4 values", no + 1));
            }
            let l = Vector3::new(vals[0], vals[1], vals[2]);
            let norm = l.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return format_err(format!("light file line {}: zero direction", no + 1));
            }
            if (norm - 1.0).abs() > 1e-3 {
                log::warn!("light file line {}: direction norm {norm:.4}, normalizing", no + 1);
            }
            lights.push(if (norm - 1.0).abs() <= f64::EPSILON { l } else { l / norm });
            intensities.push(vals.get(3).copied().unwrap_or(1.0));
        }
        Self::new(lights, intensities, Vector3::z())
            .map_err(|e| crate::Error::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_light_file(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_light_file())?;
        Ok(())
    }
}
