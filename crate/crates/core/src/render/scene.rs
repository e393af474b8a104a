//! Synthetic scenes with ground truth.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::brdf::{BrdfDictionary, TabulatedBrdf, Vec3};
use crate::error::{invalid, Result};
use crate::reflectance::AbundanceMatrix;

use super::exemplar::{render_exemplar, render_pixel};
use super::rig::LightingRig;
use super::stack::{ImageStack, NormalMap};

#[derive(Debug, Clone)]
pub enum SceneGeometry {
    /// Orthographic sphere filling a `size × size` image.
    Sphere { size: usize },
    Flat { width: usize, height: usize, normal: Vec3 },
    Map(NormalMap),
}

#[derive(Debug, Clone)]
pub enum SceneReflectance {
    Single(TabulatedBrdf),
    /// One abundance vector for every pixel.
    Uniform(Vec<f64>),
    /// One abundance vector per raster pixel; entries for masked-out pixels are ignored.
    PerPixel(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub geometry: SceneGeometry,
    pub reflectance: SceneReflectance,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub stack: ImageStack,
    pub normals: NormalMap,
    /// Ground-truth coefficients (`C·M` rows) for dictionary-based reflectance.
    pub abundances: Option<AbundanceMatrix>,
}

/// Normal of pixel `(x, y)` on an orthographic sphere of the given image size.
pub fn sphere_normal(size: usize, x: usize, y: usize) -> Option<Vec3> {
    let c = (size as f64 - 1.0) / 2.0;
    let r = size as f64 / 2.0;
    let (u, v) = ((x as f64 - c) / r, (c - y as f64) / r);
    let z2 = 1.0 - u * u - v * v;
    if z2 <= 1e-6 {
        return None;
    }
    Some(Vector3::new(u, v, z2.sqrt()))
}

pub fn scene_normals(geometry: &SceneGeometry) -> Result<NormalMap> {
    match geometry {
        SceneGeometry::Sphere { size } => {
            let normals = (0..size * size).map(|p| sphere_normal(*size, p % size, p / size)).collect();
            NormalMap::new(*size, *size, normals)
        }
        SceneGeometry::Flat { width, height, normal } => {
            if (normal.norm() - 1.0).abs() > 1e-9 || normal.z <= 0.0 {
                return invalid("flat normal must be a front-facing unit vector");
            }
            NormalMap::new(*width, *height, vec![Some(*normal); width * height])
        }
        SceneGeometry::Map(m) => Ok(m.clone()),
    }
}

fn expand(c: &[f64], m: usize, channels: usize) -> Result<Vec<f64>> {
    if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return invalid("abundances must be finite and non-negative");
    }
    if c.len() == m * channels {
        Ok(c.to_vec())
    } else if c.len() == m {
        Ok(c.iter().copied().cycle().take(m * channels).collect())
    } else {
        invalid(format!("abundance vector has {} entries, expected {m}", c.len()))
    }
}

/// Renders every masked-in pixel, adds clamped Gaussian noise, and returns
/// the ground truth alongside the stack.
pub fn render_scene(spec: &SceneSpec, dict: Option<&BrdfDictionary>, rig: &LightingRig) -> Result<RenderedScene> {
    let normals = scene_normals(&spec.geometry)?;
    let (w, h) = (normals.width, normals.height);
    let pixels: Vec<usize> = (0..w * h).filter(|&p| normals.normals[p].is_some()).collect();

    let (channels, columns): (usize, Option<Vec<Vec<f64>>>) = match &spec.reflectance {
        SceneReflectance::Single(rho) => (rho.channels(), None),
        refl => {
            let d = match dict {
                Some(d) => d,
                None => return invalid("dictionary-based reflectance needs a dictionary"),
            };
            let (m, ch) = (d.len(), d.channels());
            let cols = match refl {
                SceneReflectance::Uniform(c) => {
                    let c = expand(c, m, ch)?;
                    vec![c; pixels.len()]
                }
                SceneReflectance::PerPixel(all) => {
                    if all.len() != w * h {
                        return invalid("one abundance vector per pixel required");
                    }
                    pixels.iter().map(|&p| expand(&all[p], m, ch)).collect::<Result<_>>()?
                }
                SceneReflectance::Single(_) => unreachable!(),
            };
            (ch, Some(cols))
        }
    };

    let profiles: Vec<Vec<f64>> = pixels
        .par_iter()
        .enumerate()
        .map(|(k, &p)| {
            let n = normals.normals[p].expect("masked-in");
            match (&spec.reflectance, &columns) {
                (SceneReflectance::Single(rho), _) => render_pixel(rho, &n, rig),
                (_, Some(cols)) => Ok(render_exemplar(dict.expect("checked"), &n, rig)?.apply(&cols[k])),
                _ => unreachable!(),
            }
        })
        .collect::<Result<_>>()?;

    let k = channels * rig.q();
    let mut data = vec![0.0; w * h * k];
    for (&p, prof) in pixels.iter().zip(&profiles) {
        data[p * k..(p + 1) * k].copy_from_slice(prof);
    }
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for &p in &pixels {
            for v in &mut data[p * k..(p + 1) * k] {
                *v = (*v + noise.sample(&mut rng)).max(0.0);
            }
        }
    } else if spec.noise_sigma < 0.0 || spec.noise_sigma.is_nan() {
        return invalid("noise sigma must be >= 0");
    }

    let mask = normals.mask();
    let stack = ImageStack::new(w, h, channels, rig.clone(), data, mask)?;
    let abundances = match columns {
        Some(cols) => {
            let index = pixels.iter().map(|&p| ((p % w) as u32, (p / w) as u32)).collect();
            Some(AbundanceMatrix::from_columns(&cols, index)?)
        }
        None => None,
    };
    Ok(RenderedScene { stack, normals, abundances })
}

/// Smoothly varying mixture of the given atoms: each atom gets a Gaussian
/// bump at a random position, and weights are normalized to sum to one.
pub fn smooth_mixture(width: usize, height: usize, atoms: &[usize], m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if atoms.is_empty() || atoms.iter().any(|&a| a >= m) {
        return invalid("mixture atoms must be valid dictionary indices");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(f64, f64)> = atoms.iter().map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))).collect();
    let width_sq = 2.0 * 0.35f64.powi(2);
    Ok((0..width * height)
        .map(|p| {
            let (u, v) = ((p % width) as f64 / width as f64, (p / width) as f64 / height as f64);
            let w: Vec<f64> = centers
                .iter()
                .map(|(cu, cv)| (-((u - cu).powi(2) + (v - cv).powi(2)) / width_sq).exp() + 0.05)
                .collect();
            let total: f64 = w.iter().sum();
            let mut c = vec![0.0; m];
            for (&a, wk) in atoms.iter().zip(&w) {
                c[a] += wk / total;
            }
            c
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::{HalfDiffGrid, ParametricSweep};
    use crate::reflectance::prox::numerical_rank;

    fn dict() -> BrdfDictionary {
        BrdfDictionary::from_sweep(&ParametricSweep::default(), HalfDiffGrid::with_divisor(6).unwrap()).unwrap()
    }

    #[test]
    fn flat_single_atom() {
        let d = dict();
        let rig = LightingRig::hemisphere(20).unwrap();
        let n = Vector3::new(0.2, -0.1, 1.0).normalize();
        let spec = SceneSpec {
            geometry: SceneGeometry::Flat { width: 4, height: 3, normal: n },
            reflectance: SceneReflectance::Single(d.atom(5).clone()),
            noise_sigma: 0.0,
            seed: 0,
        };
        let s = render_scene(&spec, None, &rig).unwrap();
        let expected = render_pixel(d.atom(5), &n, &rig).unwrap();
        for p in 0..12 {
            assert_eq!(s.stack.profile(p), expected.as_slice());
        }
    }

    #[test]
    fn sphere_silhouette_masked() {
        let d = dict();
        let rig = LightingRig::hemisphere(10).unwrap();
        let spec = SceneSpec {
            geometry: SceneGeometry::Sphere { size: 16 },
            reflectance: SceneReflectance::Uniform(vec![1.0 / 20.0; 20]),
            noise_sigma: 0.01,
            seed: 3,
        };
        let s = render_scene(&spec, Some(&d), &rig).unwrap();
        assert!(!s.stack.mask()[0] && !s.stack.mask()[15]);
        assert!(s.stack.mask()[8 * 16 + 8]);
        assert!(s.stack.profile(0).iter().all(|&v| v == 0.0));
        assert_eq!(s.abundances.unwrap().len(), s.stack.valid_pixels().len());
    }

    #[test]
    fn mixture_has_rank_three() {
        let d = dict();
        let rig = LightingRig::hemisphere(10).unwrap();
        let mix = smooth_mixture(24, 24, &[2, 9, 15], d.len(), 7).unwrap();
        let spec = SceneSpec {
            geometry: SceneGeometry::Sphere { size: 24 },
            reflectance: SceneReflectance::PerPixel(mix),
            noise_sigma: 0.0,
            seed: 0,
        };
        let s = render_scene(&spec, Some(&d), &rig).unwrap();
        assert_eq!(numerical_rank(s.abundances.unwrap().values()).unwrap(), 3);
    }

    #[test]
    fn identical_pixels_identical_profiles() {
        let d = dict();
        let rig = LightingRig::hemisphere(30).unwrap();
        let spec = SceneSpec {
            geometry: SceneGeometry::Flat { width: 5, height: 5, normal: Vector3::z() },
            reflectance: SceneReflectance::Uniform((0..20).map(|i| i as f64 * 0.01).collect()),
            noise_sigma: 0.0,
            seed: 0,
        };
        let s = render_scene(&spec, Some(&d), &rig).unwrap();
        assert!((1..25).all(|p| s.stack.profile(p) == s.stack.profile(0)));
        assert!(s.stack.profile(0).iter().all(|&v| v >= 0.0));
    }
}
