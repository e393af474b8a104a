//! Analytic reflectance models used to build desk-scale dictionaries.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

use super::grid::HalfDiffGrid;
use super::halfdiff::{from_half_diff, Vec3};
use super::tabulated::TabulatedBrdf;

/// Cosine floor applied to `n·l` and `n·v` inside the models. Keeps the
/// `1/cos` factors bounded for the below-horizon nodes that tabulation visits.
pub const COS_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParametricBrdfSpec {
    Lambertian { albedo: f64 },
    /// Energy-normalized Blinn-Phong lobe `(e + 8)/(8π) · (n·h)^e`.
    BlinnPhong { diffuse: f64, specular: f64, exponent: f64 },
    WardIsotropic { diffuse: f64, specular: f64, alpha: f64 },
    /// Beckmann distribution, Schlick Fresnel, Torrance-Sparrow masking.
    CookTorrance { diffuse: f64, specular: f64, roughness: f64, f0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Lambertian,
    BlinnPhong,
    WardIsotropic,
    CookTorrance,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Lambertian => "lambertian",
            ModelKind::BlinnPhong => "blinn-phong",
            ModelKind::WardIsotropic => "ward-isotropic",
            ModelKind::CookTorrance => "cook-torrance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "lambertian" => ModelKind::Lambertian,
            "blinn-phong" => ModelKind::BlinnPhong,
            "ward-isotropic" | "ward" => ModelKind::WardIsotropic,
            "cook-torrance" => ModelKind::CookTorrance,
            other => return invalid(format!("unknown BRDF model '{other}'")),
        })
    }
}

impl ParametricBrdfSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ParametricBrdfSpec::Lambertian { .. } => ModelKind::Lambertian,
            ParametricBrdfSpec::BlinnPhong { .. } => ModelKind::BlinnPhong,
            ParametricBrdfSpec::WardIsotropic { .. } => ModelKind::WardIsotropic,
            ParametricBrdfSpec::CookTorrance { .. } => ModelKind::CookTorrance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let ok = match *self {
            ParametricBrdfSpec::Lambertian { albedo } => nonneg(albedo),
            ParametricBrdfSpec::BlinnPhong { diffuse, specular, exponent } => {
                nonneg(diffuse) && nonneg(specular) && pos(exponent)
            }
            ParametricBrdfSpec::WardIsotropic { diffuse, specular, alpha } => {
                nonneg(diffuse) && nonneg(specular) && pos(alpha)
            }
            ParametricBrdfSpec::CookTorrance { diffuse, specular, roughness, f0 } => {
                nonneg(diffuse) && nonneg(specular) && pos(roughness) && (0.0..=1.0).contains(&f0)
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("parameters out of range: {self:?}"))
        }
    }

    /// Short stable label, e.g. `ward-isotropic(d=0.6,s=0.4,a=0.1)`.
    pub fn label(&self) -> String {
        match *self {
            ParametricBrdfSpec::Lambertian { albedo } => format!("lambertian(a={albedo})"),
            ParametricBrdfSpec::BlinnPhong { diffuse, specular, exponent } => {
                format!("blinn-phong(d={diffuse},s={specular},e={exponent})")
            }
            ParametricBrdfSpec::WardIsotropic { diffuse, specular, alpha } => {
                format!("ward-isotropic(d={diffuse},s={specular},a={alpha})")
            }
            ParametricBrdfSpec::CookTorrance { diffuse, specular, roughness, f0 } => {
                format!("cook-torrance(d={diffuse},s={specular},m={roughness},f0={f0})")
            }
        }
    }

    /// Analytic evaluation; never negative.
    pub fn eval(&self, n: &Vec3, l: &Vec3, v: &Vec3) -> f64 {
        let cos_i = n.dot(l).max(COS_FLOOR);
        let cos_o = n.dot(v).max(COS_FLOOR);
        let h = (l + v).normalize();
        let cos_h = n.dot(&h).clamp(0.0, 1.0);
        let value = match *self {
            ParametricBrdfSpec::Lambertian { albedo } => albedo / PI,
            ParametricBrdfSpec::BlinnPhong { diffuse, specular, exponent } => {
                diffuse / PI + specular * (exponent + 8.0) / (8.0 * PI) * cos_h.powf(exponent)
            }
            ParametricBrdfSpec::WardIsotropic { diffuse, specular, alpha } => {
                let spec = if cos_h <= 1e-6 {
                    0.0
                } else {
                    let tan2 = (1.0 - cos_h * cos_h) / (cos_h * cos_h);
                    (-tan2 / (alpha * alpha)).exp()
                        / (4.0 * PI * alpha * alpha * (cos_i * cos_o).sqrt())
                };
                diffuse / PI + specular * spec
            }
            ParametricBrdfSpec::CookTorrance { diffuse, specular, roughness, f0 } => {
                let spec = if cos_h <= 1e-6 {
                    0.0
                } else {
                    let c2 = cos_h * cos_h;
                    let m2 = roughness * roughness;
                    let d = (-(1.0 - c2) / (c2 * m2)).exp() / (PI * m2 * c2 * c2);
                    let v_h = v.dot(&h).clamp(1e-6, 1.0);
                    let f = f0 + (1.0 - f0) * (1.0 - v_h).powi(5);
                    let g = (2.0 * cos_h * cos_o / v_h).min(2.0 * cos_h * cos_i / v_h).min(1.0);
                    d * f * g / (4.0 * cos_i * cos_o)
                };
                diffuse / PI + specular * spec
            }
        };
        value.max(0.0)
    }

    /// Samples the model at every grid node (one channel).
    pub fn tabulate(&self, grid: HalfDiffGrid) -> Result<TabulatedBrdf> {
        self.validate()?;
        let values = (0..grid.len())
            .map(|idx| {
                let (n, l, v) = from_half_diff(grid.node(idx));
                self.eval(&n, &l, &v)
            })
            .collect();
        TabulatedBrdf::new(grid, 1, values)
    }
}

/// Parameter sweep producing one atom per `(model, roughness, albedo pair)`.
///
/// Roughness is the Ward `α` / Beckmann `m`; for Blinn-Phong it maps to the
/// exponent `2/α² − 2`. Lambertian atoms ignore roughness and use the
/// diffuse + specular albedo sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricSweep {
    pub models: Vec<ModelKind>,
    pub roughness: Vec<f64>,
    pub albedos: Vec<(f64, f64)>,
    pub f0: f64,
}

impl Default for ParametricSweep {
    /// 2 models × 5 roughness levels × 2 albedo pairs = 20 atoms.
    fn default() -> Self {
        Self {
            models: vec![ModelKind::WardIsotropic, ModelKind::CookTorrance],
            roughness: vec![0.08, 0.14, 0.22, 0.32, 0.45],
            albedos: vec![(0.55, 0.45), (0.25, 0.75)],
            f0: 0.05,
        }
    }
}

impl ParametricSweep {
    pub fn specs(&self) -> Vec<ParametricBrdfSpec> {
        let mut out = Vec::new();
        for &model in &self.models {
            if model == ModelKind::Lambertian {
                for &(d, s) in &self.albedos {
                    out.push(ParametricBrdfSpec::Lambertian { albedo: d + s });
                }
                continue;
            }
            for &r in &self.roughness {
                for &(diffuse, specular) in &self.albedos {
                    out.push(match model {
                        ModelKind::BlinnPhong => ParametricBrdfSpec::BlinnPhong {
                            diffuse,
                            specular,
                            exponent: (2.0 / (r * r) - 2.0).max(1.0),
                        },
                        ModelKind::WardIsotropic => {
                            ParametricBrdfSpec::WardIsotropic { diffuse, specular, alpha: r }
                        }
                        ModelKind::CookTorrance => ParametricBrdfSpec::CookTorrance {
                            diffuse,
                            specular,
                            roughness: r,
                            f0: self.f0,
                        },
                        ModelKind::Lambertian => unreachable!(),
                    });
                }
            }
        }
        out
    }
}
