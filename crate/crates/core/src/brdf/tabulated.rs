//! Tabulated reflectance on a half-diff grid.

use crate::error::{invalid, Result};

use super::grid::{HalfDiffGrid, SampleWeights};
use super::halfdiff::{to_half_diff, Vec3};

/// A BRDF sampled on a [`HalfDiffGrid`], one or three channels, in sr⁻¹.
///
/// Values are stored channel-major: all nodes of channel 0, then channel 1, …
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedBrdf {
    grid: HalfDiffGrid,
    channels: usize,
    values: Vec<f64>,
}

impl TabulatedBrdf {
    pub fn new(grid: HalfDiffGrid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return invalid(format!("channel count must be 1 or 3, got {channels}"));
        }
        if values.len() != channels * grid.len() {
            return invalid(format!(
                "expected {} values, got {}",
                channels * grid.len(),
                values.len()
            ));
        }
        if let Some(bad) = values.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return invalid(format!("BRDF values must be finite and >= 0 (found {bad})"));
        }
        Ok(Self { grid, channels, values })
    }

    pub fn constant(grid: HalfDiffGrid, channels: usize, k: f64) -> Result<Self> {
        Self::new(grid, channels, vec![k; channels * grid.len()])
    }

    pub fn zeros(grid: HalfDiffGrid, channels: usize) -> Result<Self> {
        Self::constant(grid, channels, 0.0)
    }

    /// Stacks single-channel tables into one multi-channel table.
    pub fn from_channels(parts: &[TabulatedBrdf]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| {
            crate::Error::InvalidArgument("no channels given".into())
        })?;
        if parts.iter().any(|p| p.grid != first.grid || p.channels != 1) {
            return invalid("channels must be single-channel tables on one grid");
        }
        let values = parts.iter().flat_map(|p| p.values.iter().copied()).collect();
        Self::new(first.grid, parts.len(), values)
    }

    pub fn grid(&self) -> HalfDiffGrid {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let t = self.grid.len();
        &self.values[ch * t..(ch + 1) * t]
    }

    /// Evaluates `sᵀρ` per channel. Backfacing configurations return zeros.
    pub fn eval(&self, n: &Vec3, l: &Vec3, v: &Vec3) -> Result<Vec<f64>> {
        if n.dot(l) <= 0.0 || n.dot(v) <= 0.0 {
            return Ok(vec![0.0; self.channels]);
        }
        let sw = self.grid.sample_weights(to_half_diff(n, l, v)?)?;
        Ok(self.eval_weights(&sw))
    }

    pub fn eval_weights(&self, sw: &SampleWeights) -> Vec<f64> {
        (0..self.channels).map(|ch| sw.dot(self.channel(ch))).collect()
    }

    /// Resamples onto another grid by trilinear lookup at the target nodes.
    pub fn resample(&self, target: HalfDiffGrid) -> Result<Self> {
        if target == self.grid {
            return Ok(self.clone());
        }
        let mut values = vec![0.0; self.channels * target.len()];
        for idx in 0..target.len() {
            let sw = self.grid.sample_weights(target.node(idx))?;
            for ch in 0..self.channels {
                values[ch * target.len() + idx] = sw.dot(self.channel(ch));
            }
        }
        Self::new(target, self.channels, values)
    }
}

/// Cosine-weighted RMS difference
/// `sqrt(Σ_i ((ρ̂_i − ρ_i)·max(0, cos θ_h(i)))² / T)`, averaged over channels.
pub fn relative_brdf_error(est: &TabulatedBrdf, truth: &TabulatedBrdf) -> Result<f64> {
    if est.grid != truth.grid || est.channels != truth.channels {
        return invalid("relative_brdf_error: grid or channel mismatch");
    }
    let grid = est.grid;
    let t = grid.len();
    let weights: Vec<f64> = (0..t)
        .map(|i| grid.node(i).theta_h.to_radians().cos().max(0.0))
        .collect();
    let mut total = 0.0;
    for ch in 0..est.channels {
        let (a, b) = (est.channel(ch), truth.channel(ch));
        let sq: f64 = (0..t)
            .map(|i| {
                let d = (a[i] - b[i]) * weights[i];
                d * d
            })
            .sum();
        total += (sq / t as f64).sqrt();
    }
    Ok(total / est.channels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::parametric::ParametricBrdfSpec;

    fn grid() -> HalfDiffGrid {
        HalfDiffGrid::with_divisor(6).unwrap()
    }

    #[test]
    fn constant_evaluates_to_constant() {
        let b = TabulatedBrdf::constant(grid(), 1, 0.7).unwrap();
        let n = Vec3::new(0.1, 0.2, 0.9).normalize();
        let l = Vec3::new(0.5, 0.1, 0.8).normalize();
        let v = Vec3::z();
        assert!((b.eval(&n, &l, &v).unwrap()[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn backfacing_is_zero() {
        let b = TabulatedBrdf::constant(grid(), 3, 0.7).unwrap();
        let l = Vec3::new(0.0, 0.6, -0.8);
        assert_eq!(b.eval(&Vec3::z(), &l, &Vec3::z()).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn rejects_negative_and_wrong_length() {
        assert!(TabulatedBrdf::new(grid(), 1, vec![-1.0; 6750]).is_err());
        assert!(TabulatedBrdf::new(grid(), 1, vec![1.0; 10]).is_err());
        assert!(TabulatedBrdf::new(grid(), 2, vec![1.0; 13500]).is_err());
    }

    #[test]
    fn reciprocity_is_exact() {
        let spec = ParametricBrdfSpec::CookTorrance { diffuse: 0.3, specular: 0.6, roughness: 0.2, f0: 0.04 };
        let b = spec.tabulate(grid()).unwrap();
        let n = Vec3::new(0.2, -0.1, 0.95).normalize();
        let l = Vec3::new(0.6, 0.2, 0.77).normalize();
        let v = Vec3::new(-0.3, 0.1, 0.95).normalize();
        assert_eq!(b.eval(&n, &l, &v).unwrap(), b.eval(&n, &v, &l).unwrap());
    }

    #[test]
    fn error_metric_zero_and_symmetric() {
        let a = ParametricBrdfSpec::Lambertian { albedo: 0.5 }.tabulate(grid()).unwrap();
        let b = ParametricBrdfSpec::WardIsotropic { diffuse: 0.2, specular: 0.3, alpha: 0.2 }
            .tabulate(grid())
            .unwrap();
        assert_eq!(relative_brdf_error(&a, &a).unwrap(), 0.0);
        assert_eq!(relative_brdf_error(&a, &b).unwrap(), relative_brdf_error(&b, &a).unwrap());
    }

    #[test]
    fn error_metric_constant_offset_closed_form() {
        let g = grid();
        let delta = 0.25;
        let a = TabulatedBrdf::constant(g, 1, 0.4).unwrap();
        let b = TabulatedBrdf::constant(g, 1, 0.4 + delta).unwrap();
        // Closed form: δ · rms over θ_h nodes of cos θ_h (θ_d, φ_d integrate out).
        let (n_th, _, _) = g.dims();
        let ms: f64 = (0..n_th)
            .map(|k| (k as f64 * g.step_theta_h()).to_radians().cos().powi(2))
            .sum::<f64>()
            / n_th as f64;
        let expected = delta * ms.sqrt();
        assert!((relative_brdf_error(&b, &a).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn error_metric_rejects_grid_mismatch() {
        let a = TabulatedBrdf::constant(grid(), 1, 0.4).unwrap();
        let b = TabulatedBrdf::constant(HalfDiffGrid::with_divisor(5).unwrap(), 1, 0.4).unwrap();
        assert!(relative_brdf_error(&a, &b).is_err());
    }

    #[test]
    fn resample_preserves_constants() {
        let a = TabulatedBrdf::constant(HalfDiffGrid::with_divisor(3).unwrap(), 1, 0.2).unwrap();
        let b = a.resample(grid()).unwrap();
        assert!(b.values().iter().all(|&x| (x - 0.2).abs() < 1e-12));
    }
}
