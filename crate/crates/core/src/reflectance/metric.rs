//! Cosine-weighted BRDF error evaluated directly on dictionary coefficients.

use nalgebra::{DMatrix, DVector};

use crate::brdf::BrdfDictionary;
use crate::error::{invalid, Result};

/// `relative_brdf_error(D·ĉ, D·c)` without materializing either table: per
/// channel, `‖diag(cos θ_h)·D·(ĉ − c)‖² = (ĉ − c)ᵀ W (ĉ − c)`.
#[derive(Debug, Clone)]
pub struct CoefficientMetric {
    weights: Vec<DMatrix<f64>>,
    t: usize,
    m: usize,
}

impl CoefficientMetric {
    pub fn new(dict: &BrdfDictionary) -> Self {
        let grid = dict.grid();
        let (t, m) = (grid.len(), dict.len());
        let cos: Vec<f64> = (0..t).map(|i| grid.node(i).theta_h.to_radians().cos().max(0.0)).collect();
        let weights = (0..dict.channels())
            .map(|ch| {
                let d = DMatrix::from_fn(t, m, |i, j| dict.atom(j).channel(ch)[i] * cos[i]);
                d.transpose() * d
            })
            .collect();
        Self { weights, t, m }
    }

    /// `est` and `truth` hold `M` or `C·M` coefficients.
    pub fn error(&self, est: &[f64], truth: &[f64]) -> Result<f64> {
        let channels = self.weights.len();
        if est.len() != truth.len() || (est.len() != self.m && est.len() != self.m * channels) {
            return invalid("coefficient length mismatch");
        }
        let mut total = 0.0;
        for (ch, w) in self.weights.iter().enumerate() {
            let off = if est.len() == self.m { 0 } else { ch * self.m };
            let d = DVector::from_fn(self.m, |j, _| est[off + j] - truth[off + j]);
            total += ((d.dot(&(w * &d))).max(0.0) / self.t as f64).sqrt();
        }
        Ok(total / channels as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::{relative_brdf_error, HalfDiffGrid, ParametricSweep};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_table_metric() {
        let d = BrdfDictionary::from_sweep(&ParametricSweep::default(), HalfDiffGrid::with_divisor(10).unwrap()).unwrap();
        let metric = CoefficientMetric::new(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let a: Vec<f64> = (0..d.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..d.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let direct = relative_brdf_error(&d.mix(&a).unwrap(), &d.mix(&b).unwrap()).unwrap();
            let fast = metric.error(&a, &b).unwrap();
            assert!((direct - fast).abs() <= 1e-9 * direct.max(1e-12), "{direct} vs {fast}");
        }
        assert_eq!(metric.error(&[0.5; 20], &[0.5; 20]).unwrap(), 0.0);
    }
}
