//! Sampling grid over `(θ_h, θ_d, φ_d)` and trilinear sample weights.

use crate::error::{invalid, Result};

use super::halfdiff::HalfDiff;

/// Regular grid with `θ_h, θ_d ∈ [0°, 90°)` and `φ_d ∈ [0°, 180°)`.
///
/// Node `k` of an axis with `n` bins sits at `k · range / n`. Linear index is
/// `φ_d + n_pd · (θ_d + n_td · θ_h)`, the same layout as MERL files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HalfDiffGrid {
    n_th: usize,
    n_td: usize,
    n_pd: usize,
}

impl HalfDiffGrid {
    pub fn new(n_th: usize, n_td: usize, n_pd: usize) -> Result<Self> {
        if n_th < 2 || n_td < 2 || n_pd < 2 {
            return invalid(format!("grid dims must be >= 2, got ({n_th}, {n_td}, {n_pd})"));
        }
        Ok(Self { n_th, n_td, n_pd })
    }

    /// Grid with dims `(90/r, 90/r, 180/r)`; `r = 1` is the 1° MERL resolution.
    pub fn with_divisor(r: usize) -> Result<Self> {
        if r == 0 || 90 % r != 0 {
            return invalid(format!("grid divisor {r} must divide 90"));
        }
        Self::new(90 / r, 90 / r, 180 / r)
    }

    pub fn merl() -> Self {
        Self { n_th: 90, n_td: 90, n_pd: 180 }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_th, self.n_td, self.n_pd)
    }

    /// Total number of nodes `T`.
    pub fn len(&self) -> usize {
        self.n_th * self.n_td * self.n_pd
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step_theta_h(&self) -> f64 {
        90.0 / self.n_th as f64
    }

    pub fn step_theta_d(&self) -> f64 {
        90.0 / self.n_td as f64
    }

    pub fn step_phi_d(&self) -> f64 {
        180.0 / self.n_pd as f64
    }

    #[inline]
    pub fn index(&self, i_th: usize, i_td: usize, i_pd: usize) -> usize {
        i_pd + self.n_pd * (i_td + self.n_td * i_th)
    }

    /// Inverse of [`HalfDiffGrid::index`].
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let i_pd = idx % self.n_pd;
        let rest = idx / self.n_pd;
        (rest / self.n_td, rest % self.n_td, i_pd)
    }

    pub fn node(&self, idx: usize) -> HalfDiff {
        let (a, b, c) = self.unravel(idx);
        HalfDiff {
            theta_h: a as f64 * self.step_theta_h(),
            theta_d: b as f64 * self.step_theta_d(),
            phi_d: c as f64 * self.step_phi_d(),
        }
    }

    /// Trilinear interpolation weights. θ axes clamp at the last node, φ_d
    /// wraps modulo 180°.
    pub fn sample_weights(&self, hd: HalfDiff) -> Result<SampleWeights> {
        let in_theta = |t: f64| t.is_finite() && (0.0..=90.0).contains(&t);
        if !in_theta(hd.theta_h) || !in_theta(hd.theta_d) || !hd.phi_d.is_finite() {
            return invalid(format!("half-diff coordinates out of range: {hd:?}"));
        }
        let th = clamped_axis(hd.theta_h / self.step_theta_h(), self.n_th);
        let td = clamped_axis(hd.theta_d / self.step_theta_d(), self.n_td);
        let pd = wrapped_axis(hd.phi_d.rem_euclid(180.0) / self.step_phi_d(), self.n_pd);

        let mut out = SampleWeights::default();
        for &(a, wa) in th.iter() {
            for &(b, wb) in td.iter() {
                for &(c, wc) in pd.iter() {
                    let w = wa * wb * wc;
                    if w > 0.0 {
                        out.push(self.index(a, b, c) as u32, w);
                    }
                }
            }
        }
        Ok(out)
    }
}

type AxisWeights = [(usize, f64); 2];

fn clamped_axis(u: f64, n: usize) -> AxisWeights {
    let i0 = u.floor();
    if i0 >= (n - 1) as f64 {
        return [(n - 1, 1.0), (n - 1, 0.0)];
    }
    let i0 = i0 as usize;
    let frac = u - i0 as f64;
    [(i0, 1.0 - frac), (i0 + 1, frac)]
}

fn wrapped_axis(u: f64, n: usize) -> AxisWeights {
    let i0f = u.floor();
    let frac = u - i0f;
    let i0 = (i0f as usize) % n;
    [(i0, 1.0 - frac), ((i0 + 1) % n, frac)]
}

/// Up to eight `(grid index, weight)` pairs summing to one.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SampleWeights {
    len: u8,
    indices: [u32; 8],
    weights: [f64; 8],
}

impl SampleWeights {
    fn push(&mut self, idx: u32, w: f64) {
        let k = self.len as usize;
        self.indices[k] = idx;
        self.weights[k] = w;
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices[..self.len()]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights[..self.len()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices().iter().zip(self.weights()).map(|(&i, &w)| (i as usize, w))
    }

    /// `sᵀρ` for one channel slice of length `T`.
    #[inline]
    pub fn dot(&self, values: &[f64]) -> f64 {
        self.iter().map(|(i, w)| w * values[i]).sum()
    }
}
