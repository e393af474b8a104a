//! Finite-neighbourhood estimates of `∂B/∂θ` and `∂B/∂φ`.

use nalgebra::DMatrix;

use crate::brdf::{BrdfDictionary, Vec3};
use crate::error::{Error, Result};
use crate::geometry::{cone_indices, normal_to_euler, CandidateSet};
use crate::render::{render_exemplar, ExemplarBank, LightingRig};

#[derive(Debug, Clone)]
pub struct GradientOptions {
    /// Neighbourhood half-angle in degrees.
    pub radius_deg: f64,
    /// Designs with a larger condition number are rejected.
    pub max_condition: f64,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self { radius_deg: 2.0, max_condition: 1e6 }
    }
}

/// Derivatives of `B` per radian of polar (`θ`) and azimuthal (`φ`) angle.
#[derive(Debug, Clone)]
pub struct GradientPair {
    pub d_theta: DMatrix<f64>,
    pub d_phi: DMatrix<f64>,
    pub neighbours: usize,
    pub condition: f64,
}

/// Wraps an azimuth difference in degrees into `(−180, 180]`.
pub fn wrap_azimuth(d: f64) -> f64 {
    let mut d = d % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

/// Least-squares fit of `B(ñ) − B(n̂) = Δθ·∂θB + Δφ·∂φB` over the members
/// of `candidates` within the neighbourhood of `n_hat`.
pub fn estimate_gradients_from(
    dict: &BrdfDictionary,
    rig: &LightingRig,
    candidates: &CandidateSet,
    n_hat: &Vec3,
    opts: &GradientOptions,
) -> Result<GradientPair> {
    let (t0, p0) = normal_to_euler(n_hat);
    let mut offsets = Vec::new();
    let mut normals = Vec::new();
    for i in cone_indices(candidates, n_hat, opts.radius_deg) {
        let n = candidates.normals[i];
        let (t, p) = normal_to_euler(&n);
        let (dt, dp) = ((t - t0).to_radians(), wrap_azimuth(p - p0).to_radians());
        if dt == 0.0 && dp == 0.0 {
            continue;
        }
        offsets.push((dt, dp));
        normals.push(n);
    }
    if offsets.len() < 2 {
        return Err(Error::GradientUnavailable(format!("{} usable neighbours", offsets.len())));
    }
    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    for &(dt, dp) in &offsets {
        a11 += dt * dt;
        a12 += dt * dp;
        a22 += dp * dp;
    }
    let tr = a11 + a22;
    let disc = ((a11 - a22).powi(2) + 4.0 * a12 * a12).sqrt();
    let (lmax, lmin) = (0.5 * (tr + disc), 0.5 * (tr - disc));
    let condition = if lmin > 0.0 { (lmax / lmin).sqrt() } else { f64::INFINITY };
    if !(condition <= opts.max_condition) {
        return Err(Error::GradientUnavailable(format!("design condition number {condition:.3e}")));
    }
    let det = a11 * a22 - a12 * a12;
    let (i11, i12, i22) = (a22 / det, -a12 / det, a11 / det);
    let base = render_exemplar(dict, n_hat, rig)?.values;
    let mut d_theta = DMatrix::zeros(base.nrows(), base.ncols());
    let mut d_phi = DMatrix::zeros(base.nrows(), base.ncols());
    for (&(dt, dp), n) in offsets.iter().zip(&normals) {
        let diff = render_exemplar(dict, n, rig)?.values - &base;
        d_theta += &diff * (i11 * dt + i12 * dp);
        d_phi += &diff * (i12 * dt + i22 * dp);
    }
    Ok(GradientPair { d_theta, d_phi, neighbours: offsets.len(), condition })
}

/// Gradients at `n_hat` from the finest level of the bank's pyramid.
pub fn estimate_gradients(bank: &ExemplarBank, n_hat: &Vec3, opts: &GradientOptions) -> Result<GradientPair> {
    let finest = bank.pyramid().level(bank.num_levels() - 1);
    estimate_gradients_from(bank.dictionary(), bank.rig(), finest, n_hat, opts)
}
