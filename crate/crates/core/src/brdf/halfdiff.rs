//! Half-angle / difference-angle coordinates for isotropic BRDFs.

use nalgebra::Vector3;

use crate::error::{invalid, Result};

pub type Vec3 = Vector3<f64>;

/// Allowed deviation from unit norm for direction arguments.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Coordinates `(θ_h, θ_d, φ_d)` in degrees, with `φ_d` folded into `[0, 180)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfDiff {
    pub theta_h: f64,
    pub theta_d: f64,
    pub phi_d: f64,
}

pub(crate) fn check_unit(name: &str, x: &Vec3) -> Result<()> {
    let norm = x.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return invalid(format!("{name} must be unit norm (|{name}| = {norm})"));
    }
    Ok(())
}

/// Maps a `(n, l, v)` configuration onto half/difference angles.
///
/// The difference direction is taken from `l − v`, which is exactly negated
/// when `l` and `v` are swapped; after the `φ_d` fold both orderings land on
/// bit-identical coordinates.
pub fn to_half_diff(n: &Vec3, l: &Vec3, v: &Vec3) -> Result<HalfDiff> {
    check_unit("n", n)?;
    check_unit("l", l)?;
    check_unit("v", v)?;
    let sum = l + v;
    let sum_norm = sum.norm();
    if sum_norm < 1e-12 {
        return invalid("half vector undefined for l = -v");
    }
    let diff = l - v;
    let diff_norm = diff.norm();
    let h = sum / sum_norm;
    // |l - v| / |l + v| = tan(θ_d) for unit l, v.
    let theta_d = diff_norm.atan2(sum_norm);

    let cos_h = h.dot(n);
    let h_perp = h - n * cos_h;
    let sin_h = h_perp.norm();
    let theta_h = sin_h.atan2(cos_h);

    let phi_d = if sin_h <= 1e-15 || diff_norm == 0.0 {
        0.0
    } else {
        let u = h_perp / sin_h;
        let ex = u * cos_h - n * sin_h;
        let ey = n.cross(&u);
        let (mut x, mut y) = (diff.dot(&ex), diff.dot(&ey));
        if y < 0.0 || (y == 0.0 && x < 0.0) {
            x = -x;
            y = -y;
        }
        let mut phi = y.atan2(x).to_degrees() + 0.0;
        if phi >= 180.0 {
            phi -= 180.0;
        }
        phi
    };

    Ok(HalfDiff {
        theta_h: theta_h.to_degrees(),
        theta_d: theta_d.to_degrees(),
        phi_d,
    })
}

/// Inverse map used to tabulate analytic models: returns a representative
/// `(n, l, v)` with `n = +z` and the half vector in the xz-plane.
pub fn from_half_diff(hd: HalfDiff) -> (Vec3, Vec3, Vec3) {
    let (th, td, pd) = (
        hd.theta_h.to_radians(),
        hd.theta_d.to_radians(),
        hd.phi_d.to_radians(),
    );
    let n = Vec3::z();
    let h = Vec3::new(th.sin(), 0.0, th.cos());
    let ex = Vec3::new(th.cos(), 0.0, -th.sin());
    let ey = Vec3::y();
    let (lx, ly, lz) = (td.sin() * pd.cos(), td.sin() * pd.sin(), td.cos());
    let l = ex * lx + ey * ly + h * lz;
    let v = -ex * lx - ey * ly + h * lz;
    (n, l.normalize(), v.normalize())
}
