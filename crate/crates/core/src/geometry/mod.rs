//! Candidate normals on the view hemisphere, multi-resolution pyramids,
//! cone neighbourhoods, angular metrics and Euler-angle conversions.

use nalgebra::Vector3;

use crate::brdf::Vec3;
use crate::error::{invalid, Result};

/// Default pyramid schedule in degrees.
pub const DEFAULT_SCHEDULE: [f64; 5] = [10.0, 5.0, 3.0, 1.0, 0.5];

/// Ratio between the nominal spacing and the nearest-neighbour distance the
/// spiral is sized for.
const SPIRAL_NEIGHBOUR_FACTOR: f64 = 1.6;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653; // π(3 − √5)

/// Point count used for a nominal spacing in degrees.
pub fn spiral_count(spacing_deg: f64) -> usize {
    let s = (SPIRAL_NEIGHBOUR_FACTOR * spacing_deg).to_radians();
    ((2.0 * std::f64::consts::PI / (s * s)).round() as usize).max(1)
}

/// `n` points on a golden-angle spiral over the hemisphere about `axis`,
/// starting at the axis itself. Heights are evenly spaced, so the points are
/// area-uniform.
pub fn spiral_hemisphere(n: usize, axis: &Vec3) -> Vec<Vec3> {
    let frame = Frame::new(axis);
    (0..n)
        .map(|k| {
            let z = if n == 1 { 1.0 } else { 1.0 - k as f64 / (n as f64 - 0.5) };
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = k as f64 * GOLDEN_ANGLE;
            frame.to_world(&Vector3::new(r * phi.cos(), r * phi.sin(), z))
        })
        .collect()
}

struct Frame {
    t: Vec3,
    b: Vec3,
    n: Vec3,
    identity: bool,
}

impl Frame {
    fn new(axis: &Vec3) -> Self {
        let n = axis.normalize();
        let identity = n == Vector3::z();
        let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let t = (helper - n * n.dot(&helper)).normalize();
        let b = n.cross(&t);
        Self { t, b, n, identity }
    }

    fn to_world(&self, p: &Vec3) -> Vec3 {
        if self.identity {
            *p
        } else {
            (self.t * p.x + self.b * p.y + self.n * p.z).normalize()
        }
    }
}

/// Candidate normals with a nominal equi-angular spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub normals: Vec<Vec3>,
    pub spacing_deg: f64,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// Nearest-neighbour distance the spiral was sized for (the nominal
    /// spacing labels the point count, not the gap between points).
    pub fn neighbour_spacing_deg(&self) -> f64 {
        SPIRAL_NEIGHBOUR_FACTOR * self.spacing_deg
    }
}

/// Near-uniform hemisphere sampling about `axis`; includes the axis.
pub fn equiangular_hemisphere(spacing_deg: f64, axis: &Vec3) -> Result<CandidateSet> {
    if !(spacing_deg > 0.0 && spacing_deg <= 90.0) {
        return invalid(format!("spacing must be in (0, 90], got {spacing_deg}"));
    }
    if !(axis.norm() > 0.0) {
        return invalid("hemisphere axis must be non-zero");
    }
    Ok(CandidateSet {
        normals: spiral_hemisphere(spiral_count(spacing_deg), axis),
        spacing_deg,
    })
}

/// Indices of the members of `set` within `theta_deg` of `center`, in order.
pub fn cone_indices(set: &CandidateSet, center: &Vec3, theta_deg: f64) -> Vec<usize> {
    let c = theta_deg.to_radians().cos();
    set.normals
        .iter()
        .enumerate()
        .filter(|(_, n)| n.dot(center) >= c)
        .map(|(i, _)| i)
        .collect()
}

/// `{n ∈ set : ⟨n, center⟩ ≥ cos θ}`, order preserved.
pub fn cone_filter(set: &CandidateSet, center: &Vec3, theta_deg: f64) -> Result<CandidateSet> {
    if !(theta_deg > 0.0) {
        return invalid("cone angle must be positive");
    }
    Ok(CandidateSet {
        normals: cone_indices(set, center, theta_deg).into_iter().map(|i| set.normals[i]).collect(),
        spacing_deg: set.spacing_deg,
    })
}

/// Angle between two unit vectors in degrees.
pub fn angular_error(n1: &Vec3, n2: &Vec3) -> f64 {
    // atan2 keeps precision near 0° where acos loses half the digits.
    n1.cross(n2).norm().atan2(n1.dot(n2)).to_degrees()
}

/// `[cos φ sin θ, sin φ sin θ, cos θ]` with angles in degrees.
pub fn euler_to_normal(theta_deg: f64, phi_deg: f64) -> Vec3 {
    let (st, ct) = theta_deg.to_radians().sin_cos();
    let (sp, cp) = phi_deg.to_radians().sin_cos();
    Vector3::new(cp * st, sp * st, ct)
}

/// Inverse of [`euler_to_normal`]: `(θ, φ)` in degrees, `φ ∈ [0, 360)`, `φ = 0` at the pole.
pub fn normal_to_euler(n: &Vec3) -> (f64, f64) {
    let rho = n.x.hypot(n.y);
    let theta = rho.atan2(n.z).to_degrees();
    if rho == 0.0 {
        return (theta, 0.0);
    }
    let mut phi = n.y.atan2(n.x).to_degrees();
    if phi < 0.0 {
        phi += 360.0;
    }
    if phi >= 360.0 {
        phi -= 360.0;
    }
    (theta, phi)
}

/// Candidate sets with strictly decreasing spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePyramid {
    levels: Vec<CandidateSet>,
}

impl CandidatePyramid {
    pub fn new(schedule: &[f64], axis: &Vec3) -> Result<Self> {
        if schedule.is_empty() {
            return invalid("pyramid needs at least one level");
        }
        if schedule.windows(2).any(|w| w[1] >= w[0]) {
            return invalid("pyramid spacings must be strictly decreasing");
        }
        let levels = schedule
            .iter()
            .map(|&s| equiangular_hemisphere(s, axis))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { levels })
    }

    pub fn from_levels(levels: Vec<CandidateSet>) -> Result<Self> {
        if levels.is_empty() || levels[0].is_empty() {
            return invalid("pyramid needs a non-empty coarsest level");
        }
        if levels.windows(2).any(|w| w[1].spacing_deg >= w[0].spacing_deg) {
            return invalid("pyramid spacings must be strictly decreasing");
        }
        Ok(Self { levels })
    }

    pub fn paper_default() -> Self {
        Self::new(&DEFAULT_SCHEDULE, &Vector3::z()).expect("default schedule is valid")
    }

    pub fn levels(&self) -> &[CandidateSet] {
        &self.levels
    }

    pub fn level(&self, j: usize) -> &CandidateSet {
        &self.levels[j]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn schedule(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.spacing_deg).collect()
    }

    pub fn total_candidates(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn min_pairwise_angle(ns: &[Vec3]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..ns.len() {
            for j in i + 1..ns.len() {
                best = best.min(angular_error(&ns[i], &ns[j]));
            }
        }
        best
    }

    #[test]
    fn counts_near_reference_values() {
        let z = Vector3::z();
        let c5 = equiangular_hemisphere(5.0, &z).unwrap().len() as f64;
        let c05 = equiangular_hemisphere(0.5, &z).unwrap().len() as f64;
        assert!((c5 / 327.0 - 1.0).abs() <= 0.2, "{c5}");
        assert!((c05 / 31830.0 - 1.0).abs() <= 0.2, "{c05}");
    }

    #[test]
    fn includes_axis_and_front_facing() {
        let axis = Vector3::new(0.3, -0.2, 0.9).normalize();
        let set = equiangular_hemisphere(5.0, &axis).unwrap();
        assert!(angular_error(&set.normals[0], &axis) < 1e-9);
        for n in &set.normals {
            assert!((n.norm() - 1.0).abs() < 1e-9);
            assert!(n.dot(&axis) > 0.0);
        }
        let z = equiangular_hemisphere(10.0, &Vector3::z()).unwrap();
        assert_eq!(z.normals[0], Vector3::z());
    }

    #[test]
    fn min_pairwise_angle_exhaustive() {
        for s in [20.0, 10.0, 5.0, 3.0] {
            let set = equiangular_hemisphere(s, &Vector3::z()).unwrap();
            let m = min_pairwise_angle(&set.normals);
            assert!(m >= 0.8 * s, "spacing {s}: min {m}");
        }
    }

    #[test]
    fn deterministic() {
        let a = equiangular_hemisphere(3.0, &Vector3::z()).unwrap();
        let b = equiangular_hemisphere(3.0, &Vector3::z()).unwrap();
        assert!(a.normals.iter().zip(&b.normals).all(|(x, y)| x.as_slice() == y.as_slice()));
    }

    #[test]
    fn bad_spacing_rejected() {
        assert!(equiangular_hemisphere(0.0, &Vector3::z()).is_err());
        assert!(equiangular_hemisphere(91.0, &Vector3::z()).is_err());
    }

    #[test]
    fn pyramid_nesting() {
        let p = CandidatePyramid::new(&[20.0, 10.0, 5.0, 3.0], &Vector3::z()).unwrap();
        for j in 0..p.num_levels() - 1 {
            let theta = p.level(j).spacing_deg;
            for n in &p.level(j).normals {
                assert!(!cone_indices(p.level(j + 1), n, theta).is_empty());
            }
        }
    }

    #[test]
    fn pyramid_rejects_bad_schedules() {
        assert!(CandidatePyramid::new(&[], &Vector3::z()).is_err());
        assert!(CandidatePyramid::new(&[5.0, 5.0], &Vector3::z()).is_err());
        assert!(CandidatePyramid::new(&[3.0, 5.0], &Vector3::z()).is_err());
    }

    #[test]
    fn cone_filter_cases() {
        let set = equiangular_hemisphere(5.0, &Vector3::z()).unwrap();
        let all = cone_filter(&set, &Vector3::z(), 180.0).unwrap();
        assert_eq!(all, set);
        let c = set.normals[17];
        let only = cone_filter(&set, &c, 1e-6).unwrap();
        assert_eq!(only.normals, vec![c]);
        assert!(cone_filter(&set, &c, 0.0).is_err());
        // brute-force membership and partition
        let theta = 12.0;
        let inside = cone_filter(&set, &c, theta).unwrap();
        let scan: Vec<Vec3> =
            set.normals.iter().copied().filter(|n| angular_error(n, &c) <= theta + 1e-9).collect();
        assert_eq!(inside.normals, scan);
        let outside = set.normals.iter().filter(|n| angular_error(n, &c) > theta + 1e-9).count();
        assert_eq!(inside.len() + outside, set.len());
    }

    #[test]
    fn angular_error_cases() {
        let z = Vector3::z();
        assert_eq!(angular_error(&z, &z), 0.0);
        assert!((angular_error(&z, &Vector3::x()) - 90.0).abs() < 1e-12);
        assert!((angular_error(&z, &-z) - 180.0).abs() < 1e-12);
    }

    #[test]
    fn euler_cases() {
        assert_eq!(euler_to_normal(0.0, 123.0), Vector3::z());
        let n = euler_to_normal(90.0 - 1e-6, 0.0);
        assert!((n.x - 1.0).abs() < 1e-12 && n.y == 0.0 && n.z > 0.0);
        assert_eq!(normal_to_euler(&Vector3::z()), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn euler_round_trip(theta in 0.0f64..89.999, phi in 0.0f64..360.0) {
            let (t, p) = normal_to_euler(&euler_to_normal(theta, phi));
            prop_assert!((t - theta).abs() <= 1e-9);
            if theta > 1e-6 {
                let dp = (p - phi).abs();
                prop_assert!(dp.min(360.0 - dp) <= 1e-9 / theta.to_radians().sin().max(1e-3));
            }
        }
    }
}
