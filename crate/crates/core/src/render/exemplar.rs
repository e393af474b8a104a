//! Image formation and virtual exemplar matrices.

use nalgebra::DMatrix;

use crate::brdf::{to_half_diff, BrdfDictionary, SampleWeights, TabulatedBrdf, Vec3};
use crate::error::{invalid, Result};

use super::rig::LightingRig;

/// `max(0, n·l)`.
#[inline]
pub fn shading(n: &Vec3, l: &Vec3) -> f64 {
    n.dot(l).max(0.0)
}

fn check_normal(n: &Vec3) -> Result<()> {
    if (n.norm() - 1.0).abs() > 1e-6 {
        return invalid("normal must be a unit vector");
    }
    Ok(())
}

/// Per light: `intensity · shading` and the grid sample weights, or `None`
/// when the light or the view is behind the surface.
fn light_terms(grid: crate::brdf::HalfDiffGrid, n: &Vec3, rig: &LightingRig) -> Result<Vec<Option<(f64, SampleWeights)>>> {
    check_normal(n)?;
    let v = rig.view();
    let nv = n.dot(v);
    rig.lights()
        .iter()
        .zip(rig.intensities())
        .map(|(l, &e)| {
            let s = shading(n, l);
            if s <= 0.0 || nv <= 0.0 {
                return Ok(None);
            }
            let sw = grid.sample_weights(to_half_diff(n, l, v)?)?;
            Ok(Some((e * s, sw)))
        })
        .collect()
}

/// Intensity profile of one BRDF at normal `n`, channel-major (`C·Q` values).
pub fn render_pixel(rho: &TabulatedBrdf, n: &Vec3, rig: &LightingRig) -> Result<Vec<f64>> {
    let q = rig.q();
    let mut out = vec![0.0; rho.channels() * q];
    for (i, term) in light_terms(rho.grid(), n, rig)?.into_iter().enumerate() {
        if let Some((s, sw)) = term {
            for ch in 0..rho.channels() {
                out[ch * q + i] = s * sw.dot(rho.channel(ch));
            }
        }
    }
    Ok(out)
}

/// `B(ñ)`: one row per light, one column per (channel, atom) pair; column
/// `ch·M + j` holds atom `j` seen through channel `ch`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarMatrix {
    pub normal: Vec3,
    pub channels: usize,
    pub values: DMatrix<f64>,
}

impl ExemplarMatrix {
    pub fn atoms(&self) -> usize {
        self.values.ncols() / self.channels
    }

    /// Block product: channel `ch` of the profile is `B_ch · c_ch`.
    /// `c` has `C·M` entries.
    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        apply_blocks(&self.values, self.channels, c)
    }
}

pub(crate) fn apply_blocks(b: &DMatrix<f64>, channels: usize, c: &[f64]) -> Vec<f64> {
    let (q, m) = (b.nrows(), b.ncols() / channels);
    let mut out = vec![0.0; channels * q];
    for ch in 0..channels {
        for j in 0..m {
            let w = c[ch * m + j];
            if w == 0.0 {
                continue;
            }
            for (o, &v) in out[ch * q..(ch + 1) * q].iter_mut().zip(b.column(ch * m + j).iter()) {
                *o += w * v;
            }
        }
    }
    out
}

/// `b_ij = intensity_i · max(0, ñ·l_i) · s_{l_i,v;ñ}ᵀ ρ_j`.
pub fn render_exemplar(dict: &BrdfDictionary, n: &Vec3, rig: &LightingRig) -> Result<ExemplarMatrix> {
    let (q, m, channels) = (rig.q(), dict.len(), dict.channels());
    let mut values = DMatrix::zeros(q, m * channels);
    for (i, term) in light_terms(dict.grid(), n, rig)?.into_iter().enumerate() {
        if let Some((s, sw)) = term {
            for ch in 0..channels {
                for (j, atom) in dict.atoms().iter().enumerate() {
                    values[(i, ch * m + j)] = s * sw.dot(atom.channel(ch));
                }
            }
        }
    }
    Ok(ExemplarMatrix { normal: *n, channels, values })
}

/// One light's row of `B(ñ)`: `C·M` entries, zero when `l` or the view is
/// behind the surface.
pub fn exemplar_row(dict: &BrdfDictionary, n: &Vec3, l: &Vec3, intensity: f64, v: &Vec3) -> Result<Vec<f64>> {
    check_normal(n)?;
    let (m, channels) = (dict.len(), dict.channels());
    let mut row = vec![0.0; m * channels];
    let s = shading(n, l);
    if s <= 0.0 || n.dot(v) <= 0.0 {
        return Ok(row);
    }
    let sw = dict.grid().sample_weights(to_half_diff(n, l, v)?)?;
    for ch in 0..channels {
        for (j, atom) in dict.atoms().iter().enumerate() {
            row[ch * m + j] = intensity * s * sw.dot(atom.channel(ch));
        }
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::{HalfDiffGrid, ParametricSweep};
    use crate::geometry::euler_to_normal;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> HalfDiffGrid {
        HalfDiffGrid::with_divisor(6).unwrap()
    }

    #[test]
    fn shading_cases() {
        let z = Vector3::z();
        assert_eq!(shading(&z, &z), 1.0);
        assert_eq!(shading(&z, &Vector3::x()), 0.0);
        assert_eq!(shading(&z, &-z), 0.0);
    }

    #[test]
    fn lambertian_head_on() {
        let rho = TabulatedBrdf::constant(grid(), 1, 1.0).unwrap();
        let rig = LightingRig::from_directions(vec![Vector3::z(), Vector3::x(), -Vector3::z()]).unwrap();
        assert_eq!(render_pixel(&rho, &Vector3::z(), &rig).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn all_backfacing_gives_zero() {
        let rho = TabulatedBrdf::constant(grid(), 3, 1.0).unwrap();
        let rig = LightingRig::from_directions(vec![-Vector3::z(), -Vector3::x(), -Vector3::y()]).unwrap();
        let n = Vector3::new(0.1, 0.1, 1.0).normalize();
        assert!(render_pixel(&rho, &n, &rig).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exemplar_columns_and_linearity() {
        let d = BrdfDictionary::from_sweep(&ParametricSweep::default(), grid()).unwrap();
        let rig = LightingRig::hemisphere(60).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let n = euler_to_normal(rng.gen_range(0.0..80.0), rng.gen_range(0.0..360.0));
            let b = render_exemplar(&d, &n, &rig).unwrap();
            for j in [0, 7, 19] {
                let col = render_pixel(d.atom(j), &n, &rig).unwrap();
                assert_eq!(b.values.column(j).as_slice(), col.as_slice());
            }
            for (i, l) in rig.lights().iter().enumerate() {
                if n.dot(l) <= 0.0 {
                    assert!(b.values.row(i).iter().all(|&v| v == 0.0));
                }
            }
            let c: Vec<f64> = (0..d.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let direct = render_pixel(&d.mix(&c).unwrap(), &n, &rig).unwrap();
            let via_b = b.apply(&c);
            let scale = direct.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (x, y) in direct.iter().zip(&via_b) {
                assert!((x - y).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn zero_dictionary_zero_matrix() {
        let z = TabulatedBrdf::zeros(grid(), 1).unwrap();
        let d = BrdfDictionary::new(vec![z.clone(), z], vec!["a".into(), "b".into()]).unwrap();
        let b = render_exemplar(&d, &Vector3::z(), &LightingRig::hemisphere(10).unwrap()).unwrap();
        assert!(b.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_unit_normal() {
        let rho = TabulatedBrdf::constant(grid(), 1, 1.0).unwrap();
        let rig = LightingRig::hemisphere(5).unwrap();
        assert!(render_pixel(&rho, &Vector3::new(0.0, 0.0, 2.0), &rig).is_err());
    }
}
