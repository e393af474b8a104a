//! BRDF dictionaries and their on-disk container.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{format_err, invalid, Error, Result};
use crate::reflectance::prox::{nonneg_lasso_gram, LassoOptions};

use super::grid::HalfDiffGrid;
use super::parametric::ParametricSweep;
use super::tabulated::TabulatedBrdf;

pub const DICTIONARY_MAGIC: &[u8; 4] = b"BDCT";
pub const DICTIONARY_VERSION: u16 = 1;

/// `M` tabulated atoms sharing one grid and channel count (the matrix `D`).
#[derive(Debug, Clone, PartialEq)]
pub struct BrdfDictionary {
    grid: HalfDiffGrid,
    channels: usize,
    atoms: Vec<TabulatedBrdf>,
    labels: Vec<String>,
}

impl BrdfDictionary {
    pub fn new(atoms: Vec<TabulatedBrdf>, labels: Vec<String>) -> Result<Self> {
        let first = match atoms.first() {
            Some(a) => a,
            None => return invalid("dictionary needs at least one atom"),
        };
        if labels.len() != atoms.len() {
            return invalid("one label per atom required");
        }
        let (grid, channels) = (first.grid(), first.channels());
        if atoms.iter().any(|a| a.grid() != grid || a.channels() != channels) {
            return invalid("all atoms must share grid and channel count");
        }
        Ok(Self { grid, channels, atoms, labels })
    }

    pub fn from_sweep(sweep: &ParametricSweep, grid: HalfDiffGrid) -> Result<Self> {
        let specs = sweep.specs();
        let atoms = specs.iter().map(|s| s.tabulate(grid)).collect::<Result<Vec<_>>>()?;
        let labels = specs.iter().map(|s| s.label()).collect();
        Self::new(atoms, labels)
    }

    pub fn grid(&self) -> HalfDiffGrid {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[TabulatedBrdf] {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> &TabulatedBrdf {
        &self.atoms[j]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Dictionary without atom `j` (leave-one-out).
    pub fn without(&self, j: usize) -> Result<Self> {
        if j >= self.len() || self.len() == 1 {
            return invalid(format!("cannot remove atom {j} from {} atoms", self.len()));
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&k| k != j).collect();
        self.subset(&keep)
    }

    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        if keep.iter().any(|&k| k >= self.len()) {
            return invalid("atom index out of range");
        }
        Self::new(
            keep.iter().map(|&k| self.atoms[k].clone()).collect(),
            keep.iter().map(|&k| self.labels[k].clone()).collect(),
        )
    }

    /// `ρ = D c`. Coefficients must be non-negative.
    pub fn mix(&self, c: &[f64]) -> Result<TabulatedBrdf> {
        if c.len() != self.len() {
            return invalid(format!("expected {} coefficients, got {}", self.len(), c.len()));
        }
        if c.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return invalid("mixture coefficients must be finite and >= 0");
        }
        let mut values = vec![0.0; self.channels * self.grid.len()];
        for (atom, &w) in self.atoms.iter().zip(c) {
            if w == 0.0 {
                continue;
            }
            for (dst, src) in values.iter_mut().zip(atom.values()) {
                *dst += w * src;
            }
        }
        TabulatedBrdf::new(self.grid, self.channels, values)
    }

    /// SHA-256 of the serialized container; identifies the dictionary in
    /// bank caches.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        Sha256::digest(&buf).into()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let (a, b, c) = self.grid.dims();
        w.write_all(DICTIONARY_MAGIC)?;
        w.write_all(&DICTIONARY_VERSION.to_le_bytes())?;
        for d in [a, b, c] {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&[self.channels as u8])?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (atom, label) in self.atoms.iter().zip(&self.labels) {
            let bytes = label.as_bytes();
            if bytes.len() > u16::MAX as usize {
                return invalid("atom label too long");
            }
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
            let mut payload = Vec::with_capacity(atom.values().len() * 4);
            for &v in atom.values() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&payload)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != DICTIONARY_MAGIC {
            return format_err("not a dictionary file (bad magic)");
        }
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != DICTIONARY_VERSION {
            return format_err(format!("unsupported dictionary version {version}"));
        }
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            *d = u32::from_le_bytes(read_array(&mut r)?) as usize;
        }
        let grid = HalfDiffGrid::new(dims[0], dims[1], dims[2])
            .map_err(|e| Error::Format(e.to_string()))?;
        let channels = read_array::<1>(&mut r)?[0] as usize;
        let m = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut atoms = Vec::with_capacity(m);
        let mut labels = Vec::with_capacity(m);
        for _ in 0..m {
            let len = u16::from_le_bytes(read_array(&mut r)?) as usize;
            let mut label = vec![0u8; len];
            read_exact(&mut r, &mut label)?;
            labels.push(
                String::from_utf8(label).map_err(|_| Error::Format("label is not UTF-8".into()))?,
            );
            let mut payload = vec![0u8; channels * grid.len() * 4];
            read_exact(&mut r, &mut payload)?;
            let values = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            atoms.push(
                TabulatedBrdf::new(grid, channels, values)
                    .map_err(|e| Error::Format(e.to_string()))?,
            );
        }
        Self::new(atoms, labels).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("file truncated".into()),
        _ => Error::Io(e),
    })
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

/// Result of projecting a full BRDF onto the dictionary cone.
#[derive(Debug, Clone)]
pub struct DictionaryFit {
    pub coefficients: Vec<f64>,
    /// `‖ρ − Dc‖₂` over all channels and nodes.
    pub residual: f64,
}

/// Solves `min ‖ρ − Dc‖² + λ‖c‖₁` subject to `c ≥ 0` with the proximal
/// gradient solver shared with per-pixel reflectance fitting.
pub fn fit_to_dictionary(rho: &TabulatedBrdf, dict: &BrdfDictionary, lambda: f64) -> Result<DictionaryFit> {
    if dict.is_empty() {
        return invalid("empty dictionary");
    }
    if rho.grid() != dict.grid() || rho.channels() != dict.channels() {
        return invalid("BRDF and dictionary must share grid and channel count");
    }
    if !(lambda >= 0.0) {
        return invalid("lambda must be >= 0");
    }
    let m = dict.len();
    let mut gram = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for i in 0..m {
        let ai = dict.atom(i).values();
        rhs[i] = dot(ai, rho.values());
        for j in 0..=i {
            let g = dot(ai, dict.atom(j).values());
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let norm_sq = dot(rho.values(), rho.values());
    let sol = nonneg_lasso_gram(&gram, &rhs, lambda, &LassoOptions::default())?;
    let c = sol.x;
    let quad = (c.transpose() * &gram * &c)[(0, 0)] - 2.0 * c.dot(&rhs) + norm_sq;
    // Recompute the residual directly when the Gram form loses precision.
    let residual = if quad > 1e-8 * norm_sq {
        quad.sqrt()
    } else {
        let mixed = dict.mix(c.as_slice())?;
        mixed
            .values()
            .iter()
            .zip(rho.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    Ok(DictionaryFit { coefficients: c.iter().copied().collect(), residual })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::parametric::ParametricBrdfSpec;

    fn small_dict() -> BrdfDictionary {
        let grid = HalfDiffGrid::with_divisor(10).unwrap();
        BrdfDictionary::from_sweep(
            &ParametricSweep { roughness: vec![0.1, 0.25, 0.4], ..Default::default() },
            grid,
        )
        .unwrap()
    }

    #[test]
    fn rejects_mixed_grids_and_empty() {
        let a = TabulatedBrdf::constant(HalfDiffGrid::with_divisor(10).unwrap(), 1, 0.1).unwrap();
        let b = TabulatedBrdf::constant(HalfDiffGrid::with_divisor(6).unwrap(), 1, 0.1).unwrap();
        assert!(BrdfDictionary::new(vec![a, b], vec!["a".into(), "b".into()]).is_err());
        assert!(BrdfDictionary::new(vec![], vec![]).is_err());
    }

    #[test]
    fn container_round_trip() {
        let d = small_dict();
        let mut bytes = Vec::new();
        d.write_to(&mut bytes).unwrap();
        let back = BrdfDictionary::read_from(&bytes[..]).unwrap();
        assert_eq!(back.labels(), d.labels());
        for (a, b) in back.atoms().iter().zip(d.atoms()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, bytes);
        assert!(BrdfDictionary::read_from(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(BrdfDictionary::read_from(&bytes[..]).is_err());
    }

    #[test]
    fn atom_is_recovered_exactly() {
        let d = small_dict();
        let fit = fit_to_dictionary(d.atom(3), &d, 0.0).unwrap();
        assert!(fit.residual < 1e-8 * d.atom(3).values().iter().map(|x| x * x).sum::<f64>().sqrt());
        for (j, c) in fit.coefficients.iter().enumerate() {
            let want = if j == 3 { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-6, "c[{j}] = {c}");
        }
    }

    #[test]
    fn in_span_mixture_has_zero_residual() {
        let d = small_dict();
        let mut c = vec![0.0; d.len()];
        c[0] = 0.5;
        c[5] = 0.5;
        let rho = d.mix(&c).unwrap();
        let fit = fit_to_dictionary(&rho, &d, 0.0).unwrap();
        let scale = rho.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(fit.residual < 1e-7 * scale, "{}", fit.residual);
    }

    #[test]
    fn leave_one_out_beats_best_single_atom() {
        let d = small_dict();
        let held = 4;
        let rest = d.without(held).unwrap();
        let target = d.atom(held);
        let fit = fit_to_dictionary(target, &rest, 0.0).unwrap();
        // Oracle: best non-negative scaling of each single atom.
        let best_single = rest
            .atoms()
            .iter()
            .map(|a| {
                let aa = dot(a.values(), a.values());
                let s = (dot(a.values(), target.values()) / aa).max(0.0);
                a.values()
                    .iter()
                    .zip(target.values())
                    .map(|(x, y)| (s * x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(fit.residual <= best_single + 1e-9);
    }

    #[test]
    fn kkt_conditions_hold() {
        let d = small_dict();
        let target = ParametricBrdfSpec::BlinnPhong { diffuse: 0.4, specular: 0.3, exponent: 40.0 }
            .tabulate(d.grid())
            .unwrap();
        for &lambda in &[0.0, 0.5, 5.0] {
            let fit = fit_to_dictionary(&target, &d, lambda).unwrap();
            let mixed = d.mix(&fit.coefficients).unwrap();
            let resid: Vec<f64> =
                mixed.values().iter().zip(target.values()).map(|(a, b)| a - b).collect();
            let grads: Vec<f64> = d
                .atoms()
                .iter()
                .map(|a| 2.0 * dot(a.values(), &resid) + lambda)
                .collect();
            let scale = d
                .atoms()
                .iter()
                .map(|a| 2.0 * dot(a.values(), target.values()).abs())
                .fold(0.0, f64::max);
            let tol = 1e-6 * scale;
            for (g, c) in grads.iter().zip(&fit.coefficients) {
                assert!(*g >= -tol, "g = {g}");
                if *c > 0.0 {
                    assert!(g.abs() <= tol, "g = {g} on support");
                }
            }
        }
    }
}
