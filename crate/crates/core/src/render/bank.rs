//! Pre-rendered exemplar matrices for every candidate of a pyramid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::brdf::{BrdfDictionary, Vec3};
use crate::error::{format_err, invalid, Error, Result};
use crate::geometry::CandidatePyramid;

use super::exemplar::{render_exemplar, ExemplarMatrix};
use super::rig::LightingRig;

pub const BANK_MAGIC: &[u8; 4] = b"BANK";
pub const BANK_VERSION: u16 = 1;

#[derive(Debug, Clone)]
struct BankLevel {
    /// Per candidate: `Q × C·M` column-major.
    values: Vec<f32>,
    /// Per candidate and channel: `M × M` Gram matrix of the stored block.
    grams: Vec<f64>,
}

/// `B(ñ)` for every candidate at every pyramid level, stored as `f32`.
#[derive(Debug, Clone)]
pub struct ExemplarBank {
    pyramid: CandidatePyramid,
    rig: LightingRig,
    dictionary: Arc<BrdfDictionary>,
    levels: Vec<BankLevel>,
}

impl ExemplarBank {
    pub fn build(dictionary: Arc<BrdfDictionary>, pyramid: CandidatePyramid, rig: LightingRig) -> Result<Self> {
        if pyramid.num_levels() == 0 {
            return invalid("empty pyramid");
        }
        let stride = rig.q() * dictionary.len() * dictionary.channels();
        let levels = pyramid
            .levels()
            .iter()
            .map(|set| {
                let mut values = vec![0f32; set.len() * stride];
                values
                    .par_chunks_mut(stride)
                    .zip(set.normals.par_iter())
                    .try_for_each(|(dst, n)| -> Result<()> {
                        let b = render_exemplar(&dictionary, n, &rig)?;
                        for (d, s) in dst.iter_mut().zip(b.values.iter()) {
                            *d = *s as f32;
                        }
                        Ok(())
                    })?;
                Ok(values)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(dictionary, pyramid, rig, levels))
    }

    fn assemble(dictionary: Arc<BrdfDictionary>, pyramid: CandidatePyramid, rig: LightingRig, raw: Vec<Vec<f32>>) -> Self {
        let (q, m, ch) = (rig.q(), dictionary.len(), dictionary.channels());
        let stride = q * m * ch;
        let levels = raw
            .into_iter()
            .map(|values| {
                let per = ch * m * m;
                let mut grams = vec![0f64; (values.len() / stride) * per];
                grams.par_chunks_mut(per).zip(values.par_chunks(stride)).for_each(|(g, b)| {
                    block_grams(b, q, m, ch, g);
                });
                BankLevel { values, grams }
            })
            .collect();
        Self { pyramid, rig, dictionary, levels }
    }

    pub fn pyramid(&self) -> &CandidatePyramid {
        &self.pyramid
    }

    pub fn rig(&self) -> &LightingRig {
        &self.rig
    }

    pub fn dictionary(&self) -> &Arc<BrdfDictionary> {
        &self.dictionary
    }

    pub fn dictionary_id(&self) -> String {
        hex(&self.dictionary.fingerprint())
    }

    pub fn q(&self) -> usize {
        self.rig.q()
    }

    pub fn atoms(&self) -> usize {
        self.dictionary.len()
    }

    pub fn channels(&self) -> usize {
        self.dictionary.channels()
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_len(&self, level: usize) -> usize {
        self.pyramid.level(level).len()
    }

    pub fn matrix_count(&self) -> usize {
        self.pyramid.total_candidates()
    }

    pub fn normal(&self, level: usize, idx: usize) -> &Vec3 {
        &self.pyramid.level(level).normals[idx]
    }

    /// Stored `Q × C·M` block, column-major.
    pub fn raw(&self, level: usize, idx: usize) -> &[f32] {
        let stride = self.q() * self.atoms() * self.channels();
        &self.levels[level].values[idx * stride..(idx + 1) * stride]
    }

    /// Gram matrix of channel `ch`'s block, `M × M` column-major.
    pub fn gram(&self, level: usize, idx: usize, ch: usize) -> &[f64] {
        let mm = self.atoms() * self.atoms();
        let base = (idx * self.channels() + ch) * mm;
        &self.levels[level].grams[base..base + mm]
    }

    pub fn matrix(&self, level: usize, idx: usize) -> ExemplarMatrix {
        let (q, cols) = (self.q(), self.atoms() * self.channels());
        ExemplarMatrix {
            normal: *self.normal(level, idx),
            channels: self.channels(),
            values: DMatrix::from_iterator(q, cols, self.raw(level, idx).iter().map(|&v| v as f64)),
        }
    }

    /// Renders `B(n)` at full precision for an arbitrary normal.
    pub fn render(&self, n: &Vec3) -> Result<ExemplarMatrix> {
        render_exemplar(&self.dictionary, n, &self.rig)
    }

    /// Cache key over dictionary, rig and pyramid schedule.
    pub fn cache_key(dictionary: &BrdfDictionary, rig: &LightingRig, schedule: &[f64]) -> String {
        let mut h = Sha256::new();
        h.update(dictionary.fingerprint());
        h.update(rig.fingerprint());
        for s in schedule {
            h.update(s.to_le_bytes());
        }
        let (a, b, c) = dictionary.grid().dims();
        for d in [a, b, c] {
            h.update((d as u32).to_le_bytes());
        }
        hex(&h.finalize()[..16])
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(BANK_MAGIC)?;
        w.write_all(&BANK_VERSION.to_le_bytes())?;
        w.write_all(&self.dictionary.fingerprint())?;
        w.write_all(&self.rig.fingerprint())?;
        w.write_all(&[self.channels() as u8])?;
        w.write_all(&(self.q() as u32).to_le_bytes())?;
        w.write_all(&(self.atoms() as u32).to_le_bytes())?;
        w.write_all(&(self.num_levels() as u32).to_le_bytes())?;
        for set in self.pyramid.levels() {
            w.write_all(&set.spacing_deg.to_le_bytes())?;
            w.write_all(&(set.len() as u32).to_le_bytes())?;
        }
        for level in &self.levels {
            let bytes: Vec<u8> = level.values.iter().flat_map(|v| v.to_le_bytes()).collect();
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    /// Reads a cache written for this exact dictionary and rig.
    pub fn read_from(mut r: impl Read, dictionary: Arc<BrdfDictionary>, rig: LightingRig) -> Result<Self> {
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(|_| Error::Format("truncated bank file".into()))?;
            Ok(buf)
        };
        if take(4)? != BANK_MAGIC {
            return format_err("bad bank magic");
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
        if u16::from_le_bytes(take(2)?.try_into().unwrap()) != BANK_VERSION {
            return format_err("unsupported bank version");
        }
        if take(32)? != dictionary.fingerprint() {
            return format_err("bank was built for a different dictionary");
        }
        if take(32)? != rig.fingerprint() {
            return format_err("bank was built for a different lighting rig");
        }
        let channels = take(1)?[0] as usize;
        let q = u32_at(&take(4)?);
        let m = u32_at(&take(4)?);
        if channels != dictionary.channels() || q != rig.q() || m != dictionary.len() {
            return format_err("bank dimensions do not match dictionary and rig");
        }
        let n_levels = u32_at(&take(4)?);
        let mut schedule = Vec::with_capacity(n_levels);
        let mut counts = Vec::with_capacity(n_levels);
        for _ in 0..n_levels {
            schedule.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
            counts.push(u32_at(&take(4)?));
        }
        let pyramid = CandidatePyramid::new(&schedule, &Vector3::z()).map_err(|e| Error::Format(e.to_string()))?;
        if pyramid.levels().iter().zip(&counts).any(|(l, &c)| l.len() != c) {
            return format_err("bank candidate counts do not match the pyramid");
        }
        let stride = q * m * channels;
        let raw = counts
            .iter()
            .map(|&c| {
                Ok(take(c * stride * 4)?
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect())
            })
            .collect::<Result<Vec<Vec<f32>>>>()?;
        Ok(Self::assemble(dictionary, pyramid, rig, raw))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, dictionary: Arc<BrdfDictionary>, rig: LightingRig) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?), dictionary, rig)
    }
}

fn block_grams(b: &[f32], q: usize, m: usize, channels: usize, out: &mut [f64]) {
    for ch in 0..channels {
        let g = &mut out[ch * m * m..(ch + 1) * m * m];
        for a in 0..m {
            let ca = &b[(ch * m + a) * q..(ch * m + a + 1) * q];
            for c in a..m {
                let cb = &b[(ch * m + c) * q..(ch * m + c + 1) * q];
                let dot: f64 = ca.iter().zip(cb).map(|(&x, &y)| x as f64 * y as f64).sum();
                g[a * m + c] = dot;
                g[c * m + a] = dot;
            }
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brdf::{HalfDiffGrid, ParametricSweep};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_bank() -> ExemplarBank {
        let d = BrdfDictionary::from_sweep(&ParametricSweep::default(), HalfDiffGrid::with_divisor(6).unwrap()).unwrap();
        let p = CandidatePyramid::new(&[20.0, 10.0, 5.0], &Vector3::z()).unwrap();
        ExemplarBank::build(Arc::new(d), p, LightingRig::hemisphere(30).unwrap()).unwrap()
    }

    #[test]
    fn counts_and_spot_checks() {
        let bank = small_bank();
        let total: usize = (0..bank.num_levels()).map(|l| bank.level_len(l)).sum();
        assert_eq!(bank.matrix_count(), total);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let level = rng.gen_range(0..bank.num_levels());
            let idx = rng.gen_range(0..bank.level_len(level));
            let n = *bank.normal(level, idx);
            let fresh = render_exemplar(bank.dictionary(), &n, bank.rig()).unwrap();
            let stored = bank.matrix(level, idx);
            for (a, b) in stored.values.iter().zip(fresh.values.iter()) {
                assert_eq!(*a, (*b as f32) as f64);
            }
            let g = bank.gram(level, idx, 0);
            let gs = stored.values.transpose() * &stored.values;
            for (x, y) in g.iter().zip(gs.iter()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let bank = small_bank();
        let mut bytes = Vec::new();
        bank.write_to(&mut bytes).unwrap();
        let back = ExemplarBank::read_from(bytes.as_slice(), bank.dictionary().clone(), bank.rig().clone()).unwrap();
        for l in 0..bank.num_levels() {
            assert_eq!(back.levels[l].values, bank.levels[l].values);
        }
        let other_rig = LightingRig::hemisphere(31).unwrap();
        assert!(ExemplarBank::read_from(bytes.as_slice(), bank.dictionary().clone(), other_rig).is_err());
        assert!(ExemplarBank::read_from(&bytes[..100], bank.dictionary().clone(), bank.rig().clone()).is_err());
    }
}
