//! Candidate scans: brute force over one level and coarse-to-fine over the
//! pyramid.

use crate::brdf::Vec3;
use crate::error::{invalid, Result};
use crate::geometry::cone_indices;
use crate::render::ExemplarBank;

use super::nnls::{nnls_blocks, nnls_gram, GramWorkspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineStatus {
    NotRun,
    Refined { iterations: usize },
    /// Gradients were unavailable or ill-conditioned.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalEstimate {
    pub normal: Vec3,
    /// `C·M` non-negative coefficients.
    pub abundances: Vec<f64>,
    /// `‖I − B(n̂)c‖₂` at full precision.
    pub residual: f64,
    pub evaluated_count: usize,
    pub refine: RefineStatus,
}

/// Atom restriction applied to every fit (e.g. leave-one-out).
#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    pub allowed_atoms: Option<Vec<bool>>,
}

impl SearchOptions {
    pub fn excluding(m: usize, atom: usize) -> Self {
        let mut allowed = vec![true; m];
        allowed[atom] = false;
        Self { allowed_atoms: Some(allowed) }
    }

    pub(crate) fn mask(&self) -> Option<&[bool]> {
        self.allowed_atoms.as_deref()
    }
}

/// Scores candidates against a profile with reusable buffers.
pub(crate) struct Scorer<'a> {
    bank: &'a ExemplarBank,
    profile: &'a [f64],
    allowed: Option<&'a [bool]>,
    ws: GramWorkspace,
    rhs: Vec<f64>,
}

impl<'a> Scorer<'a> {
    pub(crate) fn new(bank: &'a ExemplarBank, profile: &'a [f64], opts: &'a SearchOptions) -> Result<Self> {
        if profile.len() != bank.q() * bank.channels() {
            return invalid(format!(
                "profile has {} values, bank expects {}",
                profile.len(),
                bank.q() * bank.channels()
            ));
        }
        if opts.allowed_atoms.as_ref().is_some_and(|a| a.len() != bank.atoms()) {
            return invalid("atom mask length mismatch");
        }
        if profile.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite intensity");
        }
        Ok(Self { bank, profile, allowed: opts.mask(), ws: GramWorkspace::default(), rhs: Vec::new() })
    }

    /// Residual of the NNLS fit against the stored (single-precision) matrix.
    pub(crate) fn score(&mut self, level: usize, idx: usize) -> f64 {
        let (q, m, channels) = (self.bank.q(), self.bank.atoms(), self.bank.channels());
        let b = self.bank.raw(level, idx);
        let mut res2 = 0.0;
        for ch in 0..channels {
            let prof = &self.profile[ch * q..(ch + 1) * q];
            let block = &b[ch * m * q..(ch + 1) * m * q];
            self.rhs.clear();
            for j in 0..m {
                let col = &block[j * q..(j + 1) * q];
                self.rhs.push(col.iter().zip(prof).map(|(&a, &p)| a as f64 * p).sum());
            }
            let c = nnls_gram(self.bank.gram(level, idx, ch), &self.rhs, self.allowed, &mut self.ws);
            for (i, &p) in prof.iter().enumerate() {
                let mut pred = 0.0;
                for (j, &cj) in c.iter().enumerate() {
                    if cj != 0.0 {
                        pred += block[j * q + i] as f64 * cj;
                    }
                }
                res2 += (p - pred) * (p - pred);
            }
        }
        res2.sqrt()
    }

    /// Lowest-residual candidate among `indices` (ties: first in order).
    pub(crate) fn argmin(&mut self, level: usize, indices: impl IntoIterator<Item = usize>) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for idx in indices {
            let r = self.score(level, idx);
            if best.map_or(true, |(_, br)| r < br) {
                best = Some((idx, r));
            }
        }
        best
    }
}

/// Full-precision fit at an arbitrary normal.
pub fn fit_at(profile: &[f64], n: &Vec3, bank: &ExemplarBank, opts: &SearchOptions) -> Result<(Vec<f64>, f64)> {
    let b = bank.render(n)?;
    let s = nnls_blocks(&b.values, b.channels, profile, opts.mask())?;
    Ok((s.x.iter().copied().collect(), s.residual))
}

fn finish(profile: &[f64], n: Vec3, bank: &ExemplarBank, opts: &SearchOptions, evaluated: usize) -> Result<NormalEstimate> {
    let (abundances, residual) = fit_at(profile, &n, bank, opts)?;
    Ok(NormalEstimate { normal: n, abundances, residual, evaluated_count: evaluated, refine: RefineStatus::NotRun })
}

/// Scores every candidate of `level` and returns the minimizer.
pub fn match_normal_bruteforce(profile: &[f64], bank: &ExemplarBank, level: usize, opts: &SearchOptions) -> Result<NormalEstimate> {
    if level >= bank.num_levels() || bank.level_len(level) == 0 {
        return invalid("empty or missing pyramid level");
    }
    let mut scorer = Scorer::new(bank, profile, opts)?;
    let n = bank.level_len(level);
    let (idx, _) = scorer.argmin(level, 0..n).expect("level non-empty");
    finish(profile, *bank.normal(level, idx), bank, opts, n)
}

/// Coarse-to-fine search through all levels.
pub fn match_normal_c2f(profile: &[f64], bank: &ExemplarBank, opts: &SearchOptions) -> Result<NormalEstimate> {
    match_normal_c2f_until(profile, bank, bank.num_levels() - 1, opts)
}

/// Coarse-to-fine search stopping after `last_level`: level 0 is scanned
/// fully, level `j+1` only inside the cone around the level-`j` winner whose
/// half-angle is the neighbour spacing of level `j`.
pub fn match_normal_c2f_until(profile: &[f64], bank: &ExemplarBank, last_level: usize, opts: &SearchOptions) -> Result<NormalEstimate> {
    if last_level >= bank.num_levels() {
        return invalid("level out of range");
    }
    let mut scorer = Scorer::new(bank, profile, opts)?;
    let n0 = bank.level_len(0);
    let (mut idx, _) = scorer.argmin(0, 0..n0).ok_or_else(|| crate::Error::InvalidArgument("empty coarsest level".into()))?;
    let mut evaluated = n0;
    for level in 1..=last_level {
        let prev = bank.pyramid().level(level - 1);
        let center = prev.normals[idx];
        let cone = cone_indices(bank.pyramid().level(level), &center, prev.neighbour_spacing_deg());
        evaluated += cone.len();
        match scorer.argmin(level, cone) {
            Some((i, _)) => idx = i,
            None => {
                // Empty cone: keep the coarser winner.
                return finish(profile, center, bank, opts, evaluated);
            }
        }
    }
    finish(profile, *bank.normal(last_level, idx), bank, opts, evaluated)
}

/// Full-precision residual of the stored fit at every candidate of a level.
pub fn level_residuals(profile: &[f64], bank: &ExemplarBank, level: usize, opts: &SearchOptions) -> Result<Vec<f64>> {
    let mut scorer = Scorer::new(bank, profile, opts)?;
    Ok((0..bank.level_len(level)).map(|i| scorer.score(level, i)).collect())
}

