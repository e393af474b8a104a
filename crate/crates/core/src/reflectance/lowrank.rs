//! Joint low-rank reflectance fit by forward-backward splitting:
//! `min Σ_p ‖I_p − B_p c_p‖² + λ‖C‖₁ + β‖C‖_*, C ≥ 0`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::brdf::BrdfDictionary;
use crate::error::{invalid, Error, Result};
use crate::render::{render_exemplar, ImageStack, LightingRig, NormalMap};

use super::abundance::AbundanceMatrix;
use super::prox::{nonneg_lasso_gram, nonneg_shrink, rank_of, LassoOptions};
use super::sparse::check_inputs;

#[derive(Debug, Clone)]
pub struct LowRankParams {
    pub lambda: f64,
    /// Threshold of the singular value step, applied as given.
    pub beta: f64,
    /// Gradient step; `None` selects `0.9 / L`.
    pub step: Option<f64>,
    pub max_iters: usize,
    /// Stop once the largest column change, relative to the largest column,
    /// falls below this.
    pub rel_tol: f64,
}

impl Default for LowRankParams {
    fn default() -> Self {
        Self { lambda: 0.0, beta: 0.0, step: None, max_iters: 500, rel_tol: 1e-7 }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    /// `Σ‖I − Bc‖² + λ‖C‖₁ + (β/t)‖C‖_*` after the singular value step.
    pub objective: Vec<f64>,
    /// Rank after the singular value step (σ > 1e-8·σ_max).
    pub rank: Vec<usize>,
    pub max_column_change: Vec<f64>,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len()
    }

    pub fn final_rank(&self) -> usize {
        self.rank.last().copied().unwrap_or(0)
    }
}

/// Normal-equation data for every pixel: per channel `BᵀB`, `BᵀI`, and `IᵀI`.
#[derive(Debug, Clone)]
pub struct LowRankProblem {
    m: usize,
    channels: usize,
    pixel_index: Vec<(u32, u32)>,
    grams: Vec<f64>,
    rhs: Vec<f64>,
    energy: Vec<f64>,
    lipschitz: f64,
}

impl LowRankProblem {
    pub fn new(stack: &ImageStack, normals: &NormalMap, dict: &BrdfDictionary, rig: &LightingRig) -> Result<Self> {
        let pixels = check_inputs(stack, normals, dict, rig)?;
        if pixels.is_empty() {
            return invalid("no pixels to fit");
        }
        let (m, channels, q) = (dict.len(), dict.channels(), rig.q());
        let per: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = pixels
            .par_iter()
            .map(|&p| {
                let b = render_exemplar(dict, &normals.normals[p].expect("filtered"), rig)?.values;
                let prof = stack.profile(p);
                let mut grams = Vec::with_capacity(channels * m * m);
                let mut rhs = Vec::with_capacity(channels * m);
                let mut energy = 0.0;
                let mut lmax = 0.0f64;
                for ch in 0..channels {
                    let block = b.columns(ch * m, m);
                    let i = nalgebra::DVector::from_column_slice(&prof[ch * q..(ch + 1) * q]);
                    let g = block.transpose() * block;
                    lmax = lmax.max(g.clone().symmetric_eigenvalues().max());
                    grams.extend(g.iter());
                    rhs.extend((block.transpose() * &i).iter());
                    energy += i.norm_squared();
                }
                Ok((grams, rhs, energy, lmax))
            })
            .collect::<Result<_>>()?;
        let w = stack.width();
        let lipschitz = 2.0 * per.iter().map(|x| x.3).fold(0.0, f64::max);
        Ok(Self {
            m,
            channels,
            pixel_index: pixels.iter().map(|&p| ((p % w) as u32, (p / w) as u32)).collect(),
            grams: per.iter().flat_map(|x| x.0.iter().copied()).collect(),
            rhs: per.iter().flat_map(|x| x.1.iter().copied()).collect(),
            energy: per.iter().map(|x| x.2).collect(),
            lipschitz,
        })
    }

    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.m * self.channels
    }

    pub fn pixel_index(&self) -> &[(u32, u32)] {
        &self.pixel_index
    }

    /// `L = 2·max_p σ_max(B_p)²`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn gram(&self, p: usize, ch: usize) -> &[f64] {
        let mm = self.m * self.m;
        let base = (p * self.channels + ch) * mm;
        &self.grams[base..base + mm]
    }

    fn rhs(&self, p: usize, ch: usize) -> &[f64] {
        let base = (p * self.channels + ch) * self.m;
        &self.rhs[base..base + self.m]
    }

    /// `Σ_p ‖I_p − B_p c_p‖²`.
    pub fn data_term(&self, c: &DMatrix<f64>) -> f64 {
        let m = self.m;
        (0..self.len())
            .map(|p| {
                let col = c.column(p);
                let mut v = self.energy[p];
                for ch in 0..self.channels {
                    let x = &col.as_slice()[ch * m..(ch + 1) * m];
                    let (g, r) = (self.gram(p, ch), self.rhs(p, ch));
                    for a in 0..m {
                        let ga: f64 = (0..m).map(|b| g[a * m + b] * x[b]).sum();
                        v += x[a] * ga - 2.0 * r[a] * x[a];
                    }
                }
                v.max(0.0)
            })
            .sum()
    }

    /// Independent per-pixel sparse fits (the starting point of the joint solve).
    pub fn per_pixel(&self, lambda: f64, opts: &LassoOptions) -> Result<DMatrix<f64>> {
        let m = self.m;
        let cols: Vec<Vec<f64>> = (0..self.len())
            .into_par_iter()
            .map(|p| {
                let mut out = Vec::with_capacity(self.rows());
                for ch in 0..self.channels {
                    let g = DMatrix::from_column_slice(m, m, self.gram(p, ch));
                    let r = nalgebra::DVector::from_column_slice(self.rhs(p, ch));
                    out.extend(nonneg_lasso_gram(&g, &r, lambda, opts)?.x.iter());
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(self.rows(), self.len(), |i, j| cols[j][i]))
    }

    /// Runs the three-step iteration from `init`. The returned matrix is
    /// projected onto `C ≥ 0`.
    pub fn solve(&self, init: &DMatrix<f64>, params: &LowRankParams) -> Result<(DMatrix<f64>, SolverTrace)> {
        if init.nrows() != self.rows() || init.ncols() != self.len() {
            return invalid("initial abundance matrix has the wrong shape");
        }
        if !(params.lambda >= 0.0 && params.beta >= 0.0) {
            return invalid("lambda and beta must be >= 0");
        }
        let bound = if self.lipschitz > 0.0 { 1.0 / self.lipschitz } else { f64::INFINITY };
        let t = params.step.unwrap_or(0.9 * bound);
        if !(t > 0.0) || t > bound {
            return invalid(format!("step {t:e} exceeds 1/L = {bound:e}"));
        }
        let (m, rows) = (self.m, self.rows());
        let nuclear_weight = if params.beta > 0.0 { params.beta / t } else { 0.0 };
        let mut c = init.clone();
        let mut trace = SolverTrace::default();
        for _ in 0..params.max_iters {
            let mut a = c.clone();
            a.as_mut_slice().par_chunks_mut(rows).enumerate().for_each(|(p, col)| {
                for ch in 0..self.channels {
                    let (g, r) = (self.gram(p, ch), self.rhs(p, ch));
                    let x = &mut col[ch * m..(ch + 1) * m];
                    let old: Vec<f64> = x.to_vec();
                    for i in 0..m {
                        let gx: f64 = (0..m).map(|k| g[i * m + k] * old[k]).sum();
                        let forward = old[i] + 2.0 * t * (r[i] - gx);
                        x[i] = nonneg_shrink(forward, params.lambda * t);
                    }
                }
            });
            let (next, sv) = svt_with_values(&a, params.beta)?;
            let change = column_change(&next, &c);
            let objective = self.data_term(&next)
                + params.lambda * next.iter().map(|v| v.abs()).sum::<f64>()
                + nuclear_weight * sv.iter().sum::<f64>();
            trace.objective.push(objective);
            trace.rank.push(rank_of(&sv));
            trace.max_column_change.push(change);
            c = next;
            if change < params.rel_tol {
                break;
            }
        }
        c.apply(|v| *v = v.max(0.0));
        Ok((c, trace))
    }
}

fn column_change(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let diff = a.column_iter().zip(b.column_iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Singular value thresholding that also returns the shrunk singular values
/// in descending order. `β = 0` is the identity.
fn svt_with_values(x: &DMatrix<f64>, beta: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = x
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let shrunk = svd.singular_values.map(|s| (s - beta).max(0.0));
    let mut sv: Vec<f64> = shrunk.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if beta == 0.0 {
        return Ok((x.clone(), sv));
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    Ok((u * DMatrix::from_diagonal(&shrunk) * v_t, sv))
}

/// Per-pixel initialization followed by the joint low-rank solve.
pub fn fit_svbrdf_lowrank(
    stack: &ImageStack,
    normals: &NormalMap,
    dict: &BrdfDictionary,
    rig: &LightingRig,
    params: &LowRankParams,
) -> Result<(AbundanceMatrix, SolverTrace)> {
    let problem = LowRankProblem::new(stack, normals, dict, rig)?;
    let init = problem.per_pixel(params.lambda, &LassoOptions::default())?;
    let (c, trace) = problem.solve(&init, params)?;
    Ok((AbundanceMatrix::new(c, problem.pixel_index.clone())?, trace))
}

#[derive(Debug, Clone)]
pub struct BetaSelection {
    pub beta: f64,
    pub abundances: AbundanceMatrix,
    pub trace: SolverTrace,
    pub rank: usize,
    /// Set when no swept β produced exactly the target rank.
    pub flagged: bool,
    /// `(β, rank)` for every solve of the sweep.
    pub sweep: Vec<(f64, usize)>,
}

/// Geometric sweep `β_k = β₀·2^k`, `β₀ = 1e-3·σ_max(C_init)`, each solve
/// started from the per-pixel solution. Returns the smallest swept β whose
/// solution has rank at most `K`; the result is flagged when that rank is
/// below `K`, or when no swept β reaches rank `K` or less (then the last,
/// lowest-rank solve is returned).
pub fn select_beta_problem(
    problem: &LowRankProblem,
    target_rank: usize,
    params: &LowRankParams,
    max_steps: usize,
) -> Result<BetaSelection> {
    if target_rank == 0 {
        return invalid("target rank must be >= 1");
    }
    if max_steps == 0 {
        return invalid("beta sweep needs at least one step");
    }
    let init = problem.per_pixel(params.lambda, &LassoOptions::default())?;
    let sigma_max = super::prox::singular_values(&init)?.first().copied().unwrap_or(0.0);
    if sigma_max <= 0.0 {
        return invalid("per-pixel solution is zero; nothing to regularize");
    }
    let beta0 = 1e-3 * sigma_max;
    let mut sweep = Vec::new();
    let mut last = None;
    for k in 0..max_steps {
        let beta = beta0 * 2f64.powi(k as i32);
        let (c, trace) = problem.solve(&init, &LowRankParams { beta, ..params.clone() })?;
        let rank = trace.final_rank();
        sweep.push((beta, rank));
        last = Some((beta, c, trace, rank));
        if rank <= target_rank {
            break;
        }
    }
    let (beta, c, trace, rank) = last.expect("at least one sweep step");
    Ok(BetaSelection {
        beta,
        abundances: AbundanceMatrix::new(c, problem.pixel_index.clone())?,
        trace,
        rank,
        flagged: rank != target_rank,
        sweep,
    })
}

pub fn select_beta(
    stack: &ImageStack,
    normals: &NormalMap,
    dict: &BrdfDictionary,
    rig: &LightingRig,
    target_rank: usize,
    params: &LowRankParams,
) -> Result<BetaSelection> {
    let problem = LowRankProblem::new(stack, normals, dict, rig)?;
    select_beta_problem(&problem, target_rank, params, 40)
}
