//! Solver stages driven by a [`PipelineConfig`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rayon::prelude::*;

use crate::brdf::{load_merl_file, BrdfDictionary, HalfDiffGrid, TabulatedBrdf};
use crate::error::{invalid, Error, Result};
use crate::geometry::CandidatePyramid;
use crate::normals::{
    estimate_normal_map, map::csv_err, GradientOptions, NormalMapEstimate, NormalMapOptions, RefineOptions,
};
use crate::reflectance::{
    fit_svbrdf_sparse, select_beta_problem, AbundanceMatrix, LassoOptions, LowRankParams, LowRankProblem, SolverTrace,
};
use crate::render::{render_exemplar, ExemplarBank, ImageStack, LightingRig, NormalMap};

use super::config::{DictionarySource, PipelineConfig};

pub fn grid(cfg: &PipelineConfig) -> Result<HalfDiffGrid> {
    HalfDiffGrid::with_divisor(cfg.grid_divisor).map_err(|e| Error::Config(e.to_string()))
}

/// Builds or loads the dictionary named by the configuration, on the configured grid.
pub fn build_dictionary(cfg: &PipelineConfig) -> Result<BrdfDictionary> {
    let g = grid(cfg)?;
    match &cfg.dictionary {
        DictionarySource::Sweep(s) => BrdfDictionary::from_sweep(s, g),
        DictionarySource::File(p) => {
            let d = BrdfDictionary::load(p)?;
            if d.grid() == g {
                return Ok(d);
            }
            let atoms = d.atoms().iter().map(|a| a.resample(g)).collect::<Result<_>>()?;
            BrdfDictionary::new(atoms, d.labels().to_vec())
        }
        DictionarySource::Merl(dir) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "binary"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Config(format!("no .binary files in {}", dir.display())));
            }
            let atoms = files.iter().map(|f| load_merl_file(f)?.resample(g)).collect::<Result<_>>()?;
            let labels =
                files.iter().map(|f| f.file_stem().unwrap_or_default().to_string_lossy().into_owned()).collect();
            BrdfDictionary::new(atoms, labels)
        }
    }
}

/// Replicates a single-channel dictionary to three channels.
pub fn match_channels(dict: BrdfDictionary, channels: usize) -> Result<BrdfDictionary> {
    match (dict.channels(), channels) {
        (a, b) if a == b => Ok(dict),
        (1, 3) => {
            let atoms = dict
                .atoms()
                .iter()
                .map(|a| TabulatedBrdf::from_channels(&[a.clone(), a.clone(), a.clone()]))
                .collect::<Result<_>>()?;
            BrdfDictionary::new(atoms, dict.labels().to_vec())
        }
        (a, b) => invalid(format!("cannot use a {a}-channel dictionary with {b}-channel images")),
    }
}

/// Reads an image directory (light file, images, optional mask).
pub fn ingest(dir: impl AsRef<Path>) -> Result<ImageStack> {
    ImageStack::read_dir(dir)
}

/// Loads the bank from the cache directory when a matching file exists,
/// otherwise builds it (and stores it when a cache directory is set).
pub fn bank_for(cfg: &PipelineConfig, dict: Arc<BrdfDictionary>, rig: &LightingRig) -> Result<ExemplarBank> {
    let path = cfg
        .bank_cache
        .as_ref()
        .map(|d| d.join(format!("{}.bank", ExemplarBank::cache_key(&dict, rig, &cfg.pyramid))));
    if let Some(p) = path.as_ref().filter(|p| p.is_file()) {
        info!("loading cached bank {}", p.display());
        return ExemplarBank::load(p, dict, rig.clone());
    }
    let pyramid = CandidatePyramid::new(&cfg.pyramid, &nalgebra::Vector3::z()).map_err(|e| Error::Config(e.to_string()))?;
    let bank = ExemplarBank::build(dict, pyramid, rig.clone())?;
    info!("built bank with {} candidate matrices", bank.matrix_count());
    if let Some(p) = path {
        std::fs::create_dir_all(p.parent().expect("joined path"))?;
        bank.save(&p)?;
    }
    Ok(bank)
}

pub fn normal_options(cfg: &PipelineConfig) -> NormalMapOptions {
    NormalMapOptions {
        refine: cfg.refine,
        refine_opts: RefineOptions {
            gradient: GradientOptions { radius_deg: cfg.gradient_radius, ..Default::default() },
            max_iters: cfg.refine_max_iters,
            rel_tol: cfg.refine_rel_tol,
            ..Default::default()
        },
        search: Default::default(),
    }
}

/// Normal estimation for a whole stack; writes its artifacts when `out` is given.
pub fn run_normals(cfg: &PipelineConfig, stack: &ImageStack, out: Option<&Path>) -> Result<NormalMapEstimate> {
    cfg.validate()?;
    let dict = Arc::new(match_channels(build_dictionary(cfg)?, stack.channels())?);
    let bank = bank_for(cfg, dict, stack.rig())?;
    let est = estimate_normal_map(stack, &bank, &normal_options(cfg))?;
    if let Some(dir) = out {
        est.save(dir)?;
    }
    Ok(est)
}

#[derive(Debug, Clone)]
pub struct ReflectanceOutput {
    pub abundances: AbundanceMatrix,
    /// `‖I_p − B_p c_p‖` per fitted pixel, in abundance column order.
    pub residuals: Vec<f64>,
    pub lowrank: Option<LowRankSummary>,
    /// `(λ, mean residual, mean ℓ1, mean support size)` per swept λ.
    pub lambda_sweep: Vec<(f64, f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LowRankSummary {
    pub beta: f64,
    pub rank: usize,
    pub flagged: bool,
    pub trace: SolverTrace,
    pub sweep: Vec<(f64, usize)>,
}

fn pixel_residuals(
    stack: &ImageStack,
    normals: &NormalMap,
    dict: &BrdfDictionary,
    c: &AbundanceMatrix,
) -> Result<Vec<f64>> {
    let rig = stack.rig();
    c.pixel_index()
        .par_iter()
        .enumerate()
        .map(|(k, &(x, y))| {
            let p = y as usize * stack.width() + x as usize;
            let n = normals.normals[p].ok_or_else(|| Error::InvalidArgument("abundance pixel without normal".into()))?;
            let pred = render_exemplar(dict, &n, rig)?.apply(&c.column(k));
            Ok(stack.profile(p).iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        })
        .collect()
}

/// Per-pixel sparse fit, optionally followed by the low-rank refinement.
pub fn run_reflectance(
    cfg: &PipelineConfig,
    stack: &ImageStack,
    normals: &NormalMap,
    out: Option<&Path>,
) -> Result<ReflectanceOutput> {
    cfg.validate()?;
    if normals.width != stack.width() || normals.height != stack.height() {
        return invalid("normal map and image stack sizes differ");
    }
    let dict = match_channels(build_dictionary(cfg)?, stack.channels())?;
    let rig = stack.rig();
    let lasso = LassoOptions::default();

    let mut lambda_sweep = Vec::new();
    for &lambda in &cfg.lambda_sweep {
        let c = fit_svbrdf_sparse(stack, normals, &dict, rig, lambda, &lasso)?;
        let res = pixel_residuals(stack, normals, &dict, &c)?;
        let n = res.len().max(1) as f64;
        let vals = c.values();
        let l1: f64 = vals.column_iter().map(|col| col.sum()).sum::<f64>() / n;
        let nnz = vals.iter().filter(|&&v| v > 0.0).count() as f64 / n;
        lambda_sweep.push((lambda, res.iter().sum::<f64>() / n, l1, nnz));
    }

    let (abundances, lowrank) = if cfg.lowrank {
        let problem = LowRankProblem::new(stack, normals, &dict, rig)?;
        let params = LowRankParams {
            lambda: cfg.lambda,
            beta: cfg.beta.unwrap_or(0.0),
            max_iters: cfg.lowrank_max_iters,
            rel_tol: cfg.lowrank_rel_tol,
            step: None,
        };
        let summary = match cfg.beta {
            Some(beta) => {
                let init = problem.per_pixel(cfg.lambda, &lasso)?;
                let (c, trace) = problem.solve(&init, &params)?;
                let rank = trace.final_rank();
                let c = AbundanceMatrix::new(c, problem.pixel_index().to_vec())?;
                (c, LowRankSummary { beta, rank, flagged: false, trace, sweep: vec![(beta, rank)] })
            }
            None => {
                let sel = select_beta_problem(&problem, cfg.target_rank, &params, cfg.bench.fig8_sweep_steps)?;
                if sel.flagged {
                    log::warn!("no swept beta reached rank {}; using rank {}", cfg.target_rank, sel.rank);
                }
                let s = LowRankSummary { beta: sel.beta, rank: sel.rank, flagged: sel.flagged, trace: sel.trace, sweep: sel.sweep };
                (sel.abundances, s)
            }
        };
        (summary.0, Some(summary.1))
    } else {
        (fit_svbrdf_sparse(stack, normals, &dict, rig, cfg.lambda, &lasso)?, None)
    };
    let residuals = pixel_residuals(stack, normals, &dict, &abundances)?;
    let output = ReflectanceOutput { abundances, residuals, lowrank, lambda_sweep };
    if let Some(dir) = out {
        output.save(dir, &dict)?;
    }
    Ok(output)
}

impl ReflectanceOutput {
    /// Writes `abundances.abdc`, `reflectance.csv` and, when present,
    /// `lambda_sweep.csv`, `lowrank_trace.csv` and `beta_sweep.csv`.
    pub fn save(&self, dir: &Path, dict: &BrdfDictionary) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.abundances.save(dir.join("abundances.abdc"))?;
        let m = dict.len();
        let mut w = csv::Writer::from_path(dir.join("reflectance.csv")).map_err(csv_err)?;
        w.write_record(["x", "y", "residual", "l1", "support", "dominant_atom", "dominant_label"]).map_err(csv_err)?;
        for (k, &(x, y)) in self.abundances.pixel_index().iter().enumerate() {
            let c = self.abundances.column(k);
            let mut per_atom = vec![0.0; m];
            for (i, v) in c.iter().enumerate() {
                per_atom[i % m] += v;
            }
            let dom = per_atom.iter().enumerate().fold(0, |b, (i, v)| if *v > per_atom[b] { i } else { b });
            w.write_record([
                x.to_string(),
                y.to_string(),
                self.residuals[k].to_string(),
                c.iter().sum::<f64>().to_string(),
                c.iter().filter(|&&v| v > 0.0).count().to_string(),
                dom.to_string(),
                dict.labels()[dom].clone(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        if !self.lambda_sweep.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("lambda_sweep.csv")).map_err(csv_err)?;
            w.write_record(["lambda", "mean_residual", "mean_l1", "mean_support"]).map_err(csv_err)?;
            for (l, r, a, s) in &self.lambda_sweep {
                w.write_record([l.to_string(), r.to_string(), a.to_string(), s.to_string()]).map_err(csv_err)?;
            }
            w.flush()?;
        }
        if let Some(lr) = &self.lowrank {
            let mut w = csv::Writer::from_path(dir.join("lowrank_trace.csv")).map_err(csv_err)?;
            w.write_record(["iteration", "objective", "rank", "max_column_change"]).map_err(csv_err)?;
            for i in 0..lr.trace.iterations() {
                w.write_record([
                    i.to_string(),
                    lr.trace.objective[i].to_string(),
                    lr.trace.rank[i].to_string(),
                    lr.trace.max_column_change[i].to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
            let mut w = csv::Writer::from_path(dir.join("beta_sweep.csv")).map_err(csv_err)?;
            w.write_record(["beta", "rank", "selected"]).map_err(csv_err)?;
            for (b, r) in &lr.sweep {
                w.write_record([b.to_string(), r.to_string(), (*b == lr.beta).to_string()]).map_err(csv_err)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}
