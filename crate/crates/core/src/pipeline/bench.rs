//! Scaled experiment protocols with CSV reports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::brdf::{BrdfDictionary, Vec3};
use crate::error::{Error, Result};
use crate::geometry::{angular_error, euler_to_normal};
use crate::normals::map::csv_err;
use crate::normals::{
    fit_at, match_normal_bruteforce, match_normal_c2f_until, refine_normal, NormalEstimate, RefineOptions,
    SearchOptions,
};
use crate::reflectance::{select_beta_problem, CoefficientMetric, LassoOptions, LowRankParams, LowRankProblem};
use crate::render::{
    render_pixel, render_scene, smooth_mixture, ExemplarBank, LightingRig, SceneGeometry, SceneReflectance, SceneSpec,
};

use super::config::PipelineConfig;
use super::run::{bank_for, build_dictionary, normal_options};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Table1,
    Table2,
    Fig4,
    Fig5,
    Fig8,
}

impl Protocol {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "table1" => Protocol::Table1,
            "table2" => Protocol::Table2,
            "fig4" => Protocol::Fig4,
            "fig5" => Protocol::Fig5,
            "fig8" => Protocol::Fig8,
            other => return Err(Error::Config(format!("unknown protocol '{other}'"))),
        })
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Table1 => "table1",
            Protocol::Table2 => "table2",
            Protocol::Fig4 => "fig4",
            Protocol::Fig5 => "fig5",
            Protocol::Fig8 => "fig8",
        })
    }
}

/// One row of a report. `group` names the method, `param` the swept setting.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub group: String,
    pub param: String,
    pub trial: usize,
    pub angular_error: Option<f64>,
    pub brdf_error: Option<f64>,
    pub evaluated: Option<usize>,
    /// Free-form `key=value;…` details.
    pub extra: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub group: String,
    pub param: String,
    pub count: usize,
    pub mean_angular: Option<f64>,
    pub median_angular: Option<f64>,
    pub max_angular: Option<f64>,
    pub mean_brdf: Option<f64>,
    pub median_brdf: Option<f64>,
    pub mean_evaluated: Option<f64>,
    pub max_evaluated: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub protocol: String,
    pub rows: Vec<TrialRecord>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    Some(if k % 2 == 1 { s[k / 2] } else { 0.5 * (s[k / 2 - 1] + s[k / 2]) })
}

fn opt(v: Option<impl ToString>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl ExperimentReport {
    /// Aggregates per `(group, param)`, in first-appearance order.
    pub fn summary(&self) -> Vec<Aggregate> {
        let mut order = Vec::new();
        let mut groups: BTreeMap<(String, String), Vec<&TrialRecord>> = BTreeMap::new();
        for r in &self.rows {
            let key = (r.group.clone(), r.param.clone());
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(r);
        }
        order
            .into_iter()
            .map(|key| {
                let rows = &groups[&key];
                let ang: Vec<f64> = rows.iter().filter_map(|r| r.angular_error).collect();
                let brdf: Vec<f64> = rows.iter().filter_map(|r| r.brdf_error).collect();
                let ev: Vec<usize> = rows.iter().filter_map(|r| r.evaluated).collect();
                let ev_f: Vec<f64> = ev.iter().map(|&e| e as f64).collect();
                Aggregate {
                    group: key.0,
                    param: key.1,
                    count: rows.len(),
                    mean_angular: mean(&ang),
                    median_angular: median(&ang),
                    max_angular: ang.iter().copied().reduce(f64::max),
                    mean_brdf: mean(&brdf),
                    median_brdf: median(&brdf),
                    mean_evaluated: mean(&ev_f),
                    max_evaluated: ev.iter().copied().max(),
                }
            })
            .collect()
    }

    pub fn aggregate(&self, group: &str, param: &str) -> Option<Aggregate> {
        self.summary().into_iter().find(|a| a.group == group && a.param == param)
    }

    pub fn write_trials(&self, w: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["group", "param", "trial", "angular_error_deg", "brdf_error", "evaluated", "extra"])
            .map_err(csv_err)?;
        for r in &self.rows {
            csv.write_record([
                r.group.clone(),
                r.param.clone(),
                r.trial.to_string(),
                opt(r.angular_error),
                opt(r.brdf_error),
                opt(r.evaluated),
                r.extra.clone(),
            ])
            .map_err(csv_err)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_summary(&self, w: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "group",
            "param",
            "count",
            "mean_angular_deg",
            "median_angular_deg",
            "max_angular_deg",
            "mean_brdf_error",
            "median_brdf_error",
            "mean_evaluated",
            "max_evaluated",
        ])
        .map_err(csv_err)?;
        for a in self.summary() {
            csv.write_record([
                a.group,
                a.param,
                a.count.to_string(),
                opt(a.mean_angular),
                opt(a.median_angular),
                opt(a.max_angular),
                opt(a.mean_brdf),
                opt(a.median_brdf),
                opt(a.mean_evaluated),
                opt(a.max_evaluated),
            ])
            .map_err(csv_err)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Wall times are kept apart so the other files are reproducible.
    pub fn write_timing(&self, w: impl std::io::Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["group", "param", "trial", "seconds"]).map_err(csv_err)?;
        for r in &self.rows {
            csv.write_record([r.group.clone(), r.param.clone(), r.trial.to_string(), r.seconds.to_string()])
                .map_err(csv_err)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Writes `<protocol>_trials.csv`, `<protocol>_summary.csv` and `<protocol>_timing.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let p = &self.protocol;
        self.write_trials(std::fs::File::create(dir.join(format!("{p}_trials.csv")))?)?;
        self.write_summary(std::fs::File::create(dir.join(format!("{p}_summary.csv")))?)?;
        self.write_timing(std::fs::File::create(dir.join(format!("{p}_timing.csv")))?)
    }
}

/// A synthetic pixel for the leave-one-out protocol.
#[derive(Debug, Clone)]
pub struct LooTrial {
    pub trial: usize,
    /// Index of the true atom, excluded from the search dictionary.
    pub atom: usize,
    pub normal: Vec3,
    pub profile: Vec<f64>,
}

/// Uniform normal on the cap `θ ≤ theta_max` (degrees), never exactly grazing.
pub fn random_normal(rng: &mut impl Rng, theta_max: f64) -> Vec3 {
    let z_min = theta_max.to_radians().cos().max(0.0);
    let z = 1.0 - rng.gen_range(0.0..1.0) * (1.0 - z_min);
    let phi = rng.gen_range(0.0..360.0);
    euler_to_normal(z.clamp(-1.0, 1.0).acos().to_degrees(), phi)
}

/// Noiseless leave-one-out pixels: trial `k` uses atom `k mod M` and a
/// normal drawn from a generator seeded by `(seed, k)`.
pub fn loo_trials(dict: &BrdfDictionary, rig: &LightingRig, count: usize, seed: u64, theta_max: f64) -> Result<Vec<LooTrial>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k);
            let normal = random_normal(&mut rng, theta_max);
            let atom = k % dict.len();
            let profile = render_pixel(dict.atom(atom), &normal, rig)?;
            Ok(LooTrial { trial: k, atom, normal, profile })
        })
        .collect()
}

pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Search {
    BruteForce { level: usize },
    CoarseToFine { level: usize },
}

/// Runs one search method (optionally refined) on every trial, leaving the
/// true atom out of the dictionary.
pub fn run_search(
    bank: &ExemplarBank,
    trials: &[LooTrial],
    search: Search,
    refine: Option<&RefineOptions>,
) -> Result<Vec<(NormalEstimate, f64)>> {
    trials
        .par_iter()
        .map(|t| {
            let start = Instant::now();
            let opts = SearchOptions::excluding(bank.atoms(), t.atom);
            let est = match search {
                Search::BruteForce { level } => match_normal_bruteforce(&t.profile, bank, level, &opts)?,
                Search::CoarseToFine { level } => match_normal_c2f_until(&t.profile, bank, level, &opts)?,
            };
            let est = match refine {
                Some(r) => refine_normal(&t.profile, &est, bank, r, &opts)?,
                None => est,
            };
            Ok((est, start.elapsed().as_secs_f64()))
        })
        .collect()
}

fn records(group: &str, param: &str, trials: &[LooTrial], results: &[(NormalEstimate, f64)]) -> Vec<TrialRecord> {
    trials
        .iter()
        .zip(results)
        .map(|(t, (e, s))| TrialRecord {
            group: group.into(),
            param: param.into(),
            trial: t.trial,
            angular_error: Some(angular_error(&e.normal, &t.normal)),
            brdf_error: None,
            evaluated: Some(e.evaluated_count),
            extra: format!("atom={};residual={}", t.atom, e.residual),
            seconds: *s,
        })
        .collect()
}

fn shared_setup(cfg: &PipelineConfig, lights: usize) -> Result<(Arc<BrdfDictionary>, ExemplarBank)> {
    let dict = Arc::new(build_dictionary(cfg)?);
    if dict.len() < 2 {
        return Err(Error::Config("leave-one-out protocols need at least 2 atoms".into()));
    }
    let rig = LightingRig::hemisphere(lights)?;
    let bank = bank_for(cfg, dict.clone(), &rig)?;
    Ok((dict, bank))
}

/// Runs a protocol as configured.
pub fn bench(protocol: Protocol, cfg: &PipelineConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let b = &cfg.bench;
    let refine = normal_options(cfg).refine_opts;
    let mut rows = Vec::new();
    match protocol {
        Protocol::Table1 => {
            let (dict, bank) = shared_setup(cfg, b.lights)?;
            let trials = loo_trials(&dict, bank.rig(), b.trials, cfg.seed, b.theta_max)?;
            for level in 0..bank.num_levels() {
                let param = format!("{}", cfg.pyramid[level]);
                let bf = run_search(&bank, &trials, Search::BruteForce { level }, None)?;
                rows.extend(records("brute_force", &param, &trials, &bf));
                let c2f = run_search(&bank, &trials, Search::CoarseToFine { level }, None)?;
                rows.extend(records("coarse_to_fine", &param, &trials, &c2f));
            }
        }
        Protocol::Table2 => {
            let (dict, bank) = shared_setup(cfg, b.lights)?;
            let trials = loo_trials(&dict, bank.rig(), b.trials, cfg.seed, b.theta_max)?;
            let last = bank.num_levels() - 1;
            let param = format!("{}", cfg.pyramid[last]);
            for (group, search) in
                [("coarse_to_fine", Search::CoarseToFine { level: last }), ("brute_force", Search::BruteForce { level: last })]
            {
                let plain = run_search(&bank, &trials, search, None)?;
                rows.extend(records(group, &param, &trials, &plain));
                let refined = run_search(&bank, &trials, search, Some(&refine))?;
                rows.extend(records(&format!("{group}+refine"), &param, &trials, &refined));
            }
        }
        Protocol::Fig4 => {
            let dict = Arc::new(build_dictionary(cfg)?);
            for &q in &b.fig4_lights {
                let rig = LightingRig::hemisphere(q)?;
                let bank = bank_for(cfg, dict.clone(), &rig)?;
                let trials = loo_trials(&dict, &rig, b.trials, cfg.seed, b.theta_max)?;
                let last = bank.num_levels() - 1;
                let res = run_search(&bank, &trials, Search::CoarseToFine { level: last }, Some(&refine))?;
                rows.extend(records("coarse_to_fine+refine", &q.to_string(), &trials, &res));
            }
        }
        Protocol::Fig5 => {
            let (dict, bank) = shared_setup(cfg, b.lights)?;
            let metric = CoefficientMetric::new(&dict);
            let m = dict.len();
            let last = bank.num_levels() - 1;
            for atom in 0..m {
                let trials: Vec<LooTrial> = loo_trials(&dict, bank.rig(), b.fig5_trials * m, cfg.seed, b.theta_max)?
                    .into_iter()
                    .filter(|t| t.atom == atom)
                    .collect();
                let res = run_search(&bank, &trials, Search::CoarseToFine { level: last }, Some(&refine))?;
                let mut recs = records("coarse_to_fine+refine", &dict.labels()[atom], &trials, &res);
                let mut truth = vec![0.0; m];
                truth[atom] = 1.0;
                for (rec, (t, (e, _))) in recs.iter_mut().zip(trials.iter().zip(&res)) {
                    // Reflectance refit at the recovered normal, without the true atom.
                    let opts = SearchOptions::excluding(m, t.atom);
                    let (c, _) = fit_at(&t.profile, &e.normal, &bank, &opts)?;
                    rec.brdf_error = Some(metric.error(&c, &truth)?);
                }
                rows.extend(recs);
            }
        }
        Protocol::Fig8 => rows = fig8(cfg)?,
    }
    Ok(ExperimentReport { protocol: protocol.to_string(), rows })
}

/// Rank-constrained reflectance on a mixture sphere with known normals.
fn fig8(cfg: &PipelineConfig) -> Result<Vec<TrialRecord>> {
    let b = &cfg.bench;
    let dict = build_dictionary(cfg)?;
    let m = dict.len();
    let rig = LightingRig::hemisphere(b.lights)?;
    let size = b.fig8_size;
    let mix = smooth_mixture(size, size, &b.fig8_atoms, m, cfg.seed)?;
    let spec = SceneSpec {
        geometry: SceneGeometry::Sphere { size },
        reflectance: SceneReflectance::PerPixel(mix),
        noise_sigma: b.fig8_noise,
        seed: cfg.seed,
    };
    let scene = render_scene(&spec, Some(&dict), &rig)?;
    let truth = scene.abundances.expect("dictionary scene");
    let metric = CoefficientMetric::new(&dict);
    let mean_error = |c: &nalgebra::DMatrix<f64>| -> Result<f64> {
        let n = c.ncols();
        let mut total = 0.0;
        for k in 0..n {
            total += metric.error(c.column(k).as_slice(), &truth.column(k))?;
        }
        Ok(total / n as f64)
    };
    let problem = LowRankProblem::new(&scene.stack, &scene.normals, &dict, &rig)?;
    let mut rows = Vec::new();
    let start = Instant::now();
    let init = problem.per_pixel(cfg.lambda, &LassoOptions::default())?;
    rows.push(TrialRecord {
        group: "per_pixel".into(),
        param: "-".into(),
        trial: 0,
        angular_error: None,
        brdf_error: Some(mean_error(&init)?),
        evaluated: None,
        extra: format!("rank={}", crate::reflectance::prox::numerical_rank(&init)?),
        seconds: start.elapsed().as_secs_f64(),
    });
    let params = LowRankParams {
        lambda: cfg.lambda,
        max_iters: cfg.lowrank_max_iters,
        rel_tol: cfg.lowrank_rel_tol,
        ..Default::default()
    };
    for &k in &b.fig8_ranks {
        let start = Instant::now();
        let sel = select_beta_problem(&problem, k, &params, b.fig8_sweep_steps)?;
        rows.push(TrialRecord {
            group: "low_rank".into(),
            param: k.to_string(),
            trial: 0,
            angular_error: None,
            brdf_error: Some(mean_error(sel.abundances.values())?),
            evaluated: Some(sel.trace.iterations()),
            extra: format!("beta={};rank={};flagged={}", sel.beta, sel.rank, sel.flagged),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(group: &str, a: f64, e: usize) -> TrialRecord {
        TrialRecord {
            group: group.into(),
            param: "p".into(),
            trial: 0,
            angular_error: Some(a),
            brdf_error: None,
            evaluated: Some(e),
            extra: String::new(),
            seconds: 0.0,
        }
    }

    #[test]
    fn summary_recomputes_from_rows() {
        let report = ExperimentReport {
            protocol: "t".into(),
            rows: vec![rec("a", 1.0, 10), rec("a", 3.0, 12), rec("b", 2.0, 5), rec("a", 8.0, 11)],
        };
        let s = report.summary();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].group, "a");
        assert_eq!(s[0].mean_angular, Some(4.0));
        assert_eq!(s[0].median_angular, Some(3.0));
        assert_eq!(s[0].max_evaluated, Some(12));
        assert_eq!(s[1].count, 1);
        assert_eq!(s[0].mean_brdf, None);
    }

    #[test]
    fn random_normals_stay_in_cap() {
        let mut rng = trial_rng(3, 0);
        for _ in 0..1000 {
            let n = random_normal(&mut rng, 60.0);
            assert!(n.z >= 0.5 - 1e-12 && (n.norm() - 1.0).abs() < 1e-12);
        }
        let mut rng = trial_rng(3, 0);
        assert!((0..1000).all(|_| random_normal(&mut rng, 90.0).z > 0.0));
    }

    #[test]
    fn protocol_names_round_trip() {
        for p in [Protocol::Table1, Protocol::Table2, Protocol::Fig4, Protocol::Fig5, Protocol::Fig8] {
            assert_eq!(Protocol::parse(&p.to_string()).unwrap(), p);
        }
        assert!(Protocol::parse("table9").is_err());
    }
}
