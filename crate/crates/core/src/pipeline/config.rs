//! Flat `key = value` configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::brdf::{ModelKind, ParametricSweep};
use crate::error::{Error, Result};
use crate::geometry::DEFAULT_SCHEDULE;

#[derive(Debug, Clone, PartialEq)]
pub enum DictionarySource {
    Sweep(ParametricSweep),
    /// A `BDCT` container.
    File(PathBuf),
    /// A directory of MERL `.binary` files.
    Merl(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub trials: usize,
    pub lights: usize,
    /// Random normals are drawn uniformly over the cap `θ ≤ theta_max`.
    pub theta_max: f64,
    pub fig4_lights: Vec<usize>,
    pub fig5_trials: usize,
    pub fig8_size: usize,
    pub fig8_noise: f64,
    pub fig8_atoms: Vec<usize>,
    pub fig8_ranks: Vec<usize>,
    pub fig8_sweep_steps: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            lights: 253,
            theta_max: 90.0,
            fig4_lights: vec![20, 50, 100, 250],
            fig5_trials: 10,
            fig8_size: 64,
            fig8_noise: 0.01,
            fig8_atoms: vec![1, 8, 15],
            fig8_ranks: vec![1, 2, 3, 4, 5],
            fig8_sweep_steps: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dictionary: DictionarySource,
    pub grid_divisor: usize,
    pub pyramid: Vec<f64>,
    pub refine: bool,
    pub gradient_radius: f64,
    pub refine_max_iters: usize,
    pub refine_rel_tol: f64,
    pub lambda: f64,
    pub lambda_sweep: Vec<f64>,
    pub lowrank: bool,
    pub target_rank: usize,
    pub beta: Option<f64>,
    pub lowrank_max_iters: usize,
    pub lowrank_rel_tol: f64,
    pub seed: u64,
    pub bank_cache: Option<PathBuf>,
    pub bench: BenchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dictionary: DictionarySource::Sweep(ParametricSweep::default()),
            grid_divisor: 6,
            pyramid: DEFAULT_SCHEDULE.to_vec(),
            refine: true,
            gradient_radius: 2.0,
            refine_max_iters: 50,
            refine_rel_tol: 1e-9,
            lambda: 1e-3,
            lambda_sweep: Vec::new(),
            lowrank: false,
            target_rank: 3,
            beta: None,
            lowrank_max_iters: 500,
            lowrank_rel_tol: 1e-7,
            seed: 0,
            bank_cache: None,
            bench: BenchConfig::default(),
        }
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().or_else(|_| cfg_err(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => cfg_err(format!("{key}: expected true/false, got '{v}'")),
    }
}

fn optional_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut sweep = ParametricSweep::default();
        let mut kind = "sweep".to_string();
        let mut path: Option<PathBuf> = None;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return cfg_err(format!("line {}: expected key = value", no + 1));
            };
            let (key, v) = (key.trim(), value.trim());
            let b = &mut cfg.bench;
            match key {
                "dictionary" => kind = v.to_string(),
                "dictionary.path" => path = optional_path(v),
                "sweep.models" => {
                    sweep.models = v.split(',').map(|s| ModelKind::parse(s).map_err(|e| Error::Config(e.to_string()))).collect::<Result<_>>()?
                }
                "sweep.roughness" => sweep.roughness = parse_list(key, v)?,
                "sweep.albedos" => {
                    sweep.albedos = v
                        .split(',')
                        .map(|pair| match pair.trim().split_once(':') {
                            Some((d, s)) => Ok((parse(key, d.trim())?, parse(key, s.trim())?)),
                            None => cfg_err(format!("{key}: expected diffuse:specular pairs")),
                        })
                        .collect::<Result<_>>()?
                }
                "sweep.f0" => sweep.f0 = parse(key, v)?,
                "grid.divisor" => cfg.grid_divisor = parse(key, v)?,
                "pyramid" => cfg.pyramid = parse_list(key, v)?,
                "normals.refine" => cfg.refine = parse_bool(key, v)?,
                "normals.gradient_radius" => cfg.gradient_radius = parse(key, v)?,
                "normals.refine_max_iters" => cfg.refine_max_iters = parse(key, v)?,
                "normals.refine_rel_tol" => cfg.refine_rel_tol = parse(key, v)?,
                "reflectance.lambda" => cfg.lambda = parse(key, v)?,
                "reflectance.lambda_sweep" => cfg.lambda_sweep = parse_list(key, v)?,
                "reflectance.lowrank" => cfg.lowrank = parse_bool(key, v)?,
                "reflectance.target_rank" => cfg.target_rank = parse(key, v)?,
                "reflectance.beta" => cfg.beta = if v == "none" || v.is_empty() { None } else { Some(parse(key, v)?) },
                "reflectance.max_iters" => cfg.lowrank_max_iters = parse(key, v)?,
                "reflectance.rel_tol" => cfg.lowrank_rel_tol = parse(key, v)?,
                "seed" => cfg.seed = parse(key, v)?,
                "bank.cache_dir" => cfg.bank_cache = optional_path(v),
                "bench.trials" => b.trials = parse(key, v)?,
                "bench.lights" => b.lights = parse(key, v)?,
                "bench.theta_max" => b.theta_max = parse(key, v)?,
                "bench.fig4_lights" => b.fig4_lights = parse_list(key, v)?,
                "bench.fig5_trials" => b.fig5_trials = parse(key, v)?,
                "bench.fig8_size" => b.fig8_size = parse(key, v)?,
                "bench.fig8_noise" => b.fig8_noise = parse(key, v)?,
                "bench.fig8_atoms" => b.fig8_atoms = parse_list(key, v)?,
                "bench.fig8_ranks" => b.fig8_ranks = parse_list(key, v)?,
                "bench.fig8_sweep_steps" => b.fig8_sweep_steps = parse(key, v)?,
                other => return cfg_err(format!("unknown key '{other}'")),
            }
        }
        cfg.dictionary = match (kind.as_str(), path) {
            ("sweep", _) => DictionarySource::Sweep(sweep),
            ("file", Some(p)) => DictionarySource::File(p),
            ("merl", Some(p)) => DictionarySource::Merl(p),
            ("file" | "merl", None) => return cfg_err("dictionary.path is required for file and merl sources"),
            (other, _) => return cfg_err(format!("unknown dictionary source '{other}'")),
        };
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    /// Checks value ranges and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.grid_divisor == 0 || 90 % self.grid_divisor != 0 || 90 / self.grid_divisor < 2 {
            return cfg_err("grid.divisor must divide 90 and leave at least 2 bins");
        }
        if self.pyramid.is_empty() || self.pyramid.windows(2).any(|w| w[1] >= w[0]) {
            return cfg_err("pyramid must be a strictly decreasing, non-empty list");
        }
        if self.pyramid.iter().any(|&s| !(s > 0.0 && s <= 90.0)) {
            return cfg_err("pyramid spacings must lie in (0, 90]");
        }
        if !(self.lambda >= 0.0) || self.lambda_sweep.iter().any(|l| !(*l >= 0.0)) {
            return cfg_err("lambda values must be >= 0");
        }
        if self.beta.is_some_and(|b| !(b >= 0.0)) {
            return cfg_err("reflectance.beta must be >= 0");
        }
        if self.target_rank == 0 {
            return cfg_err("reflectance.target_rank must be >= 1");
        }
        if !(self.gradient_radius > 0.0) {
            return cfg_err("normals.gradient_radius must be positive");
        }
        match &self.dictionary {
            DictionarySource::Sweep(s) => {
                if s.specs().is_empty() {
                    return cfg_err("parametric sweep produces no atoms");
                }
                for spec in s.specs() {
                    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
                }
            }
            DictionarySource::File(p) if !p.is_file() => return cfg_err(format!("{} does not exist", p.display())),
            DictionarySource::Merl(p) if !p.is_dir() => return cfg_err(format!("{} is not a directory", p.display())),
            _ => {}
        }
        let b = &self.bench;
        if b.trials == 0 || b.lights < 3 || b.fig4_lights.iter().any(|&q| q < 3) {
            return cfg_err("bench needs trials >= 1 and at least 3 lights");
        }
        if !(b.theta_max > 0.0 && b.theta_max <= 90.0) {
            return cfg_err("bench.theta_max must lie in (0, 90]");
        }
        Ok(())
    }

    /// Every key with its current value, one per line, re-parseable.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let (kind, path, sweep) = match &self.dictionary {
            DictionarySource::Sweep(sw) => ("sweep", None, sw.clone()),
            DictionarySource::File(p) => ("file", Some(p), ParametricSweep::default()),
            DictionarySource::Merl(p) => ("merl", Some(p), ParametricSweep::default()),
        };
        let path = path.map_or("none".to_string(), |p| p.display().to_string());
        let b = &self.bench;
        let beta = self.beta.map_or("none".to_string(), |b| b.to_string());
        let cache = self.bank_cache.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let albedos = sweep.albedos.iter().map(|(d, s)| format!("{d}:{s}")).collect::<Vec<_>>().join(",");
        let models = sweep.models.iter().map(|m| m.name()).collect::<Vec<_>>().join(",");
        let lines: Vec<(&str, String, &str)> = vec![
            ("dictionary", kind.into(), "sweep | file | merl"),
            ("dictionary.path", path, "BDCT file or MERL directory"),
            ("sweep.models", models, "lambertian, blinn-phong, ward-isotropic, cook-torrance"),
            ("sweep.roughness", join(&sweep.roughness), ""),
            ("sweep.albedos", albedos, "diffuse:specular pairs"),
            ("sweep.f0", sweep.f0.to_string(), "cook-torrance Fresnel reflectance at normal incidence"),
            ("grid.divisor", self.grid_divisor.to_string(), "grid dims (90/r, 90/r, 180/r)"),
            ("pyramid", join(&self.pyramid), "candidate spacings in degrees, coarse to fine"),
            ("normals.refine", self.refine.to_string(), ""),
            ("normals.gradient_radius", self.gradient_radius.to_string(), "degrees"),
            ("normals.refine_max_iters", self.refine_max_iters.to_string(), ""),
            ("normals.refine_rel_tol", self.refine_rel_tol.to_string(), ""),
            ("reflectance.lambda", self.lambda.to_string(), "l1 weight"),
            ("reflectance.lambda_sweep", join(&self.lambda_sweep), "optional list, writes lambda_sweep.csv"),
            ("reflectance.lowrank", self.lowrank.to_string(), ""),
            ("reflectance.target_rank", self.target_rank.to_string(), "used when beta = none"),
            ("reflectance.beta", beta, "explicit singular value threshold, or none"),
            ("reflectance.max_iters", self.lowrank_max_iters.to_string(), ""),
            ("reflectance.rel_tol", self.lowrank_rel_tol.to_string(), ""),
            ("seed", self.seed.to_string(), ""),
            ("bank.cache_dir", cache, "directory for cached exemplar banks, or none"),
            ("bench.trials", b.trials.to_string(), ""),
            ("bench.lights", b.lights.to_string(), ""),
            ("bench.theta_max", b.theta_max.to_string(), "degrees"),
            ("bench.fig4_lights", join(&b.fig4_lights), ""),
            ("bench.fig5_trials", b.fig5_trials.to_string(), "trials per material"),
            ("bench.fig8_size", b.fig8_size.to_string(), "sphere image size"),
            ("bench.fig8_noise", b.fig8_noise.to_string(), "Gaussian noise sigma"),
            ("bench.fig8_atoms", join(&b.fig8_atoms), "atoms mixed on the sphere"),
            ("bench.fig8_ranks", join(&b.fig8_ranks), ""),
            ("bench.fig8_sweep_steps", b.fig8_sweep_steps.to_string(), "max beta doublings"),
        ];
        for (k, v, doc) in lines {
            if doc.is_empty() {
                let _ = writeln!(s, "{k} = {v}");
            } else {
                let _ = writeln!(s, "{k} = {v}  # {doc}");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::parse(&cfg.dump()).unwrap(), cfg);
        let mut other = cfg.clone();
        other.beta = Some(0.25);
        other.lambda_sweep = vec![0.0, 0.01];
        other.bench.fig4_lights = vec![10, 30];
        assert_eq!(PipelineConfig::parse(&other.dump()).unwrap(), other);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PipelineConfig::parse("nonsense").is_err());
        assert!(PipelineConfig::parse("unknown.key = 1").is_err());
        assert!(PipelineConfig::parse("seed = abc").is_err());
        assert!(PipelineConfig::parse("dictionary = file").is_err());
        let cfg = PipelineConfig::parse("dictionary = file\ndictionary.path = /no/such/file").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = PipelineConfig::parse("pyramid = 1, 5").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig::parse("grid.divisor = 7").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let cfg = PipelineConfig::parse("# c\nseed = 7 # trailing\nsweep.models = lambertian\n").unwrap();
        assert_eq!(cfg.seed, 7);
        match cfg.dictionary {
            DictionarySource::Sweep(s) => assert_eq!(s.models, vec![ModelKind::Lambertian]),
            _ => panic!(),
        }
        PipelineConfig::default().validate().unwrap();
    }
}
