use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::Vector3;

use exemplar_ps::brdf::BrdfDictionary;
use exemplar_ps::io::{save_pfm, save_png16};
use exemplar_ps::pipeline::run::{bank_for, match_channels};
use exemplar_ps::pipeline::{
    bench, build_dictionary, ingest, integrate_normals, relight, run_normals, run_reflectance, PipelineConfig,
    Protocol,
};
use exemplar_ps::reflectance::AbundanceMatrix;
use exemplar_ps::render::{
    render_scene, smooth_mixture, ImageFormat, LightingRig, NormalMap, SceneGeometry, SceneReflectance, SceneSpec,
};
use exemplar_ps::{Error, Result};

#[derive(Parser)]
#[command(name = "exemplar-ps", version, about = "Photometric stereo with BRDF dictionaries")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory or file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Prints every configuration key with its effective value and exits.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Dictionary tools.
    #[command(subcommand)]
    Dict(DictCommand),
    /// Exemplar bank tools.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Estimates a normal map from an image directory.
    Normals {
        input: PathBuf,
    },
    /// Recovers per-pixel reflectance given an image directory and normals.
    Reflectance {
        input: PathBuf,
        /// Normal map (PFM).
        #[arg(long)]
        normals: PathBuf,
    },
    /// Renders recovered reflectance under a new point light.
    Relight {
        #[arg(long)]
        normals: PathBuf,
        #[arg(long)]
        abundances: PathBuf,
        /// Light direction `x,y,z` (normalized).
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        light: Vector3<f64>,
        #[arg(long, default_value_t = 1.0)]
        intensity: f64,
    },
    /// Integrates a normal map into a depth map.
    Integrate {
        normals: PathBuf,
    },
    /// Runs an experiment protocol and writes CSV reports.
    Bench {
        #[arg(value_enum)]
        protocol: ProtocolArg,
    },
    /// Generates a synthetic image directory with ground truth.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum DictCommand {
    /// Builds the configured dictionary and writes it.
    Build,
    /// Prints a summary of a dictionary file.
    Inspect { path: PathBuf },
}

#[derive(Subcommand)]
enum BankCommand {
    /// Builds (or loads from cache) the bank for the configured dictionary and a rig.
    Build {
        /// Light file; defaults to a spiral rig with `--lights` directions.
        #[arg(long)]
        rig: Option<PathBuf>,
        #[arg(long, default_value_t = 253)]
        lights: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Table1,
    Table2,
    Fig4,
    Fig5,
    Fig8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Sphere,
    Flat,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "sphere")]
    shape: Shape,
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Spiral rig size.
    #[arg(long, default_value_t = 253)]
    lights: usize,
    /// Comma-separated atom indices; one atom gives a uniform material.
    #[arg(long, default_value = "0")]
    atoms: String,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    png: bool,
}

fn parse_vec3(s: &str) -> std::result::Result<Vector3<f64>, String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<std::result::Result<_, _>>()?;
    if v.len() != 3 {
        return Err("expected x,y,z".into());
    }
    let n = Vector3::new(v[0], v[1], v[2]);
    if !(n.norm() > 0.0) {
        return Err("zero vector".into());
    }
    Ok(n.normalize())
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Error::Config("no subcommand given (see --help)".into()));
    };
    cfg.validate()?;
    match command {
        Command::Dict(DictCommand::Build) => {
            let path = out_dir(&cli, "dictionary.bdct");
            let dict = build_dictionary(&cfg)?;
            dict.save(&path)?;
            println!("{} atoms written to {}", dict.len(), path.display());
        }
        Command::Dict(DictCommand::Inspect { path }) => inspect(&BrdfDictionary::load(path)?),
        Command::Bank(BankCommand::Build { rig, lights }) => {
            let rig = match rig {
                Some(p) => LightingRig::load(p)?,
                None => LightingRig::hemisphere(*lights)?,
            };
            let dict = Arc::new(build_dictionary(&cfg)?);
            let mut cfg = cfg.clone();
            if let Some(dir) = &cli.out {
                cfg.bank_cache = Some(dir.clone());
            }
            let bank = bank_for(&cfg, dict, &rig)?;
            println!(
                "bank: {} levels, {} matrices of {}x{}",
                bank.num_levels(),
                bank.matrix_count(),
                bank.q(),
                bank.atoms() * bank.channels()
            );
        }
        Command::Normals { input } => {
            let stack = ingest(input)?;
            let dir = out_dir(&cli, "normals_out");
            let est = run_normals(&cfg, &stack, Some(&dir))?;
            println!("{} normals written to {}", est.estimates.iter().flatten().count(), dir.display());
        }
        Command::Reflectance { input, normals } => {
            let stack = ingest(input)?;
            let normals = NormalMap::load_pfm(normals)?;
            let dir = out_dir(&cli, "reflectance_out");
            let out = run_reflectance(&cfg, &stack, &normals, Some(&dir))?;
            let mean = out.residuals.iter().sum::<f64>() / out.residuals.len().max(1) as f64;
            println!("{} pixels fitted, mean residual {mean:.6}, written to {}", out.residuals.len(), dir.display());
        }
        Command::Relight { normals, abundances, light, intensity } => {
            let normals = NormalMap::load_pfm(normals)?;
            let c = AbundanceMatrix::load(abundances)?;
            let mut dict = build_dictionary(&cfg)?;
            if c.rows() == 3 * dict.len() {
                dict = match_channels(dict, 3)?;
            }
            let img = relight(&normals, &c, &dict, light, *intensity, &Vector3::z())?;
            let path = out_dir(&cli, "relit.pfm");
            write_image(&path, &img)?;
            println!("wrote {}", path.display());
        }
        Command::Integrate { normals } => {
            let normals = NormalMap::load_pfm(normals)?;
            let depth = integrate_normals(&normals, None)?;
            let path = out_dir(&cli, "depth.pfm");
            save_pfm(&path, &depth.to_raster())?;
            println!("wrote {}", path.display());
        }
        Command::Bench { protocol } => {
            let p = match protocol {
                ProtocolArg::Table1 => Protocol::Table1,
                ProtocolArg::Table2 => Protocol::Table2,
                ProtocolArg::Fig4 => Protocol::Fig4,
                ProtocolArg::Fig5 => Protocol::Fig5,
                ProtocolArg::Fig8 => Protocol::Fig8,
            };
            let report = bench(p, &cfg)?;
            let dir = out_dir(&cli, "bench_out");
            report.save(&dir)?;
            report.write_summary(std::io::stdout())?;
        }
        Command::Synth(args) => synth(&cfg, args, &out_dir(&cli, "synth_out"))?,
    }
    Ok(())
}

fn write_image(path: &Path, img: &exemplar_ps::io::Raster) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => save_png16(path, img),
        _ => save_pfm(path, img),
    }
}

fn inspect(d: &BrdfDictionary) {
    let (a, b, c) = d.grid().dims();
    println!("atoms: {}", d.len());
    println!("channels: {}", d.channels());
    println!("grid: {a} x {b} x {c}");
    let fp: String = d.fingerprint().iter().map(|b| format!("{b:02x}")).collect();
    println!("fingerprint: {fp}");
    for (j, label) in d.labels().iter().enumerate() {
        let max = d.atom(j).values().iter().copied().fold(0.0, f64::max);
        println!("{j:4}  {label}  max={max:.4}");
    }
}

fn synth(cfg: &PipelineConfig, args: &SynthArgs, dir: &Path) -> Result<()> {
    let dict = build_dictionary(cfg)?;
    let atoms: Vec<usize> = args
        .atoms
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad atom index '{s}'"))))
        .collect::<Result<_>>()?;
    let rig = LightingRig::hemisphere(args.lights)?;
    let geometry = match args.shape {
        Shape::Sphere => SceneGeometry::Sphere { size: args.size },
        Shape::Flat => SceneGeometry::Flat { width: args.size, height: args.size, normal: Vector3::z() },
    };
    let reflectance = if atoms.len() == 1 {
        let mut c = vec![0.0; dict.len()];
        *c.get_mut(atoms[0]).ok_or_else(|| Error::Config("atom index out of range".into()))? = 1.0;
        SceneReflectance::Uniform(c)
    } else {
        SceneReflectance::PerPixel(smooth_mixture(args.size, args.size, &atoms, dict.len(), cfg.seed)?)
    };
    let spec = SceneSpec { geometry, reflectance, noise_sigma: args.noise, seed: cfg.seed };
    let scene = render_scene(&spec, Some(&dict), &rig)?;
    let format = if args.png { ImageFormat::Png16 } else { ImageFormat::Pfm };
    scene.stack.write_dir(dir, format)?;
    let truth = dir.join("truth");
    std::fs::create_dir_all(&truth)?;
    scene.normals.save_pfm(truth.join("normals.pfm"))?;
    if let Some(c) = &scene.abundances {
        c.save(truth.join("abundances.abdc"))?;
    }
    info!("synthetic scene written to {}", dir.display());
    println!("{} images written to {}", rig.q(), dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
