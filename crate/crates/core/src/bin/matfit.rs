use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use matfit::estimator::{
    run_joint_baseline, run_progressive, EstimationResult, Mode, StageConfig, Target, DEFAULT_LEARNING_RATE,
};
use matfit::gradients::{finite_difference_check, random_config};
use matfit::image::RadianceImage;
use matfit::io::{read_bundle, read_observations, read_pfm, write_bundle, write_observations, write_pfm, write_png_preview};
use matfit::lighting::{
    build_fixed_rig, envmap_to_lights, heldout_rig, sample_random_light, EnvironmentMap, LightRig,
    DEFAULT_FIXED_INTENSITY, HELDOUT_COUNT,
};
use matfit::losses::Stage;
use matfit::material::{apply_category_edit, classify_materials, MaterialCategory};
use matfit::metrics::eval_report;
use matfit::scenegen::{generate_scene, render_observations, SceneSpec};
use matfit::shader::{render_image, CameraModel};
use matfit::{Error, Result};

/// Material estimation and shading toolkit.
#[derive(Parser)]
#[command(name = "matfit", version)]
struct Cli {
    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with its 36 observations.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Frame size as WxH.
        #[arg(long, default_value = "64x64", value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 6)]
        regions: usize,
        /// Standard deviation of Gaussian noise added to observations.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a map bundle under the fixed rig or one random light.
    Render {
        #[arg(long)]
        maps: PathBuf,
        /// `fixed` or `random:SEED`.
        #[arg(long, default_value = "fixed", value_parser = parse_rig)]
        rig: RigChoice,
        /// Intensity of each fixed-rig light.
        #[arg(long, default_value_t = DEFAULT_FIXED_INTENSITY)]
        intensity: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        png: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        exposure: f64,
    },
    /// Render a map bundle under an environment map.
    Relight {
        #[arg(long)]
        maps: PathBuf,
        /// Equirectangular RGB PFM with width twice its height.
        #[arg(long)]
        env: PathBuf,
        /// Number of directional lights the map is reduced to.
        #[arg(long, default_value_t = 64)]
        lights: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        png: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        exposure: f64,
    },
    /// Estimate material maps from observations.
    Estimate {
        /// Directory written by `gen`.
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, value_enum, default_value_t = EstimateMode::Progressive)]
        mode: EstimateMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Iterations per stage as g,a,r,f. A zero skips the stage; the
        /// joint mode uses their sum.
        #[arg(long, default_value = "300,300,300,200", value_parser = parse_iters)]
        iters: [usize; 4],
        #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
        lr: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare estimated maps with ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Swap one material category for another.
    Edit {
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        from: MaterialCategory,
        #[arg(long)]
        to: MaterialCategory,
        /// Diffuse multiplier as r,g,b.
        #[arg(long, value_parser = parse_triple)]
        tint: Option<[f64; 3]>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference shading derivatives.
    Gradcheck {
        #[arg(long, default_value_t = 1000)]
        configs: u64,
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateMode {
    Progressive,
    Joint,
}

#[derive(Clone, Copy)]
enum RigChoice {
    Fixed,
    Random(u64),
}

const GRADCHECK_TOLERANCE: f64 = 1e-3;

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    Ok((
        w.parse().map_err(|_| format!("bad width '{w}'"))?,
        h.parse().map_err(|_| format!("bad height '{h}'"))?,
    ))
}

fn parse_rig(s: &str) -> std::result::Result<RigChoice, String> {
    match s.split_once(':') {
        None if s == "fixed" => Ok(RigChoice::Fixed),
        Some(("random", seed)) => seed.parse().map(RigChoice::Random).map_err(|_| format!("bad seed '{seed}'")),
        _ => Err("expected 'fixed' or 'random:SEED'".into()),
    }
}

fn parse_list<const N: usize, T: std::str::FromStr>(s: &str) -> std::result::Result<[T; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated values"));
    }
    let mut out = Vec::with_capacity(N);
    for p in parts {
        out.push(p.parse().map_err(|_| format!("bad value '{p}'"))?);
    }
    out.try_into().map_err(|_| "length".to_string())
}

fn parse_iters(s: &str) -> std::result::Result<[usize; 4], String> {
    parse_list(s)
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    parse_list(s)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_image(img: &RadianceImage, out: &Path, png: Option<&Path>, exposure: f64) -> Result<()> {
    write_pfm(out, img)?;
    if let Some(p) = png {
        write_png_preview(p, img, exposure)?;
    }
    Ok(())
}

fn total_radiance(img: &RadianceImage) -> f64 {
    img.data().iter().sum()
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Gen {
            seed,
            size: (w, h),
            regions,
            noise,
            out,
        } => {
            let mut spec = SceneSpec::new(seed, w, h);
            spec.num_regions = regions;
            let (maps, labels) = generate_scene(&spec)?;
            let obs = render_observations(&maps, &CameraModel::for_frame(w, h), noise, seed)?;
            write_bundle(&out, &maps)?;
            write_pfm(out.join("labels.pfm"), &labels.to_image())?;
            write_observations(&out, &obs)?;
            Ok(format!(
                "gen: seed {seed} size {w}x{h} regions {regions} masked {} observations {} -> {}",
                maps.masked_count(),
                obs.len(),
                out.display()
            ).into())
        }
        Command::Render {
            maps,
            rig,
            intensity,
            out,
            png,
            exposure,
        } => {
            let m = read_bundle(&maps)?;
            let lights = match rig {
                RigChoice::Fixed => build_fixed_rig(intensity),
                RigChoice::Random(s) => LightRig::single(sample_random_light(s, 0)),
            };
            let img = render_image(&m, &lights, &CameraModel::for_frame(m.width(), m.height()))?;
            write_image(&img, &out, png.as_deref(), exposure)?;
            Ok(format!(
                "render: {} lights, total radiance {:.6e} -> {}",
                lights.len(),
                total_radiance(&img),
                out.display()
            ).into())
        }
        Command::Relight {
            maps,
            env,
            lights,
            out,
            png,
            exposure,
        } => {
            let m = read_bundle(&maps)?;
            let env = EnvironmentMap::new(read_pfm(&env)?)?;
            let rig = envmap_to_lights(&env, lights)?;
            let img = render_image(&m, &rig, &CameraModel::for_frame(m.width(), m.height()))?;
            write_image(&img, &out, png.as_deref(), exposure)?;
            Ok(format!(
                "relight: {} lights, total radiance {:.6e} -> {}",
                rig.len(),
                total_radiance(&img),
                out.display()
            ).into())
        }
        Command::Estimate {
            obs,
            mode,
            seed,
            iters,
            lr,
            out,
        } => {
            let obs = read_observations(&obs)?;
            let target = Target::Observations(&obs);
            let result: EstimationResult = match mode {
                EstimateMode::Progressive => {
                    let schedule: Vec<StageConfig> = Stage::ALL
                        .into_iter()
                        .zip(iters)
                        .filter(|&(_, n)| n > 0)
                        .map(|(stage, n)| StageConfig::new(stage, n, lr, Mode::ObservationOnly))
                        .collect();
                    run_progressive(target, seed, &schedule)?
                }
                EstimateMode::Joint => run_joint_baseline(target, seed, iters.iter().sum(), lr)?,
            };
            write_bundle(&out, &result.maps)?;
            write_text(&out.join("traces.csv"), &result.traces_csv())?;
            let last = result.stages.last().map(|s| s.final_fixed_loss).unwrap_or(f64::NAN);
            Ok(format!(
                "estimate: {} stages, {} steps, final loss {last:.6e} -> {}",
                result.stages.len(),
                result.stages.iter().map(|s| s.reports.len()).sum::<usize>(),
                out.display()
            ).into())
        }
        Command::Eval { pred, gt, out } => {
            let p = read_bundle(&pred)?;
            let g = read_bundle(&gt)?;
            let cam = CameraModel::for_frame(g.width(), g.height());
            let report = eval_report(&p, &g, &heldout_rig(HELDOUT_COUNT), &cam)?;
            if let Some(out) = &out {
                write_text(out, &report.to_csv())?;
            }
            Ok(format!(
                "eval: diffuse {:.2} dB, material mean {:.2} dB, relight mean {:.2} dB, total {:.2} dB",
                report.materials[1], report.material_mean, report.relight_mean, report.total_mean
            ).into())
        }
        Command::Edit {
            maps,
            from,
            to,
            tint,
            out,
        } => {
            let m = read_bundle(&maps)?;
            let labels = classify_materials(&m);
            let edited = apply_category_edit(&m, &labels, from, to, tint)?;
            let changed = labels.as_slice().iter().filter(|&&l| l == Some(from)).count();
            write_bundle(&out, &edited)?;
            Ok(format!("edit: {changed} pixels {from} -> {to} -> {}", out.display()).into())
        }
        Command::Gradcheck { configs, h, seed } => {
            if !(h > 0.0) {
                return Err(Error::Parameter(format!("step must be positive, got {h}")));
            }
            let worst = (0..configs)
                .map(|i| {
                    let (p, rig) = random_config(seed, i);
                    finite_difference_check(&p, &rig, h)
                })
                .fold(0.0, f64::max);
            Ok(Outcome {
                line: format!("gradcheck: {configs} configs, h {h:e}, max relative error {worst:.3e}"),
                ok: worst <= GRADCHECK_TOLERANCE,
            })
        }
    }
}

/// Summary line of a run, and whether its check passed.
struct Outcome {
    line: String,
    ok: bool,
}

impl From<String> for Outcome {
    fn from(line: String) -> Self {
        Outcome { line, ok: true }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(out) => {
            println!("{}", out.line);
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
