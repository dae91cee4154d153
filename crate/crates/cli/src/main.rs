use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use grainmap::alloc::TrackingAllocator;
use grainmap::pipeline::{self, RunConfig};
use grainmap::rve_io::{self, PlantedGradient, PlantedStress, SyntheticSpec};
use grainmap::Mat3;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

#[derive(Parser)]
#[command(name = "grainmap", version, about = "Grain reconstruction and boundary-distance statistics for periodic RVEs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic strain-step file.
    Generate(GenerateArgs),
    /// Run the analysis pipeline over strain-step files.
    Run(RunArgs),
    /// Write the RVE-averaged flow curve of strain-step files.
    Flowcurve(FlowArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    grains: usize,
    /// Grid size as N or NX,NY,NZ.
    #[arg(long, default_value = "32")]
    dims: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Homogeneous deformation gradient: 3 diagonal or 9 row-major values.
    #[arg(long, allow_hyphen_values = true)]
    affine: Option<String>,
    /// Planted orientation gradient SLOPE,MAX in degrees per spacing and degrees.
    #[arg(long)]
    gradient: Option<String>,
    /// Planted uniaxial stress MEAN,DELTA.
    #[arg(long, allow_hyphen_values = true)]
    stress: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    strain_label: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input strain-step file (repeatable).
    #[arg(long = "input", short = 'i')]
    inputs: Vec<PathBuf>,
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
    /// tex or louvain.
    #[arg(long)]
    recon: Option<String>,
    #[arg(long)]
    kl: Option<f64>,
    #[arg(long)]
    qc: Option<f64>,
    #[arg(long)]
    louvain_seed: Option<u64>,
    /// dis, sdf or vor; repeatable or comma separated.
    #[arg(long = "method")]
    methods: Vec<String>,
    /// DIS radius as a fraction of the initial RVE edge.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    theta_c: Option<f64>,
    /// Voxel size in spacings.
    #[arg(long)]
    dcell: Option<f64>,
    /// VOR guard zone in spacings.
    #[arg(long)]
    guard: Option<f64>,
    /// Exhaustive facet scan instead of the BVH.
    #[arg(long)]
    no_bvh: bool,
    /// LO,HI,STEP in spacings.
    #[arg(long)]
    bins: Option<String>,
    #[arg(long)]
    step_workers: Option<usize>,
    /// Intra-step worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// static or dynamic.
    #[arg(long)]
    schedule: Option<String>,
    /// Write grain hulls as OBJ when VOR runs.
    #[arg(long)]
    export_obj: bool,
    /// Any config key as KEY=VALUE (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct FlowArgs {
    files: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad {what} value {x:?}")))
        .collect()
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let dims: Vec<u32> = a
        .dims
        .split(',')
        .map(|x| x.trim().parse().with_context(|| format!("bad dims {:?}", a.dims)))
        .collect::<Result<_>>()?;
    let dims = match dims[..] {
        [n] => [n, n, n],
        [x, y, z] => [x, y, z],
        _ => bail!("--dims takes N or NX,NY,NZ"),
    };
    let mut spec = SyntheticSpec::new(dims, a.grains, a.seed);
    spec.strain_label = a.strain_label;
    if let Some(s) = &a.affine {
        let v = parse_list(s, "affine")?;
        spec.affine = Some(match v.len() {
            3 => Mat3::from_diagonal(&grainmap::Vec3::new(v[0], v[1], v[2])),
            9 => Mat3::from_row_slice(&v),
            _ => bail!("--affine takes 3 or 9 values"),
        });
    }
    if let Some(s) = &a.gradient {
        let v = parse_list(s, "gradient")?;
        let [slope_deg, max_angle_deg] = v[..] else { bail!("--gradient takes SLOPE,MAX") };
        spec.gradient = Some(PlantedGradient { slope_deg, max_angle_deg });
    }
    if let Some(s) = &a.stress {
        let v = parse_list(s, "stress")?;
        let [interior_mean, boundary_delta] = v[..] else { bail!("--stress takes MEAN,DELTA") };
        spec.stress = Some(PlantedStress { interior_mean, boundary_delta });
    }
    let rve = rve_io::generate_synthetic(&spec)?;
    rve_io::write_step(&rve.dataset, &a.output)?;
    log::info!("wrote {} points to {}", rve.dataset.len(), a.output.display());
    Ok(())
}

fn run_config(a: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Ok(w) = std::env::var("GRAINMAP_WORKERS") {
        cfg.apply_workers_env(&w)?;
    }
    let here = Path::new("");
    let mut set = |k: &str, v: String| cfg.apply(k, &v, here);
    if !a.inputs.is_empty() {
        let list: Vec<String> = a.inputs.iter().map(|p| p.display().to_string()).collect();
        set("inputs", list.join(","))?;
    }
    if let Some(o) = &a.output {
        set("output_dir", o.display().to_string())?;
    }
    if let Some(v) = &a.recon {
        set("recon", v.clone())?;
    }
    if let Some(v) = a.kl {
        set("kl", v.to_string())?;
    }
    if let Some(v) = a.qc {
        set("qc", v.to_string())?;
    }
    if let Some(v) = a.louvain_seed {
        set("louvain_seed", v.to_string())?;
    }
    if !a.methods.is_empty() {
        set("methods", a.methods.join(","))?;
    }
    if let Some(v) = a.radius {
        set("radius", v.to_string())?;
    }
    if let Some(v) = a.theta_c {
        set("theta_c", v.to_string())?;
    }
    if let Some(v) = a.dcell {
        set("d_cell", v.to_string())?;
    }
    if let Some(v) = a.guard {
        set("guard", v.to_string())?;
    }
    if a.no_bvh {
        set("use_bvh", "false".into())?;
    }
    if let Some(v) = &a.bins {
        set("bins", v.clone())?;
    }
    if let Some(v) = a.step_workers {
        set("step_workers", v.to_string())?;
    }
    if let Some(v) = a.workers {
        set("intra_workers", v.to_string())?;
    }
    if let Some(v) = &a.schedule {
        set("schedule", v.clone())?;
    }
    if a.export_obj {
        set("export_obj", "true".into())?;
    }
    for kv in &a.sets {
        let Some((k, v)) = kv.split_once('=') else { bail!("--set expects KEY=VALUE, got {kv:?}") };
        set(k, v.to_string())?;
    }
    Ok(cfg)
}

fn run(a: &RunArgs) -> Result<ExitCode> {
    let cfg = run_config(a)?;
    let report = pipeline::run_pipeline(&cfg)?;
    let failed = report.steps.iter().filter(|s| s.error.is_some()).count();
    log::info!(
        "{} of {} steps succeeded in {:.2} s",
        report.steps.len() - failed,
        report.steps.len(),
        report.wall_s
    );
    Ok(if report.all_succeeded() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn flowcurve(a: &FlowArgs) -> Result<ExitCode> {
    if a.files.is_empty() {
        bail!("no input files");
    }
    let mut ok = true;
    let mut points = Vec::new();
    for f in &a.files {
        match rve_io::read_step(f).map_err(anyhow::Error::from).and_then(|d| Ok(pipeline::flow_curve(&[d])?)) {
            Ok(p) => points.extend(p),
            Err(e) => {
                log::error!("{}: {e:#}", f.display());
                ok = false;
            }
        }
    }
    points.sort_by(|a, b| a.strain_label.total_cmp(&b.strain_label));
    pipeline::write_flow_curve_csv(&a.output, &points).with_context(|| a.output.display().to_string())?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    grainmap::alloc::mark_installed();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Generate(a) => generate(a).map(|_| ExitCode::SUCCESS),
        Cmd::Run(a) => run(a),
        Cmd::Flowcurve(a) => flowcurve(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
