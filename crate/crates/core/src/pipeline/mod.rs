//! Batch driver: runs every strain step through reconstruction,
//! distancing and binning, and aggregates the flow curve.
//!
//! Steps are dealt round-robin to `step_workers` slots; each slot owns a
//! rayon pool of `intra_workers` threads and processes its steps in input
//! order. Steps share nothing but the final flow-curve merge.

mod config;

pub use config::{parse_workers, ConfigError, Recon, RunConfig};

use crate::alloc;
use crate::distancing::{
    attach_state, distance_dis, distance_sdf, distance_vor, point_states, write_hull_obj, DisParams, DistanceError,
    DistanceRecord, Method, VorParams,
};
use crate::grains::{
    build_disorientation_graph, build_global_voxelization, louvain, merge_periodic_fragments, reconstruct_tex,
    FragmentError, GrainError, GrainPartition,
};
use crate::point_clouds::{CloudError, P1View, PeriodicLattice, PeriodicPointCloud, SpatialBinIndex};
use crate::rve_io::{read_step, RecordFlags, RveIoError, StrainStepDataset};
use crate::stats::{self, DistanceBinning, StatsError};
use crate::tensor::{rve_averages, RveAverages, TensorError};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Io(#[from] RveIoError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Grain(#[from] GrainError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Unsupported(String),
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("step panicked: {0}")]
    Panic(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Ingest,
    Preprocess,
    Reconstruct,
    Simplify,
    Distance,
    Stats,
    Output,
}

/// One profile row. `peak_bytes` is the heap high-water mark during the
/// phase when a single step slot runs, otherwise the process-wide peak so
/// far; it is 0 when the tracking allocator is not installed.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub step: usize,
    pub phase: Phase,
    pub wall_s: f64,
    pub peak_bytes: u64,
    pub slot: usize,
}

/// Times phases of one step.
pub struct Profiler {
    step: usize,
    slot: usize,
    exclusive: bool,
    pub rows: Vec<ProfileRow>,
}

impl Profiler {
    /// `exclusive` means no other step runs concurrently, so the heap peak
    /// can be reset per phase.
    pub fn new(step: usize, slot: usize, exclusive: bool) -> Self {
        Self {
            step,
            slot,
            exclusive,
            rows: Vec::new(),
        }
    }

    pub fn time<T>(&mut self, phase: Phase, f: impl FnOnce() -> T) -> T {
        let (out, wall_s, peak) = measure(self.exclusive, f);
        self.rows.push(ProfileRow {
            step: self.step,
            phase,
            wall_s,
            peak_bytes: peak,
            slot: self.slot,
        });
        out
    }
}

fn measure<T>(exclusive: bool, f: impl FnOnce() -> T) -> (T, f64, u64) {
    if exclusive {
        alloc::reset_peak();
    }
    let t0 = Instant::now();
    let out = f();
    let wall = t0.elapsed().as_secs_f64();
    let peak = if alloc::is_installed() { alloc::peak_bytes() as u64 } else { 0 };
    (out, wall, peak)
}

/// Wall time and heap peak of one distancing method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodCost {
    pub wall_s: f64,
    pub peak_bytes: u64,
}

/// In-memory result of one step.
#[derive(Debug, Clone)]
pub struct StepAnalysis {
    pub strain_label: f64,
    pub averages: RveAverages,
    pub partition: GrainPartition,
    pub flagged: Vec<FragmentError>,
    pub non_manifold: Vec<u32>,
    pub binnings: Vec<DistanceBinning>,
    pub record_counts: BTreeMap<Method, usize>,
    pub costs: BTreeMap<Method, MethodCost>,
    pub records: BTreeMap<Method, Vec<DistanceRecord>>,
    pub hulls: Vec<crate::distancing::GrainHull>,
}

/// Options that only matter to in-memory callers.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalysisOptions {
    pub keep_records: bool,
    pub keep_hulls: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowCurvePoint {
    pub strain_label: f64,
    pub eps_vm_bar: f64,
    pub sigma_vm_bar: f64,
}

/// RVE-averaged flow-curve points, ordered by strain label.
pub fn flow_curve(datasets: &[StrainStepDataset]) -> Result<Vec<FlowCurvePoint>, TensorError> {
    let mut pts = datasets
        .iter()
        .map(|d| {
            let a = rve_averages(&d.points)?;
            Ok(FlowCurvePoint {
                strain_label: d.strain_label,
                eps_vm_bar: a.eps_vm_bar,
                sigma_vm_bar: a.sigma_vm_bar,
            })
        })
        .collect::<Result<Vec<_>, TensorError>>()?;
    sort_flow_curve(&mut pts);
    Ok(pts)
}

fn sort_flow_curve(pts: &mut [FlowCurvePoint]) {
    pts.sort_by(|a, b| a.strain_label.total_cmp(&b.strain_label));
}

/// `strain_label,eps_vm_bar,sigma_vm_bar` rows.
pub fn write_flow_curve_csv(path: &Path, pts: &[FlowCurvePoint]) -> std::io::Result<()> {
    let mut body = String::from("strain_label,eps_vm_bar,sigma_vm_bar\n");
    for p in pts {
        body.push_str(&format!("{},{},{}\n", p.strain_label, p.eps_vm_bar, p.sigma_vm_bar));
    }
    std::fs::write(path, body)
}

/// Runs reconstruction, distancing and binning on one dataset.
pub fn analyse_step(
    ds: &StrainStepDataset,
    cfg: &RunConfig,
    opts: AnalysisOptions,
    prof: &mut Profiler,
) -> Result<StepAnalysis, StepError> {
    let spacing = ds.spacing();
    let edges0 = ds.initial_edges();
    let edge0 = edges0.iter().cloned().fold(f64::INFINITY, f64::min);
    let has_orientation = ds.flags.has(RecordFlags::ORIENTATION);
    let needs_eps = cfg.recon == Recon::Louvain || cfg.methods.contains(&Method::Dis);
    let needs_geometry = cfg.methods.iter().any(|m| matches!(m, Method::Sdf | Method::Vor));
    if !has_orientation && needs_eps {
        return Err(StepError::Unsupported(
            "Louvain reconstruction and DIS need orientations, which this step lacks".into(),
        ));
    }
    let dis_radius = cfg.dis_radius * edge0;
    let r_lv = cfg.r_lv * spacing;

    let (averages, p0, p0_eps) = prof.time(Phase::Preprocess, || -> Result<_, StepError> {
        let averages = rve_averages(&ds.points)?;
        let lattice = PeriodicLattice::from_average_deformation(&averages.f_bar, edges0);
        let p0 = PeriodicPointCloud::build_p0(ds.points.iter().map(|p| p.position).collect(), &lattice)?;
        let p0_eps = if needs_eps {
            // The shell must hold every neighbour the graph and DIS look for.
            let mut thickness = cfg.eps * edge0;
            if cfg.recon == Recon::Louvain {
                thickness = thickness.max(r_lv);
            }
            if cfg.methods.contains(&Method::Dis) {
                thickness = thickness.max(dis_radius);
            }
            Some(p0.build_p0_eps(thickness)?)
        } else {
            None
        };
        Ok((averages, p0, p0_eps))
    })?;

    let partition = prof.time(Phase::Reconstruct, || -> Result<_, StepError> {
        Ok(match cfg.recon {
            Recon::Texture => reconstruct_tex(ds),
            Recon::Louvain => {
                let eps = p0_eps.as_ref().expect("built for Louvain");
                let graph = build_disorientation_graph(ds, eps, cfg.k_l, r_lv)?;
                louvain(&graph, cfg.q_c, cfg.louvain_seed)?
            }
        })
    })?;

    let p1 = p0.build_p1();
    drop(p0);
    let geometry = prof.time(Phase::Simplify, || -> Result<_, StepError> {
        if !needs_geometry {
            return Ok(None);
        }
        // DBSCAN must bridge lattice diagonals after the average stretch.
        let stretch = averages.f_bar.singular_values().max().max(1.0);
        Ok(Some(merge_periodic_fragments(&partition, &p1, spacing * stretch)?))
    })?;

    let mut records: BTreeMap<Method, Vec<DistanceRecord>> = BTreeMap::new();
    let mut costs = BTreeMap::new();
    let mut non_manifold = Vec::new();
    let mut hulls = Vec::new();
    let distance_start = Instant::now();
    let mut distance_peak = 0u64;
    for &m in &cfg.methods {
        let (res, wall_s, peak_bytes) = measure(prof.exclusive, || -> Result<Vec<DistanceRecord>, StepError> {
            match m {
                Method::Dis => {
                    let params = DisParams {
                        radius: dis_radius,
                        theta_c: cfg.theta_c,
                        schedule: cfg.schedule,
                    };
                    Ok(distance_dis(ds, p0_eps.as_ref().expect("built for DIS"), &params)?)
                }
                Method::Sdf => {
                    let geo = geometry.as_ref().expect("built for SDF");
                    let index = SpatialBinIndex::from_points(p1.base_positions(), spacing)?;
                    let view = P1View::new(&p1, &index);
                    let vox = build_global_voxelization(geo, &view, cfg.d_cell * spacing, cfg.sdf_margin * spacing)?;
                    Ok(distance_sdf(geo, &partition, &vox, &p1, spacing, false)?.records)
                }
                Method::Vor => {
                    let geo = geometry.as_ref().expect("built for VOR");
                    let index = SpatialBinIndex::from_points(p1.base_positions(), spacing)?;
                    let view = P1View::new(&p1, &index);
                    let params = VorParams {
                        guard: cfg.guard * spacing,
                        use_bvh: cfg.use_bvh,
                        max_retries: cfg.max_retries,
                    };
                    let keep = opts.keep_hulls || cfg.export_obj;
                    let out = distance_vor(geo, &partition, &view, spacing, &params, keep)?;
                    for g in &out.non_manifold {
                        log::warn!("step {:.6}: hull of grain {g} is not watertight", ds.strain_label);
                    }
                    non_manifold = out.non_manifold;
                    hulls = out.hulls;
                    Ok(out.records)
                }
            }
        });
        let recs = res?;
        distance_peak = distance_peak.max(peak_bytes);
        costs.insert(m, MethodCost { wall_s, peak_bytes });
        records.insert(m, recs);
    }
    prof.rows.push(ProfileRow {
        step: prof.step,
        phase: Phase::Distance,
        wall_s: distance_start.elapsed().as_secs_f64(),
        peak_bytes: distance_peak,
        slot: prof.slot,
    });
    let flagged = geometry.map(|g| g.flagged).unwrap_or_default();

    let (binnings, record_counts, kept) = prof.time(Phase::Stats, || -> Result<_, StepError> {
        let states = Arc::new(point_states(ds, Some(&partition), has_orientation)?);
        let mut binnings = Vec::new();
        let mut counts = BTreeMap::new();
        let mut kept = BTreeMap::new();
        for (m, recs) in records {
            counts.insert(m, recs.len());
            if opts.keep_records {
                kept.insert(m, recs.clone());
            }
            let attached = attach_state(m, recs, states.clone())?;
            binnings.push(stats::bin_records(&attached, cfg.bin_lo, cfg.bin_hi, cfg.bin_step)?);
        }
        Ok((binnings, counts, kept))
    })?;

    Ok(StepAnalysis {
        strain_label: ds.strain_label,
        averages,
        partition,
        flagged,
        non_manifold,
        binnings,
        record_counts,
        costs,
        records: kept,
        hulls,
    })
}

/// Outcome of one input step.
#[derive(Debug)]
pub struct StepOutcome {
    pub index: usize,
    pub input: PathBuf,
    pub slot: usize,
    pub flow: Option<FlowCurvePoint>,
    pub error: Option<StepError>,
    pub profile: Vec<ProfileRow>,
}

#[derive(Debug)]
pub struct RunReport {
    pub steps: Vec<StepOutcome>,
    pub flow_curve: Vec<FlowCurvePoint>,
    pub wall_s: f64,
}

impl RunReport {
    pub fn all_succeeded(&self) -> bool {
        self.steps.iter().all(|s| s.error.is_none())
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_succeeded() {
            0
        } else {
            1
        }
    }
}

/// Output directory of step `index`.
pub fn step_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("step_{index:04}"))
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> StepError + '_ {
    move |source| StepError::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn write_step_outputs(dir: &Path, cfg: &RunConfig, a: &StepAnalysis) -> Result<(), StepError> {
    std::fs::create_dir_all(dir).map_err(write_err(dir))?;
    let recon = cfg.recon_method().tag();
    for b in &a.binnings {
        for s in &b.scalars {
            let path = dir.join(format!("{}_{}_{}.csv", b.method.tag(), recon, s.scalar.tag()));
            stats::write_binning_csv(&path, s)?;
        }
    }
    let sizes = stats::grain_size_table(&a.partition);
    stats::write_grain_sizes_csv(&dir.join(format!("grain_sizes_{recon}.csv")), &sizes)?;
    stats::write_grain_size_histogram_csv(&dir.join(format!("grain_size_hist_{recon}.csv")), &sizes)?;
    if cfg.export_obj && !a.hulls.is_empty() {
        let path = dir.join(format!("hulls_{recon}.obj"));
        write_hull_obj(&path, &a.hulls).map_err(write_err(&path))?;
    }
    Ok(())
}

fn run_step(index: usize, slot: usize, exclusive: bool, cfg: &RunConfig) -> StepOutcome {
    let input = cfg.inputs[index].clone();
    let mut prof = Profiler::new(index, slot, exclusive);
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| -> Result<FlowCurvePoint, StepError> {
        let ds = prof.time(Phase::Ingest, || read_step(&input))?;
        let a = analyse_step(&ds, cfg, AnalysisOptions::default(), &mut prof)?;
        drop(ds);
        prof.time(Phase::Output, || write_step_outputs(&step_dir(&cfg.output_dir, index), cfg, &a))?;
        Ok(FlowCurvePoint {
            strain_label: a.strain_label,
            eps_vm_bar: a.averages.eps_vm_bar,
            sigma_vm_bar: a.averages.sigma_vm_bar,
        })
    }))
    .unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(StepError::Panic(msg))
    });
    match &result {
        Ok(_) => log::info!("step {index} ({}) done", input.display()),
        Err(e) => log::error!("step {index} ({}) failed: {e}", input.display()),
    }
    let (flow, error) = match result {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e)),
    };
    StepOutcome {
        index,
        input,
        slot,
        flow,
        error,
        profile: prof.rows,
    }
}

/// Processes every input step and writes per-step CSVs, `flow_curve.csv`
/// and `profile.json` under the output directory. A failing step is logged
/// and skipped; the report's exit code reflects it.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|source| PipelineError::Output {
        path: out.clone(),
        source,
    })?;
    let t0 = Instant::now();
    let n = cfg.inputs.len();
    let slots = cfg.step_workers.min(n);
    let exclusive = slots == 1;
    let pools = (0..slots)
        .map(|s| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.intra_workers)
                .thread_name(move |i| format!("grainmap-{s}-{i}"))
                .build()
                .map_err(|e| PipelineError::Pool(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut steps: Vec<StepOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = pools
            .iter()
            .enumerate()
            .map(|(slot, pool)| {
                scope.spawn(move || {
                    (slot..n)
                        .step_by(slots)
                        .map(|i| pool.install(|| run_step(i, slot, exclusive, cfg)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("step slot threads catch panics"))
            .collect()
    });
    steps.sort_by_key(|s| s.index);

    let mut flow: Vec<FlowCurvePoint> = steps.iter().filter_map(|s| s.flow).collect();
    sort_flow_curve(&mut flow);
    let flow_path = out.join("flow_curve.csv");
    write_flow_curve_csv(&flow_path, &flow).map_err(|source| PipelineError::Output {
        path: flow_path.clone(),
        source,
    })?;

    let rows: Vec<&ProfileRow> = steps.iter().flat_map(|s| &s.profile).collect();
    let profile_path = out.join("profile.json");
    let json = serde_json::to_string_pretty(&rows).expect("profile rows serialise");
    std::fs::write(&profile_path, json + "\n").map_err(|source| PipelineError::Output {
        path: profile_path.clone(),
        source,
    })?;

    Ok(RunReport {
        steps,
        flow_curve: flow,
        wall_s: t0.elapsed().as_secs_f64(),
    })
}
