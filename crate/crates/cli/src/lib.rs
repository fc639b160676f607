//! The `mirrorfield` command line: design, render, calibrate, decode,
//! features and export-obj, each a deterministic batch step that reads and
//! writes files.

pub mod config;

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mirrorfield_core::calibrate::{
    levenberg_marquardt_with, mirror_deltas, nearest_parallel_grid, perturb_mirrors,
    CalibrationOptions, CalibrationProblem, CalibrationResult, MirrorDelta,
};
use mirrorfield_core::decode::decode_frame;
use mirrorfield_core::design::{
    design_cost, init_faceted_parabola, optimize, DesignReport, DesignSpec, DesignState,
    OptimizeOptions, TraceEntry,
};
use mirrorfield_core::features::{extract_features, FilterConfig, HarrisDetector};
use mirrorfield_core::geometry::{CameraIntrinsics, MirrorPlane, Pose};
use mirrorfield_core::io::{self, schema, PgmDepth, Provenance};
use mirrorfield_core::simulate::{
    render, subimage_map, synth_observations, Scene, DEFAULT_SUBIMAGE_MARGIN,
};
use mirrorfield_core::Error as CoreError;

pub use config::ProjectConfig;

/// Reference hardware magnitude for the spatial RMS of a calibrated
/// 3×3 adapter, printed next to synthetic results for scale.
pub const REFERENCE_SPATIAL_RMS_MM: f64 = 1.80;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// A numerical procedure finished without meeting its goal.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

/// Process exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<NumericalFailure>() {
            return EXIT_NUMERICAL;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_VALIDATION
            };
        }
    }
    EXIT_VALIDATION
}

#[derive(Debug, Parser)]
#[command(
    name = "mirrorfield",
    version,
    about = "Planar-mirror light-field adapter toolkit"
)]
pub struct Cli {
    /// TOML project file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw; recorded in all outputs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the faceted-parabola array and optimize it.
    Design(DesignArgs),
    /// Ray-trace a raw frame of a scene through a design.
    Render(RenderArgs),
    /// Estimate mirror planes from checkerboard corner observations.
    Calibrate(CalibrateArgs),
    /// Turn a raw frame into a rectified 4D light field directory.
    Decode(DecodeArgs),
    /// Extract point-plane-consistent 4D features from a light field.
    Features(FeaturesArgs),
    /// Write the mirror quads of a design as an OBJ mesh.
    ExportObj(ExportObjArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initial,
    Optimized,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Design spec JSON; the built-in default spec when omitted.
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated evaluation depths (m).
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<f64>>,
    /// Sweep limit per penalty round.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub design: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    /// Output frame (16-bit PGM).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Sub-image map output; next to the frame by default.
    #[arg(long)]
    pub submap: Option<PathBuf>,
    #[arg(long)]
    pub supersample: Option<usize>,
    #[arg(long, value_enum)]
    pub stage: Option<Stage>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    pub design: Option<PathBuf>,
    /// Scene with the checkerboards the observations refer to.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Corner observations CSV.
    #[arg(long, conflicts_with = "synth")]
    pub observations: Option<PathBuf>,
    /// Synthesize observations from the design and scene.
    #[arg(long)]
    pub synth: bool,
    /// Corner noise (px) for synthesized observations.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Tilt applied to every initial mirror (degrees).
    #[arg(long)]
    pub perturb_tilt_deg: Option<f64>,
    /// Offset applied to every initial mirror (mm).
    #[arg(long)]
    pub perturb_offset_mm: Option<f64>,
    /// Also refine the board poses.
    #[arg(long)]
    pub joint_boards: bool,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Also write the observations used as CSV.
    #[arg(long)]
    pub write_observations: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stage: Option<Stage>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    pub frame: Option<PathBuf>,
    #[arg(long)]
    pub calib: Option<PathBuf>,
    #[arg(long)]
    pub submap: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Also write all views as one mosaic.
    #[arg(long)]
    pub tile: bool,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    pub lf_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_dist: Option<f64>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub match_ratio: Option<f64>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportObjArgs {
    pub design: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stage: Option<Stage>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// Contents of `design.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDocument {
    pub initial: DesignState,
    pub optimized: DesignState,
    pub initial_report: DesignReport,
    pub optimized_report: DesignReport,
    pub converged: bool,
    pub method: String,
    pub evaluations: usize,
}

impl DesignDocument {
    pub fn state(&self, stage: Stage) -> &DesignState {
        match stage {
            Stage::Initial => &self.initial,
            Stage::Optimized => &self.optimized,
        }
    }
}

/// Contents of `calib.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDocument {
    pub intrinsics: CameraIntrinsics,
    pub camera_pose: Pose,
    pub rows: usize,
    pub cols: usize,
    pub design_mirrors: Vec<MirrorPlane>,
    pub initial_mirrors: Vec<MirrorPlane>,
    pub result: CalibrationResult,
    /// Calibrated minus design, per mirror.
    pub deltas_from_design: Vec<MirrorDelta>,
    pub observation_count: usize,
    pub noise_px: Option<f64>,
}

struct Ctx {
    cfg: ProjectConfig,
    seed: u64,
}

impl Ctx {
    fn provenance(&self, inputs: &[&Path]) -> anyhow::Result<Provenance> {
        let mut p = Provenance::new(Some(self.seed));
        for i in inputs {
            p = p
                .with_input_file(i)
                .with_context(|| format!("hashing {}", i.display()))?;
        }
        Ok(p)
    }
}

fn pick<T: Clone>(cli: Option<T>, cfg: &Option<T>, what: &str) -> anyhow::Result<T> {
    cli.or_else(|| cfg.clone())
        .ok_or_else(|| anyhow!("missing {what} (flag or config)"))
}

fn parse_stage(s: &Option<String>) -> anyhow::Result<Option<Stage>> {
    s.as_deref()
        .map(|v| Stage::from_str(v, true).map_err(|e| anyhow!("stage {v:?}: {e}")))
        .transpose()
}

fn load_design(path: &Path) -> anyhow::Result<DesignDocument> {
    io::read_json(path, schema::DESIGN).map_err(|e| anyhow!(e))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => ProjectConfig::load(p).map_err(|e| e.context("loading config"))?,
        None => ProjectConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let ctx = Ctx { cfg, seed };
    match cli.command {
        Command::Design(a) => cmd_design(&ctx, a),
        Command::Render(a) => cmd_render(&ctx, a),
        Command::Calibrate(a) => cmd_calibrate(&ctx, a),
        Command::Decode(a) => cmd_decode(&ctx, a),
        Command::Features(a) => cmd_features(&ctx, a),
        Command::ExportObj(a) => cmd_export_obj(&ctx, a),
    }
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    round: usize,
    penalty_weight: f64,
    cost_total: f64,
    grid_term: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    overlap_term: Option<f64>,
    penalty: f64,
    penalized: f64,
    evaluations: usize,
}

fn trace_rows(trace: &[TraceEntry], alpha: f64) -> Vec<TraceRow> {
    trace
        .iter()
        .map(|e| TraceRow {
            iteration: e.iteration,
            round: e.round,
            penalty_weight: e.penalty_weight,
            cost_total: e.cost_total,
            grid_term: alpha * e.cost_grid,
            // With alpha = 1 the overlap term is not part of the cost at all.
            overlap_term: (alpha < 1.0).then_some((1.0 - alpha) * e.cost_overlap),
            penalty: e.penalty,
            penalized: e.penalized,
            evaluations: e.evaluations,
        })
        .collect()
}

fn cmd_design(ctx: &Ctx, a: DesignArgs) -> anyhow::Result<()> {
    let c = &ctx.cfg.design;
    let spec_path = a.spec.or_else(|| ctx.cfg.paths.design_spec.clone());
    let mut spec = match &spec_path {
        Some(p) => io::read_json::<DesignSpec>(p, schema::DESIGN_SPEC)?,
        None => {
            let mut s = DesignSpec::default();
            if let Some(k) = &ctx.cfg.intrinsics {
                s.camera = *k;
            }
            s
        }
    };
    if let Some(alpha) = a.alpha.or(c.alpha) {
        spec.alpha = alpha;
    }
    if let Some(d) = a.depths.or_else(|| c.depths.clone()) {
        spec.eval_depths = d;
    }
    spec.validate()?;
    let mut opts = OptimizeOptions::default();
    if let Some(n) = a.iters.or(c.iters) {
        opts.max_sweeps = n;
    }
    let out_dir = a.out.unwrap_or_else(|| ctx.cfg.output("design"));
    let initial = init_faceted_parabola(&spec)?;
    let initial_report = design_cost(&initial)?;
    let outcome = optimize(&initial, &opts)?;
    let doc = DesignDocument {
        initial: initial.clone(),
        optimized: outcome.state.clone(),
        initial_report,
        optimized_report: outcome.report.clone(),
        converged: outcome.converged,
        method: outcome.method.clone(),
        evaluations: outcome.evaluations,
    };
    let inputs: Vec<&Path> = spec_path.iter().map(|p| p.as_path()).collect();
    let prov = ctx.provenance(&inputs)?;
    std::fs::create_dir_all(&out_dir)?;
    io::write_json(&out_dir.join("design.json"), schema::DESIGN, &prov, &doc)?;
    let svg = io::overlap_svg(
        &[("initial", &doc.initial), ("optimized", &doc.optimized)],
        &prov.comment_lines(),
    )?;
    write_file(&out_dir.join("overlap.svg"), svg.as_bytes())?;
    let csv = io::rows_to_csv(
        &trace_rows(&outcome.trace, spec.alpha),
        &prov.comment_lines(),
    )?;
    write_file(&out_dir.join("trace.csv"), csv.as_bytes())?;
    println!(
        "cost {:.6} -> {:.6} ({} evaluations, {})",
        doc.initial_report.cost_total,
        doc.optimized_report.cost_total,
        doc.evaluations,
        if doc.converged {
            "converged"
        } else {
            "sweep limit"
        }
    );
    for (a0, a1) in doc
        .initial_report
        .overlap_area_per_depth
        .iter()
        .zip(&doc.optimized_report.overlap_area_per_depth)
    {
        println!(
            "overlap at {} m: {:.4e} -> {:.4e} m²",
            a0.depth, a0.area, a1.area
        );
    }
    Ok(())
}

fn cmd_render(ctx: &Ctx, a: RenderArgs) -> anyhow::Result<()> {
    let c = &ctx.cfg.render;
    let design_path = pick(a.design, &ctx.cfg.paths.design, "design file")?;
    let scene_path = pick(a.scene, &ctx.cfg.paths.scene, "scene file")?;
    let stage = a
        .stage
        .or(parse_stage(&c.stage)?)
        .unwrap_or(Stage::Optimized);
    let supersample = a.supersample.or(c.supersample).unwrap_or(2);
    let out = a.out.unwrap_or_else(|| ctx.cfg.output("frame.pgm"));
    let submap_path = a
        .submap
        .unwrap_or_else(|| out.with_file_name("submap.json"));
    let doc = load_design(&design_path)?;
    let state = doc.state(stage);
    let scene: Scene = io::read_json(&scene_path, schema::SCENE)?;
    let frame = render(state, &scene, supersample, ctx.seed)?;
    let map = subimage_map(state, DEFAULT_SUBIMAGE_MARGIN)?;
    let prov = ctx.provenance(&[&design_path, &scene_path])?;
    write_file(
        &out,
        &io::encode_pgm(&frame, PgmDepth::Sixteen, &prov.comment_lines()),
    )?;
    io::write_json(&submap_path, schema::SUBIMAGE_MAP, &prov, &map)?;
    for w in &map.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}×{} frame, {} sub-images",
        frame.width,
        frame.height,
        map.subimages.len()
    );
    Ok(())
}

fn cmd_calibrate(ctx: &Ctx, a: CalibrateArgs) -> anyhow::Result<()> {
    let c = &ctx.cfg.calibrate;
    let design_path = pick(a.design, &ctx.cfg.paths.design, "design file")?;
    let scene_path = pick(a.scene, &ctx.cfg.paths.scene, "scene file")?;
    let obs_path = a
        .observations
        .or_else(|| ctx.cfg.paths.observations.clone());
    let synth = a.synth || (obs_path.is_none() && c.synth.unwrap_or(false));
    let stage = a
        .stage
        .or(parse_stage(&c.stage)?)
        .unwrap_or(Stage::Optimized);
    let doc = load_design(&design_path)?;
    let state = doc.state(stage);
    let scene: Scene = io::read_json(&scene_path, schema::SCENE)?;
    let mut inputs: Vec<&Path> = vec![&design_path, &scene_path];
    let (observations, noise) = if synth {
        let noise = a.noise.or(c.noise).unwrap_or(0.0);
        let obs = synth_observations(state, &scene, noise, ctx.seed)?;
        (obs, Some(noise))
    } else {
        let p = obs_path
            .as_deref()
            .ok_or_else(|| anyhow!("need --observations or --synth"))?;
        inputs.push(p);
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        (io::observations_from_csv(&text)?, None)
    };
    let prov = ctx.provenance(&inputs)?;
    if let Some(w) = a
        .write_observations
        .as_ref()
        .or(c.write_observations.as_ref())
    {
        write_file(
            w,
            io::observations_to_csv(&observations, &prov.comment_lines())?.as_bytes(),
        )?;
    }
    let tilt = a
        .perturb_tilt_deg
        .or(c.perturb_tilt_deg)
        .unwrap_or(0.0)
        .to_radians();
    let offset = a.perturb_offset_mm.or(c.perturb_offset_mm).unwrap_or(0.0) * 1e-3;
    let problem = CalibrationProblem {
        intrinsics: state.spec.camera,
        camera_pose: state.spec.camera_pose,
        observations: observations.observations.clone(),
        boards: scene.checkerboards.clone(),
        initial_mirrors: perturb_mirrors(&state.mirrors, tilt, offset)?,
    };
    let mut opts = CalibrationOptions {
        joint_boards: a.joint_boards || c.joint_boards.unwrap_or(false),
        ..CalibrationOptions::default()
    };
    if let Some(n) = a.max_iterations.or(c.max_iterations) {
        opts.max_iterations = n;
    }
    let result = levenberg_marquardt_with(&problem, &opts)?;
    let out = a.out.unwrap_or_else(|| ctx.cfg.output("calib.json"));
    let converged = result.converged;
    let cal = CalibrationDocument {
        intrinsics: problem.intrinsics,
        camera_pose: problem.camera_pose,
        rows: state.spec.rows,
        cols: state.spec.cols,
        design_mirrors: state.mirrors.clone(),
        initial_mirrors: problem.initial_mirrors.clone(),
        deltas_from_design: mirror_deltas(&state.mirrors, &result.mirrors),
        observation_count: problem.observations.len(),
        noise_px: noise,
        result,
    };
    if let Some(p) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    io::write_json(&out, schema::CALIBRATION, &prov, &cal)?;
    println!(
        "{} observations, {} iterations, reprojection RMS {:.4} px",
        cal.observation_count, cal.result.iterations, cal.result.rms_px
    );
    println!(
        "spatial RMS {:.4} mm (reference hardware magnitude {REFERENCE_SPATIAL_RMS_MM:.2} mm)",
        cal.result.rms_spatial_mm
    );
    if !converged {
        return Err(anyhow!(NumericalFailure(format!(
            "calibration did not converge in {} iterations; partial result saved to {}",
            cal.result.iterations,
            out.display()
        ))));
    }
    Ok(())
}

fn cmd_decode(ctx: &Ctx, a: DecodeArgs) -> anyhow::Result<()> {
    let frame_path = pick(a.frame, &ctx.cfg.paths.frame, "frame")?;
    let calib_path = pick(a.calib, &ctx.cfg.paths.calibration, "calibration file")?;
    let submap_path = pick(a.submap, &ctx.cfg.paths.submap, "sub-image map")?;
    let tile = a.tile || ctx.cfg.decode.tile.unwrap_or(false);
    let out = a.out.unwrap_or_else(|| ctx.cfg.output("lf"));
    let raw = io::read_pgm(&frame_path)?;
    let cal: CalibrationDocument = io::read_json(&calib_path, schema::CALIBRATION)?;
    let map = io::read_json(&submap_path, schema::SUBIMAGE_MAP)?;
    let model = nearest_parallel_grid(
        &cal.result.mirrors,
        &cal.intrinsics,
        &cal.camera_pose,
        cal.rows,
        cal.cols,
    )?;
    let source_id = frame_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let lf = decode_frame(&raw, &model, &map, &source_id)?;
    let prov = ctx.provenance(&[&frame_path, &calib_path, &submap_path])?;
    io::write_lf_dir(&out, &lf, &prov, tile)?;
    for w in &lf.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}×{} views of {}×{} px",
        lf.s_count, lf.t_count, lf.u_count, lf.v_count
    );
    Ok(())
}

fn cmd_features(ctx: &Ctx, a: FeaturesArgs) -> anyhow::Result<()> {
    let c = &ctx.cfg.features;
    let dir = pick(
        a.lf_dir,
        &ctx.cfg.paths.light_field,
        "light-field directory",
    )?;
    let lf = io::read_lf_dir(&dir)?;
    let mut fc = FilterConfig::for_grid(lf.s_count, lf.t_count);
    if let Some(d) = a.max_dist.or(c.max_dist) {
        fc.max_dist_px = d;
    }
    if let Some(n) = a.n_min.or(c.n_min) {
        fc.n_min = n;
    }
    if let Some(r) = a.match_ratio.or(c.match_ratio) {
        fc.match_ratio = r;
    }
    fc.validate(lf.s_count * lf.t_count)?;
    let features = extract_features(&lf, &HarrisDetector::default(), &fc)?;
    let out = a.out.unwrap_or_else(|| ctx.cfg.output("features.csv"));
    let prov = ctx.provenance(&[&dir.join("lf.json")])?;
    write_file(
        &out,
        io::features_to_csv(&features, &prov.comment_lines())?.as_bytes(),
    )?;
    println!("{} features", features.len());
    Ok(())
}

fn cmd_export_obj(ctx: &Ctx, a: ExportObjArgs) -> anyhow::Result<()> {
    let design_path = pick(a.design, &ctx.cfg.paths.design, "design file")?;
    let stage = a
        .stage
        .or(parse_stage(&ctx.cfg.export_obj.stage)?)
        .unwrap_or(Stage::Optimized);
    let doc = load_design(&design_path)?;
    if doc.state(stage).mirrors.is_empty() {
        bail!("design has no mirrors");
    }
    let out = a.out.unwrap_or_else(|| ctx.cfg.output("mount.obj"));
    let prov = ctx.provenance(&[&design_path])?;
    let obj = io::mirrors_to_obj(&doc.state(stage).mirrors, &prov.comment_lines());
    write_file(&out, obj.as_bytes())?;
    println!("{} mirror faces", doc.state(stage).mirrors.len());
    Ok(())
}
