use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use trigrid::camera::parse_camera;
use trigrid::checkpoint;
use trigrid::delinify::{delinify_image, LandmarkSet};
use trigrid::fit::{fit, LossWeights};
use trigrid::image::RgbaImage;
use trigrid::isosurface::extract_mesh;
use trigrid::mesh::TriMesh;
use trigrid::metrics::{evaluate, evaluate_field, ViewRenders};
use trigrid::pipeline::{
    run_pipeline, write_json, PipelineConfig, MESH, RENDERS_DIR, RESOLVED_CONFIG,
};
use trigrid::render::{render_view, SampleMode};
use trigrid::retexture::retexture_render;
use trigrid::scene::{load_scene, save_scene, RoiBox};
use trigrid::selftest::run_selftest;
use trigrid::synthetic::{gen_synthetic, SyntheticSpec};

#[derive(Parser)]
#[command(name = "trigrid", version, about = "Fit, render and evaluate multi-layer triplane radiance fields")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "TRIPLANE_THREADS", default_value_t = 0)]
    threads: usize,
    /// JSON config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render an analytic scene into a scene directory.
    GenSynthetic(GenArgs),
    /// Remove drawn lines from an illustration.
    Delinify(DelinifyArgs),
    /// Fit a field to a scene's four orthographic views.
    Fit(FitArgs),
    /// Render a checkpoint from one camera.
    Render(RenderArgs),
    /// Extract a triangle mesh from a checkpoint.
    ExtractMesh(MeshArgs),
    /// Project a front image onto the front-visible surface.
    Retexture(RetextureArgs),
    /// Score a prediction against a scene.
    Evaluate(EvalArgs),
    /// Run every stage on a scene.
    Run(RunArgs),
    /// Run the fast invariant probes.
    Selftest,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    /// Scene description JSON; defaults to a two-tone sphere.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0.25)]
    radius: f64,
    #[arg(long)]
    resolution: Option<u32>,
    #[arg(long)]
    orbit_views: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DelinifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    landmarks: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    out_mask: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// rgb,sil,depth,reg
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// front|right|back|left, orbit:K, ortho:AZ:EL or persp:AZ:EL:FOV
    #[arg(long, default_value = "front")]
    camera: String,
    #[arg(long, default_value_t = 512)]
    size: u32,
    #[arg(long, default_value_t = trigrid::render::DEFAULT_SAMPLES)]
    samples: usize,
    /// midpoint or stratified
    #[arg(long, default_value = "midpoint")]
    mode: SampleMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_rgb: Option<PathBuf>,
    #[arg(long)]
    out_depth: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    iso: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetextureArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    front: PathBuf,
    #[arg(long, default_value = "front")]
    camera: String,
    /// Output size; defaults to the front image's.
    #[arg(long)]
    size: Option<u32>,
    #[arg(long)]
    vthresh: Option<f64>,
    /// Visibility rays per pixel.
    #[arg(long)]
    jitter: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// A checkpoint, or a directory holding mesh.obj and renders/<view>.png.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    landmarks: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
}

fn parent_dir(p: &Path) -> &Path {
    p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn write_resolved(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let p = parent_dir(out).join(RESOLVED_CONFIG);
    trigrid::checkpoint::write_atomic(&p, cfg.to_json().as_bytes())?;
    Ok(())
}

fn gen_cmd(a: GenArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SyntheticSpec>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SyntheticSpec::two_tone_sphere(a.radius),
    };
    if let Some(r) = a.resolution {
        spec.resolution = r;
    }
    if let Some(n) = a.orbit_views {
        spec.orbit_views = n;
    }
    let bundle = gen_synthetic(&spec, a.seed)?;
    save_scene(&bundle, &a.out)?;
    log::info!("wrote scene with {} views to {}", bundle.views.len(), a.out.display());
    Ok(())
}

fn delinify_cmd(a: DelinifyArgs, mut cfg: PipelineConfig) -> Result<()> {
    let p = &mut cfg.delinify;
    p.sigma = a.sigma.unwrap_or(p.sigma);
    p.k = a.k.unwrap_or(p.k);
    p.tau = a.tau.unwrap_or(p.tau);
    let img = RgbaImage::load_png(&a.input)?;
    let marks = match &a.landmarks {
        Some(p) => LandmarkSet::load_json(p)?,
        None => LandmarkSet::default(),
    };
    let (clean, mask) = delinify_image(&img, &marks, &cfg.delinify)?;
    write_resolved(&cfg, &a.out)?;
    clean.save_png(&a.out)?;
    if let Some(m) = &a.out_mask {
        mask.save_png(m)?;
    }
    log::info!("removed {} line pixels", mask.count());
    Ok(())
}

fn fit_cmd(a: FitArgs, mut cfg: PipelineConfig) -> Result<()> {
    if let Some(s) = a.seed {
        cfg.set_seed(s);
    }
    if let Some(n) = a.iters {
        cfg.fit.iterations = n;
    }
    if let Some(w) = &a.weights {
        cfg.fit.weights = LossWeights::parse(w)?;
    }
    cfg.validate()?;
    let scene = load_scene(&a.scene)?;
    write_resolved(&cfg, &a.out)?;
    let (field, report) = fit(&scene, &cfg.fit)?;
    checkpoint::save(&field, &a.out)?;
    if let Some(r) = &a.report {
        write_json(r, &report)?;
    }
    for (view, db) in &report.final_psnr {
        log::info!("{view}: {db:.2} dB");
    }
    Ok(())
}

fn render_cmd(a: RenderArgs) -> Result<()> {
    if a.out_rgb.is_none() && a.out_depth.is_none() {
        bail!("nothing to write: pass --out-rgb and/or --out-depth");
    }
    let field = checkpoint::load(&a.checkpoint)?;
    let cam = parse_camera(&a.camera, a.size)?;
    let r = render_view(&field, &cam, a.samples, a.mode, a.seed)?;
    if let Some(p) = &a.out_rgb {
        r.rgb.save_png(p)?;
    }
    if let Some(p) = &a.out_depth {
        r.depth.save_pfm(p)?;
    }
    Ok(())
}

fn mesh_cmd(a: MeshArgs, mut cfg: PipelineConfig) -> Result<()> {
    cfg.eval.mesh_grid = a.grid.unwrap_or(cfg.eval.mesh_grid);
    cfg.eval.iso = a.iso.unwrap_or(cfg.eval.iso);
    let field = checkpoint::load(&a.checkpoint)?;
    let mesh = extract_mesh(&field, cfg.eval.mesh_grid, cfg.eval.iso)?;
    mesh.save_obj(&a.out)?;
    log::info!("{} vertices, {} faces", mesh.vertices.len(), mesh.faces.len());
    Ok(())
}

fn retexture_cmd(a: RetextureArgs, mut cfg: PipelineConfig) -> Result<()> {
    let p = &mut cfg.retexture;
    p.v_thresh = a.vthresh.unwrap_or(p.v_thresh);
    p.n_jitter = a.jitter.unwrap_or(p.n_jitter);
    p.samples = a.samples.unwrap_or(p.samples);
    let field = checkpoint::load(&a.checkpoint)?;
    let front = RgbaImage::load_png(&a.front)?;
    let cam = parse_camera(&a.camera, a.size.unwrap_or(front.width))?;
    let out = retexture_render(&field, &front, &cam, &cfg.retexture)?;
    write_resolved(&cfg, &a.out)?;
    out.image.save_png(&a.out)?;
    log::info!("{} pixels took the front colour", out.retextured_count());
    Ok(())
}

fn load_renders(dir: &Path) -> Result<ViewRenders> {
    let mut out = ViewRenders::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "png") {
            let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.insert(name, RgbaImage::load_png(&path)?);
        }
    }
    Ok(out)
}

fn evaluate_cmd(a: EvalArgs, mut cfg: PipelineConfig) -> Result<()> {
    if let Some(s) = a.seed {
        cfg.set_seed(s);
    }
    cfg.eval.validate()?;
    let gt = load_scene(&a.gt)?;
    let roi = gt.roi.unwrap_or_else(|| RoiBox::full(gt.resolution));
    let report = if a.pred.is_dir() {
        let renders = load_renders(&a.pred.join(RENDERS_DIR))?;
        let mesh_path = a.pred.join(MESH);
        let mesh = if mesh_path.is_file() {
            Some(TriMesh::load_obj(&mesh_path)?)
        } else {
            log::warn!("no {} in {}, geometry metrics skipped", MESH, a.pred.display());
            None
        };
        evaluate(&renders, mesh.as_ref(), &gt, &roi, &cfg.eval, cfg.seed)?
    } else {
        let field = checkpoint::load(&a.pred)?;
        evaluate_field(&field, &gt, &roi, &cfg.eval, cfg.seed)?.0
    };
    write_resolved(&cfg, &a.out)?;
    write_json(&a.out, &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn run_cmd(a: RunArgs, mut cfg: PipelineConfig) -> Result<()> {
    if let Some(s) = a.seed {
        cfg.set_seed(s);
    }
    if let Some(n) = a.iters {
        cfg.fit.iterations = n;
    }
    cfg.validate()?;
    if a.dry_run {
        print!("{}", cfg.to_json());
        return Ok(());
    }
    let summary = run_pipeline(&a.scene, &a.out, &cfg, a.landmarks.as_deref())?;
    println!("{}", serde_json::to_string(&summary.report)?);
    Ok(())
}

fn selftest_cmd() -> Result<()> {
    let start = std::time::Instant::now();
    let results = run_selftest();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    println!("selftest finished in {:.1} s", start.elapsed().as_secs_f64());
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if !failed.is_empty() {
        bail!("failed probes: {}", failed.join(", "));
    }
    Ok(())
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let (stage, result) = match PipelineConfig::load_or_default(cli.config.as_deref()) {
        Err(e) => ("config", Err(e.into())),
        Ok(cfg) => match cli.cmd {
            Cmd::GenSynthetic(a) => ("gen-synthetic", gen_cmd(a)),
            Cmd::Delinify(a) => ("delinify", delinify_cmd(a, cfg)),
            Cmd::Fit(a) => ("fit", fit_cmd(a, cfg)),
            Cmd::Render(a) => ("render", render_cmd(a)),
            Cmd::ExtractMesh(a) => ("extract-mesh", mesh_cmd(a, cfg)),
            Cmd::Retexture(a) => ("retexture", retexture_cmd(a, cfg)),
            Cmd::Evaluate(a) => ("evaluate", evaluate_cmd(a, cfg)),
            Cmd::Run(a) => ("run", run_cmd(a, cfg)),
            Cmd::Selftest => ("selftest", selftest_cmd()),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: [{stage}] {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
