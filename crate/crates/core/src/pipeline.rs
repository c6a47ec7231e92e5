//! End-to-end pipeline: scene → delinify → fit → renders → mesh → retexture → metrics.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{parse_camera, Camera, ORTHO_VIEWS};
use crate::checkpoint::{self, write_atomic};
use crate::delinify::{delinify_image, DelinifyParams, LandmarkSet};
use crate::error::{Error, Result};
use crate::field::RadianceField;
use crate::fit::{fit, FitConfig, FitReport};
use crate::isosurface::extract_mesh;
use crate::metrics::{evaluate, EvalProtocol, MetricsReport, ViewRenders};
use crate::render::{render_view, SampleMode};
use crate::retexture::{retexture_render, RetextureParams};
use crate::scene::{load_scene, RoiBox, SceneBundle};
use crate::synthetic::orbit_view_name;

pub const RESOLVED_CONFIG: &str = "config.resolved.json";
pub const REPORT: &str = "report.json";
pub const FIT_REPORT: &str = "fit_report.json";
pub const CHECKPOINT: &str = "checkpoint.mltp";
pub const MESH: &str = "mesh.obj";
pub const DELINIFIED: &str = "delinified.png";
pub const LINE_MASK: &str = "line_mask.png";
pub const RENDERS_DIR: &str = "renders";
pub const RETEXTURED_DIR: &str = "retextured";
/// Optional landmark file looked up in the scene directory.
pub const SCENE_LANDMARKS: &str = "landmarks.json";

/// Every tunable of the pipeline. Unknown keys are rejected on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Seed for point sampling during evaluation.
    pub seed: u64,
    pub delinify: DelinifyParams,
    pub fit: FitConfig,
    pub retexture: RetextureParams,
    /// Cameras (see [`parse_camera`]) rendered with the front input projected on.
    pub retexture_views: Vec<String>,
    pub eval: EvalProtocol,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            delinify: DelinifyParams::default(),
            fit: FitConfig::default(),
            retexture: RetextureParams::default(),
            retexture_views: ORTHO_VIEWS.iter().map(|(n, _)| n.to_string()).collect(),
            eval: EvalProtocol::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(cfg)
    }

    /// The file if given, else defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Sets the evaluation, fitting and retexture seeds together.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.fit.seed = seed;
        self.retexture.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.delinify.validate()?;
        self.fit.validate()?;
        self.retexture.validate()?;
        self.eval.validate()?;
        for v in &self.retexture_views {
            parse_camera(v, 1)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Scene,
    Delinify,
    Fit,
    Render,
    Mesh,
    Retexture,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Scene => "scene",
            Stage::Delinify => "delinify",
            Stage::Fit => "fit",
            Stage::Render => "render",
            Stage::Mesh => "extract-mesh",
            Stage::Retexture => "retexture",
            Stage::Evaluate => "evaluate",
        };
        f.write_str(s)
    }
}

/// A pipeline failure tagged with the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub report: MetricsReport,
    pub fit: FitReport,
    pub artifacts: Vec<PathBuf>,
}

/// Writes pretty JSON atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    write_atomic(path, text.as_bytes())
}

/// Landmarks from `path`, else `landmarks.json` in the scene, else none.
pub fn resolve_landmarks(scene_dir: &Path, path: Option<&Path>) -> Result<LandmarkSet> {
    match path {
        Some(p) => LandmarkSet::load_json(p),
        None => {
            let p = scene_dir.join(SCENE_LANDMARKS);
            if p.is_file() {
                LandmarkSet::load_json(&p)
            } else {
                Ok(LandmarkSet::default())
            }
        }
    }
}

/// Camera of the `k`-th orbit view: the scene's own if it has one, else the protocol's.
fn orbit_camera(scene: &SceneBundle, protocol: &EvalProtocol, k: usize) -> Camera {
    let name = orbit_view_name(k);
    match scene.views.iter().find(|v| v.name == name) {
        Some(v) => v.camera,
        None => Camera::persp(
            k as f64 * protocol.orbit_interval_deg,
            0.0,
            protocol.orbit_fov_deg,
            scene.resolution,
        ),
    }
}

/// Renders the four ortho views and the orbit views, keyed by view name.
pub fn render_all_views(field: &RadianceField<f32>, scene: &SceneBundle, protocol: &EvalProtocol) -> Result<ViewRenders> {
    let mut out = ViewRenders::new();
    for (name, az) in &protocol.ortho_views {
        let cam = Camera::ortho(*az, 0.0, scene.resolution);
        let r = render_view(field, &cam, protocol.render_samples, SampleMode::Midpoint, 0)?;
        out.insert(name.clone(), r.rgb);
    }
    for k in 0..protocol.orbit_views {
        let cam = orbit_camera(scene, protocol, k);
        let r = render_view(field, &cam, protocol.render_samples, SampleMode::Midpoint, 0)?;
        out.insert(orbit_view_name(k), r.rgb);
    }
    Ok(out)
}

/// Runs every stage on `scene_dir`, writing artifacts to `out_dir`.
pub fn run_pipeline(
    scene_dir: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
    landmarks: Option<&Path>,
) -> std::result::Result<RunSummary, StageError> {
    cfg.validate().stage(Stage::Config)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(out_dir, e))
        .stage(Stage::Config)?;
    let mut artifacts = Vec::new();
    let mut emit = |p: PathBuf| {
        log::info!("wrote {}", p.display());
        artifacts.push(p);
    };
    let p = out_dir.join(RESOLVED_CONFIG);
    write_atomic(&p, cfg.to_json().as_bytes()).stage(Stage::Config)?;
    emit(p);

    let scene = load_scene(scene_dir).stage(Stage::Scene)?;
    let front = scene.view("front").stage(Stage::Scene)?.rgb.clone();

    let marks = resolve_landmarks(scene_dir, landmarks).stage(Stage::Delinify)?;
    let (clean, mask) = delinify_image(&front, &marks, &cfg.delinify).stage(Stage::Delinify)?;
    let p = out_dir.join(DELINIFIED);
    clean.save_png(&p).stage(Stage::Delinify)?;
    emit(p);
    let p = out_dir.join(LINE_MASK);
    mask.save_png(&p).stage(Stage::Delinify)?;
    emit(p);
    log::info!("delinify: {} line pixels", mask.count());

    let (field, fit_report) = fit(&scene, &cfg.fit).stage(Stage::Fit)?;
    let p = out_dir.join(CHECKPOINT);
    checkpoint::save(&field, &p).stage(Stage::Fit)?;
    emit(p);
    let p = out_dir.join(FIT_REPORT);
    write_json(&p, &fit_report).stage(Stage::Fit)?;
    emit(p);

    let renders = render_all_views(&field, &scene, &cfg.eval).stage(Stage::Render)?;
    for (name, img) in &renders {
        let p = out_dir.join(RENDERS_DIR).join(format!("{name}.png"));
        img.save_png(&p).stage(Stage::Render)?;
        emit(p);
    }

    let mesh = extract_mesh(&field, cfg.eval.mesh_grid, cfg.eval.iso).stage(Stage::Mesh)?;
    let p = out_dir.join(MESH);
    mesh.save_obj(&p).stage(Stage::Mesh)?;
    emit(p);

    for spec in &cfg.retexture_views {
        let cam = parse_camera(spec, scene.resolution).stage(Stage::Retexture)?;
        let out = retexture_render(&field, &clean, &cam, &cfg.retexture).stage(Stage::Retexture)?;
        let p = out_dir
            .join(RETEXTURED_DIR)
            .join(format!("{}.png", spec.replace(':', "_")));
        out.image.save_png(&p).stage(Stage::Retexture)?;
        emit(p);
    }

    let roi = scene.roi.unwrap_or_else(|| RoiBox::full(scene.resolution));
    let report = evaluate(&renders, Some(&mesh), &scene, &roi, &cfg.eval, cfg.seed).stage(Stage::Evaluate)?;
    let p = out_dir.join(REPORT);
    write_json(&p, &report).stage(Stage::Evaluate)?;
    emit(p);

    Ok(RunSummary {
        report,
        fit: fit_report,
        artifacts,
    })
}
