//! Runs every stage on a generated sphere scene with a reduced config and
//! prints the metrics report.
//!
//! cargo run --release --example full_pipeline

use trigrid::pipeline::{run_pipeline, PipelineConfig};
use trigrid::scene::save_scene;
use trigrid::synthetic::{gen_synthetic, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("trigrid_pipeline");
    let scene_dir = root.join("scene");
    let spec = SyntheticSpec {
        resolution: 64,
        ..SyntheticSpec::two_tone_sphere(0.25)
    };
    save_scene(&gen_synthetic(&spec, 0)?, &scene_dir)?;

    let mut cfg = PipelineConfig::default();
    cfg.fit.iterations = 300;
    cfg.fit.batch = 1024;
    cfg.fit.samples = 32;
    cfg.fit.reg_pairs = 256;
    cfg.fit.field.resolution = 16;
    cfg.fit.field.hidden = vec![32, 32];
    cfg.retexture.samples = 32;
    cfg.eval.render_samples = 32;
    cfg.eval.mesh_grid = 48;

    let summary = run_pipeline(&scene_dir, &root.join("out"), &cfg, None)?;
    println!("{}", serde_json::to_string_pretty(&summary.report)?);
    println!("{} artifacts under {}", summary.artifacts.len(), root.join("out").display());
    Ok(())
}
