use std::path::Path;

use trigrid::checkpoint;
use trigrid::pipeline::{run_pipeline, PipelineConfig, CHECKPOINT, REPORT, RESOLVED_CONFIG};
use trigrid::scene::save_scene;
use trigrid::synthetic::{gen_synthetic, SyntheticSpec};

fn quick_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.fit.iterations = 150;
    cfg.fit.batch = 1024;
    cfg.fit.samples = 32;
    cfg.fit.reg_pairs = 256;
    cfg.fit.field.resolution = 16;
    cfg.fit.field.hidden = vec![32, 32];
    cfg.fit.log_every = 0;
    cfg.retexture.samples = 32;
    cfg.eval.render_samples = 32;
    cfg.eval.mesh_grid = 40;
    cfg.eval.sample_points = 2000;
    // short fits stay well below the default iso level
    cfg.eval.iso = 2.0;
    cfg
}

fn sphere_scene(dir: &Path) {
    let spec = SyntheticSpec {
        resolution: 48,
        ..SyntheticSpec::two_tone_sphere(0.25)
    };
    save_scene(&gen_synthetic(&spec, 0).unwrap(), dir).unwrap();
}

fn hidden_files(dir: &Path) -> Vec<String> {
    walk(dir)
        .into_iter()
        .filter(|n| n.starts_with('.'))
        .collect()
}

fn walk(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    out
}

#[test]
fn sphere_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, out) = (dir.path().join("scene"), dir.path().join("out"));
    sphere_scene(&scene);
    let cfg = quick_config();
    let summary = run_pipeline(&scene, &out, &cfg, None).unwrap();

    let report: serde_json::Map<String, serde_json::Value> =
        serde_json::from_slice(&std::fs::read(out.join(REPORT)).unwrap()).unwrap();
    let keys: Vec<&str> = report.keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 6, "{keys:?}");
    for k in ["front_psnr", "back_psnr", "orbit_psnr", "chamfer", "f1_5cm", "f1_10cm"] {
        assert!(report[k].is_number(), "{k}");
    }
    assert_eq!(report["front_psnr"].as_f64().unwrap(), summary.report.front_psnr);

    let files = walk(&out);
    for f in ["delinified.png", "line_mask.png", "mesh.obj", "fit_report.json", CHECKPOINT, RESOLVED_CONFIG] {
        assert!(files.iter().any(|x| x == f), "{f} missing");
    }
    assert_eq!(std::fs::read_dir(out.join("renders")).unwrap().count(), 16);
    assert_eq!(std::fs::read_dir(out.join("retextured")).unwrap().count(), 4);
    assert!(hidden_files(&out).is_empty(), "{:?}", hidden_files(&out));
    assert_eq!(summary.artifacts.len(), files.len());

    let resolved = PipelineConfig::load(&out.join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(resolved, cfg);
    let field = checkpoint::load(&out.join(CHECKPOINT)).unwrap();
    assert_eq!(field.shape(), cfg.fit.field);
    assert_eq!(summary.fit.trace.total.len(), cfg.fit.iterations);
}

#[test]
fn failed_stage_leaves_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, out) = (dir.path().join("scene"), dir.path().join("out"));
    sphere_scene(&scene);
    std::fs::remove_file(scene.join("left_depth.pfm")).unwrap();
    let err = run_pipeline(&scene, &out, &quick_config(), None).unwrap_err();
    assert_eq!(err.stage, trigrid::pipeline::Stage::Scene);
    assert!(err.to_string().contains("left"), "{err}");
    assert!(!out.join(CHECKPOINT).exists());
    assert!(hidden_files(&out).is_empty());
}

#[test]
fn interrupted_write_keeps_previous_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("c.mltp");
    std::fs::write(&target, b"old").unwrap();
    // renaming a file over a non-empty directory fails after the temporary is written
    let blocked = dir.path().join("blocked");
    std::fs::create_dir(&blocked).unwrap();
    std::fs::write(blocked.join("x"), b"x").unwrap();
    assert!(checkpoint::write_atomic(&blocked, b"new").is_err());
    assert_eq!(hidden_files(dir.path()), Vec::<String>::new());
    checkpoint::write_atomic(&target, b"new").unwrap();
    assert_eq!(std::fs::read(&target).unwrap(), b"new");
}
