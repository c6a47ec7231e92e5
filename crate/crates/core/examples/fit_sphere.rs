//! Fits a small field to a low-resolution sphere scene and reports
//! per-view PSNR. Pass an iteration count to fit longer.
//!
//! cargo run --release --example fit_sphere -- 400

use trigrid::checkpoint;
use trigrid::field::FieldShape;
use trigrid::fit::{fit_with, FitConfig};
use trigrid::synthetic::{gen_synthetic, SyntheticSpec};

fn main() -> trigrid::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let spec = SyntheticSpec {
        resolution: 64,
        orbit_views: 0,
        ..SyntheticSpec::two_tone_sphere(0.25)
    };
    let scene = gen_synthetic(&spec, 0)?;
    let cfg = FitConfig {
        iterations,
        batch: 1024,
        samples: 32,
        reg_pairs: 256,
        log_every: 0,
        field: FieldShape {
            resolution: 16,
            layers: 2,
            channels: 8,
            hidden: vec![32, 32],
        },
        ..FitConfig::default()
    };
    let (field, report) = fit_with(&scene, &cfg, |it, terms| {
        if it % 50 == 0 {
            println!("iter {it:4}  total {:.4}  rgb {:.4}  sil {:.4}", terms.total, terms.rgb, terms.sil);
        }
    })?;
    for (view, db) in &report.final_psnr {
        println!("{view:6} {db:.2} dB");
    }
    let path = std::env::temp_dir().join("trigrid_sphere.mltp");
    checkpoint::save(&field, &path)?;
    println!("{:.1} s, checkpoint at {}", report.wall_time_s, path.display());
    Ok(())
}
