//! Fits a quick field, then projects the front input onto the side and back
//! views wherever the surface is visible from the front.
//!
//! cargo run --release --example retexture_front

use trigrid::camera::Camera;
use trigrid::field::FieldShape;
use trigrid::fit::{fit, FitConfig};
use trigrid::retexture::{retexture_render, RetextureParams};
use trigrid::synthetic::{gen_synthetic, SyntheticSpec};

fn main() -> trigrid::Result<()> {
    let spec = SyntheticSpec {
        resolution: 64,
        orbit_views: 0,
        ..SyntheticSpec::two_tone_sphere(0.25)
    };
    let scene = gen_synthetic(&spec, 0)?;
    let cfg = FitConfig {
        iterations: 300,
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
    let (field, _) = fit(&scene, &cfg)?;
    let front = &scene.view("front")?.rgb;
    let params = RetextureParams {
        samples: 32,
        ..RetextureParams::default()
    };
    let out_dir = std::env::temp_dir().join("trigrid_retexture");
    for az in [0.0, 45.0, 90.0, 180.0] {
        let cam = Camera::ortho(az, 0.0, 64);
        let out = retexture_render(&field, front, &cam, &params)?;
        println!("azimuth {az:5.1}: {} of {} pixels retextured", out.retextured_count(), out.image.pixels.len());
        out.image.save_png(&out_dir.join(format!("az{az:03.0}.png")))?;
    }
    println!("images in {}", out_dir.display());
    Ok(())
}
