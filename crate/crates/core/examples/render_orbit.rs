//! Renders a checkpoint from the twelve orbit cameras, writing RGB PNGs and
//! depth PFMs.
//!
//! cargo run --release --example render_orbit -- /tmp/trigrid_sphere.mltp /tmp/orbit

use std::path::PathBuf;

use trigrid::camera::make_orbit_cameras;
use trigrid::checkpoint;
use trigrid::render::{render_view, SampleMode};

fn main() -> trigrid::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("trigrid_sphere.mltp"));
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("trigrid_orbit"));
    let field = checkpoint::load(&ckpt)?;
    for (k, cam) in make_orbit_cameras(12, 0.0, 128).iter().enumerate() {
        let r = render_view(&field, cam, 64, SampleMode::Midpoint, 0)?;
        r.rgb.save_png(&out.join(format!("orbit_{k:02}.png")))?;
        r.depth.save_pfm(&out.join(format!("orbit_{k:02}.pfm")))?;
        let coverage = r.rgb.pixels.iter().map(|p| p[3] as f64).sum::<f64>() / r.rgb.pixels.len() as f64;
        println!("azimuth {:5.1}  coverage {coverage:.3}", cam.azimuth_deg);
    }
    println!("renders in {}", out.display());
    Ok(())
}
