//! Renders an analytic two-tone sphere into a scene directory.
//!
//! cargo run --release --example synthetic_scene -- /tmp/sphere_scene

use std::path::PathBuf;

use trigrid::scene::{load_scene, save_scene};
use trigrid::synthetic::{gen_synthetic, SyntheticSpec};

fn main() -> trigrid::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("trigrid_sphere_scene"));
    let spec = SyntheticSpec {
        resolution: 128,
        ..SyntheticSpec::two_tone_sphere(0.25)
    };
    let scene = gen_synthetic(&spec, 0)?;
    save_scene(&scene, &out)?;

    let back = load_scene(&out)?;
    for v in &back.views {
        let covered = v.silhouette.values.iter().filter(|&&s| s > 0.5).count();
        println!("{:10} {:>6} silhouette pixels", v.name, covered);
    }
    println!("scene written to {}", out.display());
    Ok(())
}
