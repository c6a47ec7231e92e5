//! Draws contour lines over a synthetic head render, removes them, and
//! compares both images with the clean render.
//!
//! cargo run --release --example delinify_lines

use trigrid::camera::Camera;
use trigrid::delinify::{benchmark_scene, delinify_image, draw_contours, DelinifyParams};
use trigrid::image::psnr;
use trigrid::synthetic::render_synthetic_view;

fn main() -> trigrid::Result<()> {
    let out = std::env::temp_dir().join("trigrid_delinify");
    let (spec, landmarks) = benchmark_scene(3, 256);
    let clean = render_synthetic_view(&spec, "front", &Camera::ortho(0.0, 0.0, 256), 3);
    let lined = draw_contours(&clean.rgb, &clean.silhouette, 3);
    let (restored, mask) = delinify_image(&lined, &landmarks, &DelinifyParams::default())?;

    println!("mask pixels   {}", mask.count());
    println!("lined PSNR    {:.2} dB", psnr(&lined, &clean.rgb));
    println!("restored PSNR {:.2} dB", psnr(&restored, &clean.rgb));
    clean.rgb.save_png(&out.join("clean.png"))?;
    lined.save_png(&out.join("lined.png"))?;
    restored.save_png(&out.join("restored.png"))?;
    mask.save_png(&out.join("mask.png"))?;
    landmarks.save_json(&out.join("landmarks.json"))?;
    println!("images in {}", out.display());
    Ok(())
}
