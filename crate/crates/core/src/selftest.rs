//! Fast invariant probes run by `trigrid selftest`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::delinify::dog_response;
use crate::error::Error;
use crate::field::{FieldShape, RadianceField};
use crate::geometry::Vec3;
use crate::gradcheck::{check_term, GradCheckConfig, GradInstance, LossTerm};
use crate::image::RgbaImage;
use crate::metrics::{brute_force_nearest, chamfer_f1, KdTree};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn probe(name: &'static str, outcome: Result<String, String>) -> ProbeResult {
    match outcome {
        Ok(detail) => ProbeResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => ProbeResult {
            name,
            passed: false,
            detail,
        },
    }
}

fn gradient_probe() -> Result<String, String> {
    let cfg = GradCheckConfig {
        probes: 10,
        ..GradCheckConfig::default()
    };
    let inst = GradInstance::new(&cfg, 7).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for term in LossTerm::ALL {
        let s = check_term(&inst, &cfg, term, 7);
        if s.passed != s.probes {
            return Err(format!(
                "{term:?}: {}/{} parameters within tolerance, max rel err {:.3e}",
                s.passed, s.probes, s.max_rel_err
            ));
        }
        worst = worst.max(s.max_rel_err);
    }
    Ok(format!("R={} all terms match, max rel err {worst:.2e}", cfg.resolution))
}

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n)
        .map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)])
        .collect()
}

fn chamfer_probe() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (a, b) = (cloud(&mut rng, 50), cloud(&mut rng, 50));
    let tree = KdTree::new(&b);
    let fast: Vec<f64> = a.iter().map(|&p| tree.nearest_dist2(p)).collect();
    if fast != brute_force_nearest(&a, &b) {
        return Err("k-d tree distances differ from brute force".into());
    }
    let spread: Vec<Vec3> = (0..50).map(|i| [i as f64 * 0.5, 0.0, 0.0]).collect();
    let shifted: Vec<Vec3> = spread.iter().map(|p| [p[0], p[1] + 0.07, p[2]]).collect();
    let m = chamfer_f1(&spread, &shifted, &[5.0, 10.0]).map_err(|e| e.to_string())?;
    if m.f1 != [0.0, 100.0] {
        return Err(format!("7cm shift gives F-1 {:?}, expected [0, 100]", m.f1));
    }
    Ok("n=50 exact match, 7cm shift closed form holds".into())
}

fn dog_probe() -> Result<String, String> {
    for (i, v) in [0.0f32, 0.37, 1.0].into_iter().enumerate() {
        let img = RgbaImage::new(23, 17, [v, v, v, 1.0]);
        let r = dog_response(&img, 1.0 + i as f64 * 0.5, 1.6).map_err(|e| e.to_string())?;
        let worst = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if worst > 1e-12 {
            return Err(format!("constant image {v} gives response {worst:.3e}"));
        }
    }
    Ok("constant images give zero response".into())
}

fn checkpoint_probe() -> Result<String, String> {
    let shape = FieldShape {
        resolution: 4,
        layers: 2,
        channels: 2,
        hidden: vec![8],
    };
    let field = RadianceField::<f32>::init(&shape, 3).map_err(|e| e.to_string())?;
    let mut bytes = checkpoint::encode(&field);
    let back = checkpoint::decode(&bytes, Path::new("probe")).map_err(|e| e.to_string())?;
    if checkpoint::encode(&back) != bytes {
        return Err("round trip changed the bytes".into());
    }
    bytes[0] ^= 0xff;
    match checkpoint::decode(&bytes, Path::new("probe")) {
        Err(e @ Error::BadMagic(_)) => Ok(format!("round trip exact, corruption rejected ({e})")),
        Err(e) => Err(format!("corrupted magic gave the wrong error: {e}")),
        Ok(_) => Err("corrupted magic was accepted".into()),
    }
}

/// Runs every probe with fixed seeds.
pub fn run_selftest() -> Vec<ProbeResult> {
    vec![
        probe("gradient", gradient_probe()),
        probe("chamfer", chamfer_probe()),
        probe("dog-constancy", dog_probe()),
        probe("checkpoint", checkpoint_probe()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_probes_pass_and_repeat() {
        let a = run_selftest();
        for p in &a {
            assert!(p.passed, "{}: {}", p.name, p.detail);
        }
        assert_eq!(a, run_selftest());
    }
}
