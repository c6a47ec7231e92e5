//! Central finite-difference check of the analytic loss gradient.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::field::{FieldShape, RadianceField};
use crate::fit::{backward, compute_losses, ortho_views, LossWeights, Objective, SupervisedRay};
use crate::geometry::stream_seed;
use crate::render::SampleMode;
use crate::synthetic::{gen_synthetic, Albedo, Primitive, Shape, SyntheticSpec};

/// The four loss terms, each checked in isolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossTerm {
    Rgb,
    Silhouette,
    Depth,
    DensityReg,
}

impl LossTerm {
    pub const ALL: [LossTerm; 4] = [LossTerm::Rgb, LossTerm::Silhouette, LossTerm::Depth, LossTerm::DensityReg];

    pub fn weights(self) -> LossWeights {
        let mut w = LossWeights {
            rgb: 0.0,
            sil: 0.0,
            depth: 0.0,
            density_reg: 0.0,
        };
        match self {
            LossTerm::Rgb => w.rgb = 1.0,
            LossTerm::Silhouette => w.sil = 1.0,
            LossTerm::Depth => w.depth = 1.0,
            LossTerm::DensityReg => w.density_reg = 1.0,
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub resolution: usize,
    pub layers: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
    pub feature_std: f64,
    pub image_size: u32,
    pub samples: usize,
    pub reg_pairs: usize,
    pub probes: usize,
    pub step: f64,
    pub rel_tol: f64,
    /// Absolute slack for gradients at the finite-difference noise floor.
    pub abs_tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            resolution: 8,
            layers: 2,
            channels: 4,
            hidden: vec![64, 64],
            feature_std: 0.3,
            image_size: 4,
            samples: 8,
            reg_pairs: 32,
            probes: 50,
            step: 1e-3,
            rel_tol: 1e-3,
            abs_tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckStats {
    pub probes: usize,
    pub passed: usize,
    pub max_rel_err: f64,
}

impl GradCheckStats {
    pub fn merge(&mut self, o: &GradCheckStats) {
        self.probes += o.probes;
        self.passed += o.passed;
        self.max_rel_err = self.max_rel_err.max(o.max_rel_err);
    }

    pub fn pass_rate(&self) -> f64 {
        if self.probes == 0 {
            1.0
        } else {
            self.passed as f64 / self.probes as f64
        }
    }
}

/// A random small scene, field and ray set.
pub struct GradInstance {
    pub field: RadianceField<f64>,
    pub rays: Vec<SupervisedRay>,
}

impl GradInstance {
    pub fn new(cfg: &GradCheckConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0x96ad, 0));
        let radius = rng.gen_range(0.15..0.3);
        let lim = 0.45 - radius;
        let center = [rng.gen_range(-lim..lim), rng.gen_range(-lim..lim), rng.gen_range(-lim..lim)];
        let spec = SyntheticSpec {
            primitives: vec![Primitive {
                shape: Shape::Sphere { center, radius },
                albedo: Albedo::TwoTone {
                    top: [rng.gen(), rng.gen(), rng.gen()],
                    bottom: [rng.gen(), rng.gen(), rng.gen()],
                },
            }],
            resolution: cfg.image_size,
            supersample: 2,
            orbit_views: 0,
            segments: 8,
            ..SyntheticSpec::default()
        };
        let scene = gen_synthetic(&spec, seed)?;
        let shape = FieldShape {
            resolution: cfg.resolution,
            layers: cfg.layers,
            channels: cfg.channels,
            hidden: cfg.hidden.clone(),
        };
        let mut field = RadianceField::<f64>::init(&shape, seed)?;
        // Livelier features than the near-empty fitting start.
        let normal = Normal::new(0.0, cfg.feature_std).expect("positive std");
        for p in field.triplane.planes_mut().iter_mut() {
            for v in p.iter_mut() {
                *v = normal.sample(&mut rng);
            }
        }
        field.decoder.layers_mut().last_mut().expect("output layer").bias[0] = 0.5;
        let mut rays = Vec::new();
        for v in ortho_views(&scene)? {
            for y in 0..v.camera.height {
                for x in 0..v.camera.width {
                    let id = rays.len() as u64;
                    rays.push(SupervisedRay::from_view(v, x, y, stream_seed(seed, id, 1)));
                }
            }
        }
        Ok(Self { field, rays })
    }
}

/// Probes random parameters of one instance for one loss term.
pub fn check_term(inst: &GradInstance, cfg: &GradCheckConfig, term: LossTerm, seed: u64) -> GradCheckStats {
    check_weighted(inst, cfg, term.weights(), stream_seed(seed, term as u64, 0))
}

/// Probes random parameters of one instance for a weighted loss.
pub fn check_weighted(inst: &GradInstance, cfg: &GradCheckConfig, weights: LossWeights, seed: u64) -> GradCheckStats {
    let obj = Objective {
        weights,
        samples: cfg.samples,
        mode: SampleMode::Stratified,
        reg_pairs: cfg.reg_pairs,
        reg_seed: seed,
    };
    let (_, grad) = backward(&inst.field, &inst.rays, &obj);
    let analytic = grad.flat();
    let n = inst.field.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0, 2));
    let mut stats = GradCheckStats::default();
    let mut field = inst.field.clone();
    for idx in sample(&mut rng, n, cfg.probes.min(n)) {
        let orig = *field.param_mut(idx);
        *field.param_mut(idx) = orig + cfg.step;
        let up = compute_losses(&field, &inst.rays, &obj).total;
        *field.param_mut(idx) = orig - cfg.step;
        let down = compute_losses(&field, &inst.rays, &obj).total;
        *field.param_mut(idx) = orig;
        let fd = (up - down) / (2.0 * cfg.step);
        let a = analytic[idx];
        let err = (a - fd).abs();
        let scale = a.abs().max(fd.abs());
        let rel = if scale > 0.0 { err / scale } else { 0.0 };
        stats.probes += 1;
        if err <= cfg.rel_tol * scale + cfg.abs_tol {
            stats.passed += 1;
        }
        if scale > cfg.abs_tol / cfg.rel_tol {
            stats.max_rel_err = stats.max_rel_err.max(rel);
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_term_matches_finite_differences() {
        let cfg = GradCheckConfig {
            probes: 25,
            ..GradCheckConfig::default()
        };
        for layers in [1, 3] {
            let cfg = GradCheckConfig { layers, ..cfg.clone() };
            let inst = GradInstance::new(&cfg, 10 + layers as u64).unwrap();
            for term in LossTerm::ALL {
                let s = check_term(&inst, &cfg, term, 3);
                assert!(s.pass_rate() >= 0.99, "{term:?} L={layers}: {s:?}");
            }
        }
    }

    #[test]
    fn combined_loss_on_two_layer_instance() {
        let cfg = GradCheckConfig {
            layers: 2,
            probes: 200,
            ..GradCheckConfig::default()
        };
        let inst = GradInstance::new(&cfg, 42).unwrap();
        let s = check_weighted(&inst, &cfg, LossWeights::default(), 9);
        assert_eq!(s.passed, s.probes, "{s:?}");
    }
}
