//! The optimisable radiance field: a multi-layer triplane plus its decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decoder::{sigmoid, softplus, DecoderActs, DecoderGrad, DecoderScratch, RadianceDecoder, RadianceSample, OUTPUT_DIM};
use crate::error::{Error, Result};
use crate::geometry::{stream_seed, Vec3};
use crate::real::Real;
use crate::triplane::{MultiLayerTriplane, TriplaneGrad};

/// Standard deviation of the initial triplane features.
pub const INIT_FEATURE_STD: f64 = 0.01;
/// Initial density bias; starts the field nearly empty.
pub const INIT_DENSITY_BIAS: f64 = -1.0;

/// Field dimensions.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldShape {
    pub resolution: usize,
    pub layers: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
}

impl Default for FieldShape {
    fn default() -> Self {
        Self {
            resolution: 128,
            layers: 3,
            channels: 16,
            hidden: vec![64, 64],
        }
    }
}

impl FieldShape {
    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.channels];
        w.extend_from_slice(&self.hidden);
        w.push(OUTPUT_DIM);
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadianceField<T> {
    pub triplane: MultiLayerTriplane<T>,
    pub decoder: RadianceDecoder<T>,
}

impl<T: Real> RadianceField<T> {
    pub fn new(triplane: MultiLayerTriplane<T>, decoder: RadianceDecoder<T>) -> Result<Self> {
        if decoder.input_dim() != triplane.channels() {
            return Err(Error::InvalidArgument(format!(
                "decoder input width {} does not match triplane channels {}",
                decoder.input_dim(),
                triplane.channels()
            )));
        }
        Ok(Self { triplane, decoder })
    }

    /// Deterministic initialisation from a seed.
    pub fn init(shape: &FieldShape, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0x1417, 0));
        let triplane = MultiLayerTriplane::random(shape.resolution, shape.layers, shape.channels, INIT_FEATURE_STD, &mut rng)?;
        let decoder = RadianceDecoder::init(&shape.decoder_widths(), INIT_DENSITY_BIAS, &mut rng)?;
        Self::new(triplane, decoder)
    }

    pub fn shape(&self) -> FieldShape {
        let w = self.decoder.widths();
        FieldShape {
            resolution: self.triplane.resolution(),
            layers: self.triplane.layers(),
            channels: self.triplane.channels(),
            hidden: w[1..w.len() - 1].to_vec(),
        }
    }

    pub fn sample(&self, p: Vec3) -> RadianceSample {
        let mut feat = vec![T::zero(); self.triplane.channels()];
        self.triplane.sample_point(p, &mut feat);
        self.decoder.decode(&feat)
    }

    /// Raw decoder logits for a batch of points, row-major `N x 4`.
    pub fn query<'w>(&self, points: &[Vec3], ws: &'w mut FieldWorkspace<T>) -> &'w [T] {
        let c = self.triplane.channels();
        ws.feats.resize(points.len() * c, T::zero());
        self.triplane.gather(points, &mut ws.feats);
        self.decoder.forward_batch(&ws.feats, points.len(), &mut ws.acts);
        ws.acts.output()
    }

    /// Densities for a batch of points.
    pub fn densities(&self, points: &[Vec3], ws: &mut FieldWorkspace<T>) -> Vec<f64> {
        self.query(points, ws)
            .chunks_exact(OUTPUT_DIM)
            .map(|o| softplus(o[0]).f64())
            .collect()
    }

    /// Backpropagates `d_logits` for the points of the last [`query`](Self::query).
    pub fn backward(&self, points: &[Vec3], d_logits: &[T], ws: &mut FieldWorkspace<T>, grad: &mut FieldGrad<T>) {
        let n = points.len();
        let c = self.triplane.channels();
        ws.d_feats.resize(n * c, T::zero());
        self.decoder
            .backward_batch(&ws.feats, n, &ws.acts, d_logits, &mut grad.decoder, &mut ws.scratch, &mut ws.d_feats);
        self.triplane.scatter(points, &ws.d_feats, &mut grad.triplane);
    }

    pub fn all_finite(&self) -> bool {
        self.triplane.all_finite() && self.decoder.all_finite()
    }

    /// Total number of parameters.
    pub fn param_count(&self) -> usize {
        self.triplane.param_count() + self.decoder.param_count()
    }

    /// Parameter `i` in checkpoint order: the three planes, then each decoder
    /// layer's weight and bias.
    pub fn param_mut(&mut self, mut i: usize) -> &mut T {
        for p in self.triplane.planes_mut().iter_mut() {
            if i < p.len() {
                return &mut p[i];
            }
            i -= p.len();
        }
        for l in self.decoder.layers_mut() {
            if i < l.weight.len() {
                return &mut l.weight[i];
            }
            i -= l.weight.len();
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn cast<U: Real>(&self) -> RadianceField<U> {
        RadianceField {
            triplane: self.triplane.cast(),
            decoder: self.decoder.cast(),
        }
    }
}

/// Reusable buffers for batched field evaluation.
#[derive(Clone, Debug, Default)]
pub struct FieldWorkspace<T> {
    feats: Vec<T>,
    acts: DecoderActs<T>,
    scratch: DecoderScratch<T>,
    d_feats: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct FieldGrad<T> {
    pub triplane: TriplaneGrad<T>,
    pub decoder: DecoderGrad<T>,
}

impl<T: Real> FieldGrad<T> {
    pub fn zeros_like(field: &RadianceField<T>) -> Self {
        Self {
            triplane: TriplaneGrad::zeros_like(&field.triplane),
            decoder: DecoderGrad::zeros_like(&field.decoder),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.triplane.add_assign(&other.triplane);
        self.decoder.add_assign(&other.decoder);
    }

    /// Every gradient entry, in checkpoint parameter order.
    pub fn flat(&self) -> Vec<T> {
        let mut out: Vec<T> = self.triplane.planes.iter().flatten().copied().collect();
        for l in &self.decoder.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// Density derivative of the softplus head.
#[inline]
pub(crate) fn softplus_grad<T: Real>(x: T) -> T {
    if x > T::of(20.0) {
        T::one()
    } else {
        sigmoid(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let shape = FieldShape {
            resolution: 8,
            layers: 2,
            channels: 4,
            hidden: vec![8],
        };
        let a = RadianceField::<f32>::init(&shape, 1).unwrap();
        let b = RadianceField::<f32>::init(&shape, 1).unwrap();
        let c = RadianceField::<f32>::init(&shape, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.shape(), shape);
    }

    #[test]
    fn invalid_dimensions_rejected() {
        let shape = FieldShape {
            resolution: 0,
            ..FieldShape::default()
        };
        assert!(RadianceField::<f32>::init(&shape, 0).is_err());
    }

    #[test]
    fn batched_densities_match_pointwise() {
        let shape = FieldShape {
            resolution: 6,
            layers: 3,
            channels: 4,
            hidden: vec![8, 8],
        };
        let f = RadianceField::<f64>::init(&shape, 3).unwrap();
        let pts = vec![[0.1, 0.2, -0.3], [0.0, 0.0, 0.0], [-0.49, 0.4, 0.2]];
        let mut ws = FieldWorkspace::default();
        let d = f.densities(&pts, &mut ws);
        for (p, s) in pts.iter().zip(d) {
            assert!((f.sample(*p).sigma - s).abs() < 1e-12);
        }
    }
}
