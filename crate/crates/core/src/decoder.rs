//! Fully connected decoder from aggregated triplane features to density and colour.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::real::Real;

/// Decoder output dimension: one density logit and three colour logits.
pub const OUTPUT_DIM: usize = 4;

/// Dense layer with weights stored row-major as `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Hidden layers use [`squareplus`]; the last layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct RadianceDecoder<T> {
    layers: Vec<Linear<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadianceSample {
    /// Density in 1 / world unit.
    pub sigma: f64,
    pub rgb: [f64; 3],
}

/// Curvature parameter of the hidden activation.
pub const SQUAREPLUS_B: f64 = 0.1;

/// Smooth rectifier `(x + sqrt(x^2 + b)) / 2`.
#[inline]
pub fn squareplus<T: Real>(x: T) -> T {
    T::of(0.5) * (x + (x * x + T::of(SQUAREPLUS_B)).sqrt())
}

#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::of(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> RadianceDecoder<T> {
    /// Zero-initialised decoder with the given layer widths, e.g. `[16, 64, 64, 4]`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument("decoder needs at least an input and an output width".into()));
        }
        if *widths.last().unwrap() != OUTPUT_DIM {
            return Err(Error::InvalidArgument(format!(
                "decoder output width must be {OUTPUT_DIM}, got {}",
                widths.last().unwrap()
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("decoder widths must be positive".into()));
        }
        let layers = widths
            .windows(2)
            .map(|w| Linear {
                in_dim: w[0],
                out_dim: w[1],
                weight: vec![T::zero(); w[0] * w[1]],
                bias: vec![T::zero(); w[1]],
            })
            .collect();
        Ok(Self { layers })
    }

    /// He-normal weights for every layer feeding a rectifier, LeCun-normal for the
    /// output layer, zero biases except the density bias.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], density_bias: f64, rng: &mut R) -> Result<Self> {
        let mut dec = Self::zeros(widths)?;
        let n = dec.layers.len();
        for (k, layer) in dec.layers.iter_mut().enumerate() {
            let gain = if k + 1 < n { 2.0 } else { 1.0 };
            let std = (gain / layer.in_dim as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for w in &mut layer.weight {
                *w = T::of(normal.sample(rng));
            }
        }
        dec.layers[n - 1].bias[0] = T::of(density_bias);
        Ok(dec)
    }

    pub fn layers(&self) -> &[Linear<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<T>] {
        &mut self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].in_dim];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Raw output logits for one feature vector.
    pub fn logits(&self, feat: &[T]) -> [T; OUTPUT_DIM] {
        let mut acts = DecoderActs::default();
        self.forward_batch(feat, 1, &mut acts);
        let o = acts.output();
        [o[0], o[1], o[2], o[3]]
    }

    pub fn decode(&self, feat: &[T]) -> RadianceSample {
        let o = self.logits(feat);
        RadianceSample {
            sigma: softplus(o[0]).f64(),
            rgb: [sigmoid(o[1]).f64(), sigmoid(o[2]).f64(), sigmoid(o[3]).f64()],
        }
    }

    /// Forward pass over `n` row-major inputs; keeps every layer output for backward.
    pub fn forward_batch(&self, input: &[T], n: usize, acts: &mut DecoderActs<T>) {
        acts.outputs.resize_with(self.layers.len(), Vec::new);
        let last = self.layers.len() - 1;
        for k in 0..self.layers.len() {
            let layer = &self.layers[k];
            let (prev, rest) = acts.outputs.split_at_mut(k);
            let x: &[T] = if k == 0 { input } else { &prev[k - 1] };
            let y = &mut rest[0];
            y.resize(n * layer.out_dim, T::zero());
            for row in y.chunks_exact_mut(layer.out_dim) {
                row.copy_from_slice(&layer.bias);
            }
            if layer.out_dim <= NARROW {
                narrow_forward(x, &layer.weight, layer.in_dim, layer.out_dim, y);
            } else {
                T::gemm(
                    n,
                    layer.in_dim,
                    layer.out_dim,
                    T::one(),
                    x,
                    layer.in_dim as isize,
                    1,
                    &layer.weight,
                    layer.out_dim as isize,
                    1,
                    T::one(),
                    y,
                    layer.out_dim as isize,
                    1,
                );
            }
            if k < last {
                for v in y.iter_mut() {
                    *v = squareplus(*v);
                }
            }
        }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the raw logits, `n x 4`) through
    /// the network, accumulating parameter gradients into `grad` and writing the
    /// input gradient (`n x in`) into `d_input`.
    pub fn backward_batch(
        &self,
        input: &[T],
        n: usize,
        acts: &DecoderActs<T>,
        d_out: &[T],
        grad: &mut DecoderGrad<T>,
        scratch: &mut DecoderScratch<T>,
        d_input: &mut [T],
    ) {
        let nl = self.layers.len();
        scratch.dy.clear();
        scratch.dy.extend_from_slice(d_out);
        for k in (0..nl).rev() {
            let layer = &self.layers[k];
            let x: &[T] = if k == 0 { input } else { &acts.outputs[k - 1] };
            let g = &mut grad.layers[k];
            if layer.out_dim <= NARROW {
                narrow_weight_grad(x, &scratch.dy, layer.in_dim, layer.out_dim, &mut g.weight);
            } else {
                T::gemm(
                    layer.in_dim,
                    n,
                    layer.out_dim,
                    T::one(),
                    x,
                    1,
                    layer.in_dim as isize,
                    &scratch.dy,
                    layer.out_dim as isize,
                    1,
                    T::one(),
                    &mut g.weight,
                    layer.out_dim as isize,
                    1,
                );
            }
            for row in scratch.dy.chunks_exact(layer.out_dim) {
                for (b, &d) in g.bias.iter_mut().zip(row) {
                    *b = *b + d;
                }
            }
            let dx: &mut Vec<T> = if k == 0 { &mut scratch.dx_input } else { &mut scratch.dx };
            dx.resize(n * layer.in_dim, T::zero());
            T::gemm(
                n,
                layer.out_dim,
                layer.in_dim,
                T::one(),
                &scratch.dy,
                layer.out_dim as isize,
                1,
                &layer.weight,
                1,
                layer.out_dim as isize,
                T::zero(),
                dx,
                layer.in_dim as isize,
                1,
            );
            if k > 0 {
                // activation derivative, written in terms of its output
                let b = T::of(SQUAREPLUS_B);
                for (d, &a) in scratch.dx.iter_mut().zip(x) {
                    let a2 = T::of(4.0) * a * a;
                    *d = *d * a2 / (a2 + b);
                }
                std::mem::swap(&mut scratch.dx, &mut scratch.dy);
            }
        }
        d_input[..n * self.layers[0].in_dim].copy_from_slice(&scratch.dx_input);
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> RadianceDecoder<U> {
        RadianceDecoder {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    weight: l.weight.iter().map(|v| U::of(v.f64())).collect(),
                    bias: l.bias.iter().map(|v| U::of(v.f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Layers at most this wide skip the packed GEMM path.
const NARROW: usize = 8;

/// Accumulator lanes for the narrow-layer dot products.
const LANES: usize = 16;

/// `y += x * w` for a layer with few outputs, as per-row dot products
/// against the transposed weights.
fn narrow_forward<T: Real>(x: &[T], w: &[T], in_dim: usize, out_dim: usize, y: &mut [T]) {
    let mut wt = vec![T::zero(); in_dim * out_dim];
    for i in 0..in_dim {
        for o in 0..out_dim {
            wt[o * in_dim + i] = w[i * out_dim + o];
        }
    }
    let split = in_dim - in_dim % LANES;
    for (xr, yr) in x.chunks_exact(in_dim).zip(y.chunks_exact_mut(out_dim)) {
        for (o, yo) in yr.iter_mut().enumerate() {
            let wr = &wt[o * in_dim..(o + 1) * in_dim];
            let mut acc = [T::zero(); LANES];
            for (xc, wc) in xr[..split].chunks_exact(LANES).zip(wr[..split].chunks_exact(LANES)) {
                for k in 0..LANES {
                    acc[k] = acc[k] + xc[k] * wc[k];
                }
            }
            let mut sum = acc.iter().fold(T::zero(), |a, &b| a + b);
            for i in split..in_dim {
                sum = sum + xr[i] * wr[i];
            }
            *yo = *yo + sum;
        }
    }
}

/// `g += x^T * dy` for a layer with few outputs.
fn narrow_weight_grad<T: Real>(x: &[T], dy: &[T], in_dim: usize, out_dim: usize, g: &mut [T]) {
    let mut gt = vec![T::zero(); in_dim * out_dim];
    for (xr, dr) in x.chunks_exact(in_dim).zip(dy.chunks_exact(out_dim)) {
        for (o, &d) in dr.iter().enumerate() {
            for (gv, &xi) in gt[o * in_dim..(o + 1) * in_dim].iter_mut().zip(xr) {
                *gv = *gv + xi * d;
            }
        }
    }
    for i in 0..in_dim {
        for o in 0..out_dim {
            g[i * out_dim + o] = g[i * out_dim + o] + gt[o * in_dim + i];
        }
    }
}

/// Per-layer outputs kept from the forward pass.
#[derive(Clone, Debug, Default)]
pub struct DecoderActs<T> {
    outputs: Vec<Vec<T>>,
}

impl<T> DecoderActs<T> {
    /// Raw logits of the last forward pass, row-major `n x 4`.
    pub fn output(&self) -> &[T] {
        self.outputs.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

#[derive(Clone, Debug, Default)]
pub struct DecoderScratch<T> {
    dy: Vec<T>,
    dx: Vec<T>,
    dx_input: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct DecoderGrad<T> {
    pub layers: Vec<Linear<T>>,
}

impl<T: Real> DecoderGrad<T> {
    pub fn zeros_like(dec: &RadianceDecoder<T>) -> Self {
        Self {
            layers: dec
                .layers
                .iter()
                .map(|l| Linear {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    weight: vec![T::zero(); l.weight.len()],
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weight.iter_mut().zip(&b.weight) {
                *x = *x + y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x = *x + y;
            }
        }
    }
}
