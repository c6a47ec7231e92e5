//! Emission-absorption volume rendering of a radiance field, with the exact
//! reverse pass used by the fitter.

use std::str::FromStr;

use rayon::prelude::*;

use crate::camera::{Camera, Ray};
use crate::decoder::{sigmoid, softplus, OUTPUT_DIM};
use crate::error::{Error, Result};
use crate::field::{softplus_grad, FieldGrad, FieldWorkspace, RadianceField};
use crate::geometry::{mix64, stream_seed, Vec3};
use crate::image::{DepthMap, GrayImage, RgbaImage};
use crate::real::Real;

pub const DEFAULT_SAMPLES: usize = 96;
/// Floor on the accumulated opacity used to normalise expected depth.
pub const DEPTH_EPS: f64 = 1e-6;
/// Rays traced together through one batched decoder call.
pub const TRACE_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Stratified,
    #[default]
    Midpoint,
}

impl FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stratified" => Ok(Self::Stratified),
            "midpoint" => Ok(Self::Midpoint),
            _ => Err(Error::InvalidArgument(format!("unknown sample mode '{s}'"))),
        }
    }
}

/// Uniform draw in `[0, 1)` from a counter.
#[inline]
fn unit_draw(seed: u64, i: u64) -> f64 {
    (mix64(seed.wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15))) >> 11) as f64 / (1u64 << 53) as f64
}

/// Fills sample distances and interval lengths for one ray.
///
/// Sample `i` lies in the `i`-th of `n` equal bins of `[t_near, t_far]`.
/// The last interval wraps to the first sample shifted by the segment length,
/// so the intervals always sum to `t_far - t_near`.
pub fn sample_ray(ray: &Ray, n: usize, mode: SampleMode, seed: u64, ts: &mut Vec<f64>, deltas: &mut Vec<f64>) {
    if ray.is_empty() {
        return;
    }
    let start = ts.len();
    let bin = (ray.t_far - ray.t_near) / n as f64;
    for i in 0..n {
        let u = match mode {
            SampleMode::Midpoint => 0.5,
            SampleMode::Stratified => unit_draw(seed, i as u64),
        };
        ts.push(ray.t_near + (i as f64 + u) * bin);
    }
    let t = &ts[start..];
    for i in 0..n {
        let next = if i + 1 < n { t[i + 1] } else { ray.t_far + (t[0] - ray.t_near) };
        deltas.push(next - t[i]);
    }
}

/// Composited result for one ray.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RayOutput {
    pub rgb: [f64; 3],
    pub alpha: f64,
    pub depth: f64,
}

/// Upstream gradient of a scalar loss with respect to one ray's outputs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RayGrad {
    pub rgb: [f64; 3],
    pub alpha: f64,
    pub depth: f64,
}

impl RayGrad {
    fn is_zero(&self) -> bool {
        self.rgb == [0.0; 3] && self.alpha == 0.0 && self.depth == 0.0
    }
}

/// Per-sample quantities kept for the reverse pass.
#[derive(Clone, Debug, Default)]
struct SampleCache<T> {
    rgb: Vec<[T; 3]>,
    trans_next: Vec<T>,
    weight: Vec<T>,
}

/// Buffers for tracing a chunk of rays; reusable across chunks.
#[derive(Clone, Debug, Default)]
pub struct TraceWorkspace<T> {
    field: FieldWorkspace<T>,
    points: Vec<Vec3>,
    ts: Vec<f64>,
    deltas: Vec<f64>,
    offsets: Vec<usize>,
    logits: Vec<T>,
    cache: SampleCache<T>,
    sums: Vec<(T, T)>,
    d_logits: Vec<T>,
    outputs: Vec<RayOutput>,
}

impl<T: Real> TraceWorkspace<T> {
    /// Outputs of the last [`trace`](Self::trace) call, one per ray.
    pub fn outputs(&self) -> &[RayOutput] {
        &self.outputs
    }

    /// Samples, decodes and composites every ray.
    pub fn trace(&mut self, field: &RadianceField<T>, rays: &[Ray], seeds: &[u64], n: usize, mode: SampleMode) {
        assert_eq!(rays.len(), seeds.len());
        self.points.clear();
        self.ts.clear();
        self.deltas.clear();
        self.offsets.clear();
        self.offsets.push(0);
        for (ray, &seed) in rays.iter().zip(seeds) {
            sample_ray(ray, n, mode, seed, &mut self.ts, &mut self.deltas);
            let start = *self.offsets.last().unwrap();
            for &t in &self.ts[start..] {
                self.points.push(ray.at(t));
            }
            self.offsets.push(self.ts.len());
        }
        let logits = field.query(&self.points, &mut self.field);
        self.logits.clear();
        self.logits.extend_from_slice(logits);

        let total = self.ts.len();
        let cache = &mut self.cache;
        cache.rgb.clear();
        cache.rgb.resize(total, [T::zero(); 3]);
        cache.trans_next.clear();
        cache.trans_next.resize(total, T::zero());
        cache.weight.clear();
        cache.weight.resize(total, T::zero());
        self.outputs.clear();
        self.sums.clear();
        for r in 0..rays.len() {
            let (a, b) = (self.offsets[r], self.offsets[r + 1]);
            let mut trans = T::one();
            let mut acc_w = T::zero();
            let mut acc_wt = T::zero();
            let mut acc_c = [T::zero(); 3];
            for i in a..b {
                let o = &self.logits[i * OUTPUT_DIM..(i + 1) * OUTPUT_DIM];
                let sigma = softplus(o[0]);
                let c = [sigmoid(o[1]), sigmoid(o[2]), sigmoid(o[3])];
                let alpha = -(-(sigma * T::of(self.deltas[i]))).exp_m1();
                let w = trans * alpha;
                trans = trans * (T::one() - alpha);
                cache.rgb[i] = c;
                cache.trans_next[i] = trans;
                cache.weight[i] = w;
                acc_w = acc_w + w;
                acc_wt = acc_wt + w * T::of(self.ts[i]);
                for k in 0..3 {
                    acc_c[k] = acc_c[k] + w * c[k];
                }
            }
            let depth = acc_wt / acc_w.max(T::of(DEPTH_EPS));
            let bg = T::one() - acc_w;
            self.sums.push((acc_w, depth));
            self.outputs.push(RayOutput {
                rgb: [(acc_c[0] + bg).f64(), (acc_c[1] + bg).f64(), (acc_c[2] + bg).f64()],
                alpha: acc_w.f64(),
                depth: depth.f64(),
            });
        }
    }

    /// Accumulates into `grad` the parameter gradient of `sum_r <grads[r], output_r>`
    /// for the rays of the last [`trace`](Self::trace) call.
    pub fn backward(&mut self, field: &RadianceField<T>, grads: &[RayGrad], grad: &mut FieldGrad<T>) {
        assert_eq!(grads.len() + 1, self.offsets.len());
        let total = self.ts.len();
        self.d_logits.clear();
        self.d_logits.resize(total * OUTPUT_DIM, T::zero());
        let eps = T::of(DEPTH_EPS);
        let cache = &self.cache;
        for (r, g) in grads.iter().enumerate() {
            let (a, b) = (self.offsets[r], self.offsets[r + 1]);
            if a == b || g.is_zero() {
                continue;
            }
            let (acc_w, depth) = self.sums[r];
            let g_c = [T::of(g.rgb[0]), T::of(g.rgb[1]), T::of(g.rgb[2])];
            let g_a = T::of(g.alpha);
            let g_d = T::of(g.depth);
            // Reverse sweep; `tail` holds sum_{j>i} w_j q_j.
            let mut tail = T::zero();
            for i in (a..b).rev() {
                let c = cache.rgb[i];
                let w = cache.weight[i];
                let t = T::of(self.ts[i]);
                let d_depth = if acc_w > eps { (t - depth) / acc_w } else { t / eps };
                let q = g_c[0] * (c[0] - T::one()) + g_c[1] * (c[1] - T::one()) + g_c[2] * (c[2] - T::one()) + g_a + g_d * d_depth;
                let d_sigma = T::of(self.deltas[i]) * (cache.trans_next[i] * q - tail);
                tail = tail + w * q;
                let o = &self.logits[i * OUTPUT_DIM..(i + 1) * OUTPUT_DIM];
                let d = &mut self.d_logits[i * OUTPUT_DIM..(i + 1) * OUTPUT_DIM];
                d[0] = d_sigma * softplus_grad(o[0]);
                for k in 0..3 {
                    d[k + 1] = g_c[k] * w * c[k] * (T::one() - c[k]);
                }
            }
        }
        field.backward(&self.points, &self.d_logits, &mut self.field, grad);
    }
}

/// Rendered colour, opacity and expected depth for one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderBuffers {
    /// Colour composited over white; the alpha channel holds accumulated opacity.
    pub rgb: RgbaImage,
    pub depth: DepthMap,
}

impl RenderBuffers {
    pub fn alpha(&self) -> GrayImage {
        self.rgb.alpha()
    }
}

/// Seed for the stratified jitter of one pixel.
pub fn pixel_seed(seed: u64, index: u64) -> u64 {
    stream_seed(seed, index, 0x7e4d)
}

/// Renders every pixel of `cam`. Deterministic for a given seed regardless
/// of the number of worker threads.
pub fn render_view<T: Real>(field: &RadianceField<T>, cam: &Camera, n_samples: usize, mode: SampleMode, seed: u64) -> Result<RenderBuffers> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples per ray, got {n_samples}")));
    }
    cam.validate()?;
    let (w, h) = (cam.width, cam.height);
    let count = w as usize * h as usize;
    let chunks: Vec<(usize, Vec<RayOutput>)> = (0..count)
        .step_by(TRACE_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map_init(TraceWorkspace::<T>::default, |ws, start| {
            let end = (start + TRACE_CHUNK).min(count);
            let rays: Vec<Ray> = (start..end)
                .map(|i| cam.cast_ray((i % w as usize) as u32, (i / w as usize) as u32))
                .collect();
            let seeds: Vec<u64> = (start..end).map(|i| pixel_seed(seed, i as u64)).collect();
            ws.trace(field, &rays, &seeds, n_samples, mode);
            (start, ws.outputs().to_vec())
        })
        .collect();
    let mut rgb = RgbaImage::white(w, h);
    let mut depth = DepthMap::new(w, h, 0.0);
    for (start, outs) in chunks {
        for (k, o) in outs.iter().enumerate() {
            let i = start + k;
            rgb.pixels[i] = [o.rgb[0] as f32, o.rgb[1] as f32, o.rgb[2] as f32, o.alpha as f32];
            depth.values[i] = o.depth as f32;
        }
    }
    Ok(RenderBuffers { rgb, depth })
}
