//! Projects the front input image back onto a fitted field wherever the
//! surface is visible from the front.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::field::{FieldWorkspace, RadianceField};
use crate::geometry::{mix64, ray_cube, stream_seed, Vec3, CUBE_HALF};
use crate::image::RgbaImage;
use crate::real::Real;
use crate::render::{render_view, RenderBuffers, SampleMode, DEFAULT_SAMPLES};

/// Direction from the surface towards the front camera.
const TO_FRONT: Vec3 = [0.0, 0.0, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetextureParams {
    /// Pixels whose front visibility exceeds this take the input colour.
    pub v_thresh: f64,
    pub n_jitter: usize,
    /// Radius of the jitter disc around each surface point, world units.
    pub jitter_radius: f64,
    /// Start offset toward the front, in quadrature steps.
    pub offset_steps: f64,
    /// Quadrature samples across the cube, for both the render and the
    /// visibility rays.
    pub samples: usize,
    pub seed: u64,
}

impl Default for RetextureParams {
    fn default() -> Self {
        Self {
            v_thresh: 0.5,
            n_jitter: 4,
            jitter_radius: 1.0 / 512.0,
            offset_steps: 2.0,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

impl RetextureParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_jitter == 0 {
            return Err(Error::InvalidArgument("retexture needs at least one visibility ray".into()));
        }
        if self.samples < 2 || !(self.jitter_radius >= 0.0) || !(self.offset_steps >= 0.0) {
            return Err(Error::InvalidArgument(
                "retexture needs samples >= 2 and non-negative jitter radius and offset".into(),
            ));
        }
        Ok(())
    }

    fn step(&self) -> f64 {
        2.0 * CUBE_HALF / self.samples as f64
    }
}

/// Expected termination points of a render; `None` where alpha <= 0.5.
#[derive(Clone, Debug)]
pub struct SurfaceMap {
    pub render: RenderBuffers,
    pub points: Vec<Option<Vec3>>,
}

pub fn surface_points<T: Real>(field: &RadianceField<T>, cam: &Camera, samples: usize) -> Result<SurfaceMap> {
    let render = render_view(field, cam, samples, SampleMode::Midpoint, 0)?;
    let w = cam.width;
    let points = (0..render.rgb.pixels.len())
        .map(|i| {
            if render.rgb.pixels[i][3] <= 0.5 {
                return None;
            }
            let ray = cam.cast_ray(i as u32 % w, i as u32 / w);
            Some(ray.at(render.depth.values[i] as f64))
        })
        .collect();
    Ok(SurfaceMap { render, points })
}

fn unit(seed: u64, k: u64) -> f64 {
    (mix64(stream_seed(seed, k, 0x71)) >> 11) as f64 / (1u64 << 53) as f64
}

/// Starts of the jittered visibility rays for `point`.
fn jitter_origins(point: Vec3, params: &RetextureParams, seed: u64) -> Vec<Vec3> {
    let lift = params.offset_steps * params.step();
    (0..params.n_jitter as u64)
        .map(|k| {
            let r = params.jitter_radius * unit(seed, 2 * k).sqrt();
            let a = std::f64::consts::TAU * unit(seed, 2 * k + 1);
            [point[0] + r * a.cos(), point[1] + r * a.sin(), point[2] + lift]
        })
        .collect()
}

/// Transmittance from each origin to the cube face along +z, with midpoint
/// quadrature at the render step size.
fn transmittances<T: Real>(field: &RadianceField<T>, origins: &[Vec3], params: &RetextureParams, ws: &mut FieldWorkspace<T>) -> Vec<f64> {
    let step = params.step();
    let mut pts = Vec::new();
    let mut spans = Vec::with_capacity(origins.len());
    for &o in origins {
        let seg = ray_cube(o, TO_FRONT).map(|(t0, t1)| (t0.max(0.0), t1)).filter(|(t0, t1)| t1 > t0);
        let start = pts.len();
        let mut delta = 0.0;
        if let Some((t0, t1)) = seg {
            let n = (((t1 - t0) / step).ceil() as usize).max(1);
            delta = (t1 - t0) / n as f64;
            for i in 0..n {
                let t = t0 + (i as f64 + 0.5) * delta;
                pts.push([o[0], o[1], o[2] + t]);
            }
        }
        spans.push((start, pts.len(), delta));
    }
    let sigma = field.densities(&pts, ws);
    spans
        .iter()
        .map(|&(a, b, d)| (-sigma[a..b].iter().sum::<f64>() * d).exp())
        .collect()
}

/// Mean transmittance toward the front over the jittered rays from `point`.
pub fn front_visibility<T: Real>(field: &RadianceField<T>, point: Vec3, params: &RetextureParams, seed: u64) -> f64 {
    let origins = jitter_origins(point, params, seed);
    let t = transmittances(field, &origins, params, &mut FieldWorkspace::default());
    t.iter().sum::<f64>() / t.len() as f64
}

#[derive(Clone, Debug)]
pub struct RetextureOutput {
    pub image: RgbaImage,
    /// Plain render of the field from the same camera.
    pub render: RenderBuffers,
    /// Front visibility per pixel where the surface is defined.
    pub visibility: Vec<Option<f64>>,
    /// Pixels that took their colour from the front input.
    pub retextured: Vec<bool>,
}

impl RetextureOutput {
    pub fn retextured_count(&self) -> usize {
        self.retextured.iter().filter(|&&r| r).count()
    }
}

/// Renders `cam`, replacing RGB with the front input wherever the surface
/// point is visible from the front. Alpha is left as rendered.
pub fn retexture_render<T: Real>(
    field: &RadianceField<T>,
    front: &RgbaImage,
    cam: &Camera,
    params: &RetextureParams,
) -> Result<RetextureOutput> {
    params.validate()?;
    if front.width != front.height {
        return Err(Error::ResolutionMismatch {
            what: "front input (must be square like the front view)".into(),
            expected: front.width,
            width: front.width,
            height: front.height,
        });
    }
    let surf = surface_points(field, cam, params.samples)?;
    let front_cam = Camera::ortho(0.0, 0.0, front.width);
    let visibility: Vec<Option<f64>> = surf
        .points
        .par_iter()
        .enumerate()
        .map_init(FieldWorkspace::default, |ws, (i, p)| {
            p.map(|p| {
                let origins = jitter_origins(p, params, stream_seed(params.seed, i as u64, 0x915));
                let t = transmittances(field, &origins, params, ws);
                t.iter().sum::<f64>() / t.len() as f64
            })
        })
        .collect();
    let mut image = surf.render.rgb.clone();
    let mut retextured = vec![false; image.pixels.len()];
    for i in 0..image.pixels.len() {
        let (Some(p), Some(v)) = (surf.points[i], visibility[i]) else { continue };
        if v <= params.v_thresh {
            continue;
        }
        let (x, y) = front_cam.project_ortho(p).expect("front camera is orthographic");
        let c = front.sample_bilinear(x - 0.5, y - 0.5);
        let px = &mut image.pixels[i];
        px[..3].copy_from_slice(&c[..3]);
        retextured[i] = true;
    }
    Ok(RetextureOutput {
        image,
        render: surf.render,
        visibility,
        retextured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::RadianceDecoder;
    use crate::triplane::MultiLayerTriplane;

    /// Density 0 everywhere.
    fn empty_field() -> RadianceField<f64> {
        let tp = MultiLayerTriplane::zeros(4, 1, 2).unwrap();
        let mut dec = RadianceDecoder::zeros(&[2, 4]).unwrap();
        dec.layers_mut()[0].bias[0] = -60.0;
        RadianceField::new(tp, dec).unwrap()
    }

    /// Near-binary sphere of radius `r`: one triplane channel carries a
    /// separable bump that the decoder thresholds.
    fn sphere_field(r: f64, res: usize) -> RadianceField<f64> {
        let mut tp = MultiLayerTriplane::<f64>::zeros(res, res, 1).unwrap();
        // each plane stores a share of -(x^2 + y^2 + z^2) over its two axes and its layer axis
        for plane in tp.planes_mut().iter_mut() {
            let n = res;
            for l in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let c = |k: usize| -CUBE_HALF + k as f64 / (n - 1) as f64;
                        let (a, b, w) = (c(i), c(j), c(l));
                        plane[(l * n + i) * n + j] = -(a * a + b * b + w * w) / 3.0;
                    }
                }
            }
        }
        let mut dec = RadianceDecoder::zeros(&[1, 4]).unwrap();
        // sigma logit = 1e7 * (r^2 - |p|^2); colour logits zero
        dec.layers_mut()[0].weight[0] = 1e7;
        dec.layers_mut()[0].bias[0] = 1e7 * r * r;
        RadianceField::new(tp, dec).unwrap()
    }

    #[test]
    fn empty_field_is_fully_visible() {
        let f = empty_field();
        let v = front_visibility(&f, [0.1, -0.2, 0.0], &RetextureParams::default(), 3);
        assert!((v - 1.0).abs() < 1e-12);
        let s = surface_points(&f, &Camera::ortho(0.0, 0.0, 8), 32).unwrap();
        assert!(s.points.iter().all(|p| p.is_none()));
    }

    #[test]
    fn point_behind_slab_is_hidden() {
        // opaque sphere of radius 0.3; a point at its centre sees ~0.3 of it
        let f = sphere_field(0.3, 17);
        let v = front_visibility(&f, [0.0, 0.0, 0.0], &RetextureParams::default(), 1);
        assert!(v < 0.05, "{v}");
        let outside = front_visibility(&f, [0.0, 0.0, 0.4], &RetextureParams::default(), 1);
        assert!(outside > 0.99, "{outside}");
    }

    #[test]
    fn single_jitter_is_deterministic() {
        let f = sphere_field(0.3, 9);
        let p = RetextureParams {
            n_jitter: 1,
            ..RetextureParams::default()
        };
        assert_eq!(front_visibility(&f, [0.05, 0.0, 0.25], &p, 5), front_visibility(&f, [0.05, 0.0, 0.25], &p, 5));
    }

    #[test]
    fn front_surface_centre_is_on_the_sphere() {
        let f = sphere_field(0.3, 33);
        let s = surface_points(&f, &Camera::ortho(0.0, 0.0, 33), 192).unwrap();
        let c = s.points[16 * 33 + 16].unwrap();
        assert!(c[0].abs() < 1e-6 && c[1].abs() < 1e-6);
        assert!((c[2] - 0.3).abs() < 0.02, "{c:?}");
        for p in s.points.iter().flatten() {
            assert!(p.iter().all(|v| v.abs() <= CUBE_HALF));
        }
        assert!(s.points[0].is_none());
    }

    #[test]
    fn front_view_reproduces_the_input() {
        let f = sphere_field(0.3, 33);
        let size = 32;
        let mut front = RgbaImage::white(size, size);
        for (i, p) in front.pixels.iter_mut().enumerate() {
            *p = [(i % 7) as f32 / 7.0, (i % 5) as f32 / 5.0, 0.5, 1.0];
        }
        let out = retexture_render(&f, &front, &Camera::ortho(0.0, 0.0, size), &RetextureParams::default()).unwrap();
        assert!(out.retextured_count() > 100);
        for i in 0..out.image.pixels.len() {
            if out.retextured[i] {
                for c in 0..3 {
                    assert!((out.image.pixels[i][c] - front.pixels[i][c]).abs() <= 1.0 / 255.0);
                }
            }
            assert_eq!(out.image.pixels[i][3], out.render.rgb.pixels[i][3]);
        }
        // applying it again selects the same pixels
        let again = retexture_render(&f, &out.image, &Camera::ortho(0.0, 0.0, size), &RetextureParams::default()).unwrap();
        assert_eq!(again.retextured, out.retextured);
    }

    #[test]
    fn back_view_of_closed_sphere_is_untouched() {
        let f = sphere_field(0.3, 33);
        let front = RgbaImage::new(32, 32, [1.0, 0.0, 0.0, 1.0]);
        let out = retexture_render(&f, &front, &Camera::ortho(180.0, 0.0, 32), &RetextureParams::default()).unwrap();
        assert_eq!(out.retextured_count(), 0);
        assert_eq!(out.image, out.render.rgb);
    }

    #[test]
    fn threshold_controls_the_selected_set() {
        let f = sphere_field(0.3, 17);
        let front = RgbaImage::new(24, 24, [0.0, 1.0, 0.0, 1.0]);
        let cam = Camera::ortho(40.0, 10.0, 24);
        let mut prev = usize::MAX;
        for v in [0.0, 0.3, 0.6, 0.9] {
            let p = RetextureParams {
                v_thresh: v,
                ..RetextureParams::default()
            };
            let n = retexture_render(&f, &front, &cam, &p).unwrap().retextured_count();
            assert!(n <= prev);
            prev = n;
        }
        let never = RetextureParams {
            v_thresh: 1.0 + 1e-9,
            ..RetextureParams::default()
        };
        let out = retexture_render(&f, &front, &cam, &never).unwrap();
        assert_eq!(out.image, out.render.rgb);
    }

    #[test]
    fn non_square_input_is_rejected() {
        let f = empty_field();
        let front = RgbaImage::white(8, 6);
        assert!(retexture_render(&f, &front, &Camera::ortho(0.0, 0.0, 8), &RetextureParams::default()).is_err());
    }
}
