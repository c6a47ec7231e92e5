//! Analytic ground-truth scenes built from spheres, boxes and capsules.
//!
//! Colours are pure albedo (no shading). Views are rendered at a supersampled
//! resolution and box-filtered down, then quantised to 8 bits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{make_orbit_cameras, Camera, ORTHO_VIEWS};
use crate::error::{Error, Result};
use crate::geometry::{add, cross, dot, madd, mix64, normalize, ray_box, scale, stream_seed, sub, Vec3, CUBE_HALF};
use crate::image::{quantize, DepthMap, GrayImage, RgbaImage};
use crate::mesh::{box_mesh, TriMesh};
use crate::scene::{RoiBox, SceneBundle, View};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Box { min: Vec3, max: Vec3 },
    Capsule { a: Vec3, b: Vec3, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Albedo {
    Solid { rgb: [f64; 3] },
    /// `top` above the primitive's centre height, `bottom` below.
    TwoTone { top: [f64; 3], bottom: [f64; 3] },
    /// Seeded value noise around `base`.
    Noise { base: [f64; 3], amplitude: f64, frequency: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub shape: Shape,
    pub albedo: Albedo,
}

fn default_resolution() -> u32 {
    crate::scene::DEFAULT_RESOLUTION
}
fn default_supersample() -> u32 {
    2
}
fn default_orbit_views() -> usize {
    12
}
fn default_segments() -> usize {
    96
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub primitives: Vec<Primitive>,
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    #[serde(default = "default_supersample")]
    pub supersample: u32,
    /// Number of perspective orbit views rendered in addition to the four ortho views.
    #[serde(default = "default_orbit_views")]
    pub orbit_views: usize,
    #[serde(default)]
    pub orbit_elevation_deg: f64,
    /// Azimuthal segments of curved-surface tessellations.
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default)]
    pub roi: Option<RoiBox>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            primitives: Vec::new(),
            resolution: default_resolution(),
            supersample: default_supersample(),
            orbit_views: default_orbit_views(),
            orbit_elevation_deg: 0.0,
            segments: default_segments(),
            roi: None,
        }
    }
}

impl SyntheticSpec {
    /// A single sphere with two-tone albedo: warm above, cool below.
    pub fn two_tone_sphere(radius: f64) -> Self {
        Self {
            primitives: vec![Primitive {
                shape: Shape::Sphere {
                    center: [0.0; 3],
                    radius,
                },
                albedo: Albedo::TwoTone {
                    top: [0.9, 0.35, 0.2],
                    bottom: [0.2, 0.45, 0.85],
                },
            }],
            ..Self::default()
        }
    }

    pub fn solid_sphere(radius: f64, rgb: [f64; 3]) -> Self {
        Self {
            primitives: vec![Primitive {
                shape: Shape::Sphere {
                    center: [0.0; 3],
                    radius,
                },
                albedo: Albedo::Solid { rgb },
            }],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.supersample == 0 {
            return Err(Error::InvalidArgument("resolution and supersample must be positive".into()));
        }
        if self.segments < 3 {
            return Err(Error::InvalidArgument("tessellation needs at least 3 segments".into()));
        }
        if let Some(roi) = &self.roi {
            roi.validate()?;
        }
        for (i, p) in self.primitives.iter().enumerate() {
            let (lo, hi) = p.shape.bounds();
            let inside = (0..3).all(|k| lo[k] >= -CUBE_HALF && hi[k] <= CUBE_HALF);
            if !inside {
                return Err(Error::InvalidArgument(format!(
                    "primitive {i} exits the unit cube (bounds {lo:?}..{hi:?})"
                )));
            }
            let ok = match p.shape {
                Shape::Sphere { radius, .. } | Shape::Capsule { radius, .. } => radius > 0.0,
                Shape::Box { min, max } => (0..3).all(|k| min[k] < max[k]),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("primitive {i} is degenerate")));
            }
            let colours: Vec<[f64; 3]> = match p.albedo {
                Albedo::Solid { rgb } => vec![rgb],
                Albedo::TwoTone { top, bottom } => vec![top, bottom],
                Albedo::Noise { base, .. } => vec![base],
            };
            if colours.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::InvalidArgument(format!("primitive {i} has albedo outside [0,1]")));
            }
        }
        Ok(())
    }
}

impl Shape {
    /// Axis-aligned bounds.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match *self {
            Shape::Sphere { center, radius } => (add(center, [-radius; 3]), add(center, [radius; 3])),
            Shape::Box { min, max } => (min, max),
            Shape::Capsule { a, b, radius } => {
                let lo = [a[0].min(b[0]) - radius, a[1].min(b[1]) - radius, a[2].min(b[2]) - radius];
                let hi = [a[0].max(b[0]) + radius, a[1].max(b[1]) + radius, a[2].max(b[2]) + radius];
                (lo, hi)
            }
        }
    }

    pub fn center(&self) -> Vec3 {
        let (lo, hi) = self.bounds();
        scale(add(lo, hi), 0.5)
    }

    /// Nearest intersection distance `t >= 0`.
    pub fn intersect(&self, o: Vec3, d: Vec3) -> Option<f64> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = sub(o, center);
                let b = dot(oc, d);
                let c = dot(oc, oc) - radius * radius;
                let h = b * b - c;
                if h < 0.0 {
                    return None;
                }
                let s = h.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t >= 0.0)
            }
            Shape::Box { min, max } => ray_box(o, d, min, max, 0.0).map(|(t0, _)| t0),
            Shape::Capsule { a, b, radius } => {
                let ba = sub(b, a);
                let oa = sub(o, a);
                let baba = dot(ba, ba);
                let bard = dot(ba, d);
                let baoa = dot(ba, oa);
                let rdoa = dot(d, oa);
                let oaoa = dot(oa, oa);
                let qa = baba - bard * bard;
                let qb = baba * rdoa - baoa * bard;
                let qc = baba * oaoa - baoa * baoa - radius * radius * baba;
                let h = qb * qb - qa * qc;
                let mut best: Option<f64> = None;
                if h >= 0.0 && qa > 1e-12 {
                    let t = (-qb - h.sqrt()) / qa;
                    let y = baoa + t * bard;
                    if t >= 0.0 && y > 0.0 && y < baba {
                        best = Some(t);
                    }
                }
                for c in [a, b] {
                    let t = (Shape::Sphere { center: c, radius }).intersect(o, d);
                    if let Some(t) = t {
                        if best.is_none_or(|b| t < b) {
                            best = Some(t);
                        }
                    }
                }
                best
            }
        }
    }

    /// Closed outward-oriented tessellation.
    pub fn tessellate(&self, segments: usize) -> TriMesh {
        match *self {
            Shape::Sphere { center, radius } => revolve(center, center, radius, segments),
            Shape::Box { min, max } => box_mesh(min, max),
            Shape::Capsule { a, b, radius } => revolve(a, b, radius, segments),
        }
    }
}

/// Surface of revolution around `a -> b`: a hemisphere at each end joined by
/// a cylinder (a sphere when `a == b`).
fn revolve(a: Vec3, b: Vec3, r: f64, segments: usize) -> TriMesh {
    let axis_v = sub(b, a);
    let len = dot(axis_v, axis_v).sqrt();
    let axis = if len > 0.0 { scale(axis_v, 1.0 / len) } else { [0.0, 1.0, 0.0] };
    let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
    let u = normalize(cross(helper, axis));
    let v = cross(axis, u);
    let half = segments.div_ceil(2).max(2);
    let mut rings: Vec<(Vec3, f64)> = Vec::new();
    for k in 1..=half {
        rings.push((a, -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::FRAC_PI_2 / half as f64));
    }
    let start = if len > 0.0 { 0 } else { 1 };
    for k in start..half {
        rings.push((b, k as f64 * std::f64::consts::FRAC_PI_2 / half as f64));
    }
    let mut vertices = vec![madd(a, axis, -r)];
    for &(c, phi) in &rings {
        for j in 0..segments {
            let th = j as f64 * std::f64::consts::TAU / segments as f64;
            let radial = add(scale(u, th.cos()), scale(v, th.sin()));
            vertices.push(madd(madd(c, radial, r * phi.cos()), axis, r * phi.sin()));
        }
    }
    let top = vertices.len() as u32;
    vertices.push(madd(b, axis, r));
    let s = segments as u32;
    let ring = |i: usize, j: u32| 1 + i as u32 * s + j % s;
    let mut faces = Vec::new();
    for j in 0..s {
        faces.push([0, ring(0, j + 1), ring(0, j)]);
    }
    for i in 0..rings.len() - 1 {
        for j in 0..s {
            faces.push([ring(i, j), ring(i, j + 1), ring(i + 1, j)]);
            faces.push([ring(i, j + 1), ring(i + 1, j + 1), ring(i + 1, j)]);
        }
    }
    let last = rings.len() - 1;
    for j in 0..s {
        faces.push([ring(last, j), ring(last, j + 1), top]);
    }
    TriMesh { vertices, faces }
}

fn hash_unit(seed: u64, c: [i64; 3]) -> f64 {
    let h = stream_seed(seed, (c[0] as u64) ^ ((c[1] as u64) << 21), c[2] as u64);
    (mix64(h) >> 11) as f64 / (1u64 << 53) as f64
}

/// Trilinear value noise in `[0, 1]`.
fn value_noise(seed: u64, p: Vec3) -> f64 {
    let f = [p[0].floor(), p[1].floor(), p[2].floor()];
    let t = [p[0] - f[0], p[1] - f[1], p[2] - f[2]];
    let base = [f[0] as i64, f[1] as i64, f[2] as i64];
    let mut acc = 0.0;
    for corner in 0..8 {
        let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let w: f64 = (0..3).map(|k| if o[k] == 1 { t[k] } else { 1.0 - t[k] }).product();
        acc += w * hash_unit(seed, [base[0] + o[0] as i64, base[1] + o[1] as i64, base[2] + o[2] as i64]);
    }
    acc
}

impl Primitive {
    pub fn albedo_at(&self, p: Vec3, seed: u64) -> [f64; 3] {
        match self.albedo {
            Albedo::Solid { rgb } => rgb,
            Albedo::TwoTone { top, bottom } => {
                if p[1] >= self.shape.center()[1] {
                    top
                } else {
                    bottom
                }
            }
            Albedo::Noise {
                base,
                amplitude,
                frequency,
            } => {
                let n = value_noise(seed, scale(p, frequency)) - 0.5;
                base.map(|c| (c + amplitude * n).clamp(0.0, 1.0))
            }
        }
    }
}

/// Nearest hit over all primitives: `(t, albedo)`.
fn trace(spec: &SyntheticSpec, o: Vec3, d: Vec3, seed: u64) -> Option<(f64, [f64; 3])> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in spec.primitives.iter().enumerate() {
        if let Some(t) = p.shape.intersect(o, d) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, i));
            }
        }
    }
    best.map(|(t, i)| (t, spec.primitives[i].albedo_at(madd(o, d, t), seed)))
}

/// Renders one view of the analytic scene.
pub fn render_synthetic_view(spec: &SyntheticSpec, name: &str, cam: &Camera, seed: u64) -> View {
    let (w, h) = (cam.width, cam.height);
    let ss = spec.supersample;
    let n_sub = (ss * ss) as f64;
    let rows: Vec<Vec<([f32; 4], f32)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let mut rgb = [0.0f64; 3];
                    let mut hits = 0u32;
                    let mut depth = 0.0;
                    for sy in 0..ss {
                        for sx in 0..ss {
                            let px = x as f64 + (sx as f64 + 0.5) / ss as f64;
                            let py = y as f64 + (sy as f64 + 0.5) / ss as f64;
                            let ray = cam.ray_through(px, py);
                            match trace(spec, ray.origin, ray.dir, seed) {
                                Some((t, c)) => {
                                    hits += 1;
                                    depth += t;
                                    for k in 0..3 {
                                        rgb[k] += c[k];
                                    }
                                }
                                None => {
                                    for v in &mut rgb {
                                        *v += 1.0;
                                    }
                                }
                            }
                        }
                    }
                    let sil = quantize((hits as f64 / n_sub) as f32);
                    let px = [
                        quantize((rgb[0] / n_sub) as f32),
                        quantize((rgb[1] / n_sub) as f32),
                        quantize((rgb[2] / n_sub) as f32),
                        sil,
                    ];
                    let d = if sil > 0.5 { (depth / hits as f64) as f32 } else { f32::INFINITY };
                    (px, d)
                })
                .collect()
        })
        .collect();
    let mut rgb = RgbaImage::white(w, h);
    let mut depth = DepthMap::new(w, h, f32::INFINITY);
    let mut silhouette = GrayImage::new(w, h, 0.0);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (p, d)) in row.into_iter().enumerate() {
            let i = y * w as usize + x;
            rgb.pixels[i] = p;
            silhouette.values[i] = p[3];
            depth.values[i] = d;
        }
    }
    View {
        name: name.to_string(),
        camera: *cam,
        rgb,
        depth,
        silhouette,
    }
}

/// Union of the primitive tessellations.
pub fn synthetic_mesh(spec: &SyntheticSpec) -> TriMesh {
    let mut mesh = TriMesh::default();
    for p in &spec.primitives {
        mesh.append(&p.shape.tessellate(spec.segments));
    }
    mesh
}

/// Name of the `k`-th orbit view.
pub fn orbit_view_name(k: usize) -> String {
    format!("orbit_{k:02}")
}

/// Four ortho views, the orbit views, and the exact mesh.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SceneBundle> {
    spec.validate()?;
    let res = spec.resolution;
    let mut views: Vec<View> = ORTHO_VIEWS
        .iter()
        .map(|&(name, az)| render_synthetic_view(spec, name, &Camera::ortho(az, 0.0, res), seed))
        .collect();
    for (k, cam) in make_orbit_cameras(spec.orbit_views, spec.orbit_elevation_deg, res)
        .iter()
        .enumerate()
    {
        views.push(render_synthetic_view(spec, &orbit_view_name(k), cam, seed));
    }
    let mesh = synthetic_mesh(spec);
    Ok(SceneBundle {
        resolution: res,
        views,
        roi: spec.roi,
        mesh_gt: if mesh.is_empty() { None } else { Some(mesh) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::downsample2x;
    use std::collections::HashMap;

    fn small(spec: SyntheticSpec, res: u32) -> SyntheticSpec {
        SyntheticSpec {
            resolution: res,
            orbit_views: 2,
            segments: 24,
            ..spec
        }
    }

    #[test]
    fn sphere_disc_and_depth() {
        let spec = small(SyntheticSpec::solid_sphere(0.2, [1.0, 0.0, 0.0]), 64);
        let b = gen_synthetic(&spec, 0).unwrap();
        let front = b.view("front").unwrap();
        // Pixel centres (i + 0.5) span [-0.5, 0.5] at 64 px per unit.
        let c = front.depth.get(32, 32);
        let oracle = {
            let p: f64 = 0.5 / 64.0;
            0.5 - (0.04 - 2.0 * p * p).sqrt()
        };
        assert!((c as f64 - oracle).abs() < 1e-3, "{c} vs {oracle}");
        assert!((front.depth.get(31, 31) as f64 - oracle).abs() < 1e-3);
        let ppu = 64.0;
        for y in 0..64 {
            for x in 0..64 {
                let px = (x as f64 + 0.5) / ppu - 0.5;
                let py = 0.5 - (y as f64 + 0.5) / ppu;
                let r = (px * px + py * py).sqrt();
                let s = front.silhouette.get(x, y);
                if r < 0.2 - 1.0 / ppu {
                    assert_eq!(s, 1.0);
                    assert_eq!(front.rgb.get(x, y), [1.0, 0.0, 0.0, 1.0]);
                } else if r > 0.2 + 1.0 / ppu {
                    assert_eq!(s, 0.0);
                    assert_eq!(front.rgb.get(x, y), [1.0, 1.0, 1.0, 0.0]);
                }
            }
        }
    }

    #[test]
    fn centre_depth_is_exact_for_odd_size() {
        let spec = small(SyntheticSpec::solid_sphere(0.2, [1.0, 0.0, 0.0]), 33);
        let spec = SyntheticSpec { supersample: 1, ..spec };
        let b = gen_synthetic(&spec, 0).unwrap();
        for name in ["front", "right", "back", "left"] {
            let d = b.view(name).unwrap().depth.get(16, 16);
            assert!((d as f64 - 0.3).abs() < 1e-6, "{name}: {d}");
        }
    }

    #[test]
    fn empty_spec_is_white() {
        let spec = small(SyntheticSpec::default(), 16);
        let b = gen_synthetic(&spec, 0).unwrap();
        assert!(b.mesh_gt.is_none());
        for v in &b.views {
            assert!(v.rgb.pixels.iter().all(|p| *p == [1.0, 1.0, 1.0, 0.0]));
            assert!(v.silhouette.values.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn primitive_outside_cube_rejected() {
        let spec = SyntheticSpec::solid_sphere(0.6, [1.0; 3]);
        assert!(gen_synthetic(&spec, 0).is_err());
    }

    #[test]
    fn silhouette_and_depth_agree() {
        let spec = SyntheticSpec {
            primitives: vec![
                Primitive {
                    shape: Shape::Box {
                        min: [-0.3, -0.2, -0.1],
                        max: [0.1, 0.25, 0.2],
                    },
                    albedo: Albedo::Noise {
                        base: [0.5, 0.6, 0.4],
                        amplitude: 0.4,
                        frequency: 9.0,
                    },
                },
                Primitive {
                    shape: Shape::Capsule {
                        a: [0.1, -0.3, 0.0],
                        b: [0.2, 0.2, 0.1],
                        radius: 0.1,
                    },
                    albedo: Albedo::TwoTone {
                        top: [0.1, 0.2, 0.3],
                        bottom: [0.9, 0.8, 0.1],
                    },
                },
            ],
            ..small(SyntheticSpec::default(), 40)
        };
        let b = gen_synthetic(&spec, 7).unwrap();
        b.validate().unwrap();
        for v in &b.views {
            for (s, d) in v.silhouette.values.iter().zip(&v.depth.values) {
                assert_eq!(*s > 0.5, d.is_finite());
            }
        }
        assert_eq!(b, gen_synthetic(&spec, 7).unwrap());
        assert_ne!(b.views[0].rgb, gen_synthetic(&spec, 8).unwrap().views[0].rgb);
    }

    #[test]
    fn downsampling_law() {
        let base = small(SyntheticSpec::two_tone_sphere(0.25), 24);
        let lo = SyntheticSpec { supersample: 2, ..base.clone() };
        let hi = SyntheticSpec {
            supersample: 1,
            resolution: 48,
            ..base
        };
        let cam_lo = Camera::ortho(90.0, 0.0, 24);
        let cam_hi = Camera::ortho(90.0, 0.0, 48);
        let a = render_synthetic_view(&lo, "v", &cam_lo, 0);
        let b = downsample2x(&render_synthetic_view(&hi, "v", &cam_hi, 0).rgb);
        for (p, q) in a.rgb.pixels.iter().zip(&b.pixels) {
            for k in 0..4 {
                assert!((p[k] - q[k]).abs() <= 1.0 / 255.0 + 1e-6);
            }
        }
    }

    fn signed_volume(m: &TriMesh) -> f64 {
        m.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| m.vertices[i as usize]);
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    fn assert_closed(m: &TriMesh) {
        let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
        for f in &m.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += if a < b { 1 } else { -1 };
            }
        }
        assert!(edges.values().all(|&v| v == 0), "edges not paired with opposite orientation");
    }

    #[test]
    fn tessellations_are_closed_and_outward() {
        let r = 0.3;
        let sphere = Shape::Sphere { center: [0.0; 3], radius: r }.tessellate(64);
        sphere.validate().unwrap();
        assert_closed(&sphere);
        for v in &sphere.vertices {
            assert!((dot(*v, *v).sqrt() - r).abs() < 1e-12);
        }
        let exact = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let vol = signed_volume(&sphere);
        assert!(vol > 0.0 && (vol - exact).abs() / exact < 0.01);

        let cap = Shape::Capsule {
            a: [0.0, -0.1, 0.0],
            b: [0.05, 0.2, 0.0],
            radius: 0.1,
        }
        .tessellate(48);
        cap.validate().unwrap();
        assert_closed(&cap);
        let h = (0.05f64 * 0.05 + 0.3 * 0.3).sqrt();
        let exact = std::f64::consts::PI * 0.01 * h + 4.0 / 3.0 * std::f64::consts::PI * 0.001;
        let vol = signed_volume(&cap);
        assert!(vol > 0.0 && (vol - exact).abs() / exact < 0.01, "{vol} vs {exact}");
    }

    #[test]
    fn capsule_hits_match_distance_function() {
        let s = Shape::Capsule {
            a: [-0.1, 0.0, 0.0],
            b: [0.1, 0.1, 0.0],
            radius: 0.08,
        };
        let cam = Camera::persp(30.0, 20.0, 30.0, 20);
        for y in 0..20 {
            for x in 0..20 {
                let ray = cam.cast_ray(x, y);
                if let Some(t) = s.intersect(ray.origin, ray.dir) {
                    let p = ray.at(t);
                    let ba = [0.2, 0.1, 0.0];
                    let pa = sub(p, [-0.1, 0.0, 0.0]);
                    let h = (dot(pa, ba) / dot(ba, ba)).clamp(0.0, 1.0);
                    let d = dot(sub(pa, scale(ba, h)), sub(pa, scale(ba, h))).sqrt();
                    assert!((d - 0.08).abs() < 1e-9);
                }
            }
        }
    }
}
