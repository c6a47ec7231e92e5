//! Contour-line removal: DoG line detection, protected landmark hulls and
//! fast-marching inpainting.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::stream_seed;
use crate::image::{luma, psnr, GrayImage, RgbaImage};
use crate::synthetic::{render_synthetic_view, Albedo, Primitive, Shape, SyntheticSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelinifyParams {
    /// Inner Gaussian scale in pixels.
    pub sigma: f64,
    /// Ratio of the outer to the inner scale.
    pub k: f64,
    /// Threshold on the negated response of a [0, 1] luma image.
    pub tau: f64,
    /// Dilation radius in pixels (square structuring element).
    pub dilate: u32,
    pub inpaint_radius: f64,
}

impl Default for DelinifyParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            k: 1.6,
            tau: 0.05,
            dilate: 1,
            inpaint_radius: 3.0,
        }
    }
}

impl DelinifyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.k > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "DoG needs sigma > 0 and k > 1, got sigma={} k={}",
                self.sigma, self.k
            )));
        }
        if !self.tau.is_finite() || !(self.inpaint_radius >= 1.0) {
            return Err(Error::InvalidArgument("tau must be finite and inpaint_radius at least 1".into()));
        }
        Ok(())
    }
}

/// Named groups of landmark pixels, e.g. `left_eye`, `mouth`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkSet {
    pub groups: BTreeMap<String, Vec<[f64; 2]>>,
}

impl LandmarkSet {
    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            format: "landmarks json".into(),
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("landmarks serialize");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineMask {
    pub width: u32,
    pub height: u32,
    /// `true` marks a line pixel to be replaced.
    pub mask: Vec<bool>,
}

impl LineMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            mask: vec![false; (width * height) as usize],
        }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.mask[(y * self.width + x) as usize]
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            values: self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray().save_png(path)
    }
}

/// Folds an out-of-range index back into `0..n` by half-sample mirroring.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut rows = vec![0.0; values.len()];
    rows.par_chunks_mut(width).enumerate().for_each(|(y, out)| {
        let src = &values[y * width..(y + 1) * width];
        for (x, o) in out.iter_mut().enumerate() {
            *o = k
                .iter()
                .enumerate()
                .map(|(t, w)| w * src[reflect(x as isize + t as isize - r, width)])
                .sum();
        }
    });
    let mut out = vec![0.0; values.len()];
    out.par_chunks_mut(width).enumerate().for_each(|(y, o)| {
        for (t, w) in k.iter().enumerate() {
            let sy = reflect(y as isize + t as isize - r, height);
            for (v, s) in o.iter_mut().zip(&rows[sy * width..(sy + 1) * width]) {
                *v += w * s;
            }
        }
    });
    out
}

/// `G_sigma(luma) - G_{k sigma}(luma)`. Dark strokes give negative ridges.
pub fn dog_response(img: &RgbaImage, sigma: f64, k: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !(k > 1.0) {
        return Err(Error::InvalidArgument(format!("DoG needs sigma > 0 and k > 1, got {sigma}, {k}")));
    }
    let (w, h) = (img.width as usize, img.height as usize);
    let l: Vec<f64> = img.pixels.iter().map(|&p| luma(p) as f64).collect();
    let a = gaussian_blur(&l, w, h, sigma);
    let b = gaussian_blur(&l, w, h, k * sigma);
    Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull by monotone chain, counter-clockwise in a y-up sense, without
/// collinear points. Fewer than three points means the input was degenerate.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Pixels whose integer coordinates lie inside or on the hull.
pub fn rasterize_hull(hull: &[[f64; 2]], width: u32, height: u32) -> Vec<bool> {
    let mut out = vec![false; (width * height) as usize];
    if hull.len() < 3 {
        return out;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in hull {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let clampi = |v: f64, hi: u32| (v.max(0.0) as u32).min(hi - 1);
    for y in clampi(y0.floor(), height)..=clampi(y1.ceil(), height) {
        for x in clampi(x0.floor(), width)..=clampi(x1.ceil(), width) {
            let p = [x as f64, y as f64];
            let inside = (0..hull.len()).all(|i| cross2(hull[i], hull[(i + 1) % hull.len()], p) >= -1e-9);
            if inside {
                out[(y * width + x) as usize] = true;
            }
        }
    }
    out
}

/// Union of the rasterized hulls of every usable landmark group.
pub fn protected_region(landmarks: &LandmarkSet, width: u32, height: u32) -> Result<Vec<bool>> {
    let mut out = vec![false; (width * height) as usize];
    for (name, pts) in &landmarks.groups {
        for p in pts {
            if !(p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (width - 1) as f64 && p[1] <= (height - 1) as f64) {
                return Err(Error::InvalidArgument(format!(
                    "landmark group '{name}' has point ({}, {}) outside the {width}x{height} image",
                    p[0], p[1]
                )));
            }
        }
        let hull = convex_hull(pts);
        if hull.len() < 3 {
            warn!("landmark group '{name}' has a degenerate hull; ignored");
            continue;
        }
        for (o, h) in out.iter_mut().zip(rasterize_hull(&hull, width, height)) {
            *o |= h;
        }
    }
    Ok(out)
}

fn dilate(mask: &[bool], width: usize, height: usize, r: usize) -> Vec<bool> {
    if r == 0 {
        return mask.to_vec();
    }
    let mut out = vec![false; mask.len()];
    for y in 0..height {
        for x in 0..width {
            if !mask[y * width + x] {
                continue;
            }
            for yy in y.saturating_sub(r)..=(y + r).min(height - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(width - 1) {
                    out[yy * width + xx] = true;
                }
            }
        }
    }
    out
}

pub fn line_mask(img: &RgbaImage, landmarks: &LandmarkSet, params: &DelinifyParams) -> Result<LineMask> {
    params.validate()?;
    let (w, h) = (img.width as usize, img.height as usize);
    let protected = protected_region(landmarks, img.width, img.height)?;
    let resp = dog_response(img, params.sigma, params.k)?;
    let raw: Vec<bool> = resp.iter().map(|&r| -r > params.tau).collect();
    let mut mask = dilate(&raw, w, h, params.dilate as usize);
    for (m, p) in mask.iter_mut().zip(&protected) {
        *m &= !p;
    }
    Ok(LineMask {
        width: img.width,
        height: img.height,
        mask,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flag {
    Known,
    Band,
    Inside,
}

/// Fast-marching inpainting: masked pixels are filled in order of distance
/// from the known region, each as a weighted mean of already-known pixels
/// within `radius`. Alpha and unmasked pixels are copied unchanged.
pub fn inpaint(img: &RgbaImage, mask: &LineMask, radius: f64) -> Result<RgbaImage> {
    if (mask.width, mask.height) != (img.width, img.height) {
        return Err(Error::ResolutionMismatch {
            what: "line mask".into(),
            expected: img.width,
            width: mask.width,
            height: mask.height,
        });
    }
    let n = mask.mask.len();
    let count = mask.count();
    if count == n {
        return Err(Error::InvalidArgument("mask covers the whole image".into()));
    }
    if 2 * count >= n {
        return Err(Error::InvalidArgument(format!(
            "mask covers {count} of {n} pixels; inpainting needs under half the image known-free"
        )));
    }
    let (w, h) = (img.width as isize, img.height as isize);
    let idx = |x: isize, y: isize| (y * w + x) as usize;
    let inb = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h;
    const NB: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

    let mut out = img.clone();
    let mut flag = vec![Flag::Known; n];
    let mut dist = vec![0.0f64; n];
    let mut heap = BinaryHeap::new();
    for y in 0..h {
        for x in 0..w {
            let i = idx(x, y);
            if mask.mask[i] {
                flag[i] = Flag::Inside;
                dist[i] = 1e6;
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            let i = idx(x, y);
            if flag[i] == Flag::Known
                && NB
                    .iter()
                    .any(|&(dx, dy)| inb(x + dx, y + dy) && flag[idx(x + dx, y + dy)] == Flag::Inside)
            {
                flag[i] = Flag::Band;
                heap.push(Reverse((0u64, i)));
            }
        }
    }

    let solve = |flag: &[Flag], dist: &[f64], a: Option<usize>, b: Option<usize>| -> f64 {
        let known = |o: Option<usize>| o.filter(|&i| flag[i] != Flag::Inside).map(|i| dist[i]);
        match (known(a), known(b)) {
            (Some(t1), Some(t2)) if (t1 - t2).abs() < 1.0 => {
                let r = (2.0 - (t1 - t2) * (t1 - t2)).sqrt();
                (t1 + t2 + r) / 2.0
            }
            (Some(t1), Some(t2)) => 1.0 + t1.min(t2),
            (Some(t), None) | (None, Some(t)) => 1.0 + t,
            (None, None) => 1e6,
        }
    };
    let r = radius.ceil() as isize;

    while let Some(Reverse((_, i))) = heap.pop() {
        if flag[i] == Flag::Known {
            continue;
        }
        flag[i] = Flag::Known;
        let (x, y) = ((i as isize) % w, (i as isize) / w);
        for (dx, dy) in NB {
            let (nx, ny) = (x + dx, y + dy);
            if !inb(nx, ny) || flag[idx(nx, ny)] != Flag::Inside {
                continue;
            }
            let j = idx(nx, ny);
            let at = |xx: isize, yy: isize| if inb(xx, yy) { Some(idx(xx, yy)) } else { None };
            let (l, rr, u, d) = (at(nx - 1, ny), at(nx + 1, ny), at(nx, ny - 1), at(nx, ny + 1));
            let t = solve(&flag, &dist, l, u)
                .min(solve(&flag, &dist, rr, u))
                .min(solve(&flag, &dist, l, d))
                .min(solve(&flag, &dist, rr, d));
            dist[j] = t;

            // normal of the front, from distances of non-inside neighbours
            let grad = |lo: Option<usize>, hi: Option<usize>| {
                let k = |o: Option<usize>| o.filter(|&q| flag[q] != Flag::Inside).map(|q| dist[q]);
                match (k(lo), k(hi)) {
                    (Some(a), Some(b)) => (b - a) / 2.0,
                    (Some(a), None) => t - a,
                    (None, Some(b)) => b - t,
                    (None, None) => 0.0,
                }
            };
            let (gx, gy) = (grad(l, rr), grad(u, d));
            let gn = (gx * gx + gy * gy).sqrt();

            let mut acc = [0.0f64; 3];
            let mut wsum = 0.0;
            for ky in ny - r..=ny + r {
                for kx in nx - r..=nx + r {
                    if !inb(kx, ky) {
                        continue;
                    }
                    let k = idx(kx, ky);
                    if flag[k] == Flag::Inside || k == j {
                        continue;
                    }
                    let (rx, ry) = ((nx - kx) as f64, (ny - ky) as f64);
                    let len2 = rx * rx + ry * ry;
                    if len2 > radius * radius {
                        continue;
                    }
                    let len = len2.sqrt();
                    let mut dir = if gn > 0.0 { (rx * gx + ry * gy).abs() / (len * gn) } else { 1.0 };
                    if dir <= 0.01 {
                        dir = 1e-6;
                    }
                    let wgt = dir / len2 / (1.0 + (dist[k] - t).abs());
                    let p = out.pixels[k];
                    for c in 0..3 {
                        acc[c] += wgt * p[c] as f64;
                    }
                    wsum += wgt;
                }
            }
            if wsum > 0.0 {
                let p = &mut out.pixels[j];
                for c in 0..3 {
                    p[c] = (acc[c] / wsum) as f32;
                }
            }
            flag[j] = Flag::Band;
            heap.push(Reverse((t.to_bits(), j)));
        }
    }
    Ok(out)
}

/// Line mask followed by inpainting; returns both for inspection.
pub fn delinify_image(img: &RgbaImage, landmarks: &LandmarkSet, params: &DelinifyParams) -> Result<(RgbaImage, LineMask)> {
    let mask = line_mask(img, landmarks, params)?;
    let out = inpaint(img, &mask, params.inpaint_radius)?;
    Ok((out, mask))
}

/// Ink used for procedural contours.
pub const CONTOUR_INK: [f32; 4] = [0.08, 0.06, 0.06, 1.0];

/// Overlays 1px dark strokes: the silhouette outline of `alpha > 0.5` plus a
/// few random arcs inside the shape.
pub fn draw_contours(img: &RgbaImage, alpha: &GrayImage, seed: u64) -> RgbaImage {
    let mut out = img.clone();
    let (w, h) = (img.width, img.height);
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && alpha.get(x as u32, y as u32) > 0.5;
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if inside(x, y) && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| !inside(x + dx, y + dy)) {
                out.set(x as u32, y as u32, CONTOUR_INK);
            }
        }
    }
    let pts: Vec<(u32, u32)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| inside(x as i64, y as i64)).collect();
    if pts.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0xc0f7, 0));
    for _ in 0..3 {
        let (cx, cy) = pts[rng.gen_range(0..pts.len())];
        let rad = rng.gen_range(0.04..0.12) * w as f64;
        let a0 = rng.gen_range(0.0..std::f64::consts::TAU);
        let span = rng.gen_range(1.0..3.0);
        let steps = (rad * span * 2.0).ceil() as usize + 1;
        for s in 0..=steps {
            let a = a0 + span * s as f64 / steps as f64;
            let x = (cx as f64 + rad * a.cos()).round() as i64;
            let y = (cy as f64 + rad * a.sin()).round() as i64;
            if inside(x, y) {
                out.set(x as u32, y as u32, CONTOUR_INK);
            }
        }
    }
    out
}

/// One corrupted-and-restored render of the line-removal benchmark.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchCase {
    pub corrupted_psnr: f64,
    pub restored_psnr: f64,
    pub mask_pixels: usize,
    pub protected_pixels: usize,
    /// Every protected pixel kept its corrupted value exactly.
    pub protected_identical: bool,
    /// Every pixel outside the mask kept its corrupted value exactly.
    pub unmasked_identical: bool,
}

impl BenchCase {
    pub fn gain_db(&self) -> f64 {
        self.restored_psnr - self.corrupted_psnr
    }
}

/// A random head-like scene seen from the front, plus eye and mouth landmarks.
pub fn benchmark_scene(seed: u64, resolution: u32) -> (SyntheticSpec, LandmarkSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0xbe7c, 0));
    let mut colour = || [rng.gen_range(0.1..0.95), rng.gen_range(0.1..0.95), rng.gen_range(0.1..0.95)];
    let (top, bottom, base) = (colour(), colour(), colour());
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0xbe7c, 1));
    let r = rng.gen_range(0.2..0.32);
    let head = [rng.gen_range(-0.05..0.05), rng.gen_range(0.0..0.1), 0.0];
    let albedo = if rng.gen_bool(0.5) {
        Albedo::TwoTone { top, bottom }
    } else {
        Albedo::Noise {
            base,
            amplitude: 0.15,
            frequency: 6.0,
        }
    };
    let mut primitives = vec![Primitive {
        shape: Shape::Sphere { center: head, radius: r },
        albedo,
    }];
    let neck_top = [head[0], head[1] - 0.8 * r, 0.0];
    primitives.push(Primitive {
        shape: Shape::Capsule {
            a: neck_top,
            b: [head[0], -0.45, 0.0],
            radius: rng.gen_range(0.06..0.1),
        },
        albedo: Albedo::Solid { rgb: bottom },
    });
    let spec = SyntheticSpec {
        primitives,
        resolution,
        orbit_views: 0,
        ..SyntheticSpec::default()
    };
    let px = |x: f64, y: f64| [(x + 0.5) * resolution as f64, (0.5 - y) * resolution as f64];
    let e = 0.12 * r;
    let quad = |cx: f64, cy: f64| vec![px(cx - e, cy - e), px(cx + e, cy - e), px(cx + e, cy + e), px(cx - e, cy + e)];
    let mut landmarks = LandmarkSet::default();
    landmarks.groups.insert("left_eye".into(), quad(head[0] - 0.35 * r, head[1] + 0.15 * r));
    landmarks.groups.insert("right_eye".into(), quad(head[0] + 0.35 * r, head[1] + 0.15 * r));
    landmarks.groups.insert(
        "mouth".into(),
        vec![
            px(head[0] - 0.3 * r, head[1] - 0.4 * r),
            px(head[0] + 0.3 * r, head[1] - 0.4 * r),
            px(head[0], head[1] - 0.6 * r),
        ],
    );
    (spec, landmarks)
}

/// Renders `cases` scenes, overlays procedural contours, removes them and
/// scores the result against the clean render.
pub fn run_benchmark(cases: usize, resolution: u32, params: &DelinifyParams, seed: u64) -> Result<Vec<BenchCase>> {
    (0..cases as u64)
        .map(|k| {
            let case_seed = stream_seed(seed, k, 0xde11);
            let (spec, landmarks) = benchmark_scene(case_seed, resolution);
            let cam = crate::camera::Camera::ortho(0.0, 0.0, resolution);
            let view = render_synthetic_view(&spec, "front", &cam, case_seed);
            let corrupted = draw_contours(&view.rgb, &view.silhouette, case_seed);
            let (restored, mask) = delinify_image(&corrupted, &landmarks, params)?;
            let protected = protected_region(&landmarks, resolution, resolution)?;
            let same = |i: usize| restored.pixels[i].map(f32::to_bits) == corrupted.pixels[i].map(f32::to_bits);
            Ok(BenchCase {
                corrupted_psnr: psnr(&corrupted, &view.rgb),
                restored_psnr: psnr(&restored, &view.rgb),
                mask_pixels: mask.count(),
                protected_pixels: protected.iter().filter(|&&p| p).count(),
                protected_identical: (0..protected.len()).filter(|&i| protected[i]).all(same),
                unmasked_identical: (0..mask.mask.len()).filter(|&i| !mask.mask[i]).all(same),
            })
        })
        .collect()
}
