//! Evaluation: ROI clipping, surface sampling, chamfer / F-1 and view PSNR.

use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, DEFAULT_FOV_DEG};
use crate::error::{Error, Result};
use crate::geometry::{stream_seed, Vec3, UNIT_CM};
use crate::image::{psnr_region, RgbaImage, PSNR_MAX_DB};
use crate::isosurface::{extract_mesh, DEFAULT_GRID, DEFAULT_ISO};
use crate::mesh::TriMesh;
use crate::real::Real;
use crate::render::{render_view, SampleMode, DEFAULT_SAMPLES};
use crate::scene::{RoiBox, SceneBundle};
use crate::synthetic::orbit_view_name;

/// Drops every face with a vertex outside the ROI prism, then unused vertices.
pub fn clip_to_roi(mesh: &TriMesh, roi: &RoiBox) -> TriMesh {
    let keep: Vec<bool> = mesh.vertices.iter().map(|&v| roi.contains(v)).collect();
    let mut out = TriMesh {
        vertices: mesh.vertices.clone(),
        faces: mesh
            .faces
            .iter()
            .copied()
            .filter(|f| f.iter().all(|&i| keep[i as usize]))
            .collect(),
    };
    out.prune_unreferenced();
    out
}

/// `n` points drawn uniformly over the mesh surface.
pub fn sample_points(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if mesh.faces.is_empty() {
        return Err(Error::InvalidArgument("cannot sample points from an empty mesh".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("point count must be at least 1".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    if total <= 0.0 {
        return Err(Error::InvalidArgument("cannot sample points from a zero-area mesh".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0x5a3b, 0));
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.gen::<f64>() * total;
        let f = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
        let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let [a, b, c] = mesh.faces[f].map(|i| mesh.vertices[i as usize]);
        pts.push(std::array::from_fn(|k| a[k] + u * (b[k] - a[k]) + v * (c[k] - a[k])));
    }
    Ok(pts)
}

fn dist2(a: Vec3, b: Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Static 3-d tree for nearest-neighbour distance queries.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<KdNode>,
}

#[derive(Clone, Copy, Debug)]
struct KdNode {
    /// Range into `points` covered by this subtree.
    start: usize,
    end: usize,
    axis: usize,
    /// Left points have coordinate <= split, right points >= split.
    split: f64,
    /// Children, or `usize::MAX` for a leaf.
    left: usize,
    right: usize,
}

const LEAF_SIZE: usize = 8;

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(KdNode {
            start,
            end,
            axis: 0,
            split: 0.0,
            left: usize::MAX,
            right: usize::MAX,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let slice = &mut self.points[start..end];
        let axis = (0..3)
            .max_by(|&a, &b| {
                let spread = |k: usize| {
                    let (lo, hi) = slice
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])));
                    hi - lo
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap_or(0);
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
        let split = slice[mid][axis];
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        let node = &mut self.nodes[id];
        node.axis = axis;
        node.split = split;
        node.left = left;
        node.right = right;
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared distance from `q` to the closest stored point.
    pub fn nearest_dist2(&self, q: Vec3) -> f64 {
        let mut best = f64::INFINITY;
        if !self.nodes.is_empty() {
            self.search(0, q, &mut best);
        }
        best
    }

    fn search(&self, id: usize, q: Vec3, best: &mut f64) {
        let node = self.nodes[id];
        if node.left == usize::MAX {
            for &p in &self.points[node.start..node.end] {
                *best = best.min(dist2(p, q));
            }
            return;
        }
        let diff = q[node.axis] - node.split;
        let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        self.search(near, q, best);
        if diff * diff < *best {
            self.search(far, q, best);
        }
    }
}

/// Squared nearest distances by exhaustive search.
pub fn brute_force_nearest(from: &[Vec3], to: &[Vec3]) -> Vec<f64> {
    from.iter()
        .map(|&p| to.iter().fold(f64::INFINITY, |b, &q| b.min(dist2(p, q))))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChamferF1 {
    /// Sum of the two mean squared nearest distances, in world units squared.
    pub chamfer: f64,
    pub thresholds_cm: Vec<f64>,
    /// Percentages in [0, 100], one per threshold.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
}

/// Chamfer distance and F-1 scores from squared nearest distances in both directions.
pub fn chamfer_f1_from_distances(pred_to_gt: &[f64], gt_to_pred: &[f64], thresholds_cm: &[f64]) -> ChamferF1 {
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let pct = |d: &[f64], t2: f64| 100.0 * d.iter().filter(|&&x| x < t2).count() as f64 / d.len() as f64;
    let mut out = ChamferF1 {
        chamfer: mean(pred_to_gt) + mean(gt_to_pred),
        thresholds_cm: thresholds_cm.to_vec(),
        precision: Vec::new(),
        recall: Vec::new(),
        f1: Vec::new(),
    };
    for &cm in thresholds_cm {
        let t = cm / UNIT_CM;
        let p = pct(pred_to_gt, t * t);
        let r = pct(gt_to_pred, t * t);
        out.precision.push(p);
        out.recall.push(r);
        out.f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
    }
    out
}

pub fn chamfer_f1(pred: &[Vec3], gt: &[Vec3], thresholds_cm: &[f64]) -> Result<ChamferF1> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::InvalidArgument("chamfer needs two non-empty point clouds".into()));
    }
    let gt_tree = KdTree::new(gt);
    let pred_tree = KdTree::new(pred);
    let a: Vec<f64> = pred.par_iter().map(|&p| gt_tree.nearest_dist2(p)).collect();
    let b: Vec<f64> = gt.par_iter().map(|&q| pred_tree.nearest_dist2(q)).collect();
    Ok(chamfer_f1_from_distances(&a, &b, thresholds_cm))
}

/// Evaluation protocol. Written into every resolved config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    /// Orthographic views and their azimuths in degrees.
    pub ortho_views: Vec<(String, f64)>,
    pub orbit_views: usize,
    pub orbit_interval_deg: f64,
    pub orbit_fov_deg: f64,
    pub orbit_strip_pad_px: u32,
    pub sample_points: usize,
    pub thresholds_cm: Vec<f64>,
    pub psnr_max_db: f64,
    pub mesh_grid: usize,
    pub iso: f64,
    pub render_samples: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            ortho_views: crate::camera::ORTHO_VIEWS
                .iter()
                .map(|&(n, a)| (n.to_string(), a))
                .collect(),
            orbit_views: 12,
            orbit_interval_deg: 30.0,
            orbit_fov_deg: DEFAULT_FOV_DEG,
            orbit_strip_pad_px: 2,
            sample_points: 10_000,
            thresholds_cm: vec![5.0, 10.0],
            psnr_max_db: PSNR_MAX_DB,
            mesh_grid: DEFAULT_GRID,
            iso: DEFAULT_ISO,
            render_samples: DEFAULT_SAMPLES,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds_cm.len() != 2 || self.thresholds_cm.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Validation("eval thresholds_cm must be two positive distances".into()));
        }
        if self.sample_points == 0 {
            return Err(Error::Validation("eval sample_points must be at least 1".into()));
        }
        if (self.psnr_max_db - PSNR_MAX_DB).abs() > 0.0 {
            return Err(Error::Validation(format!("eval psnr_max_db is fixed at {PSNR_MAX_DB}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub front_psnr: f64,
    pub back_psnr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbit_psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chamfer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_5cm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_10cm: Option<f64>,
}

/// Rows covered by the silhouette's bounding box, padded and clamped,
/// spanning the full width. The whole image when the silhouette is empty.
pub fn silhouette_strip(sil: &crate::image::GrayImage, pad: u32) -> (u32, u32, u32, u32) {
    let rows: Vec<u32> = (0..sil.height)
        .filter(|&y| (0..sil.width).any(|x| sil.get(x, y) > 0.5))
        .collect();
    match (rows.first(), rows.last()) {
        (Some(&y0), Some(&y1)) => (0, y0.saturating_sub(pad), sil.width, (y1 + 1 + pad).min(sil.height)),
        _ => (0, 0, sil.width, sil.height),
    }
}

/// Predicted images for the protocol views, keyed by view name.
pub type ViewRenders = BTreeMap<String, RgbaImage>;

/// Renders the field from every ground-truth camera the protocol needs.
pub fn render_protocol_views<T: Real>(
    field: &crate::field::RadianceField<T>,
    gt: &SceneBundle,
    protocol: &EvalProtocol,
) -> Result<ViewRenders> {
    let mut out = ViewRenders::new();
    for name in protocol_view_names(gt, protocol) {
        let view = gt.view(&name)?;
        let r = render_view(field, &view.camera, protocol.render_samples, SampleMode::Midpoint, 0)?;
        out.insert(name, r.rgb);
    }
    Ok(out)
}

fn protocol_view_names(gt: &SceneBundle, protocol: &EvalProtocol) -> Vec<String> {
    let mut names = vec!["front".to_string(), "back".to_string()];
    names.extend(
        (0..protocol.orbit_views)
            .map(orbit_view_name)
            .filter(|n| gt.views.iter().any(|v| &v.name == n)),
    );
    names
}

/// Orbit cameras prescribed by the protocol.
pub fn protocol_orbit_cameras(protocol: &EvalProtocol, size: u32) -> Vec<Camera> {
    (0..protocol.orbit_views)
        .map(|k| Camera::persp(k as f64 * protocol.orbit_interval_deg, 0.0, protocol.orbit_fov_deg, size))
        .collect()
}

/// Scores predicted renders and an optional predicted mesh against the scene.
pub fn evaluate(
    renders: &ViewRenders,
    pred_mesh: Option<&TriMesh>,
    gt: &SceneBundle,
    roi: &RoiBox,
    protocol: &EvalProtocol,
    seed: u64,
) -> Result<MetricsReport> {
    protocol.validate()?;
    roi.validate()?;
    let pred = |name: &str| {
        renders
            .get(name)
            .ok_or_else(|| Error::MissingView(format!("prediction has no render for view '{name}'")))
    };
    let check = |name: &str, img: &RgbaImage| -> Result<()> {
        let v = gt.view(name)?;
        if (img.width, img.height) != (v.rgb.width, v.rgb.height) {
            return Err(Error::ResolutionMismatch {
                what: format!("render of view '{name}'"),
                expected: v.rgb.width,
                width: img.width,
                height: img.height,
            });
        }
        Ok(())
    };
    let front = gt.view("front")?;
    let back = gt.view("back")?;
    let (pf, pb) = (pred("front")?, pred("back")?);
    check("front", pf)?;
    check("back", pb)?;
    let [x0, y0, x1, y1] = roi.rect2d;
    let [bx0, by0, bx1, by1] = roi.mirrored_rect(back.rgb.width);
    let mut report = MetricsReport {
        front_psnr: psnr_region(pf, &front.rgb, (x0, y0, x1, y1)),
        back_psnr: psnr_region(pb, &back.rgb, (bx0, by0, bx1, by1)),
        ..MetricsReport::default()
    };

    let mut orbit = Vec::new();
    for k in 0..protocol.orbit_views {
        let name = orbit_view_name(k);
        let Ok(v) = gt.view(&name) else { continue };
        let img = pred(&name)?;
        check(&name, img)?;
        orbit.push(psnr_region(img, &v.rgb, silhouette_strip(&v.silhouette, protocol.orbit_strip_pad_px)));
    }
    if orbit.len() == protocol.orbit_views && !orbit.is_empty() {
        report.orbit_psnr = Some(orbit.iter().sum::<f64>() / orbit.len() as f64);
    } else {
        warn!(
            "scene has {} of {} orbit views; orbit PSNR omitted",
            orbit.len(),
            protocol.orbit_views
        );
    }

    match (pred_mesh, gt.mesh_gt.as_ref()) {
        (_, None) => warn!("scene has no ground-truth mesh; geometry metrics omitted"),
        (None, _) => warn!("no predicted mesh; geometry metrics omitted"),
        (Some(pm), Some(gm)) => {
            let pm = clip_to_roi(pm, roi);
            let gm = clip_to_roi(gm, roi);
            if pm.faces.is_empty() || gm.faces.is_empty() {
                warn!("a mesh is empty inside the ROI; geometry metrics omitted");
            } else {
                // one seed for both, so identical meshes give identical clouds
                let s = stream_seed(seed, 0, 0);
                let a = sample_points(&pm, protocol.sample_points, s)?;
                let b = sample_points(&gm, protocol.sample_points, s)?;
                let s = chamfer_f1(&a, &b, &protocol.thresholds_cm)?;
                report.chamfer = Some(s.chamfer);
                report.f1_5cm = Some(s.f1[0]);
                report.f1_10cm = Some(s.f1[1]);
            }
        }
    }
    Ok(report)
}

/// Renders and meshes a fitted field, then evaluates it.
pub fn evaluate_field<T: Real>(
    field: &crate::field::RadianceField<T>,
    gt: &SceneBundle,
    roi: &RoiBox,
    protocol: &EvalProtocol,
    seed: u64,
) -> Result<(MetricsReport, TriMesh)> {
    let renders = render_protocol_views(field, gt, protocol)?;
    let mesh = extract_mesh(field, protocol.mesh_grid, protocol.iso)?;
    let report = evaluate(&renders, Some(&mesh), gt, roi, protocol, seed)?;
    Ok((report, mesh))
}
