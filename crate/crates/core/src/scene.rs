//! On-disk scene bundles: a JSON manifest plus per-view PNG/PFM files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Projection};
use crate::error::{Error, Result};
use crate::geometry::{Vec3, UNIT_CM};
use crate::image::{DepthMap, GrayImage, RgbaImage};
use crate::mesh::TriMesh;

pub const MANIFEST: &str = "manifest.json";
pub const DEFAULT_RESOLUTION: u32 = 512;

/// Evaluation region: a rectangle in front-view pixels and a world-space prism.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiBox {
    /// `[x0, y0, x1, y1]`, half-open, in front-view pixels.
    pub rect2d: [u32; 4],
    /// `[min, max]` corners in world units.
    pub prism3d: [Vec3; 2],
}

impl RoiBox {
    /// Whole image and whole cube.
    pub fn full(resolution: u32) -> Self {
        Self {
            rect2d: [0, 0, resolution, resolution],
            prism3d: [[-0.5; 3], [0.5; 3]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [x0, y0, x1, y1] = self.rect2d;
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::Validation(format!("roi rect2d {:?} must satisfy x0<x1, y0<y1", self.rect2d)));
        }
        let [lo, hi] = self.prism3d;
        if !(0..3).all(|k| lo[k] < hi[k]) {
            return Err(Error::Validation(format!("roi prism3d min {lo:?} must be below max {hi:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let [lo, hi] = self.prism3d;
        (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k])
    }

    /// `rect2d` as seen from the back view, which mirrors the front horizontally.
    pub fn mirrored_rect(&self, width: u32) -> [u32; 4] {
        let [x0, y0, x1, y1] = self.rect2d;
        [width.saturating_sub(x1), y0, width.saturating_sub(x0), y1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub name: String,
    pub camera: Camera,
    /// Colour composited over white, alpha = silhouette.
    pub rgb: RgbaImage,
    pub depth: DepthMap,
    pub silhouette: GrayImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub resolution: u32,
    pub views: Vec<View>,
    pub roi: Option<RoiBox>,
    pub mesh_gt: Option<TriMesh>,
}

impl SceneBundle {
    pub fn view(&self, name: &str) -> Result<&View> {
        self.views
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::MissingView(name.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::Validation("scene must contain ≥1 view".into()));
        }
        if let Some(roi) = &self.roi {
            roi.validate()?;
        }
        if let Some(mesh) = &self.mesh_gt {
            mesh.validate()?;
        }
        let res = self.resolution;
        for (i, v) in self.views.iter().enumerate() {
            if self.views[..i].iter().any(|o| o.name == v.name) {
                return Err(Error::Validation(format!("duplicate view name '{}'", v.name)));
            }
            v.camera.validate()?;
            for (what, w, h) in [
                ("rgb", v.rgb.width, v.rgb.height),
                ("depth", v.depth.width, v.depth.height),
                ("silhouette", v.silhouette.width, v.silhouette.height),
                ("camera", v.camera.width, v.camera.height),
            ] {
                if w != res || h != res {
                    return Err(Error::ResolutionMismatch {
                        what: format!("{what} of view '{}'", v.name),
                        expected: res,
                        width: w,
                        height: h,
                    });
                }
            }
            for (k, (&s, &d)) in v.silhouette.values.iter().zip(&v.depth.values).enumerate() {
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::Validation(format!("silhouette of view '{}' out of [0,1] at pixel {k}", v.name)));
                }
                if s > 0.5 && !(d.is_finite() && d >= 0.0) {
                    return Err(Error::Validation(format!(
                        "depth of view '{}' is {d} inside the silhouette at pixel ({}, {})",
                        v.name,
                        k as u32 % res,
                        k as u32 / res
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    resolution: u32,
    unit_cm: f64,
    views: Vec<ViewEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roi: Option<RoiBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mesh_gt: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewEntry {
    name: String,
    camera: CameraEntry,
    rgb: String,
    depth: String,
    silhouette: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    #[serde(rename = "type")]
    pub kind: String,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ortho_halfwidth: Option<f64>,
    pub distance: f64,
}

impl CameraEntry {
    pub fn from_camera(cam: &Camera) -> Self {
        let (kind, fov_deg, ortho_halfwidth) = match cam.projection {
            Projection::Orthographic { half_width } => ("ortho", None, Some(half_width)),
            Projection::Perspective { fov_deg } => ("persp", Some(fov_deg), None),
        };
        Self {
            kind: kind.into(),
            azimuth_deg: cam.azimuth_deg,
            elevation_deg: cam.elevation_deg,
            fov_deg,
            ortho_halfwidth,
            distance: cam.distance,
        }
    }

    pub fn to_camera(&self, resolution: u32) -> std::result::Result<Camera, (String, String)> {
        let projection = match self.kind.as_str() {
            "ortho" => Projection::Orthographic {
                half_width: self.ortho_halfwidth.unwrap_or(0.5),
            },
            "persp" => Projection::Perspective {
                fov_deg: self.fov_deg.unwrap_or(crate::camera::DEFAULT_FOV_DEG),
            },
            other => return Err(("type".into(), format!("expected \"ortho\" or \"persp\", got \"{other}\""))),
        };
        let cam = Camera {
            projection,
            azimuth_deg: self.azimuth_deg,
            elevation_deg: self.elevation_deg,
            distance: self.distance,
            width: resolution,
            height: resolution,
        };
        cam.validate().map_err(|e| ("camera".into(), e.to_string()))?;
        Ok(cam)
    }
}

fn existing(dir: &Path, file: &str, what: &str, view: &str) -> Result<PathBuf> {
    let p = dir.join(file);
    if !p.is_file() {
        return Err(Error::Missing(format!("missing {what} for view '{view}' ({})", p.display())));
    }
    Ok(p)
}

/// Loads and validates a scene directory.
pub fn load_scene(dir: &Path) -> Result<SceneBundle> {
    let mpath = dir.join(MANIFEST);
    if !mpath.is_file() {
        return Err(Error::Missing(format!("missing manifest {}", mpath.display())));
    }
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: mpath.clone(),
        source,
    })?;
    if m.resolution == 0 {
        return Err(Error::schema(&mpath, "resolution", "must be positive"));
    }
    if (m.unit_cm - UNIT_CM).abs() > 1e-9 {
        return Err(Error::schema(&mpath, "unit_cm", format!("must be {UNIT_CM}, got {}", m.unit_cm)));
    }
    if m.views.is_empty() {
        return Err(Error::schema(&mpath, "views", "scene must contain ≥1 view"));
    }
    let mut views = Vec::with_capacity(m.views.len());
    for (i, e) in m.views.iter().enumerate() {
        let camera = e
            .camera
            .to_camera(m.resolution)
            .map_err(|(f, msg)| Error::schema(&mpath, format!("views[{i}].camera.{f}"), msg))?;
        let rgb_path = existing(dir, &e.rgb, "rgb", &e.name)?;
        let depth_path = existing(dir, &e.depth, "depth", &e.name)?;
        let sil_path = existing(dir, &e.silhouette, "silhouette", &e.name)?;
        views.push(View {
            name: e.name.clone(),
            camera,
            rgb: RgbaImage::load_png(&rgb_path)?,
            depth: DepthMap::load_pfm(&depth_path)?,
            silhouette: GrayImage::load_png(&sil_path)?,
        });
    }
    let mesh_gt = match &m.mesh_gt {
        Some(f) => {
            let p = dir.join(f);
            if !p.is_file() {
                return Err(Error::Missing(format!("missing mesh_gt ({})", p.display())));
            }
            Some(TriMesh::load_obj(&p)?)
        }
        None => None,
    };
    let bundle = SceneBundle {
        resolution: m.resolution,
        views,
        roi: m.roi,
        mesh_gt,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Writes a bundle; file names are derived from view names.
pub fn save_scene(bundle: &SceneBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for v in &bundle.views {
        let e = ViewEntry {
            name: v.name.clone(),
            camera: CameraEntry::from_camera(&v.camera),
            rgb: format!("{}_rgb.png", v.name),
            depth: format!("{}_depth.pfm", v.name),
            silhouette: format!("{}_sil.png", v.name),
        };
        v.rgb.save_png(&dir.join(&e.rgb))?;
        v.depth.save_pfm(&dir.join(&e.depth))?;
        v.silhouette.save_png(&dir.join(&e.silhouette))?;
        entries.push(e);
    }
    let mesh_gt = match &bundle.mesh_gt {
        Some(mesh) => {
            mesh.save_obj(&dir.join("mesh_gt.obj"))?;
            Some("mesh_gt.obj".to_string())
        }
        None => None,
    };
    let m = Manifest {
        resolution: bundle.resolution,
        unit_cm: UNIT_CM,
        views: entries,
        roi: bundle.roi,
        mesh_gt,
    };
    let mpath = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&m).map_err(|source| Error::Json {
        path: mpath.clone(),
        source,
    })?;
    fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::box_mesh;

    fn tiny_bundle() -> SceneBundle {
        let res = 6;
        let mut views = Vec::new();
        for (name, az) in crate::camera::ORTHO_VIEWS {
            let mut rgb = RgbaImage::white(res, res);
            let mut sil = GrayImage::new(res, res, 0.0);
            let mut depth = DepthMap::new(res, res, f32::INFINITY);
            rgb.set(2, 3, [1.0, 0.0, 0.0, 1.0]);
            sil.values[3 * res as usize + 2] = 1.0;
            depth.values[3 * res as usize + 2] = 0.3;
            views.push(View {
                name: name.into(),
                camera: Camera::ortho(az, 0.0, res),
                rgb,
                depth,
                silhouette: sil,
            });
        }
        SceneBundle {
            resolution: res,
            views,
            roi: Some(RoiBox {
                rect2d: [1, 1, 5, 5],
                prism3d: [[-0.25, -0.3, -0.2], [0.25, 0.3, 0.2]],
            }),
            mesh_gt: Some(box_mesh([-0.1; 3], [0.1; 3])),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = tiny_bundle();
        save_scene(&b, dir.path()).unwrap();
        let back = load_scene(dir.path()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn missing_depth_names_view() {
        let dir = tempfile::tempdir().unwrap();
        save_scene(&tiny_bundle(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("front_depth.pfm")).unwrap();
        let err = load_scene(dir.path()).unwrap_err().to_string();
        assert!(err.contains("missing depth for view 'front'"), "{err}");
    }

    #[test]
    fn nan_depth_inside_silhouette_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = tiny_bundle();
        save_scene(&b, dir.path()).unwrap();
        b.views[1].depth.values[3 * 6 + 2] = f32::NAN;
        b.views[1].depth.save_pfm(&dir.path().join("right_depth.pfm")).unwrap();
        assert!(matches!(load_scene(dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_view_list_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = tiny_bundle();
        b.views.clear();
        let err = save_scene(&b, dir.path()).unwrap_err().to_string();
        assert!(err.contains("scene must contain ≥1 view"));
    }

    #[test]
    fn corrupted_png_fails_to_decode() {
        let dir = tempfile::tempdir().unwrap();
        save_scene(&tiny_bundle(), dir.path()).unwrap();
        let p = dir.path().join("back_rgb.png");
        let mut bytes = fs::read(&p).unwrap();
        bytes[20] ^= 0xff;
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load_scene(dir.path()), Err(Error::Image { .. })));
    }

    #[test]
    fn resolution_mismatch_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_scene(&tiny_bundle(), dir.path()).unwrap();
        GrayImage::new(5, 6, 0.0)
            .save_png(&dir.path().join("left_sil.png"))
            .unwrap();
        let err = load_scene(dir.path()).unwrap_err();
        assert!(matches!(err, Error::ResolutionMismatch { .. }), "{err}");
        assert!(err.to_string().contains("silhouette of view 'left'"));
    }

    #[test]
    fn unknown_manifest_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_scene(&tiny_bundle(), dir.path()).unwrap();
        let p = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&p).unwrap().replacen('{', "{\"extra\": 1,", 1);
        fs::write(&p, text).unwrap();
        assert!(matches!(load_scene(dir.path()), Err(Error::Json { .. })));
    }

    #[test]
    fn bad_camera_type_names_field() {
        let dir = tempfile::tempdir().unwrap();
        save_scene(&tiny_bundle(), dir.path()).unwrap();
        let p = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&p).unwrap().replacen("\"ortho\"", "\"fisheye\"", 1);
        fs::write(&p, text).unwrap();
        let err = load_scene(dir.path()).unwrap_err().to_string();
        assert!(err.contains("views[0].camera.type"), "{err}");
    }

    #[test]
    fn back_rect_is_mirrored() {
        let roi = RoiBox {
            rect2d: [10, 2, 30, 8],
            prism3d: [[-0.1; 3], [0.1; 3]],
        };
        assert_eq!(roi.mirrored_rect(100), [70, 2, 90, 8]);
    }
}
