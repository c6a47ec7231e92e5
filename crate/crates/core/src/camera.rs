//! Cameras and ray generation.
//!
//! All cameras look at the cube centre. Azimuth 0 places the camera on the
//! +z axis (the front view), azimuth 90 on +x; elevation raises it towards +y.
//! Image rows run top to bottom.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cross, madd, normalize, ray_cube, scale, Vec3, CUBE_HALF};

/// Full field of view used for every perspective camera.
pub const DEFAULT_FOV_DEG: f64 = 30.0;
/// Standard deviation of the random-camera elevation.
pub const RANDOM_ELEVATION_STD_DEG: f64 = 20.0;
/// Clamp applied to random-camera elevation.
pub const RANDOM_ELEVATION_CLAMP_DEG: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Projection {
    Orthographic { half_width: f64 },
    Perspective { fov_deg: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub projection: Projection,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Distance of the eye (perspective) or image plane (orthographic) from the cube centre.
    pub distance: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn is_empty(&self) -> bool {
        self.t_far <= self.t_near
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        madd(self.origin, self.dir, t)
    }
}

/// The four supervision views and their azimuths.
pub const ORTHO_VIEWS: [(&str, f64); 4] = [("front", 0.0), ("right", 90.0), ("back", 180.0), ("left", 270.0)];

/// Eye distance at which the cube's bounding sphere fits a frustum of `fov_deg`.
pub fn fitting_distance(fov_deg: f64) -> f64 {
    (3.0f64.sqrt() * CUBE_HALF) / (fov_deg.to_radians() * 0.5).sin()
}

impl Camera {
    /// Orthographic camera whose image plane sits on the cube face and spans it.
    pub fn ortho(azimuth_deg: f64, elevation_deg: f64, size: u32) -> Self {
        Self {
            projection: Projection::Orthographic { half_width: CUBE_HALF },
            azimuth_deg,
            elevation_deg,
            distance: CUBE_HALF,
            width: size,
            height: size,
        }
    }

    pub fn persp(azimuth_deg: f64, elevation_deg: f64, fov_deg: f64, size: u32) -> Self {
        Self {
            projection: Projection::Perspective { fov_deg },
            azimuth_deg,
            elevation_deg,
            distance: fitting_distance(fov_deg),
            width: size,
            height: size,
        }
    }

    /// One of the named orthographic supervision views.
    pub fn named_ortho(name: &str, size: u32) -> Option<Self> {
        ORTHO_VIEWS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|&(_, az)| Self::ortho(az, 0.0, size))
    }

    pub fn validate(&self) -> Result<()> {
        match self.projection {
            Projection::Orthographic { half_width } if !(half_width > 0.0 && half_width.is_finite()) => {
                return Err(Error::Validation(format!("ortho half-width must be positive, got {half_width}")));
            }
            Projection::Perspective { fov_deg } if !(fov_deg > 0.0 && fov_deg < 180.0) => {
                return Err(Error::Validation(format!("fov must lie in (0, 180), got {fov_deg}")));
            }
            _ => {}
        }
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            return Err(Error::Validation(format!("camera distance must be positive, got {}", self.distance)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("camera image size must be non-zero".into()));
        }
        Ok(())
    }

    pub fn with_size(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    /// Unit vector from the cube centre towards the camera.
    pub fn position_dir(&self) -> Vec3 {
        let (a, e) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        [a.sin() * e.cos(), e.sin(), a.cos() * e.cos()]
    }

    /// Orthonormal `(right, up, forward)` basis.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let forward = scale(self.position_dir(), -1.0);
        let right = normalize(cross(forward, [0.0, 1.0, 0.0]));
        let up = cross(right, forward);
        (right, up, forward)
    }

    /// Ray through the centre of pixel `(px, py)`.
    pub fn cast_ray(&self, px: u32, py: u32) -> Ray {
        self.ray_through(px as f64 + 0.5, py as f64 + 0.5)
    }

    /// Ray through continuous image coordinates (pixel corners at integers).
    pub fn ray_through(&self, x: f64, y: f64) -> Ray {
        let (right, up, forward) = self.basis();
        let aspect = self.width as f64 / self.height as f64;
        let sx = (x / self.width as f64 * 2.0 - 1.0) * aspect;
        let sy = 1.0 - y / self.height as f64 * 2.0;
        let centre = scale(self.position_dir(), self.distance);
        let (origin, dir) = match self.projection {
            Projection::Orthographic { half_width } => {
                let o = madd(madd(centre, right, sx * half_width), up, sy * half_width);
                (o, forward)
            }
            Projection::Perspective { fov_deg } => {
                let tan = (fov_deg.to_radians() * 0.5).tan();
                let d = madd(madd(forward, right, sx * tan), up, sy * tan);
                (centre, normalize(d))
            }
        };
        let (t_near, t_far) = ray_cube(origin, dir).unwrap_or((0.0, 0.0));
        Ray {
            origin,
            dir,
            t_near,
            t_far,
        }
    }

    /// Maps a world point to continuous pixel coordinates (pixel centres at
    /// `i + 0.5`). Only defined for orthographic cameras.
    pub fn project_ortho(&self, p: Vec3) -> Option<(f64, f64)> {
        let Projection::Orthographic { half_width } = self.projection else {
            return None;
        };
        let (right, up, _) = self.basis();
        let aspect = self.width as f64 / self.height as f64;
        let ndc_x = crate::geometry::dot(p, right) / (half_width * aspect);
        let sy = crate::geometry::dot(p, up) / half_width;
        let x = (ndc_x + 1.0) * 0.5 * self.width as f64;
        let y = (1.0 - sy) * 0.5 * self.height as f64;
        Some((x, y))
    }
}

/// `n` perspective cameras evenly spaced in azimuth at a fixed elevation.
pub fn make_orbit_cameras(n: usize, elevation_deg: f64, size: u32) -> Vec<Camera> {
    (0..n)
        .map(|k| Camera::persp(k as f64 * 360.0 / n as f64, elevation_deg, DEFAULT_FOV_DEG, size))
        .collect()
}

/// Parses a camera description: a view name (`front`, `right`, `back`,
/// `left`), `orbit:K` for the `K`-th of 12 orbit cameras, `ortho:AZ:EL` or
/// `persp:AZ:EL:FOV`.
pub fn parse_camera(spec: &str, size: u32) -> Result<Camera> {
    let bad = |m: &str| Error::InvalidArgument(format!("bad camera '{spec}': {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
    let parts: Vec<&str> = spec.split(':').collect();
    let cam = match parts[..] {
        [name] => Camera::named_ortho(name, size).ok_or_else(|| bad("unknown view name"))?,
        ["orbit", k] => {
            let k: usize = k.trim().parse().map_err(|e: std::num::ParseIntError| bad(&e.to_string()))?;
            if k >= 12 {
                return Err(bad("orbit index must be below 12"));
            }
            make_orbit_cameras(12, 0.0, size)[k]
        }
        ["ortho", az, el] => Camera::ortho(num(az)?, num(el)?, size),
        ["persp", az, el, fov] => Camera::persp(num(az)?, num(el)?, num(fov)?, size),
        _ => return Err(bad("expected NAME, orbit:K, ortho:AZ:EL or persp:AZ:EL:FOV")),
    };
    cam.validate()?;
    Ok(cam)
}

/// Uniform azimuth, normally distributed (clamped) elevation, fixed FOV.
pub fn sample_random_camera<R: Rng + ?Sized>(rng: &mut R, size: u32) -> Camera {
    let azimuth = rng.gen_range(0.0..360.0);
    let normal = Normal::new(0.0, RANDOM_ELEVATION_STD_DEG).expect("positive std");
    let elevation = normal
        .sample(rng)
        .clamp(-RANDOM_ELEVATION_CLAMP_DEG, RANDOM_ELEVATION_CLAMP_DEG);
    Camera::persp(azimuth, elevation, DEFAULT_FOV_DEG, size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dot, norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn front_ortho_centre_ray() {
        let cam = Camera::ortho(0.0, 0.0, 64);
        let r = cam.ray_through(32.0, 32.0);
        assert!(r.origin[0].abs() < 1e-12 && r.origin[1].abs() < 1e-12);
        assert!((r.origin[2] - 0.5).abs() < 1e-12);
        assert!((r.dir[2] + 1.0).abs() < 1e-12);
        assert!(r.t_near.abs() < 1e-12 && (r.t_far - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corner_ray_of_wide_ortho_misses() {
        let mut cam = Camera::ortho(0.0, 0.0, 8);
        cam.projection = Projection::Orthographic { half_width: 1.0 };
        let r = cam.cast_ray(0, 0);
        assert_eq!(r.t_near, r.t_far);
        assert!(r.is_empty());
    }

    #[test]
    fn persp_centre_ray_hits_origin() {
        let cam = Camera::persp(37.0, 12.0, 30.0, 64);
        let r = cam.ray_through(32.0, 32.0);
        let to_centre = scale(r.origin, -1.0);
        let t = dot(to_centre, r.dir);
        let closest = r.at(t);
        assert!(norm(closest) < 1e-9);
        assert!((norm(r.dir) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orbit_azimuths() {
        let cams = make_orbit_cameras(12, 0.0, 32);
        let az: Vec<f64> = cams.iter().map(|c| c.azimuth_deg).collect();
        let want: Vec<f64> = (0..12).map(|k| 30.0 * k as f64).collect();
        assert_eq!(az, want);
        assert!(cams.iter().all(|c| c.projection == Projection::Perspective { fov_deg: 30.0 }));
        assert_eq!(make_orbit_cameras(1, 0.0, 8)[0].azimuth_deg, 0.0);
    }

    #[test]
    fn four_orbit_cameras_look_along_axes() {
        let cams = make_orbit_cameras(4, 0.0, 8);
        let dirs: Vec<Vec3> = cams.iter().map(|c| c.basis().2).collect();
        let want = [[0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        for (d, w) in dirs.iter().zip(want) {
            assert!(norm(crate::geometry::sub(*d, w)) < 1e-12, "{d:?} vs {w:?}");
        }
    }

    #[test]
    fn whole_cube_inside_orbit_frustum() {
        let cam = Camera::persp(0.0, 0.0, 30.0, 64);
        let eye = scale(cam.position_dir(), cam.distance);
        let (_, _, f) = cam.basis();
        let half = 15f64.to_radians();
        for i in 0..8 {
            let c = [
                if i & 1 == 0 { -0.5 } else { 0.5 },
                if i & 2 == 0 { -0.5 } else { 0.5 },
                if i & 4 == 0 { -0.5 } else { 0.5 },
            ];
            let v = normalize(crate::geometry::sub(c, eye));
            assert!(dot(v, f).acos() <= half + 1e-12);
        }
    }

    #[test]
    fn random_camera_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cams: Vec<Camera> = (0..10_000).map(|_| sample_random_camera(&mut rng, 16)).collect();
        let n = cams.len() as f64;
        let az_mean = cams.iter().map(|c| c.azimuth_deg).sum::<f64>() / n;
        let el_mean = cams.iter().map(|c| c.elevation_deg).sum::<f64>() / n;
        let el_std = (cams.iter().map(|c| (c.elevation_deg - el_mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((az_mean - 180.0).abs() < 5.0, "azimuth mean {az_mean}");
        assert!((el_std - 20.0).abs() < 1.0, "elevation std {el_std}");
        assert!(cams.iter().all(|c| c.projection == Projection::Perspective { fov_deg: 30.0 }));
        assert!(cams.iter().all(|c| c.elevation_deg.abs() <= 60.0 && (0.0..360.0).contains(&c.azimuth_deg)));
    }

    #[test]
    fn random_camera_reproducible() {
        let a = sample_random_camera(&mut ChaCha8Rng::seed_from_u64(3), 8);
        let b = sample_random_camera(&mut ChaCha8Rng::seed_from_u64(3), 8);
        assert_eq!(a, b);
    }

    #[test]
    fn ortho_projection_inverts_ray_origin() {
        let cam = Camera::ortho(0.0, 0.0, 16);
        let r = cam.cast_ray(5, 11);
        let (x, y) = cam.project_ortho(r.at(0.3)).unwrap();
        assert!((x - 5.5).abs() < 1e-9 && (y - 11.5).abs() < 1e-9);
    }

    #[test]
    fn camera_specs_parse() {
        assert_eq!(parse_camera("back", 8).unwrap(), Camera::ortho(180.0, 0.0, 8));
        assert_eq!(parse_camera("ortho:45:10", 8).unwrap(), Camera::ortho(45.0, 10.0, 8));
        assert_eq!(parse_camera("persp:30:0:30", 8).unwrap(), Camera::persp(30.0, 0.0, 30.0, 8));
        assert_eq!(parse_camera("orbit:3", 8).unwrap(), Camera::persp(90.0, 0.0, DEFAULT_FOV_DEG, 8));
        for bad in ["top", "orbit:12", "ortho:1", "persp:0:0:200", "ortho:x:0"] {
            assert!(parse_camera(bad, 8).is_err(), "{bad}");
        }
    }
}
