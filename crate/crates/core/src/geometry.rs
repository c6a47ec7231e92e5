//! Small 3-vector helpers and the reconstruction volume.

pub type Vec3 = [f64; 3];

/// Half extent of the reconstruction cube `[-0.5, 0.5]^3` in world units.
pub const CUBE_HALF: f64 = 0.5;

/// Centimetres per world unit.
pub const UNIT_CM: f64 = 100.0;

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn madd(a: Vec3, d: Vec3, t: f64) -> Vec3 {
    [a[0] + d[0] * t, a[1] + d[1] * t, a[2] + d[2] * t]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    if n == 0.0 {
        a
    } else {
        scale(a, 1.0 / n)
    }
}

/// Slab intersection of a ray with an axis-aligned box.
///
/// Returns `(t_near, t_far)` clipped to `t >= t_min`; a miss yields `None`.
pub fn ray_box(origin: Vec3, dir: Vec3, lo: Vec3, hi: Vec3, t_min: f64) -> Option<(f64, f64)> {
    let mut t0 = t_min;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-300 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let mut ta = (lo[a] - origin[a]) * inv;
        let mut tb = (hi[a] - origin[a]) * inv;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Intersection with the reconstruction cube.
pub fn ray_cube(origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
    let h = CUBE_HALF;
    ray_box(origin, dir, [-h; 3], [h; 3], 0.0)
}

/// SplitMix64 finaliser, used for counter-based seeding.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and two counters.
#[inline]
pub fn stream_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ a.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_ray_through_cube() {
        let (t0, t1) = ray_cube([0.0, 0.0, 2.0], [0.0, 0.0, -1.0]).unwrap();
        assert!((t0 - 1.5).abs() < 1e-12 && (t1 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn parallel_ray_outside_misses() {
        assert!(ray_cube([0.7, 0.0, 2.0], [0.0, 0.0, -1.0]).is_none());
    }
}
