//! Multi-layer triplane feature volume.
//!
//! Each of the three axis-aligned planes stores `L` stacked layers of an
//! `R x R` grid of `C`-channel features. A query bilinearly interpolates
//! inside the two nearest layers and then linearly across them along the
//! plane's normal axis; the three plane samples are summed. With `L = 1`
//! this is an ordinary triplane, with `L = R` each plane is a full voxel grid.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Vec3, CUBE_HALF};
use crate::real::Real;

/// The three planes, named by the world axes they span.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Xz, Plane::Yz];

    /// World axes used as `(u, v, w)`; `w` is the layer axis.
    pub const fn axes(self) -> (usize, usize, usize) {
        match self {
            Plane::Xy => (0, 1, 2),
            Plane::Xz => (0, 2, 1),
            Plane::Yz => (1, 2, 0),
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiLayerTriplane<T> {
    resolution: usize,
    layers: usize,
    channels: usize,
    planes: [Vec<T>; 3],
}

/// Interpolation stencil of one plane: up to eight `(offset, weight)` taps.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub offsets: [usize; 8],
    pub weights: [f64; 8],
}

#[inline]
fn axis_lerp(c: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let f = c.clamp(0.0, 1.0) * (n - 1) as f64;
    // f is non-negative, so truncation is floor
    let i0 = (f as usize).min(n - 2);
    (i0, i0 + 1, f - i0 as f64)
}

/// Maps a world coordinate to `[0, 1]`, clamping outside the cube.
#[inline]
pub fn normalize_coord(x: f64) -> f64 {
    ((x + CUBE_HALF) / (2.0 * CUBE_HALF)).clamp(0.0, 1.0)
}

impl<T: Real> MultiLayerTriplane<T> {
    pub fn zeros(resolution: usize, layers: usize, channels: usize) -> Result<Self> {
        if resolution == 0 || layers == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "triplane dimensions must be >= 1 (R={resolution}, L={layers}, C={channels})"
            )));
        }
        let n = layers * resolution * resolution * channels;
        Ok(Self {
            resolution,
            layers,
            channels,
            planes: [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]],
        })
    }

    /// Features drawn i.i.d. from `Normal(0, std)`.
    pub fn random<R: Rng + ?Sized>(resolution: usize, layers: usize, channels: usize, std: f64, rng: &mut R) -> Result<Self> {
        let mut tp = Self::zeros(resolution, layers, channels)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for plane in &mut tp.planes {
            for v in plane.iter_mut() {
                *v = T::of(normal.sample(rng));
            }
        }
        Ok(tp)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plane(&self, p: Plane) -> &[T] {
        &self.planes[p.index()]
    }

    pub fn plane_mut(&mut self, p: Plane) -> &mut [T] {
        &mut self.planes[p.index()]
    }

    pub fn planes(&self) -> &[Vec<T>; 3] {
        &self.planes
    }

    pub fn planes_mut(&mut self) -> &mut [Vec<T>; 3] {
        &mut self.planes
    }

    pub fn param_count(&self) -> usize {
        3 * self.planes[0].len()
    }

    /// Offset of the feature vector at `(layer, i, j)`, `i` along `u`, `j` along `v`.
    #[inline]
    pub fn offset(&self, layer: usize, i: usize, j: usize) -> usize {
        ((layer * self.resolution + i) * self.resolution + j) * self.channels
    }

    pub fn feature(&self, p: Plane, layer: usize, i: usize, j: usize) -> &[T] {
        let o = self.offset(layer, i, j);
        &self.planes[p.index()][o..o + self.channels]
    }

    pub fn feature_mut(&mut self, p: Plane, layer: usize, i: usize, j: usize) -> &mut [T] {
        let o = self.offset(layer, i, j);
        let c = self.channels;
        &mut self.planes[p.index()][o..o + c]
    }

    /// Stencil for plane coordinates `(u, v)` and layer coordinate `w`, all in `[0, 1]`.
    #[inline]
    pub fn stencil(&self, u: f64, v: f64, w: f64) -> Stencil {
        let (i0, i1, tu) = axis_lerp(u, self.resolution);
        let (j0, j1, tv) = axis_lerp(v, self.resolution);
        let (l0, l1, tw) = axis_lerp(w, self.layers);
        let (r, c) = (self.resolution, self.channels);
        let at = |l: usize, i: usize, j: usize| ((l * r + i) * r + j) * c;
        let (su, sv, sw) = (1.0 - tu, 1.0 - tv, 1.0 - tw);
        Stencil {
            offsets: [
                at(l0, i0, j0),
                at(l0, i0, j1),
                at(l0, i1, j0),
                at(l0, i1, j1),
                at(l1, i0, j0),
                at(l1, i0, j1),
                at(l1, i1, j0),
                at(l1, i1, j1),
            ],
            weights: [
                sw * su * sv,
                sw * su * tv,
                sw * tu * sv,
                sw * tu * tv,
                tw * su * sv,
                tw * su * tv,
                tw * tu * sv,
                tw * tu * tv,
            ],
        }
    }

    /// Stencils of all three planes for a world point.
    #[inline]
    pub fn point_stencils(&self, p: Vec3) -> [Stencil; 3] {
        let [x, y, z] = p.map(normalize_coord);
        [self.stencil(x, y, z), self.stencil(x, z, y), self.stencil(y, z, x)]
    }

    /// Interpolated features of one plane, written into `out` (length `C`).
    pub fn sample_plane(&self, p: Plane, u: f64, v: f64, w: f64, out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        let s = self.stencil(u, v, w);
        accumulate(&self.planes[p.index()], &s, self.channels, out);
    }

    /// Sum of the three plane samples at a world point (clamped to the cube).
    pub fn sample_point(&self, p: Vec3, out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        let st = self.point_stencils(p);
        for (k, s) in st.iter().enumerate() {
            accumulate(&self.planes[k], s, self.channels, out);
        }
    }

    /// Features for a batch of points, row-major `N x C`.
    pub fn gather(&self, points: &[Vec3], out: &mut [T]) {
        let c = self.channels;
        for (p, row) in points.iter().zip(out.chunks_exact_mut(c)) {
            self.sample_point(*p, row);
        }
    }

    /// Adds the transpose of [`gather`](Self::gather) applied to `grad_out`
    /// (row-major `N x C`) into `grad`.
    pub fn scatter(&self, points: &[Vec3], grad_out: &[T], grad: &mut TriplaneGrad<T>) {
        let c = self.channels;
        for (p, g) in points.iter().zip(grad_out.chunks_exact(c)) {
            let st = self.point_stencils(*p);
            for (k, s) in st.iter().enumerate() {
                let dst = &mut grad.planes[k];
                for t in 0..8 {
                    let w = T::of(s.weights[t]);
                    if w == T::zero() {
                        continue;
                    }
                    let row = &mut dst[s.offsets[t]..s.offsets[t] + c];
                    for (d, &gv) in row.iter_mut().zip(g) {
                        *d = *d + w * gv;
                    }
                }
            }
        }
    }

    /// `a * self + b * other`, elementwise over all features.
    pub fn linear_combination(&self, a: T, other: &Self, b: T) -> Self {
        let mut out = self.clone();
        for k in 0..3 {
            for (o, &y) in out.planes[k].iter_mut().zip(&other.planes[k]) {
                *o = a * *o + b * y;
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.planes
            .iter()
            .flat_map(|p| p.iter())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.planes.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> MultiLayerTriplane<U> {
        MultiLayerTriplane {
            resolution: self.resolution,
            layers: self.layers,
            channels: self.channels,
            planes: self.planes.clone().map(|p| p.into_iter().map(|v| U::of(v.f64())).collect()),
        }
    }

}

#[inline]
fn accumulate<T: Real>(plane: &[T], s: &Stencil, c: usize, out: &mut [T]) {
    for t in 0..8 {
        let w = T::of(s.weights[t]);
        if w == T::zero() {
            continue;
        }
        let row = &plane[s.offsets[t]..s.offsets[t] + c];
        for (o, &f) in out.iter_mut().zip(row) {
            *o = *o + w * f;
        }
    }
}

/// Gradient buffer shaped like a triplane.
#[derive(Clone, Debug)]
pub struct TriplaneGrad<T> {
    pub planes: [Vec<T>; 3],
}

impl<T: Real> TriplaneGrad<T> {
    pub fn zeros_like(tp: &MultiLayerTriplane<T>) -> Self {
        let n = tp.planes[0].len();
        Self {
            planes: [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for k in 0..3 {
            for (a, &b) in self.planes[k].iter_mut().zip(&other.planes[k]) {
                *a = *a + b;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for p in &mut self.planes {
            p.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tp(r: usize, l: usize, c: usize, seed: u64) -> MultiLayerTriplane<f64> {
        MultiLayerTriplane::random(r, l, c, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn grid_nodes_return_stored_features() {
        let tp = random_tp(5, 3, 4, 1);
        let mut out = vec![0.0; 4];
        for (l, i, j) in [(0, 0, 0), (1, 2, 3), (2, 4, 4), (1, 4, 0)] {
            tp.sample_plane(Plane::Xz, i as f64 / 4.0, j as f64 / 4.0, l as f64 / 2.0, &mut out);
            let want = tp.feature(Plane::Xz, l, i, j);
            for (a, b) in out.iter().zip(want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_layer_ignores_w() {
        let tp = random_tp(6, 1, 3, 2);
        let (mut a, mut b) = (vec![0.0; 3], vec![0.0; 3]);
        for w in [0.0, 0.13, 0.5, 0.77] {
            tp.sample_plane(Plane::Yz, 0.31, 0.62, w, &mut a);
            tp.sample_plane(Plane::Yz, 0.31, 0.62, 1.0 - w, &mut b);
            assert_eq!(a, b);
        }
    }

    /// Independent trilinear interpolation over an explicit `R^3` voxel grid.
    fn trilinear(grid: &[Vec<Vec<Vec<f64>>>], r: usize, p: Vec3, c: usize) -> Vec<f64> {
        let coord = |x: f64| {
            let f = ((x + 0.5).clamp(0.0, 1.0)) * (r - 1) as f64;
            let i = (f.floor() as usize).min(r - 2);
            (i, f - i as f64)
        };
        let (ix, tx) = coord(p[0]);
        let (iy, ty) = coord(p[1]);
        let (iz, tz) = coord(p[2]);
        let mut out = vec![0.0; c];
        for dx in 0..2 {
            for dy in 0..2 {
                for dz in 0..2 {
                    let w = (if dx == 0 { 1.0 - tx } else { tx })
                        * (if dy == 0 { 1.0 - ty } else { ty })
                        * (if dz == 0 { 1.0 - tz } else { tz });
                    for ch in 0..c {
                        out[ch] += w * grid[ix + dx][iy + dy][iz + dz][ch];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn full_layer_stack_equals_voxel_grid() {
        let (r, c) = (6, 3);
        let mut tp = random_tp(r, r, c, 3);
        tp.plane_mut(Plane::Xz).iter_mut().for_each(|v| *v = 0.0);
        tp.plane_mut(Plane::Yz).iter_mut().for_each(|v| *v = 0.0);
        // XY plane: u = x, v = y, layers along z
        let mut grid = vec![vec![vec![vec![0.0; c]; r]; r]; r];
        for (x, gx) in grid.iter_mut().enumerate() {
            for (y, gy) in gx.iter_mut().enumerate() {
                for (z, gz) in gy.iter_mut().enumerate() {
                    gz.copy_from_slice(tp.feature(Plane::Xy, z, x, y));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut out = vec![0.0; c];
        for _ in 0..100 {
            let p = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            tp.sample_point(p, &mut out);
            let want = trilinear(&grid, r, p, c);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_and_constant_fields() {
        let mut tp = MultiLayerTriplane::<f64>::zeros(4, 2, 3).unwrap();
        let mut out = vec![1.0; 3];
        tp.sample_point([0.1, -0.2, 0.3], &mut out);
        assert_eq!(out, vec![0.0; 3]);
        let k = [0.5, -1.0, 2.0];
        for chunk in tp.plane_mut(Plane::Xy).chunks_exact_mut(3) {
            chunk.copy_from_slice(&k);
        }
        for p in [[0.0; 3], [0.49, -0.49, 0.11], [-0.3, 0.2, 0.45]] {
            tp.sample_point(p, &mut out);
            for (a, b) in out.iter().zip(k) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centre_sample_is_sum_of_planes() {
        let tp = random_tp(7, 3, 2, 5);
        let mut total = vec![0.0; 2];
        tp.sample_point([0.0; 3], &mut total);
        let mut acc = vec![0.0; 2];
        let mut one = vec![0.0; 2];
        for pl in Plane::ALL {
            tp.sample_plane(pl, 0.5, 0.5, 0.5, &mut one);
            for (a, b) in acc.iter_mut().zip(&one) {
                *a += b;
            }
        }
        // R = 7 puts the centre on node 3; L = 3 puts it on the middle layer
        let mut direct = vec![0.0; 2];
        for pl in Plane::ALL {
            for (d, f) in direct.iter_mut().zip(tp.feature(pl, 1, 3, 3)) {
                *d += f;
            }
        }
        for k in 0..2 {
            assert!((total[k] - acc[k]).abs() < 1e-12);
            assert!((total[k] - direct[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn scatter_is_adjoint_of_gather() {
        let tp = random_tp(5, 2, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec3> = (0..20)
            .map(|_| [rng.gen_range(-0.6..0.6), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)])
            .collect();
        let g: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut feats = vec![0.0; 60];
        tp.gather(&pts, &mut feats);
        let lhs: f64 = feats.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut grad = TriplaneGrad::zeros_like(&tp);
        tp.scatter(&pts, &g, &mut grad);
        let rhs: f64 = (0..3)
            .map(|k| tp.planes()[k].iter().zip(&grad.planes[k]).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn finite_difference_slope_is_bounded() {
        let tp = random_tp(8, 3, 2, 6);
        let bound = tp.max_abs() * 7.0 * 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (mut a, mut b) = (vec![0.0; 2], vec![0.0; 2]);
        for _ in 0..200 {
            let p = [rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.45)];
            let d = crate::geometry::normalize([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let h = 1e-4;
            tp.sample_point(crate::geometry::madd(p, d, h), &mut a);
            tp.sample_point(crate::geometry::madd(p, d, -h), &mut b);
            for k in 0..2 {
                // normalized coordinates move at the same rate as world units
                assert!(((a[k] - b[k]) / (2.0 * h)).abs() <= bound + 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn sampling_is_linear_in_features(
            sa in -3.0f64..3.0, sb in -3.0f64..3.0,
            x in -0.5f64..0.5, y in -0.5f64..0.5, z in -0.5f64..0.5,
            seed in 0u64..1000,
        ) {
            let t1 = random_tp(4, 2, 3, seed);
            let t2 = random_tp(4, 2, 3, seed + 1);
            let mix = t1.linear_combination(sa, &t2, sb);
            let (mut m, mut a, mut b) = (vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]);
            mix.sample_point([x, y, z], &mut m);
            t1.sample_point([x, y, z], &mut a);
            t2.sample_point([x, y, z], &mut b);
            for k in 0..3 {
                prop_assert!((m[k] - (sa * a[k] + sb * b[k])).abs() < 1e-9);
            }
        }
    }
}
