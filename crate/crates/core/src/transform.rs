//! Planar homographies for moving text layers: rotation, translation,
//! scaling and four-point quad warps, plus inverse-mapping resampling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foreground::ForegroundLayer;
use crate::raster::{BinaryMask, RasterImage};
use crate::scalar::{quantize_255, Real};

/// 3×3 homography mapping source pixel coordinates to destination ones.
///
/// Stored scale-normalized (`h[2][2] == 1`) whenever `h[2][2] != 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform2D<T> {
    h: [[T; 3]; 3],
}

impl<T: Real> Default for Transform2D<T> {
    fn default() -> Self {
        Self::identity()
    }
}

fn det3<T: Real>(m: &[[T; 3]; 3]) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn mul3<T: Real>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let mut out = [[T::zero(); 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

impl<T: Real> Transform2D<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            h: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    /// Wraps a raw matrix, normalizing its scale and rejecting singular ones.
    pub fn from_matrix(mut h: [[T; 3]; 3]) -> Result<Self> {
        if h.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SingularTransform);
        }
        let s = h[2][2];
        if s != T::zero() {
            for v in h.iter_mut().flatten() {
                *v = *v / s;
            }
        }
        if det3(&h).abs() <= T::lit(1e-12) {
            return Err(Error::SingularTransform);
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &[[T; 3]; 3] {
        &self.h
    }

    pub fn determinant(&self) -> T {
        det3(&self.h)
    }

    /// Maps a point; `None` when it lands on the line at infinity.
    pub fn map_point(&self, x: T, y: T) -> Option<(T, T)> {
        let h = &self.h;
        let w = h[2][0] * x + h[2][1] * y + h[2][2];
        if w.abs() <= T::epsilon() {
            return None;
        }
        let u = (h[0][0] * x + h[0][1] * y + h[0][2]) / w;
        let v = (h[1][0] * x + h[1][1] * y + h[1][2]) / w;
        Some((u, v))
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.h;
        let det = det3(m);
        if det.abs() <= T::lit(1e-12) || !det.is_finite() {
            return Err(Error::SingularTransform);
        }
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        let mut inv = adj;
        for v in inv.iter_mut().flatten() {
            *v = *v / det;
        }
        Self::from_matrix(inv)
    }

    /// Largest entry-wise difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.h
            .iter()
            .flatten()
            .zip(other.h.iter().flatten())
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), |m, v| m.max(v))
    }

    pub fn cast<U: Real>(&self) -> Transform2D<U> {
        Transform2D {
            h: self.h.map(|row| row.map(|v| U::lit(v.to_f64_lossy()))),
        }
    }
}

/// `T(center) · R(theta) · T(-center)`, mapping
/// `(x, y) -> (x cosθ − y sinθ, x sinθ + y cosθ)` about `center`.
/// In y-down raster coordinates a positive angle turns content clockwise
/// on screen.
pub fn make_rotation<T: Real>(theta: T, center: (T, T)) -> Result<Transform2D<T>> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument("rotation angle must be finite".into()));
    }
    let (s, c) = theta.sin_cos();
    let (cx, cy) = center;
    let (o, z) = (T::one(), T::zero());
    Transform2D::from_matrix([
        [c, -s, cx - c * cx + s * cy],
        [s, c, cy - s * cx - c * cy],
        [z, z, o],
    ])
}

pub fn make_translation<T: Real>(dx: T, dy: T) -> Transform2D<T> {
    let (o, z) = (T::one(), T::zero());
    Transform2D {
        h: [[o, z, dx], [z, o, dy], [z, z, o]],
    }
}

pub fn make_scaling<T: Real>(sx: T, sy: T, center: (T, T)) -> Result<Transform2D<T>> {
    if !(sx > T::zero() && sy > T::zero()) || !sx.is_finite() || !sy.is_finite() {
        return Err(Error::NonPositiveScale(sx.to_f64_lossy(), sy.to_f64_lossy()));
    }
    let (cx, cy) = center;
    let (o, z) = (T::one(), T::zero());
    Transform2D::from_matrix([[sx, z, cx - sx * cx], [z, sy, cy - sy * cy], [z, z, o]])
}

/// Four ordered corner correspondences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadWarp<T> {
    pub src: [(T, T); 4],
    pub dst: [(T, T); 4],
}

fn cross<T: Real>(o: (T, T), a: (T, T), b: (T, T)) -> T {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn check_quad<T: Real>(name: &str, q: &[(T, T); 4]) -> Result<T> {
    if q.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::DegenerateQuad(format!("{name} quad has non-finite corners")));
    }
    let scale = q
        .iter()
        .flat_map(|p| [p.0.abs(), p.1.abs()])
        .fold(T::one(), |m, v| m.max(v));
    let eps = T::lit(1e-9) * scale * scale;
    for i in 0..4 {
        for j in i + 1..4 {
            for k in j + 1..4 {
                if cross(q[i], q[j], q[k]).abs() <= eps {
                    return Err(Error::DegenerateQuad(format!("{name} quad has collinear corners {i}, {j}, {k}")));
                }
            }
        }
    }
    let mut area = T::zero();
    for i in 0..4 {
        let (a, b) = (q[i], q[(i + 1) % 4]);
        area = area + a.0 * b.1 - b.0 * a.1;
    }
    Ok(area)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve8<T: Real>(mut a: [[T; 8]; 8], mut b: [T; 8]) -> Option<[T; 8]> {
    let scale = a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = scale * T::epsilon() * T::lit(64.0);
    for col in 0..8 {
        let piv = (col..8).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() <= tiny {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..8 {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = [T::zero(); 8];
    for row in (0..8).rev() {
        let mut s = b[row];
        for k in row + 1..8 {
            s = s - a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// The unique homography taking each `src` corner to its `dst` corner,
/// from the 8×8 system with `h[2][2] = 1`.
pub fn make_quad_warp<T: Real>(q: &QuadWarp<T>) -> Result<Transform2D<T>> {
    let a_src = check_quad("source", &q.src)?;
    let a_dst = check_quad("destination", &q.dst)?;
    if (a_src > T::zero()) != (a_dst > T::zero()) {
        return Err(Error::DegenerateQuad("source and destination winding differ".into()));
    }
    let mut a = [[T::zero(); 8]; 8];
    let mut b = [T::zero(); 8];
    for i in 0..4 {
        let (x, y) = q.src[i];
        let (u, v) = q.dst[i];
        let (o, z) = (T::one(), T::zero());
        a[2 * i] = [x, y, o, z, z, z, -u * x, -u * y];
        b[2 * i] = u;
        a[2 * i + 1] = [z, z, z, x, y, o, -v * x, -v * y];
        b[2 * i + 1] = v;
    }
    let s = solve8(a, b).ok_or(Error::SingularSystem)?;
    Transform2D::from_matrix([[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], T::one()]])
        .map_err(|_| Error::SingularSystem)
}

/// `a ∘ b`: apply `b` first, then `a`.
pub fn compose<T: Real>(a: &Transform2D<T>, b: &Transform2D<T>) -> Transform2D<T> {
    let mut h = mul3(&a.h, &b.h);
    let s = h[2][2];
    if s != T::zero() && s.is_finite() {
        for v in h.iter_mut().flatten() {
            *v = *v / s;
        }
    }
    Transform2D { h }
}

/// Counts produced by [`warp_layer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WarpStats {
    /// Source mask pixels whose image lands outside the output canvas.
    pub clipped: usize,
}

#[inline]
fn snap<T: Real>(v: T) -> T {
    let r = v.round();
    let tol = T::epsilon() * T::lit(64.0) * v.abs().max(T::one());
    if (v - r).abs() <= tol {
        r
    } else {
        v
    }
}

/// Bilinear footprint of a source position: `(x0, y0, x1, y1, fx, fy)`, or
/// `None` outside `[0, w-1] × [0, h-1]`.
#[inline]
pub(crate) fn footprint<T: Real>(sx: T, sy: T, w: usize, h: usize) -> Option<(usize, usize, usize, usize, T, T)> {
    let sx = snap(sx);
    let sy = snap(sy);
    if !(sx >= T::zero() && sy >= T::zero()) {
        return None;
    }
    let (wl, hl) = (T::from_usize_lossy(w - 1), T::from_usize_lossy(h - 1));
    if sx > wl || sy > hl {
        return None;
    }
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let x0 = x0.to_usize().unwrap_or(0);
    let y0 = y0.to_usize().unwrap_or(0);
    Some((x0, y0, (x0 + 1).min(w - 1), (y0 + 1).min(h - 1), fx, fy))
}

/// Inverse-mapping resampler: every destination pixel pulls from
/// `t⁻¹ · dest`. The mask is interpolated bilinearly and thresholded at 0.5.
/// Image samples are interpolated over masked source pixels only, so glyph
/// edges do not pick up the black fill outside the layer.
pub fn warp_layer<T: Real>(layer: &ForegroundLayer, t: &Transform2D<T>, out_dims: (usize, usize)) -> Result<(ForegroundLayer, WarpStats)> {
    let inv = t.inverse()?;
    let (sw, sh) = layer.dims();
    let (dw, dh) = out_dims;
    let src = layer.image.as_raw();
    let src_mask = layer.mask.bits();
    let half = T::lit(0.5);

    let rows: Vec<(Vec<u8>, Vec<bool>)> = (0..dh)
        .into_par_iter()
        .map(|y| {
            let mut row_px = vec![0u8; dw * 3];
            let mut row_m = vec![false; dw];
            if sw == 0 || sh == 0 {
                return (row_px, row_m);
            }
            for x in 0..dw {
                let Some((sx, sy)) = inv.map_point(T::from_usize_lossy(x), T::from_usize_lossy(y)) else {
                    continue;
                };
                let Some((x0, y0, x1, y1, fx, fy)) = footprint(sx, sy, sw, sh) else {
                    continue;
                };
                let taps = [
                    (x0, y0, (T::one() - fx) * (T::one() - fy)),
                    (x1, y0, fx * (T::one() - fy)),
                    (x0, y1, (T::one() - fx) * fy),
                    (x1, y1, fx * fy),
                ];
                let mut mw = T::zero();
                let mut acc = [T::zero(); 3];
                for &(px, py, wt) in &taps {
                    let i = py * sw + px;
                    if src_mask[i] && wt > T::zero() {
                        mw = mw + wt;
                        for c in 0..3 {
                            acc[c] = acc[c] + wt * T::lit(src[i * 3 + c] as f64);
                        }
                    }
                }
                if mw >= half {
                    row_m[x] = true;
                    for c in 0..3 {
                        row_px[x * 3 + c] = quantize_255(acc[c] / mw);
                    }
                }
            }
            (row_px, row_m)
        })
        .collect();

    let mut data = Vec::with_capacity(dw * dh * 3);
    let mut bits = Vec::with_capacity(dw * dh);
    for (p, m) in rows {
        data.extend_from_slice(&p);
        bits.extend_from_slice(&m);
    }

    let mut clipped = 0;
    for y in 0..sh {
        for x in 0..sw {
            if !layer.mask.get(x, y) {
                continue;
            }
            let inside = t
                .map_point(T::from_usize_lossy(x), T::from_usize_lossy(y))
                .map(|(u, v)| {
                    let (u, v) = (snap(u), snap(v));
                    u >= -half && v >= -half && u < T::from_usize_lossy(dw) - half && v < T::from_usize_lossy(dh) - half
                })
                .unwrap_or(false);
            if !inside {
                clipped += 1;
            }
        }
    }

    let image = RasterImage::from_raw(dw, dh, data)?;
    let mask = BinaryMask::from_bits(dw, dh, bits)?;
    Ok((
        ForegroundLayer {
            image,
            mask,
            regions: layer.regions.clone(),
        },
        WarpStats { clipped },
    ))
}

/// [`warp_layer`] without the statistics.
pub fn apply_transform<T: Real>(layer: &ForegroundLayer, t: &Transform2D<T>, out_dims: (usize, usize)) -> Result<ForegroundLayer> {
    warp_layer(layer, t, out_dims).map(|(l, _)| l)
}

/// One transform as written in an edit script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformSpec {
    Rotate {
        theta_deg: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    Translate([f64; 2]),
    Scale {
        sx: f64,
        sy: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    Warp {
        src: [[f64; 2]; 4],
        dst: [[f64; 2]; 4],
    },
}

impl TransformSpec {
    /// Short tag used in artifact filenames.
    pub fn kind(&self) -> &'static str {
        match self {
            TransformSpec::Rotate { .. } => "rotation",
            TransformSpec::Translate(_) => "translation",
            TransformSpec::Scale { .. } => "scaling",
            TransformSpec::Warp { .. } => "warp",
        }
    }

    /// Builds the homography; `default_center` fills a missing pivot.
    pub fn to_transform<T: Real>(&self, default_center: (f64, f64)) -> Result<Transform2D<T>> {
        let pt = |c: &Option<[f64; 2]>| {
            let [x, y] = c.unwrap_or([default_center.0, default_center.1]);
            (T::lit(x), T::lit(y))
        };
        match self {
            TransformSpec::Rotate { theta_deg, center } => make_rotation(T::lit(theta_deg.to_radians()), pt(center)),
            TransformSpec::Translate([dx, dy]) => Ok(make_translation(T::lit(*dx), T::lit(*dy))),
            TransformSpec::Scale { sx, sy, center } => make_scaling(T::lit(*sx), T::lit(*sy), pt(center)),
            TransformSpec::Warp { src, dst } => {
                let conv = |q: &[[f64; 2]; 4]| q.map(|[x, y]| (T::lit(x), T::lit(y)));
                make_quad_warp(&QuadWarp {
                    src: conv(src),
                    dst: conv(dst),
                })
            }
        }
    }
}

/// Composes a list applied left to right: the first entry acts first.
pub fn chain<T: Real>(specs: &[TransformSpec], default_center: (f64, f64)) -> Result<Transform2D<T>> {
    specs.iter().try_fold(Transform2D::identity(), |acc, s| {
        Ok(compose(&s.to_transform(default_center)?, &acc))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: (f64, f64), b: (f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
    }

    #[test]
    fn rotation_cases() {
        let r0 = make_rotation(0.0, (3.0, 4.0)).unwrap();
        assert!(r0.max_abs_diff(&Transform2D::identity()) < 1e-15);
        let r = make_rotation(PI / 2.0, (0.0, 0.0)).unwrap();
        assert!(close(r.map_point(1.0, 0.0).unwrap(), (0.0, 1.0)));
        let r = make_rotation(PI, (5.0, 5.0)).unwrap();
        assert!(close(r.map_point(7.0, 5.0).unwrap(), (3.0, 5.0)));
    }

    #[test]
    fn translation_cases() {
        assert_eq!(make_translation(0.0, 0.0), Transform2D::identity());
        let t = make_translation(3.0, -2.0);
        assert_eq!(t.map_point(10.0, 10.0), Some((13.0, 8.0)));
        let ab = compose(&make_translation(1.5, 2.0), &make_translation(-4.0, 0.25));
        assert!(ab.max_abs_diff(&make_translation(-2.5, 2.25)) < 1e-15);
    }

    #[test]
    fn scaling_cases() {
        let s = make_scaling(1.0, 1.0, (7.0, 7.0)).unwrap();
        assert!(s.max_abs_diff(&Transform2D::identity()) < 1e-15);
        let s = make_scaling(2.0, 2.0, (0.0, 0.0)).unwrap();
        assert!(close(s.map_point(3.0, 4.0).unwrap(), (6.0, 8.0)));
        let s = make_scaling(0.5, 2.0, (10.0, 10.0)).unwrap();
        assert!(close(s.map_point(12.0, 10.0).unwrap(), (11.0, 10.0)));
        assert!(close(s.map_point(10.0, 12.0).unwrap(), (10.0, 14.0)));
        assert!(matches!(make_scaling(0.0, 1.0, (0.0, 0.0)), Err(Error::NonPositiveScale(..))));
        assert!(matches!(make_scaling(1.0, -2.0, (0.0, 0.0)), Err(Error::NonPositiveScale(..))));
    }

    #[test]
    fn quad_identity_and_translation() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let id = make_quad_warp(&QuadWarp { src: sq, dst: sq }).unwrap();
        assert!(id.max_abs_diff(&Transform2D::identity()) < 1e-12);
        let moved = sq.map(|(x, y)| (x + 5.0, y));
        let t = make_quad_warp(&QuadWarp { src: sq, dst: moved }).unwrap();
        assert!(t.max_abs_diff(&make_translation(5.0, 0.0)) < 1e-12);
    }

    #[test]
    fn quad_rejects_degenerate() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let line = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 1.0)];
        assert!(matches!(make_quad_warp(&QuadWarp { src: sq, dst: line }), Err(Error::DegenerateQuad(_))));
        let flipped = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)];
        assert!(matches!(make_quad_warp(&QuadWarp { src: sq, dst: flipped }), Err(Error::DegenerateQuad(_))));
    }

    #[test]
    fn compose_order_and_inverse() {
        let t = make_translation(3.0, 0.0);
        let s = make_scaling(2.0, 2.0, (0.0, 0.0)).unwrap();
        // scale first, then translate
        let ts = compose(&t, &s);
        assert!(close(ts.map_point(1.0, 1.0).unwrap(), (5.0, 2.0)));
        let r = make_rotation(0.3, (4.0, -2.0)).unwrap();
        assert!(compose(&r, &r.inverse().unwrap()).max_abs_diff(&Transform2D::identity()) < 1e-9);
        let q = make_rotation(PI / 2.0, (0.0, 0.0)).unwrap();
        assert!(compose(&q, &q).max_abs_diff(&make_rotation(PI, (0.0, 0.0)).unwrap()) < 1e-12);
    }

    #[test]
    fn singular_rejected() {
        let z = [[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(Transform2D::from_matrix(z), Err(Error::SingularTransform)));
    }

    fn dot_layer(w: usize, h: usize, x: usize, y: usize) -> ForegroundLayer {
        let mut img = RasterImage::new(w, h);
        img.set_pixel(x, y, [200, 100, 50]);
        let mut m = BinaryMask::new(w, h);
        m.set(x, y, true);
        ForegroundLayer::new(img, m, vec![]).unwrap()
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = RasterImage::from_fn(9, 7, |x, y| [(x * 28) as u8, (y * 36) as u8, ((x + y) * 10) as u8]);
        let mask = BinaryMask::from_fn(9, 7, |x, y| (x * y) % 3 != 0);
        let layer = ForegroundLayer::new(img, mask, vec![]).unwrap();
        let out = apply_transform(&layer, &Transform2D::<f64>::identity(), (9, 7)).unwrap();
        assert_eq!(out.image, layer.image);
        assert_eq!(out.mask, layer.mask);
    }

    #[test]
    fn integer_translation_moves_pixel() {
        let layer = dot_layer(10, 10, 2, 2);
        let (out, stats) = warp_layer(&layer, &make_translation(3.0f64, 0.0), (10, 10)).unwrap();
        assert_eq!(out.mask.count(), 1);
        assert!(out.mask.get(5, 2));
        assert_eq!(out.image.pixel(5, 2), [200, 100, 50]);
        assert_eq!(stats.clipped, 0);
        let (gone, stats) = warp_layer(&layer, &make_translation(30.0f64, 0.0), (10, 10)).unwrap();
        assert!(gone.mask.is_empty());
        assert_eq!(stats.clipped, 1);
    }

    #[test]
    fn quarter_turn_permutes_odd_square() {
        let n = 7;
        let img = RasterImage::from_fn(n, n, |x, y| [(x * 30) as u8, (y * 30) as u8, 77]);
        let mask = BinaryMask::from_fn(n, n, |x, y| x < 5 && y < 3);
        let layer = ForegroundLayer::new(img, mask, vec![]).unwrap();
        let c = ((n - 1) as f64 / 2.0, (n - 1) as f64 / 2.0);
        let r = make_rotation(PI / 2.0, c).unwrap();
        let out = apply_transform(&layer, &r, (n, n)).unwrap();
        assert_eq!(out.mask.count(), layer.mask.count());
        // (x, y) -> (c - (y - c), c + (x - c)) = (n-1-y, x)
        for y in 0..n {
            for x in 0..n {
                assert_eq!(out.mask.get(n - 1 - y, x), layer.mask.get(x, y));
                assert_eq!(out.image.pixel(n - 1 - y, x), layer.image.pixel(x, y));
            }
        }
    }

    #[test]
    fn spec_json_and_chain() {
        let specs: Vec<TransformSpec> = serde_json::from_str(
            r#"[{"scale": {"sx": 2, "sy": 2, "center": [0, 0]}}, {"translate": [3, 0]}]"#,
        )
        .unwrap();
        let t: Transform2D<f64> = chain(&specs, (0.0, 0.0)).unwrap();
        assert!(close(t.map_point(1.0, 1.0).unwrap(), (5.0, 2.0)));
        let r: TransformSpec = serde_json::from_str(r#"{"rotate": {"theta_deg": 90}}"#).unwrap();
        let rt: Transform2D<f64> = r.to_transform((1.0, 1.0)).unwrap();
        assert!(close(rt.map_point(2.0, 1.0).unwrap(), (1.0, 2.0)));
        let w: TransformSpec =
            serde_json::from_str(r#"{"warp": {"src": [[0,0],[1,0],[1,1],[0,1]], "dst": [[0,0],[2,0],[2,2],[0,2]]}}"#).unwrap();
        assert_eq!(w.kind(), "warp");
    }

    #[test]
    fn f32_matches_f64() {
        let a: Transform2D<f32> = make_rotation(0.4f32, (10.0, 20.0)).unwrap();
        let b: Transform2D<f64> = make_rotation(0.4f64, (10.0, 20.0)).unwrap();
        assert!(a.cast::<f64>().max_abs_diff(&b) < 1e-5);
    }
}
