//! Raster containers shared by every stage.
//!
//! Coordinates: `x` grows rightward, `y` downward, origin at the center of
//! the top-left pixel. Storage is row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{quantize, unit, Real};

/// Row-major 8-bit RGB image.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::CorruptData(format!(
                "expected {} samples for {}x{} RGB, got {}",
                width * height * 3,
                width,
                height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn as_raw_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Normalized float view, one value per sample.
    pub fn to_unit<T: Real>(&self) -> Vec<T> {
        self.data.iter().map(|&v| unit(v)).collect()
    }

    /// Inverse of [`to_unit`](Self::to_unit), clamping and rounding half up.
    pub fn from_unit<T: Real>(width: usize, height: usize, values: &[T]) -> Result<Self> {
        Self::from_raw(width, height, values.iter().map(|&v| quantize(v)).collect())
    }

    pub(crate) fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }
}

/// Row-major boolean field; `true` marks text/foreground (or a hole to fill).
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::CorruptData(format!(
                "expected {} mask bits for {}x{}, got {}",
                width * height,
                width,
                height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    /// `true` when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        other.ensure_dims(self.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Grows the mask by every pixel within Euclidean `radius` of a set pixel.
    pub fn dilate(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as isize;
        let r2 = r * r;
        let offsets: Vec<(isize, isize)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r2)
            .collect();
        let mut out = Self::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                        out.set(nx as usize, ny as usize, true);
                    }
                }
            }
        }
        out
    }

    /// Shrinks the mask: a pixel survives only if every pixel within
    /// `radius` is set. Pixels outside the canvas count as unset.
    pub fn erode(&self, radius: usize) -> Self {
        let mut out = self.complement();
        // Out-of-canvas pixels act as background.
        let mut padded = Self::new(self.width + 2, self.height + 2);
        for y in 0..self.height {
            for x in 0..self.width {
                padded.set(x + 1, y + 1, out.get(x, y));
            }
        }
        for x in 0..padded.width {
            padded.set(x, 0, true);
            padded.set(x, padded.height - 1, true);
        }
        for y in 0..padded.height {
            padded.set(0, y, true);
            padded.set(padded.width - 1, y, true);
        }
        let grown = padded.dilate(radius);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(x, y, !grown.get(x + 1, y + 1));
            }
        }
        out
    }

    pub(crate) fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }
}

/// Axis-aligned box in pixel units; `(x, y)` is the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl From<[i64; 4]> for BBox {
    fn from(v: [i64; 4]) -> Self {
        BBox {
            x: v[0],
            y: v[1],
            w: v[2],
            h: v[3],
        }
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        BBox { x, y, w, h }
    }

    /// Half-open pixel ranges `(x0, y0, x1, y1)` of the box clipped to the
    /// canvas, or `None` when nothing remains.
    pub fn clip(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        if self.w < 1 || self.h < 1 {
            return None;
        }
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w).min(width as i64);
        let y1 = (self.y + self.h).min(height as i64);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        Some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }
}

/// One detected text instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRegion {
    pub bbox: BBox,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tampered_text: Option<String>,
    /// Editing prompt; carried as metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

impl TextRegion {
    pub fn new(bbox: BBox, text: impl Into<String>) -> Self {
        TextRegion {
            bbox,
            text: text.into(),
            tampered_text: None,
            prompt: None,
        }
    }
}

/// Scene depth normalized to `[0, 1]`, with the raw range seen at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
    raw_min: T,
    raw_max: T,
    degenerate: bool,
}

impl<T: Real> DepthMap<T> {
    /// Normalizes raw depths with `(v - min) / (max - min)`. A constant input
    /// maps to 0.5 everywhere and sets the degenerate-range flag.
    pub fn from_raw(width: usize, height: usize, raw: &[T]) -> Result<Self> {
        if raw.len() != width * height {
            return Err(Error::CorruptData(format!(
                "expected {} depth values for {}x{}, got {}",
                width * height,
                width,
                height,
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::CorruptData("non-finite depth value".into()));
        }
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        for &v in raw {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if raw.is_empty() {
            lo = T::zero();
            hi = T::zero();
        }
        let degenerate = !(hi > lo);
        let values = if degenerate {
            log::warn!("depth map has a degenerate range ({lo}); using 0.5 everywhere");
            vec![T::lit(0.5); raw.len()]
        } else {
            let span = hi - lo;
            raw.iter()
                .map(|&v| ((v - lo) / span).max(T::zero()).min(T::one()))
                .collect()
        };
        Ok(Self {
            width,
            height,
            values,
            raw_min: lo,
            raw_max: hi,
            degenerate,
        })
    }

    /// Wraps values that are already normalized; they are clamped to `[0,1]`.
    pub fn from_normalized(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::CorruptData(format!(
                "expected {} depth values for {}x{}, got {}",
                width * height,
                width,
                height,
                values.len()
            )));
        }
        let values: Vec<T> = values
            .into_iter()
            .map(|v| v.max(T::zero()).min(T::one()))
            .collect();
        Ok(Self {
            width,
            height,
            values,
            raw_min: T::zero(),
            raw_max: T::one(),
            degenerate: false,
        })
    }

    pub fn constant(width: usize, height: usize, v: T) -> Self {
        Self {
            width,
            height,
            values: vec![v.max(T::zero()).min(T::one()); width * height],
            raw_min: T::zero(),
            raw_max: T::one(),
            degenerate: false,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `(min, max)` of the raw data before normalization.
    pub fn raw_range(&self) -> (T, T) {
        (self.raw_min, self.raw_max)
    }

    /// Set when the raw data was constant.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub(crate) fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }
}
