//! Depth-aware brightness/contrast modulation of a relocated text layer.
//!
//! Per masked pixel and channel, in normalized intensity:
//!
//! ```text
//! out = clamp(α(ΔD) · in + β(ΔD), 0, 1),  α = 1 + λ1·ΔD,  β = λ2·ΔD
//! ```
//!
//! where `ΔD = D − D_fg` is the background depth at the new location minus
//! the depth the text carried from its original footprint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foreground::ForegroundLayer;
use crate::io::{load_depth, save_image};
use crate::provider::{bad_output, out_path, scratch_dir, ProviderCommand};
use crate::raster::{BinaryMask, DepthMap, RasterImage};
use crate::scalar::{quantize, unit, Real};
use crate::transform::{footprint, Transform2D};

/// Scene-type presets for `(λ1, λ2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Uniform,
    HighVariation,
    Hdr,
}

impl Preset {
    pub fn lambdas(self) -> (f64, f64) {
        match self {
            Preset::Uniform => (0.3, 0.2),
            Preset::HighVariation => (1.0, 0.5),
            Preset::Hdr => (1.5, 0.8),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Preset::Uniform),
            "high_variation" => Ok(Preset::HighVariation),
            "hdr" => Ok(Preset::Hdr),
            other => Err(Error::InvalidArgument(format!("unknown depth preset `{other}`"))),
        }
    }
}

pub const LAMBDA1_RANGE: (f64, f64) = (0.1, 2.0);
pub const LAMBDA2_RANGE: (f64, f64) = (0.05, 1.0);

/// Contrast (`lambda1`) and brightness (`lambda2`) sensitivities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthParams<T> {
    pub lambda1: T,
    pub lambda2: T,
    pub preset: Option<Preset>,
}

impl<T: Real> Default for DepthParams<T> {
    fn default() -> Self {
        Self {
            lambda1: T::lit(0.5),
            lambda2: T::lit(0.3),
            preset: None,
        }
    }
}

impl<T: Real> DepthParams<T> {
    /// Validated parameters. `(0, 0)` is accepted as the identity setting.
    pub fn new(lambda1: T, lambda2: T) -> Result<Self> {
        let p = Self {
            lambda1,
            lambda2,
            preset: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn identity() -> Self {
        Self {
            lambda1: T::zero(),
            lambda2: T::zero(),
            preset: None,
        }
    }

    pub fn from_preset(preset: Preset) -> Self {
        let (l1, l2) = preset.lambdas();
        Self {
            lambda1: T::lit(l1),
            lambda2: T::lit(l2),
            preset: Some(preset),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.lambda1 == T::zero() && self.lambda2 == T::zero()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_identity() {
            return Ok(());
        }
        let l1 = self.lambda1.to_f64_lossy();
        let l2 = self.lambda2.to_f64_lossy();
        if !(LAMBDA1_RANGE.0..=LAMBDA1_RANGE.1).contains(&l1) {
            return Err(Error::InvalidArgument(format!(
                "lambda1 = {l1} outside [{}, {}]",
                LAMBDA1_RANGE.0, LAMBDA1_RANGE.1
            )));
        }
        if !(LAMBDA2_RANGE.0..=LAMBDA2_RANGE.1).contains(&l2) {
            return Err(Error::InvalidArgument(format!(
                "lambda2 = {l2} outside [{}, {}]",
                LAMBDA2_RANGE.0, LAMBDA2_RANGE.1
            )));
        }
        Ok(())
    }
}

/// `D − D_fg` under the layer mask, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthDelta<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Real> DepthDelta<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![T::zero(); width * height],
        }
    }

    /// Builds a delta field directly; values are clamped to `[-1, 1]`.
    pub fn from_values(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (values.len(), 1),
            });
        }
        let one = T::one();
        Ok(Self {
            width,
            height,
            values: values.into_iter().map(|v| v.max(-one).min(one)).collect(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }
}

/// Runs a depth provider: `<cmd> --image <in.png> --out <depth.pfm>`. The
/// provider may write PFM or 16-bit PNG to the given path.
pub fn estimate_depth_external<T: Real>(img: &RasterImage, provider: &ProviderCommand) -> Result<DepthMap<T>> {
    let dir = scratch_dir()?;
    let input = out_path(&dir, "image.png");
    let output = out_path(&dir, "depth.pfm");
    save_image(img, &input)?;
    provider.invoke(&[("image", &input), ("out", &output)])?;
    let depth: DepthMap<T> = load_depth(&output).map_err(|e| bad_output(&output, e))?;
    if depth.dims() != img.dims() {
        return Err(Error::ProviderBadOutput(format!(
            "expected {:?} depth map, provider wrote {:?}",
            img.dims(),
            depth.dims()
        )));
    }
    Ok(depth)
}

#[inline]
fn bilinear<T: Real>(d: &DepthMap<T>, sx: T, sy: T) -> Option<T> {
    let (x0, y0, x1, y1, fx, fy) = footprint(sx, sy, d.width(), d.height())?;
    let o = T::one();
    Some(
        d.get(x0, y0) * (o - fx) * (o - fy)
            + d.get(x1, y0) * fx * (o - fy)
            + d.get(x0, y1) * (o - fx) * fy
            + d.get(x1, y1) * fx * fy,
    )
}

/// Depth the text layer carries to its new placement: the background depth
/// of its original footprint, pulled through `t⁻¹`.
///
/// Returns the depth map together with the transformed mask it is defined
/// on. Outside that mask the map holds the background depth at the same
/// pixel, so `ΔD` there is zero.
pub fn foreground_depth<T: Real>(
    bg_depth: &DepthMap<T>,
    src_mask: &BinaryMask,
    t: &Transform2D<T>,
    out_dims: (usize, usize),
) -> Result<(DepthMap<T>, BinaryMask)> {
    src_mask.ensure_dims(bg_depth.dims())?;
    let inv = t.inverse()?;
    let (dw, dh) = out_dims;
    let (sw, sh) = bg_depth.dims();
    let half = T::lit(0.5);
    let mut values = Vec::with_capacity(dw * dh);
    let mut bits = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        for x in 0..dw {
            let fallback = if x < sw && y < sh { bg_depth.get(x, y) } else { half };
            let moved = inv
                .map_point(T::from_usize_lossy(x), T::from_usize_lossy(y))
                .and_then(|(sx, sy)| {
                    let (x0, y0, x1, y1, fx, fy) = footprint(sx, sy, sw, sh)?;
                    let o = T::one();
                    let mut m = T::zero();
                    for (px, py, w) in [
                        (x0, y0, (o - fx) * (o - fy)),
                        (x1, y0, fx * (o - fy)),
                        (x0, y1, (o - fx) * fy),
                        (x1, y1, fx * fy),
                    ] {
                        if src_mask.get(px, py) {
                            m = m + w;
                        }
                    }
                    if m >= half {
                        bilinear(bg_depth, sx, sy)
                    } else {
                        None
                    }
                });
            match moved {
                Some(v) => {
                    values.push(v);
                    bits.push(true);
                }
                None => {
                    values.push(fallback);
                    bits.push(false);
                }
            }
        }
    }
    Ok((DepthMap::from_normalized(dw, dh, values)?, BinaryMask::from_bits(dw, dh, bits)?))
}

/// `ΔD = bg − fg` under `mask`, 0 elsewhere.
pub fn depth_delta<T: Real>(bg_depth: &DepthMap<T>, fg_depth: &DepthMap<T>, mask: &BinaryMask) -> Result<DepthDelta<T>> {
    fg_depth.ensure_dims(bg_depth.dims())?;
    mask.ensure_dims(bg_depth.dims())?;
    let values = bg_depth
        .values()
        .iter()
        .zip(fg_depth.values())
        .zip(mask.bits())
        .map(|((&b, &f), &m)| if m { b - f } else { T::zero() })
        .collect();
    let (w, h) = bg_depth.dims();
    DepthDelta::from_values(w, h, values)
}

/// One normalized sample through the depth-aware affine map.
#[inline]
pub fn adjust_sample<T: Real>(v: T, delta: T, p: &DepthParams<T>) -> T {
    let alpha = T::one() + p.lambda1 * delta;
    let beta = p.lambda2 * delta;
    (alpha * v + beta).max(T::zero()).min(T::one())
}

/// Applies the depth-aware modulation to every masked pixel.
pub fn depth_aware_adjust<T: Real>(layer: &ForegroundLayer, delta: &DepthDelta<T>, p: &DepthParams<T>) -> Result<ForegroundLayer> {
    if delta.dims() != layer.dims() {
        return Err(Error::DimensionMismatch {
            expected: layer.dims(),
            actual: delta.dims(),
        });
    }
    p.validate()?;
    let mut out = layer.clone();
    let bits = layer.mask.bits();
    for ((px, &m), &d) in out
        .image
        .as_raw_mut()
        .chunks_exact_mut(3)
        .zip(bits)
        .zip(delta.values())
    {
        if !m {
            continue;
        }
        for s in px.iter_mut() {
            *s = quantize(adjust_sample(unit::<T>(*s), d, p));
        }
    }
    Ok(out)
}
