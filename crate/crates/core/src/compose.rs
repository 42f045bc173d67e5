//! Final composition and the photometric baselines it is compared against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foreground::ForegroundLayer;
use crate::raster::{BinaryMask, RasterImage};
use crate::scalar::{quantize, unit, Real};

/// How the text layer's intensities are adapted before compositing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompositionMethod {
    #[default]
    DepthAware,
    Linear,
    Gamma,
    Histogram,
    None,
}

impl std::str::FromStr for CompositionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth_aware" => Ok(Self::DepthAware),
            "linear" => Ok(Self::Linear),
            "gamma" => Ok(Self::Gamma),
            "histogram" => Ok(Self::Histogram),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidArgument(format!("unknown composition method `{other}`"))),
        }
    }
}

pub const DEFAULT_LINEAR_GAMMA: f64 = 1.1;
pub const DEFAULT_LINEAR_DELTA: f64 = 0.05;
pub const DEFAULT_GAMMA: f64 = 0.8;
pub const DEFAULT_ANNULUS_RADIUS: usize = 15;

/// `fg` where its mask is set, `bg` elsewhere. No feathering.
pub fn compose_hard(bg: &RasterImage, fg: &ForegroundLayer) -> Result<RasterImage> {
    fg.image.ensure_dims(bg.dims())?;
    fg.mask.ensure_dims(bg.dims())?;
    let mut out = bg.clone();
    for ((o, f), &m) in out
        .as_raw_mut()
        .chunks_exact_mut(3)
        .zip(fg.image.as_raw().chunks_exact(3))
        .zip(fg.mask.bits())
    {
        if m {
            o.copy_from_slice(f);
        }
    }
    Ok(out)
}

fn map_masked(fg: &ForegroundLayer, f: impl Fn(u8) -> u8) -> ForegroundLayer {
    let mut out = fg.clone();
    for (px, &m) in out.image.as_raw_mut().chunks_exact_mut(3).zip(fg.mask.bits()) {
        if m {
            for s in px.iter_mut() {
                *s = f(*s);
            }
        }
    }
    out
}

fn lut<T: Real>(f: impl Fn(T) -> T) -> [u8; 256] {
    std::array::from_fn(|v| quantize(f(unit(v as u8))))
}

/// `clamp(γ·in + δ, 0, 1)` on masked pixels; `δ` is in normalized units.
pub fn adjust_linear<T: Real>(fg: &ForegroundLayer, gamma: T, delta: T) -> Result<ForegroundLayer> {
    if !(gamma > T::zero()) {
        return Err(Error::NonPositiveGamma(gamma.to_f64_lossy()));
    }
    let table = lut(|v: T| gamma * v + delta);
    Ok(map_masked(fg, |v| table[v as usize]))
}

/// `in^γ` on masked pixels.
pub fn adjust_gamma<T: Real>(fg: &ForegroundLayer, gamma: T) -> Result<ForegroundLayer> {
    if !(gamma > T::zero()) {
        return Err(Error::NonPositiveGamma(gamma.to_f64_lossy()));
    }
    let table = lut(|v: T| v.powf(gamma));
    Ok(map_masked(fg, |v| table[v as usize]))
}

/// Which background pixels define the target distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum HistogramReference {
    /// Every background pixel.
    Global,
    /// Background pixels within `radius` of the text mask but outside it.
    Annulus(usize),
    Region(BinaryMask),
}

/// Pixels in a ring of `radius` around `mask`, excluding the mask itself.
pub fn annulus(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let grown = mask.dilate(radius);
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| grown.get(x, y) && !mask.get(x, y))
}

/// Per-channel CDF matching. Each masked sample `v` becomes the smallest
/// reference value `r` with `CDF_ref(r) >= CDF_fg(v)`. Comparisons are done
/// on integer counts so ties resolve exactly.
pub fn histogram_match(fg: &ForegroundLayer, bg: &RasterImage, reference: &HistogramReference) -> Result<ForegroundLayer> {
    let region = match reference {
        HistogramReference::Global => None,
        HistogramReference::Annulus(r) => {
            fg.image.ensure_dims(bg.dims())?;
            Some(annulus(&fg.mask, *r))
        }
        HistogramReference::Region(m) => {
            m.ensure_dims(bg.dims())?;
            Some(m.clone())
        }
    };
    let n_fg = fg.mask.count() as u64;
    if n_fg == 0 {
        return Err(Error::EmptyMask);
    }
    let mut h_fg = [[0u64; 256]; 3];
    for (px, &m) in fg.image.as_raw().chunks_exact(3).zip(fg.mask.bits()) {
        if m {
            for c in 0..3 {
                h_fg[c][px[c] as usize] += 1;
            }
        }
    }
    let mut h_ref = [[0u64; 256]; 3];
    let mut n_ref = 0u64;
    for (i, px) in bg.as_raw().chunks_exact(3).enumerate() {
        if region.as_ref().is_none_or(|r| r.bits()[i]) {
            n_ref += 1;
            for c in 0..3 {
                h_ref[c][px[c] as usize] += 1;
            }
        }
    }
    if n_ref == 0 {
        return Err(Error::EmptyReference);
    }

    let mut tables = [[0u8; 256]; 3];
    for c in 0..3 {
        let cdf = |h: &[u64; 256]| {
            let mut acc = 0u64;
            h.map(|v| {
                acc += v;
                acc
            })
        };
        let c_fg = cdf(&h_fg[c]);
        let c_ref = cdf(&h_ref[c]);
        let mut r = 0usize;
        for v in 0..256 {
            // CDF_fg is non-decreasing, so the search pointer only advances.
            while r < 255 && (c_ref[r] as u128) * (n_fg as u128) < (c_fg[v] as u128) * (n_ref as u128) {
                r += 1;
            }
            tables[c][v] = r as u8;
        }
    }
    let mut out = fg.clone();
    for (px, &m) in out.image.as_raw_mut().chunks_exact_mut(3).zip(fg.mask.bits()) {
        if m {
            for c in 0..3 {
                px[c] = tables[c][px[c] as usize];
            }
        }
    }
    Ok(out)
}
