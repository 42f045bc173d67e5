//! Text foreground extraction: bbox mask, 2-means cluster filtering and the
//! masked foreground layer.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{BBox, BinaryMask, RasterImage, TextRegion};

/// Detected text regions for one image, in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    regions: Vec<TextRegion>,
    image_dims: (usize, usize),
}

impl DetectionSet {
    pub fn new(regions: Vec<TextRegion>, image_dims: (usize, usize)) -> Result<Self> {
        for (i, r) in regions.iter().enumerate() {
            if r.bbox.w < 1 || r.bbox.h < 1 {
                return Err(Error::InvalidArgument(format!(
                    "region {i}: bbox extent must be at least 1x1, got {}x{}",
                    r.bbox.w, r.bbox.h
                )));
            }
            if r.text.is_empty() {
                return Err(Error::InvalidArgument(format!("region {i}: empty text")));
            }
            if r.bbox.clip(image_dims.0, image_dims.1).is_none() {
                log::warn!("region {i} ({:?}) lies outside the image", r.bbox);
            }
        }
        Ok(Self { regions, image_dims })
    }

    /// Parses the JSON array form: `[{"bbox": [x,y,w,h], "text": ...}, ...]`.
    pub fn from_json(json: &str, image_dims: (usize, usize)) -> Result<Self> {
        let regions: Vec<TextRegion> = serde_json::from_str(json)?;
        Self::new(regions, image_dims)
    }

    pub fn load(path: impl AsRef<Path>, image_dims: (usize, usize)) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&json, image_dims)
    }

    pub fn regions(&self) -> &[TextRegion] {
        &self.regions
    }

    pub fn image_dims(&self) -> (usize, usize) {
        self.image_dims
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.regions.iter().map(|r| r.bbox).collect()
    }
}

/// An image restricted to its text pixels, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundLayer {
    pub image: RasterImage,
    pub mask: BinaryMask,
    pub regions: Vec<TextRegion>,
}

impl ForegroundLayer {
    /// Builds a layer, zeroing every pixel outside `mask`.
    pub fn new(mut image: RasterImage, mask: BinaryMask, regions: Vec<TextRegion>) -> Result<Self> {
        mask.ensure_dims(image.dims())?;
        for (px, &m) in image.as_raw_mut().chunks_exact_mut(3).zip(mask.bits()) {
            if !m {
                px.fill(0);
            }
        }
        Ok(Self { image, mask, regions })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            image: RasterImage::new(width, height),
            mask: BinaryMask::new(width, height),
            regions: Vec::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    /// The part of the layer inside `bbox`.
    pub fn crop_to(&self, bbox: &BBox) -> ForegroundLayer {
        let (w, h) = self.dims();
        let region = box_mask(bbox, w, h);
        let mask = self.mask.intersection(&region).expect("same dims");
        ForegroundLayer::new(self.image.clone(), mask, Vec::new()).expect("same dims")
    }
}

fn box_mask(bbox: &BBox, width: usize, height: usize) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    if let Some((x0, y0, x1, y1)) = bbox.clip(width, height) {
        for y in y0..y1 {
            for x in x0..x1 {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Union of all boxes, clipped to the image.
pub fn generate_mask(dets: &DetectionSet) -> Result<BinaryMask> {
    if dets.is_empty() {
        return Err(Error::EmptyDetections);
    }
    let (w, h) = dets.image_dims();
    let mut mask = BinaryMask::new(w, h);
    let mut any = false;
    for r in dets.regions() {
        if let Some((x0, y0, x1, y1)) = r.bbox.clip(w, h) {
            any = true;
            for y in y0..y1 {
                for x in x0..x1 {
                    mask.set(x, y, true);
                }
            }
        }
    }
    if !any {
        return Err(Error::AllBoxesOutOfBounds);
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    /// Cluster count; only 2 is accepted.
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 2,
            seed: 0,
            max_iter: 50,
        }
    }
}

#[inline]
fn luminance(c: &[f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Splits `points` into two clusters and returns, per point, whether it
/// belongs to the kept (larger) cluster. `None` means there is nothing to
/// separate and every point is kept.
pub fn two_means_keep(points: &[[u8; 3]], rng: &mut impl Rng, max_iter: usize) -> Option<Vec<bool>> {
    if points.len() < 2 || points.iter().all(|p| *p == points[0]) {
        return None;
    }
    let pts: Vec<[f64; 3]> = points
        .iter()
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();

    // k-means++ seeding
    let first = pts[rng.gen_range(0..pts.len())];
    let d2: Vec<f64> = pts.iter().map(|p| dist2(p, &first)).collect();
    let total: f64 = d2.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    let mut second = first;
    for (p, &w) in pts.iter().zip(&d2) {
        if w > 0.0 {
            second = *p;
            if target < w {
                break;
            }
            target -= w;
        }
    }
    let mut centers = [first, second];

    let mut assign: Vec<usize> = vec![usize::MAX; pts.len()];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(&pts) {
            let c = if dist2(p, &centers[1]) < dist2(p, &centers[0]) { 1 } else { 0 };
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = [[0.0f64; 3]; 2];
        let mut counts = [0usize; 2];
        for (&a, p) in assign.iter().zip(&pts) {
            counts[a] += 1;
            for ch in 0..3 {
                sums[a][ch] += p[ch];
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..2 {
            for ch in 0..3 {
                centers[c][ch] = sums[c][ch] / counts[c] as f64;
            }
        }
    }

    let n1 = assign.iter().filter(|&&a| a == 1).count();
    let n0 = assign.len() - n1;
    let keep = match n0.cmp(&n1) {
        std::cmp::Ordering::Greater => 0,
        std::cmp::Ordering::Less => 1,
        std::cmp::Ordering::Equal => {
            if luminance(&centers[1]) > luminance(&centers[0]) {
                1
            } else {
                0
            }
        }
    };
    Some(assign.into_iter().map(|a| a == keep).collect())
}

/// Clears the minority 2-means cluster of masked pixels inside each box.
///
/// Each box is clustered on its own with an RNG stream derived from
/// `cfg.seed` and the box index. Overlapping boxes combine by OR; masked
/// pixels outside every box pass through. An empty `boxes` slice treats
/// the whole image as one region.
pub fn kmeans_refine(img: &RasterImage, mask: &BinaryMask, boxes: &[BBox], cfg: &KMeansConfig) -> Result<BinaryMask> {
    if cfg.k != 2 {
        return Err(Error::InvalidArgument(format!("k-means cluster count must be 2, got {}", cfg.k)));
    }
    mask.ensure_dims(img.dims())?;
    let have = mask.count();
    if have < cfg.k {
        return Err(Error::TooFewPixels { have, need: cfg.k });
    }
    let (w, h) = img.dims();
    let whole = [BBox::new(0, 0, w as i64, h as i64)];
    let boxes = if boxes.is_empty() { &whole[..] } else { boxes };

    let kept: Vec<Vec<(usize, usize, bool)>> = boxes
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let Some((x0, y0, x1, y1)) = b.clip(w, h) else {
                return Vec::new();
            };
            let coords: Vec<(usize, usize)> = (y0..y1)
                .flat_map(|y| (x0..x1).map(move |x| (x, y)))
                .filter(|&(x, y)| mask.get(x, y))
                .collect();
            let colors: Vec<[u8; 3]> = coords.iter().map(|&(x, y)| img.pixel(x, y)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            match two_means_keep(&colors, &mut rng, cfg.max_iter) {
                Some(keep) => coords.into_iter().zip(keep).map(|((x, y), k)| (x, y, k)).collect(),
                None => coords.into_iter().map(|(x, y)| (x, y, true)).collect(),
            }
        })
        .collect();

    let mut out = mask.clone();
    for region in &kept {
        for &(x, y, _) in region {
            out.set(x, y, false);
        }
    }
    for region in &kept {
        for &(x, y, k) in region {
            if k {
                out.set(x, y, true);
            }
        }
    }
    Ok(out)
}

/// `image ⊙ mask`.
pub fn extract_foreground(img: &RasterImage, mask: &BinaryMask) -> Result<ForegroundLayer> {
    mask.ensure_dims(img.dims())?;
    ForegroundLayer::new(img.clone(), mask.clone(), Vec::new())
}
