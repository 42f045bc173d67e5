//! Synthetic test scenes and a solid-rectangle glyph generator.
//!
//! The bundled scene is a wall receding in depth from left to right and lit
//! more strongly with depth, with a block of bar-shaped glyphs printed on
//! it. Nothing here is used by the editing pipeline itself.

use crate::foreground::{DetectionSet, ForegroundLayer};
use crate::raster::{BBox, BinaryMask, DepthMap, RasterImage, TextRegion};
use crate::scalar::quantize;

/// Vertical bars of `stroke` px separated by `gap` px filling `bbox`.
pub fn bar_glyph_mask(width: usize, height: usize, bbox: &BBox, stroke: usize, gap: usize) -> BinaryMask {
    let period = (stroke + gap).max(1) as i64;
    BinaryMask::from_fn(width, height, |x, y| {
        let (x, y) = (x as i64, y as i64);
        x >= bbox.x
            && y >= bbox.y
            && x < bbox.x + bbox.w
            && y < bbox.y + bbox.h
            && (x - bbox.x) % period < stroke as i64
    })
}

/// A solid-color rectangle standing in for a rendered glyph run, on a
/// canvas of `dims`.
pub fn solid_glyph_layer(dims: (usize, usize), bbox: &BBox, rgb: [u8; 3]) -> ForegroundLayer {
    let mask = bar_glyph_mask(dims.0, dims.1, bbox, 1, 0);
    let image = RasterImage::filled(dims.0, dims.1, rgb);
    ForegroundLayer::new(image, mask, Vec::new()).expect("same dims")
}

/// Wall lit as `light_base + light_gain · depth`, with depth a linear ramp
/// in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RampScene {
    pub width: usize,
    pub height: usize,
    /// Wall reflectance per channel.
    pub wall: [f64; 3],
    /// Ink reflectance per channel.
    pub ink: [f64; 3],
    pub light_base: f64,
    pub light_gain: f64,
    pub text_box: BBox,
    pub stroke: usize,
    pub gap: usize,
    pub label: String,
}

impl Default for RampScene {
    fn default() -> Self {
        Self {
            width: 160,
            height: 96,
            wall: [0.62, 0.58, 0.52],
            ink: [0.46, 0.58, 0.42],
            light_base: 0.65,
            light_gain: 1.0,
            text_box: BBox::new(16, 32, 32, 24),
            stroke: 3,
            gap: 1,
            label: "CAFE".to_string(),
        }
    }
}

impl RampScene {
    #[inline]
    fn depth_at(&self, x: usize) -> f64 {
        x as f64 / (self.width - 1) as f64
    }

    #[inline]
    fn light_at(&self, x: usize) -> f64 {
        self.light_base + self.light_gain * self.depth_at(x)
    }

    /// Ground-truth depth, already normalized.
    pub fn depth(&self) -> DepthMap<f64> {
        let raw: Vec<f64> = (0..self.width * self.height)
            .map(|i| self.depth_at(i % self.width))
            .collect();
        DepthMap::from_raw(self.width, self.height, &raw).expect("dims match")
    }

    /// Raw depth values, row-major, for writing to a PFM.
    pub fn depth_raw(&self) -> Vec<f32> {
        (0..self.width * self.height)
            .map(|i| self.depth_at(i % self.width) as f32)
            .collect()
    }

    fn shade(&self, reflectance: &[f64; 3], x: usize) -> [u8; 3] {
        let l = self.light_at(x);
        reflectance.map(|r| quantize(r * l))
    }

    /// The wall without text.
    pub fn background(&self) -> RasterImage {
        RasterImage::from_fn(self.width, self.height, |x, _| self.shade(&self.wall, x))
    }

    /// Glyph mask at the original placement.
    pub fn glyph_mask(&self) -> BinaryMask {
        bar_glyph_mask(self.width, self.height, &self.text_box, self.stroke, self.gap)
    }

    /// The wall with text printed at `text_box` shifted by `dx` px; ink is
    /// lit by the light at its own location.
    pub fn render_with_offset(&self, dx: i64) -> RasterImage {
        let b = BBox::new(self.text_box.x + dx, self.text_box.y, self.text_box.w, self.text_box.h);
        let mask = bar_glyph_mask(self.width, self.height, &b, self.stroke, self.gap);
        RasterImage::from_fn(self.width, self.height, |x, y| {
            if mask.get(x, y) {
                self.shade(&self.ink, x)
            } else {
                self.shade(&self.wall, x)
            }
        })
    }

    pub fn image(&self) -> RasterImage {
        self.render_with_offset(0)
    }

    pub fn detections(&self) -> DetectionSet {
        DetectionSet::new(
            vec![TextRegion::new(self.text_box, self.label.clone())],
            (self.width, self.height),
        )
        .expect("valid region")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bars_cover_three_quarters() {
        let s = RampScene::default();
        assert_eq!(s.glyph_mask().count(), 8 * 3 * 24);
    }

    #[test]
    fn background_brightens_with_depth() {
        let s = RampScene::default();
        let bg = s.background();
        assert!(bg.pixel(0, 0)[0] < bg.pixel(s.width - 1, 0)[0]);
        assert_eq!(s.depth().get(s.width - 1, 3), 1.0);
    }

    #[test]
    fn solid_layer() {
        let l = solid_glyph_layer((10, 10), &BBox::new(2, 3, 4, 2), [9, 9, 9]);
        assert_eq!(l.mask.count(), 8);
        assert_eq!(l.image.pixel(0, 0), [0, 0, 0]);
        assert_eq!(l.image.pixel(2, 3), [9, 9, 9]);
    }
}
