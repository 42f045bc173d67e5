#![allow(dead_code)]

use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use layertext::pipeline::{DetectionsSource, EditScript};
use layertext::raster::{BBox, RasterImage, TextRegion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> RasterImage {
    RasterImage::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()])
}

/// Smooth color field, friendly to bilinear resampling.
pub fn smooth_image(w: usize, h: usize) -> RasterImage {
    RasterImage::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64, y as f64);
        [
            (128.0 + 90.0 * (x / 11.0).sin() * (y / 13.0).cos()) as u8,
            (128.0 + 80.0 * ((x + y) / 17.0).sin()) as u8,
            (100.0 + 0.3 * x + 0.2 * y).min(255.0) as u8,
        ]
    })
}

/// Writes an executable shell script and returns its path.
pub fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

/// Shell prelude that parses `--name value` pairs into `$image`, `$mask`,
/// `$out` and friends.
pub const PARSE_ARGS: &str = r#"while [ $# -gt 0 ]; do
  case "$1" in
    --image) image="$2";;
    --mask) mask="$2";;
    --out) out="$2";;
    --out-mask) out_mask="$2";;
    --text) text="$2";;
    --target) target="$2";;
  esac
  shift 2
done"#;

/// Provider that copies its input image to the output unchanged.
pub fn identity_provider(dir: &Path) -> PathBuf {
    script(dir, "identity.sh", &format!("{PARSE_ARGS}\ncp \"$image\" \"$out\""))
}

/// Provider that writes `file` to its output, whatever the input.
pub fn constant_provider(dir: &Path, name: &str, file: &Path) -> PathBuf {
    script(dir, name, &format!("{PARSE_ARGS}\ncp '{}' \"$out\"", file.display()))
}

pub fn failing_provider(dir: &Path) -> PathBuf {
    script(dir, "fail.sh", "echo 'model weights missing' >&2\nexit 1")
}

pub fn inline_script(input: &Path, boxes: &[(i64, i64, i64, i64)], out: &Path) -> EditScript {
    let regions = boxes
        .iter()
        .enumerate()
        .map(|(i, &(x, y, w, h))| TextRegion::new(BBox::new(x, y, w, h), format!("t{i}")))
        .collect();
    EditScript::new(input, DetectionsSource::Inline(regions), out)
}

pub fn psnr_masked(a: &RasterImage, b: &RasterImage, mask: &layertext::BinaryMask) -> f64 {
    let mut se = 0.0;
    let mut n = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if mask.get(x, y) {
                for c in 0..3 {
                    let d = a.pixel(x, y)[c] as f64 - b.pixel(x, y)[c] as f64;
                    se += d * d;
                }
                n += 3;
            }
        }
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / mse).log10()
    }
}
