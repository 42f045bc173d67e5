//! Bit-exact image, mask and depth file I/O.
//!
//! Supported inputs: 8-bit PNG (RGB, gray, palette, with alpha dropped),
//! binary PPM (`P6`, maxval 255), 16-bit gray PNG and little-endian PFM for
//! depth. No color management is applied anywhere.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, DepthMap, RasterImage};
use crate::scalar::Real;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn png_err(e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(io) => Error::CorruptData(io.to_string()),
        other => Error::CorruptData(other.to_string()),
    }
}

/// Decoded PNG: samples after palette/low-bit expansion.
struct DecodedPng {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: Vec<u8>,
}

fn decode_png(bytes: &[u8]) -> Result<(DecodedPng, bool)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();
    let palette_with_alpha = info.color_type == ColorType::Indexed && info.trns.is_some();
    let buf_len = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptData("png too large".into()))?;
    let mut data = vec![0u8; buf_len];
    let frame = reader.next_frame(&mut data).map_err(png_err)?;
    data.truncate(frame.buffer_size());
    Ok((
        DecodedPng {
            width: frame.width as usize,
            height: frame.height as usize,
            color: frame.color_type,
            depth: frame.bit_depth,
            data,
        },
        palette_with_alpha,
    ))
}

/// RGB samples plus the alpha plane when the source carried one.
fn png_to_rgb(png: DecodedPng) -> Result<(RasterImage, Option<Vec<u8>>)> {
    if png.depth != BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "{:?}-bit {:?} PNG; only 8-bit color is supported",
            png.depth, png.color
        )));
    }
    let n = png.width * png.height;
    let mut rgb = Vec::with_capacity(n * 3);
    let mut alpha = None;
    match png.color {
        ColorType::Rgb => rgb = png.data,
        ColorType::Grayscale => {
            for &g in &png.data[..n] {
                rgb.extend_from_slice(&[g, g, g]);
            }
        }
        ColorType::Rgba => {
            let mut a = Vec::with_capacity(n);
            for px in png.data.chunks_exact(4) {
                rgb.extend_from_slice(&px[..3]);
                a.push(px[3]);
            }
            alpha = Some(a);
        }
        ColorType::GrayscaleAlpha => {
            let mut a = Vec::with_capacity(n);
            for px in png.data.chunks_exact(2) {
                rgb.extend_from_slice(&[px[0], px[0], px[0]]);
                a.push(px[1]);
            }
            alpha = Some(a);
        }
        ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded palette".into()));
        }
    }
    Ok((RasterImage::from_raw(png.width, png.height, rgb)?, alpha))
}

fn skip_ws_and_comments(bytes: &[u8], pos: &mut usize) {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            return;
        }
    }
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    skip_ws_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::CorruptData("truncated header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::CorruptData("non-ascii header".into()))
}

fn header_usize(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = header_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::CorruptData(format!("bad header field `{tok}`")))
}

fn decode_ppm(bytes: &[u8]) -> Result<RasterImage> {
    let mut pos = 2;
    let width = header_usize(bytes, &mut pos)?;
    let height = header_usize(bytes, &mut pos)?;
    let maxval = header_usize(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("PPM maxval {maxval}; only 255 is supported")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height * 3;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() < need {
        return Err(Error::CorruptData(format!("PPM raster has {} bytes, need {need}", body.len())));
    }
    RasterImage::from_raw(width, height, body[..need].to_vec())
}

/// Loads an 8-bit RGB image from PNG or binary PPM.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    if bytes.starts_with(PNG_MAGIC) {
        let (png, palette_alpha) = decode_png(&bytes)?;
        if palette_alpha {
            return Err(Error::UnsupportedFormat("palette PNG with transparency".into()));
        }
        let (img, alpha) = png_to_rgb(png)?;
        if alpha.is_some() {
            log::warn!("{}: dropping alpha channel", path.display());
        }
        Ok(img)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(&bytes)
    } else {
        Err(Error::UnsupportedFormat(format!("{}: not a PNG or P6 PPM", path.display())))
    }
}

/// Loads an image together with its alpha plane, if present. Used for
/// replacement text layers, where alpha doubles as the layer mask.
pub fn load_image_with_alpha(path: impl AsRef<Path>) -> Result<(RasterImage, Option<Vec<u8>>)> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    if bytes.starts_with(PNG_MAGIC) {
        let (png, _) = decode_png(&bytes)?;
        png_to_rgb(png)
    } else if bytes.starts_with(b"P6") {
        Ok((decode_ppm(&bytes)?, None))
    } else {
        Err(Error::UnsupportedFormat(format!("{}: not a PNG or P6 PPM", path.display())))
    }
}

fn write_png(path: &Path, width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let io_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(other.to_string())),
    };
    let mut writer = enc.write_header().map_err(io_err)?;
    writer.write_image_data(data).map_err(io_err)?;
    writer.finish().map_err(io_err)?;
    Ok(())
}

/// Writes an 8-bit RGB PNG.
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    write_png(path.as_ref(), img.width(), img.height(), ColorType::Rgb, BitDepth::Eight, img.as_raw())
}

/// Writes an RGBA PNG whose alpha is 255 under the mask and 0 elsewhere.
pub fn save_layer(img: &RasterImage, mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    mask.ensure_dims(img.dims())?;
    let mut data = Vec::with_capacity(img.width() * img.height() * 4);
    for (px, &m) in img.as_raw().chunks_exact(3).zip(mask.bits()) {
        data.extend_from_slice(px);
        data.push(if m { 255 } else { 0 });
    }
    write_png(path.as_ref(), img.width(), img.height(), ColorType::Rgba, BitDepth::Eight, &data)
}

/// Loads a mask PNG; any sample `>= 128` (first channel) is `true`.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    if !bytes.starts_with(PNG_MAGIC) {
        return Err(Error::UnsupportedFormat(format!("{}: mask must be PNG", path.display())));
    }
    let (png, _) = decode_png(&bytes)?;
    let (img, _) = png_to_rgb(png)?;
    let bits = img.as_raw().chunks_exact(3).map(|px| px[0] >= 128).collect();
    BinaryMask::from_bits(img.width(), img.height(), bits)
}

/// Writes an 8-bit gray PNG: 255 for `true`, 0 for `false`.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_png(path.as_ref(), mask.width(), mask.height(), ColorType::Grayscale, BitDepth::Eight, &data)
}

/// Raw PFM payload, rows top to bottom.
fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    if magic != "Pf" {
        return Err(Error::UnsupportedFormat(format!("PFM type `{magic}`; only single-channel `Pf`")));
    }
    let width = header_usize(bytes, &mut pos)?;
    let height = header_usize(bytes, &mut pos)?;
    let scale_tok = header_token(bytes, &mut pos)?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| Error::CorruptData(format!("bad PFM scale `{scale_tok}`")))?;
    if scale >= 0.0 {
        return Err(Error::UnsupportedFormat("big-endian PFM".into()));
    }
    pos += 1;
    let need = width * height * 4;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() < need {
        return Err(Error::CorruptData(format!("PFM raster has {} bytes, need {need}", body.len())));
    }
    let mut values = vec![0f32; width * height];
    // PFM scanlines run bottom to top.
    for (row, chunk) in body[..need].chunks_exact(width * 4).enumerate() {
        let y = height - 1 - row;
        for (x, b) in chunk.chunks_exact(4).enumerate() {
            values[y * width + x] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    Ok((width, height, values))
}

/// Writes raw values as little-endian single-channel PFM.
pub fn save_pfm<T: Real>(width: usize, height: usize, values: &[T], path: impl AsRef<Path>) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::InvalidArgument("PFM value count does not match dims".into()));
    }
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4);
    for y in (0..height).rev() {
        for v in &values[y * width..(y + 1) * width] {
            let f = v.to_f32().unwrap_or(f32::NAN);
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a depth map's normalized values as PFM.
pub fn save_depth<T: Real>(depth: &DepthMap<T>, path: impl AsRef<Path>) -> Result<()> {
    save_pfm(depth.width(), depth.height(), depth.values(), path)
}

/// Writes a 16-bit gray PNG of raw samples.
pub fn save_png16(width: usize, height: usize, values: &[u16], path: impl AsRef<Path>) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::InvalidArgument("PNG value count does not match dims".into()));
    }
    let data: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    write_png(path.as_ref(), width, height, ColorType::Grayscale, BitDepth::Sixteen, &data)
}

/// Loads a depth map from a 16-bit gray PNG or a little-endian PFM and
/// normalizes it to `[0, 1]`.
pub fn load_depth<T: Real>(path: impl AsRef<Path>) -> Result<DepthMap<T>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    if bytes.starts_with(PNG_MAGIC) {
        let (png, _) = decode_png(&bytes)?;
        if png.color != ColorType::Grayscale || png.depth != BitDepth::Sixteen {
            return Err(Error::UnsupportedFormat(format!(
                "depth PNG must be 16-bit gray, got {:?}-bit {:?}",
                png.depth, png.color
            )));
        }
        let raw: Vec<T> = png
            .data
            .chunks_exact(2)
            .take(png.width * png.height)
            .map(|b| T::lit(u16::from_be_bytes([b[0], b[1]]) as f64))
            .collect();
        DepthMap::from_raw(png.width, png.height, &raw)
    } else if bytes.starts_with(b"Pf") {
        let (w, h, values) = decode_pfm(&bytes)?;
        let raw: Vec<T> = values.iter().map(|&v| T::lit(v as f64)).collect();
        DepthMap::from_raw(w, h, &raw)
    } else {
        Err(Error::UnsupportedFormat(format!("{}: depth must be 16-bit PNG or PFM", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_decode_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ppm");
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 255, 255, 255, 10, 20, 30, 40, 50, 60]);
        fs::write(&p, bytes).unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.pixel(0, 0), [0, 0, 0]);
        assert_eq!(img.pixel(1, 0), [255, 255, 255]);
        assert_eq!(img.pixel(0, 1), [10, 20, 30]);
        assert_eq!(img.pixel(1, 1), [40, 50, 60]);
    }

    #[test]
    fn ppm_header_comments() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert_eq!(decode_ppm(&bytes).unwrap().pixel(0, 0), [1, 2, 3]);
    }

    #[test]
    fn truncated_ppm_is_corrupt() {
        let bytes = b"P6 2 2 255\n\x00\x01".to_vec();
        assert!(matches!(decode_ppm(&bytes), Err(Error::CorruptData(_))));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::FileNotFound(_))));
    }

    #[test]
    fn black_pixel_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.png");
        save_image(&RasterImage::new(1, 1), &p).unwrap();
        assert_eq!(load_image(&p).unwrap().pixel(0, 0), [0, 0, 0]);
    }

    #[test]
    fn gradient_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let img = RasterImage::from_fn(256, 1, |x, _| [x as u8, 255 - x as u8, (x / 2) as u8]);
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn rgba_alpha_dropped_and_recovered() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        let img = RasterImage::from_fn(3, 2, |x, y| [x as u8 * 50, y as u8 * 90, 7]);
        let mask = BinaryMask::from_fn(3, 2, |x, y| (x + y) % 2 == 0);
        save_layer(&img, &mask, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
        let (img2, alpha) = load_image_with_alpha(&p).unwrap();
        assert_eq!(img2, img);
        let alpha = alpha.unwrap();
        assert_eq!(alpha.iter().filter(|&&a| a == 255).count(), mask.count());
    }

    #[test]
    fn sixteen_bit_color_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c16.png");
        write_png(&p, 1, 1, ColorType::Rgb, BitDepth::Sixteen, &[0; 6]).unwrap();
        assert!(matches!(load_image(&p), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn mask_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_png(&p, 4, 1, ColorType::Grayscale, BitDepth::Eight, &[0, 127, 128, 255]).unwrap();
        let m = load_mask(&p).unwrap();
        assert_eq!(m.bits(), &[false, false, true, true]);
        let q = dir.path().join("m2.png");
        save_mask(&m, &q).unwrap();
        assert_eq!(load_mask(&q).unwrap(), m);
    }

    #[test]
    fn depth_png16() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        save_png16(3, 1, &[0, 32768, 65535], &p).unwrap();
        let d: DepthMap<f64> = load_depth(&p).unwrap();
        assert_eq!(d.values()[0], 0.0);
        assert!((d.values()[1] - 32768.0 / 65535.0).abs() < 1e-12);
        assert!((d.values()[1] - 0.50000763).abs() < 1e-8);
        assert_eq!(d.values()[2], 1.0);
    }

    #[test]
    fn depth_pfm_orientation_and_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        // 2x2: top row 1 2, bottom row 4 4
        save_pfm(2, 2, &[1.0f64, 2.0, 4.0, 4.0], &p).unwrap();
        let d: DepthMap<f64> = load_depth(&p).unwrap();
        assert_eq!(d.get(0, 0), 0.0);
        assert!((d.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.raw_range(), (1.0, 4.0));
    }

    #[test]
    fn constant_pfm_is_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pfm");
        save_pfm(3, 3, &[7.5f32; 9], &p).unwrap();
        let d: DepthMap<f32> = load_depth(&p).unwrap();
        assert!(d.is_degenerate());
        assert!(d.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn depth_rejects_8bit_png() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d8.png");
        save_image(&RasterImage::new(2, 2), &p).unwrap();
        assert!(matches!(load_depth::<f64>(&p), Err(Error::UnsupportedFormat(_))));
    }
}
