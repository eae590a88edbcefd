//! Lossless image output.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

/// Display byte of a pixel in `[-1, 1]`: `-1 -> 0`, `+1 -> 255`, rounding
/// half to even; out-of-range values saturate.
pub fn display_byte(v: f64) -> u8 {
    let x = ((v.clamp(-1.0, 1.0) + 1.0) * 0.5 * 255.0).round_ties_even();
    x as u8
}

/// Inverse of [`display_byte`] up to quantization.
pub fn from_display_byte(b: u8) -> f64 {
    f64::from(b) / 255.0 * 2.0 - 1.0
}

/// Planar `3 x h x w` pixels to interleaved RGB bytes.
pub fn to_display_bytes(planar: &[f64]) -> Vec<u8> {
    let plane = planar.len() / 3;
    let mut out = Vec::with_capacity(planar.len());
    for i in 0..plane {
        for c in 0..3 {
            out.push(display_byte(planar[c * plane + i]));
        }
    }
    out
}

pub fn write_rgb_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::domain(format!("{} bytes do not form a {width}x{height} RGB image", rgb.len())));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut w = enc.write_header().map_err(to_io)?;
    w.write_image_data(rgb).map_err(to_io)?;
    w.finish().map_err(to_io)
}

/// Reads an 8-bit RGB PNG as `(width, height, interleaved bytes)`.
pub fn read_rgb_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dec = png::Decoder::new(std::io::BufReader::new(file));
    let to_io = |e: png::DecodingError| Error::io(path, std::io::Error::other(e));
    let mut reader = dec.read_info().map_err(to_io)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(to_io)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::domain(format!("{} is not 8-bit RGB", path.display())));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_mapping_endpoints_and_ties() {
        assert_eq!(display_byte(-1.0), 0);
        assert_eq!(display_byte(1.0), 255);
        assert_eq!(display_byte(-2.0), 0);
        assert_eq!(display_byte(3.0), 255);
        // (v + 1) / 2 * 255 = 127.5 at v = 0: ties go to the even byte
        assert_eq!(display_byte(0.0), 128);
        for b in 0..=255u8 {
            assert_eq!(display_byte(from_display_byte(b)), b);
        }
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let rgb: Vec<u8> = (0..4 * 2 * 3).map(|i| (i * 10) as u8).collect();
        write_rgb_png(&p, 4, 2, &rgb).unwrap();
        assert_eq!(read_rgb_png(&p).unwrap(), (4, 2, rgb));
        assert!(write_rgb_png(&p, 5, 2, &[0; 3]).is_err());
    }
}
