//! Synthetic two-domain digits.
//!
//! Domain A renders the bitmap font with random scale, shear, position and
//! ink strength as light strokes on a dark field. Domain B draws its own
//! renderings from a separate stream, shifts them by up to two pixels and
//! inverts them, giving dark strokes on a light field.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xdomain_core::Domain;

use super::font::{ink, GLYPH_H, GLYPH_W};
use super::{DomainDataset, Pixels, RawImages, Split, IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::imageio;

pub const TOY_CLASSES: usize = 10;
const SUPERSAMPLE: usize = 4;
const MAX_SHIFT: i32 = 2;

fn stream(split: Split, domain: Domain) -> u64 {
    let s = match split {
        Split::Train => 0,
        Split::Test => 1,
        Split::Extra => 2,
    };
    16 + 2 * s + domain.index() as u64
}

/// One anti-aliased glyph in `[0, 1]`, ink bright.
fn render(digit: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sx = rng.gen_range(2.3..3.4);
    let sy = rng.gen_range(2.6..3.5);
    let shear = rng.gen_range(-0.3..0.3);
    let cx = IMAGE_SIZE as f64 / 2.0 + rng.gen_range(-1.5..1.5);
    let cy = IMAGE_SIZE as f64 / 2.0 + rng.gen_range(-1.5..1.5);
    let fg = rng.gen_range(0.75..1.0);
    let bold = rng.gen_range(0.0..0.35);
    let n = IMAGE_SIZE;
    let mut img = vec![0.0; n * n];
    let step = 1.0 / SUPERSAMPLE as f64;
    for y in 0..n {
        for x in 0..n {
            let mut hits = 0;
            for sy_i in 0..SUPERSAMPLE {
                for sx_i in 0..SUPERSAMPLE {
                    let py = y as f64 + (sy_i as f64 + 0.5) * step - cy;
                    let px = x as f64 + (sx_i as f64 + 0.5) * step - cx;
                    let v = py / sy + GLYPH_H as f64 / 2.0;
                    let u = (px - shear * py) / sx + GLYPH_W as f64 / 2.0;
                    let inked = [(0.0, 0.0), (bold, 0.0), (-bold, 0.0), (0.0, bold), (0.0, -bold)]
                        .iter()
                        .any(|(du, dv)| ink(digit, (u + du).floor() as isize, (v + dv).floor() as isize));
                    hits += usize::from(inked);
                }
            }
            let cover = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
            let noise = rng.gen_range(0.0..0.08);
            img[y * n + x] = (cover * fg + noise).min(1.0);
        }
    }
    img
}

/// Integer translation; vacated pixels take the mean background level.
fn shift(img: &[f64], dx: i32, dy: i32) -> Vec<f64> {
    let n = IMAGE_SIZE as i32;
    let mut out = vec![0.04; img.len()];
    for y in 0..n {
        for x in 0..n {
            let (sx, sy) = (x - dx, y - dy);
            if (0..n).contains(&sx) && (0..n).contains(&sy) {
                out[(y * n + x) as usize] = img[(sy * n + sx) as usize];
            }
        }
    }
    out
}

/// `10 * n_per_class` images of one toy domain and split, classes
/// interleaved so every prefix of ten holds each digit once.
pub fn make_toy_split(n_per_class: usize, seed: u64, split: Split, domain: Domain) -> Result<DomainDataset> {
    if n_per_class == 0 {
        return Err(Error::domain("n_per_class must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream(split, domain));
    let total = TOY_CLASSES * n_per_class;
    let mut pixels = Vec::with_capacity(total * IMAGE_SIZE * IMAGE_SIZE);
    let mut labels = Vec::with_capacity(total);
    for k in 0..total {
        let digit = k % TOY_CLASSES;
        let mut img = render(digit, &mut rng);
        if domain == Domain::Target {
            let dx = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
            let dy = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
            img = shift(&img, dx, dy).into_iter().map(|v| 1.0 - v).collect();
        }
        pixels.extend(img.iter().map(|v| (v * 255.0).round() as u8));
        labels.push(digit as u8);
    }
    let name = match domain {
        Domain::Source => "toy-a",
        Domain::Target => "toy-b",
    };
    let raw = RawImages::new(1, IMAGE_SIZE, IMAGE_SIZE, Pixels::U8(pixels))?;
    DomainDataset::new(name, split, domain, raw, Some(labels))
}

/// Training splits of both toy domains; `n_per_class >= 10`.
pub fn make_toy_domains(n_per_class: usize, seed: u64) -> Result<(DomainDataset, DomainDataset)> {
    if n_per_class < 10 {
        return Err(Error::domain(format!("n_per_class must be at least 10, got {n_per_class}")));
    }
    Ok((
        make_toy_split(n_per_class, seed, Split::Train, Domain::Source)?,
        make_toy_split(n_per_class, seed, Split::Train, Domain::Target)?,
    ))
}

/// Writes `dir/00000.png, ...` and `dir/labels.txt` with one `index label`
/// pair per line.
pub fn export_toy(ds: &DomainDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut labels = String::new();
    for i in 0..ds.len() {
        let img = ds.image(i).pixels;
        let path = dir.join(format!("{i:05}.png"));
        imageio::write_rgb_png(&path, IMAGE_SIZE, IMAGE_SIZE, &imageio::to_display_bytes(img.data()))?;
        match ds.label(i) {
            Some(y) => writeln!(labels, "{i} {y}"),
            None => writeln!(labels, "{i} -"),
        }
        .expect("write to string");
    }
    let path = dir.join("labels.txt");
    fs::write(&path, labels).map_err(|e| Error::io(&path, e))
}
