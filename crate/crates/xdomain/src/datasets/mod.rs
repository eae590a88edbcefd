//! Digit corpora, preprocessing and the synthetic two-domain fixture.
//!
//! Images are kept at their native resolution and precision and are
//! preprocessed when a batch is drawn, so the large corpora stay compact in
//! memory. Every image handed to the networks is `3 x 32 x 32` in `[-1, 1]`.

mod batches;
mod corpora;
mod font;
pub mod mat;
mod preprocess;
mod toy;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use xdomain_core::{Domain, Tensor};

use crate::error::{Error, Result};

pub use batches::{BatchIterator, IteratorState};
pub use corpora::{load_corpus, Corpus, LoadOptions, PUBLISHED_COUNTS};
pub use preprocess::{bilinear_resize, preprocess, preprocess_encoder_input, IMAGE_SIZE};
pub use toy::{export_toy, make_toy_domains, make_toy_split, TOY_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    /// The additional SVHN training set.
    Extra,
}

impl Split {
    pub fn is_training(self) -> bool {
        matches!(self, Split::Train | Split::Extra)
    }
}

/// Pixel storage with values in `[0, 1]` once scaled.
#[derive(Clone, Debug, PartialEq)]
pub enum Pixels {
    /// Bytes, `0..=255`.
    U8(Vec<u8>),
    /// Reals already in `[0, 1]`.
    F32(Vec<f32>),
}

/// A block of same-sized images, `n x channels x height x width`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImages {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Pixels,
}

/// One image of a [`RawImages`] block.
#[derive(Clone, Copy, Debug)]
pub struct RawImage<'a> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pixels: PixelSlice<'a>,
}

#[derive(Clone, Copy, Debug)]
enum PixelSlice<'a> {
    U8(&'a [u8]),
    F32(&'a [f32]),
}

impl<'a> RawImage<'a> {
    pub fn from_u8(channels: usize, height: usize, width: usize, pixels: &'a [u8]) -> Result<Self> {
        check_len(channels * height * width, pixels.len())?;
        Ok(RawImage { channels, height, width, pixels: PixelSlice::U8(pixels) })
    }

    pub fn from_f32(channels: usize, height: usize, width: usize, pixels: &'a [f32]) -> Result<Self> {
        check_len(channels * height * width, pixels.len())?;
        Ok(RawImage { channels, height, width, pixels: PixelSlice::F32(pixels) })
    }

    /// Value in `[0, 1]` at flat index `i`.
    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self.pixels {
            PixelSlice::U8(p) => f64::from(p[i]) / 255.0,
            PixelSlice::F32(p) => f64::from(p[i]),
        }
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual || expected == 0 {
        return Err(Error::Core(xdomain_core::Error::Dimension { expected, actual }));
    }
    Ok(())
}

impl RawImages {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Pixels) -> Result<Self> {
        let per = channels * height * width;
        let len = match &pixels {
            Pixels::U8(p) => p.len(),
            Pixels::F32(p) => p.len(),
        };
        if per == 0 || len % per != 0 {
            return Err(Error::domain(format!("{len} pixels do not form {channels}x{height}x{width} images")));
        }
        Ok(RawImages { channels, height, width, pixels })
    }

    pub fn per_image(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn len(&self) -> usize {
        let n = match &self.pixels {
            Pixels::U8(p) => p.len(),
            Pixels::F32(p) => p.len(),
        };
        n / self.per_image()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> RawImage<'_> {
        let per = self.per_image();
        let pixels = match &self.pixels {
            Pixels::U8(p) => PixelSlice::U8(&p[i * per..(i + 1) * per]),
            Pixels::F32(p) => PixelSlice::F32(&p[i * per..(i + 1) * per]),
        };
        RawImage { channels: self.channels, height: self.height, width: self.width, pixels }
    }
}

/// A preprocessed image and its label, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    /// `3 x 32 x 32`, or `5 x 32 x 32` with coordinate channels.
    pub pixels: Tensor,
    pub label: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Item {
    index: u32,
    inverted: bool,
}

/// An immutable image collection for one domain and split.
#[derive(Clone, Debug)]
pub struct DomainDataset {
    pub name: String,
    pub split: Split,
    pub domain: Domain,
    raw: Arc<RawImages>,
    labels: Option<Arc<Vec<u8>>>,
    items: Vec<Item>,
    /// Non-fatal problems met while loading, such as checksum mismatches.
    pub warnings: Vec<String>,
}

impl PartialEq for DomainDataset {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.split == other.split
            && self.domain == other.domain
            && self.raw == other.raw
            && self.labels == other.labels
            && self.items == other.items
    }
}

impl DomainDataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        domain: Domain,
        raw: RawImages,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n = raw.len();
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Core(xdomain_core::Error::Dimension { expected: n, actual: l.len() }));
            }
            if let Some(bad) = l.iter().find(|&&y| y > 9) {
                return Err(Error::domain(format!("label {bad} outside 0..=9")));
            }
        }
        let n32 = u32::try_from(n).map_err(|_| Error::domain("dataset too large"))?;
        Ok(DomainDataset {
            name: name.into(),
            split,
            domain,
            raw: Arc::new(raw),
            labels: labels.map(Arc::new),
            items: (0..n32).map(|index| Item { index, inverted: false }).collect(),
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    /// The same images presented as the other side of a pair.
    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Drops labels, as for an unlabeled target domain.
    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    /// The first `n` items.
    pub fn truncated(mut self, n: usize) -> Self {
        self.items.truncate(n);
        self
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        let it = self.items[i];
        self.labels.as_ref().map(|l| usize::from(l[it.index as usize]))
    }

    pub fn labels(&self) -> Option<Vec<usize>> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn raw_image(&self, i: usize) -> RawImage<'_> {
        self.raw.get(self.items[i].index as usize)
    }

    pub fn is_inverted(&self, i: usize) -> bool {
        self.items[i].inverted
    }

    /// Preprocessed RGB pixels of item `i`.
    pub fn image(&self, i: usize) -> LabeledImage {
        let mut pixels = preprocess(self.raw_image(i));
        if self.items[i].inverted {
            pixels.data_mut().iter_mut().for_each(|v| *v = -*v);
        }
        LabeledImage { pixels, label: self.label(i) }
    }

    /// `[n, 3, 32, 32]` batch of the given items with their labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Option<Vec<usize>>)> {
        let per = 3 * IMAGE_SIZE * IMAGE_SIZE;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::domain(format!("index {i} out of range for {} items", self.len())));
            }
            data.extend_from_slice(self.image(i).pixels.data());
        }
        let labels = indices.iter().map(|&i| self.label(i)).collect();
        Ok((Tensor::from_vec(&[indices.len(), 3, IMAGE_SIZE, IMAGE_SIZE], data)?, labels))
    }

    /// Items `start..end` as a batch.
    pub fn range(&self, start: usize, end: usize) -> Result<(Tensor, Option<Vec<usize>>)> {
        let idx: Vec<usize> = (start..end.min(self.len())).collect();
        self.batch(&idx)
    }
}

/// Originals followed by pixel-inverted copies; training splits only.
pub fn augment_inversion(ds: &DomainDataset) -> Result<DomainDataset> {
    if !ds.split.is_training() {
        return Err(Error::domain(format!(
            "inversion augmentation applied to the {:?} split of {}",
            ds.split, ds.name
        )));
    }
    let mut out = ds.clone();
    out.items.extend(ds.items.iter().map(|it| Item { index: it.index, inverted: !it.inverted }));
    Ok(out)
}

/// Class counts over the labeled items.
pub fn class_histogram(ds: &DomainDataset) -> Option<[usize; 10]> {
    let mut h = [0; 10];
    for y in ds.labels()? {
        h[y] += 1;
    }
    Some(h)
}
