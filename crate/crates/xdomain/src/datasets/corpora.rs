//! Readers for the published binary formats of MNIST, USPS and SVHN.
//!
//! Layout under the data root:
//!
//! ```text
//! mnist/train-images-idx3-ubyte[.gz]  mnist/train-labels-idx1-ubyte[.gz]
//! mnist/t10k-images-idx3-ubyte[.gz]   mnist/t10k-labels-idx1-ubyte[.gz]
//! usps/usps[.gz]                      usps/usps.t[.gz]          (LIBSVM text)
//! svhn/train_32x32.mat  svhn/test_32x32.mat  svhn/extra_32x32.mat
//! SHA256SUMS                                                    (optional)
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xdomain_core::Domain;

use super::mat::{read_mat, MatData};
use super::{DomainDataset, Pixels, RawImages, Split};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corpus {
    Mnist,
    Usps,
    Svhn,
}

impl Corpus {
    pub fn name(self) -> &'static str {
        match self {
            Corpus::Mnist => "mnist",
            Corpus::Usps => "usps",
            Corpus::Svhn => "svhn",
        }
    }
}

/// Published item counts.
pub const PUBLISHED_COUNTS: [(Corpus, Split, usize); 7] = [
    (Corpus::Mnist, Split::Train, 60_000),
    (Corpus::Mnist, Split::Test, 10_000),
    (Corpus::Usps, Split::Train, 7_291),
    (Corpus::Usps, Split::Test, 2_007),
    (Corpus::Svhn, Split::Train, 73_257),
    (Corpus::Svhn, Split::Test, 26_032),
    (Corpus::Svhn, Split::Extra, 531_131),
];

pub fn published_count(corpus: Corpus, split: Split) -> Option<usize> {
    PUBLISHED_COUNTS.iter().find(|(c, s, _)| *c == corpus && *s == split).map(|e| e.2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    /// Reject files whose item count differs from the published one.
    pub check_counts: bool,
    /// Fail on a checksum mismatch instead of warning.
    pub strict_checksums: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { check_counts: true, strict_checksums: false }
    }
}

/// Reads `path`, or `path.gz` when only the compressed file exists.
fn read_maybe_gz(path: &Path) -> Result<(PathBuf, Vec<u8>)> {
    let gz = PathBuf::from(format!("{}.gz", path.display()));
    let actual = if path.exists() || !gz.exists() { path.to_path_buf() } else { gz };
    let bytes = fs::read(&actual).map_err(|e| Error::ingest(&actual, e.to_string()))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..]).read_to_end(&mut out).map_err(|e| Error::ingest(&actual, format!("gzip: {e}")))?;
        return Ok((actual, out));
    }
    Ok((actual, bytes))
}

struct Checksums {
    root: PathBuf,
    table: HashMap<String, String>,
    strict: bool,
    warnings: Vec<String>,
}

impl Checksums {
    fn load(root: &Path, strict: bool) -> Result<Self> {
        let path = root.join("SHA256SUMS");
        let mut table = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::ingest(&path, e.to_string()))?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let mut it = line.split_whitespace();
                if let (Some(hash), Some(name)) = (it.next(), it.next()) {
                    table.insert(name.trim_start_matches('*').to_string(), hash.to_ascii_lowercase());
                }
            }
        }
        Ok(Checksums { root: root.to_path_buf(), table, strict, warnings: Vec::new() })
    }

    /// Verifies the on-disk bytes of `file` when it is listed.
    fn verify(&mut self, file: &Path) -> Result<()> {
        let Ok(rel) = file.strip_prefix(&self.root) else {
            return Ok(());
        };
        let key = rel.to_string_lossy().replace('\\', "/");
        let Some(expected) = self.table.get(&key) else {
            return Ok(());
        };
        let bytes = fs::read(file).map_err(|e| Error::ingest(file, e.to_string()))?;
        let actual: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        if &actual != expected {
            let msg = format!("checksum mismatch for {key}: expected {expected}, got {actual}");
            if self.strict {
                return Err(Error::ingest(file, msg));
            }
            log::warn!("{msg}; proceeding");
            self.warnings.push(msg);
        }
        Ok(())
    }
}

fn be_u32(b: &[u8], at: usize, path: &Path) -> Result<usize> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()) as usize)
        .ok_or_else(|| Error::ingest(path, "truncated idx header"))
}

fn read_idx_images(path: &Path, sums: &mut Checksums) -> Result<RawImages> {
    let (actual, b) = read_maybe_gz(path)?;
    sums.verify(&actual)?;
    if be_u32(&b, 0, &actual)? != 0x0803 {
        return Err(Error::ingest(&actual, "bad idx3 magic"));
    }
    let (n, h, w) = (be_u32(&b, 4, &actual)?, be_u32(&b, 8, &actual)?, be_u32(&b, 12, &actual)?);
    let body = &b[16..];
    if body.len() != n * h * w {
        return Err(Error::ingest(&actual, format!("expected {} pixel bytes, found {}", n * h * w, body.len())));
    }
    RawImages::new(1, h, w, Pixels::U8(body.to_vec()))
}

fn read_idx_labels(path: &Path, sums: &mut Checksums) -> Result<Vec<u8>> {
    let (actual, b) = read_maybe_gz(path)?;
    sums.verify(&actual)?;
    if be_u32(&b, 0, &actual)? != 0x0801 {
        return Err(Error::ingest(&actual, "bad idx1 magic"));
    }
    let n = be_u32(&b, 4, &actual)?;
    let body = &b[8..];
    if body.len() != n {
        return Err(Error::ingest(&actual, format!("expected {n} labels, found {}", body.len())));
    }
    if body.iter().any(|&y| y > 9) {
        return Err(Error::ingest(&actual, "label outside 0..=9"));
    }
    Ok(body.to_vec())
}

const USPS_SIDE: usize = 16;

/// LIBSVM text: `label index:value ...` with labels `1..=10` for digits
/// `0..=9` and values in `[-1, 1]`.
fn read_usps(path: &Path, sums: &mut Checksums) -> Result<(RawImages, Vec<u8>)> {
    let (actual, b) = read_maybe_gz(path)?;
    sums.verify(&actual)?;
    let text = String::from_utf8(b).map_err(|_| Error::ingest(&actual, "not UTF-8 text"))?;
    let per = USPS_SIDE * USPS_SIDE;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (ln, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: &str| Error::ingest(&actual, format!("line {}: {m}", ln + 1));
        let mut it = line.split_whitespace();
        let label: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("missing label"))?;
        if !(1.0..=10.0).contains(&label) || label.fract() != 0.0 {
            return Err(bad("label outside 1..=10"));
        }
        labels.push(label as u8 - 1);
        let mut img = vec![0.0f32; per];
        for tok in it {
            let (i, v) = tok.split_once(':').ok_or_else(|| bad("malformed feature"))?;
            let i: usize = i.parse().map_err(|_| bad("malformed index"))?;
            let v: f32 = v.parse().map_err(|_| bad("malformed value"))?;
            if i == 0 || i > per || !v.is_finite() {
                return Err(bad("feature index or value out of range"));
            }
            img[i - 1] = ((v + 1.0) * 0.5).clamp(0.0, 1.0);
        }
        // features absent from a sparse line hold -1, i.e. 0 after scaling
        pixels.extend_from_slice(&img);
    }
    Ok((RawImages::new(1, USPS_SIDE, USPS_SIDE, Pixels::F32(pixels))?, labels))
}

/// `X` is `32 x 32 x 3 x N` column-major bytes, `y` holds `1..=10` with
/// `10` for the digit zero.
fn read_svhn(path: &Path, sums: &mut Checksums) -> Result<(RawImages, Vec<u8>)> {
    sums.verify(path)?;
    let bytes = fs::read(path).map_err(|e| Error::ingest(path, e.to_string()))?;
    let vars = read_mat(&bytes).map_err(|m| Error::ingest(path, m))?;
    drop(bytes);
    let x = vars.iter().find(|v| v.name == "X").ok_or_else(|| Error::ingest(path, "no array X"))?;
    let y = vars.iter().find(|v| v.name == "y").ok_or_else(|| Error::ingest(path, "no array y"))?;
    let [h, w, c, n] = x.dims[..] else {
        return Err(Error::ingest(path, format!("X has dims {:?}, expected four", x.dims)));
    };
    if c != 3 || y.data.len() != n {
        return Err(Error::ingest(path, format!("X dims {:?} and {} labels disagree", x.dims, y.data.len())));
    }
    let MatData::U8(src) = &x.data else {
        return Err(Error::ingest(path, "X is not uint8"));
    };
    let mut pixels = vec![0u8; src.len()];
    for b in 0..n {
        for ch in 0..c {
            for col in 0..w {
                for row in 0..h {
                    pixels[((b * c + ch) * h + row) * w + col] = src[row + h * (col + w * (ch + c * b))];
                }
            }
        }
    }
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let v = y.data.get(i);
        if !(1.0..=10.0).contains(&v) || v.fract() != 0.0 {
            return Err(Error::ingest(path, format!("label {v} outside 1..=10")));
        }
        labels.push((v as u8) % 10);
    }
    Ok((RawImages::new(c, h, w, Pixels::U8(pixels))?, labels))
}

/// Decodes one split of a corpus from `root`.
pub fn load_corpus(
    corpus: Corpus,
    root: &Path,
    split: Split,
    domain: Domain,
    opts: LoadOptions,
) -> Result<DomainDataset> {
    if !root.is_dir() {
        return Err(Error::ingest(root, "data root is not a directory"));
    }
    let mut sums = Checksums::load(root, opts.strict_checksums)?;
    let dir = root.join(corpus.name());
    let (raw, labels) = match (corpus, split) {
        (Corpus::Mnist, Split::Train | Split::Test) => {
            let stem = if split == Split::Train { "train" } else { "t10k" };
            let raw = read_idx_images(&dir.join(format!("{stem}-images-idx3-ubyte")), &mut sums)?;
            let labels = read_idx_labels(&dir.join(format!("{stem}-labels-idx1-ubyte")), &mut sums)?;
            (raw, labels)
        }
        (Corpus::Usps, Split::Train) => read_usps(&dir.join("usps"), &mut sums)?,
        (Corpus::Usps, Split::Test) => read_usps(&dir.join("usps.t"), &mut sums)?,
        (Corpus::Svhn, _) => {
            let stem = match split {
                Split::Train => "train",
                Split::Test => "test",
                Split::Extra => "extra",
            };
            read_svhn(&dir.join(format!("{stem}_32x32.mat")), &mut sums)?
        }
        (_, Split::Extra) => return Err(Error::domain(format!("{} has no extra split", corpus.name()))),
    };
    if raw.len() != labels.len() {
        return Err(Error::ingest(&dir, format!("{} images but {} labels", raw.len(), labels.len())));
    }
    if opts.check_counts {
        if let Some(expected) = published_count(corpus, split) {
            if raw.len() != expected {
                return Err(Error::ingest(
                    &dir,
                    format!("{:?} split holds {} items, published count is {expected}", split, raw.len()),
                ));
            }
        }
    }
    let mut ds = DomainDataset::new(corpus.name(), split, domain, raw, Some(labels))?;
    ds.warnings = sums.warnings;
    Ok(ds)
}
