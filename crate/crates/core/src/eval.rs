//! Classification through the tied discriminator head.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, Mode};
use crate::networks::{Domain, NetworkBundle};
use crate::tensor::Tensor;

/// Index of the largest entry of each row; the first wins ties.
pub fn argmax_rows(probs: &Tensor) -> Result<Vec<usize>> {
    if probs.rank() != 2 || probs.shape()[1] == 0 {
        return Err(Error::domain("argmax_rows expects a non-empty rank-2 tensor"));
    }
    let k = probs.shape()[1];
    Ok(probs
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Class probabilities of `images` judged by the `domain` discriminator,
/// evaluated in chunks of `batch` with frozen statistics.
pub fn class_probabilities(bundle: &NetworkBundle, domain: Domain, images: &Tensor, batch: usize) -> Result<Tensor> {
    if batch == 0 {
        return Err(Error::domain("evaluation batch must be positive"));
    }
    let n = images.batch();
    let mut parts = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch).min(n);
        let mut g = Graph::new(&bundle.store, Mode::Eval);
        let x = g.input(images.slice_batch(start, end));
        let p = bundle.classify(&mut g, domain, x)?;
        parts.push(g.value(p).clone());
        start = end;
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat_batch(&refs)
}

pub fn predict(bundle: &NetworkBundle, domain: Domain, images: &Tensor, batch: usize) -> Result<Vec<usize>> {
    argmax_rows(&class_probabilities(bundle, domain, images, batch)?)
}

/// Number of predictions equal to their label.
pub fn count_correct(predictions: &[usize], labels: &[usize]) -> Result<usize> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension { expected: labels.len(), actual: predictions.len() });
    }
    Ok(predictions.iter().zip(labels).filter(|(p, l)| p == l).count())
}
