use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xdomain_core::PairedBatch;

use super::DomainDataset;
use crate::error::{Error, Result};

/// Position of a [`BatchIterator`]; enough to resume it exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IteratorState {
    pub source_epoch: u64,
    pub source_pos: usize,
    pub target_epoch: u64,
    pub target_pos: usize,
}

/// Permutation of `0..n` for one epoch of one domain, a pure function of
/// `(seed, side, epoch)`.
fn permutation(n: usize, seed: u64, side: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 + side + 2 * epoch);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng);
    p
}

struct Cursor {
    n: usize,
    side: u64,
    epoch: u64,
    pos: usize,
    perm: Vec<usize>,
}

impl Cursor {
    fn new(n: usize, seed: u64, side: u64, epoch: u64, pos: usize) -> Self {
        Cursor { n, side, epoch, pos, perm: permutation(n, seed, side, epoch) }
    }

    /// Next `k` indices; an epoch boundary continues into a fresh permutation.
    fn take(&mut self, k: usize, seed: u64) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.n {
                self.epoch += 1;
                self.pos = 0;
                self.perm = permutation(self.n, seed, self.side, self.epoch);
            }
            let m = (k - out.len()).min(self.n - self.pos);
            out.extend_from_slice(&self.perm[self.pos..self.pos + m]);
            self.pos += m;
        }
        out
    }
}

/// Endless stream of positionally paired batches. Each domain is visited in
/// an independently shuffled order, every index exactly once per epoch.
pub struct BatchIterator<'a> {
    source: &'a DomainDataset,
    target: &'a DomainDataset,
    batch: usize,
    seed: u64,
    src: Cursor,
    tgt: Cursor,
}

impl<'a> BatchIterator<'a> {
    pub fn new(source: &'a DomainDataset, target: &'a DomainDataset, batch: usize, seed: u64) -> Result<Self> {
        Self::resume(source, target, batch, seed, IteratorState::default())
    }

    pub fn resume(
        source: &'a DomainDataset,
        target: &'a DomainDataset,
        batch: usize,
        seed: u64,
        state: IteratorState,
    ) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::domain("batch iterator needs non-empty datasets"));
        }
        if batch == 0 || batch > source.len() || batch > target.len() {
            return Err(Error::domain(format!(
                "batch {batch} exceeds the dataset sizes ({} source, {} target)",
                source.len(),
                target.len()
            )));
        }
        if !source.is_labeled() {
            return Err(Error::domain(format!("source dataset {} carries no labels", source.name)));
        }
        if state.source_pos > source.len() || state.target_pos > target.len() {
            return Err(Error::domain("iterator state lies outside the datasets"));
        }
        Ok(BatchIterator {
            source,
            target,
            batch,
            seed,
            src: Cursor::new(source.len(), seed, 0, state.source_epoch, state.source_pos),
            tgt: Cursor::new(target.len(), seed, 1, state.target_epoch, state.target_pos),
        })
    }

    pub fn state(&self) -> IteratorState {
        IteratorState {
            source_epoch: self.src.epoch,
            source_pos: self.src.pos,
            target_epoch: self.tgt.epoch,
            target_pos: self.tgt.pos,
        }
    }

    /// Index sets of the next batch without decoding any pixels.
    pub fn next_indices(&mut self) -> (Vec<usize>, Vec<usize>) {
        (self.src.take(self.batch, self.seed), self.tgt.take(self.batch, self.seed))
    }

    pub fn next_batch(&mut self) -> Result<PairedBatch> {
        let (si, ti) = self.next_indices();
        let (xs, ys) = self.source.batch(&si)?;
        let (xt, _) = self.target.batch(&ti)?;
        let ys = ys.ok_or_else(|| Error::domain("source batch without labels"))?;
        Ok(PairedBatch::new(xs, ys, xt)?)
    }
}

impl Iterator for BatchIterator<'_> {
    type Item = Result<PairedBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_batch())
    }
}
